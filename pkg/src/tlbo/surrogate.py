"""Single-task GP regression: Matérn-5/2 (numeric) x Hamming (categorical) + white noise.

Outputs are standardised before fitting so the zero prior mean is
meaningful; predictions are returned in original units. Hyperparameters
are fitted by maximising the log marginal likelihood with L-BFGS-B from
several starts, using analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from tlbo import kernels
from tlbo.dataset import ObservationDataset
from tlbo.seeding import stream
from tlbo.space import Configuration, SearchSpace

LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (5e-2, 2e1)
NOISE_BOUNDS = (1e-8, 1.0)
N_RESTARTS = 5
JITTER_FLOOR = 1e-8
JITTER_CEIL = 1e-2


class CovarianceError(np.linalg.LinAlgError):
    """The Gram matrix stayed indefinite after the full jitter escalation."""


@dataclass(frozen=True)
class KernelHyperparams:
    signal_variance: float
    lengthscales: np.ndarray
    hamming_lengthscales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(
            self, "hamming_lengthscales", np.asarray(self.hamming_lengthscales, dtype=float)
        )
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if np.any(self.lengthscales <= 0) or np.any(self.hamming_lengthscales <= 0):
            raise ValueError("lengthscales must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")

    @classmethod
    def from_log(cls, theta: np.ndarray, dn: int, dc: int) -> "KernelHyperparams":
        theta = np.exp(theta)
        return cls(theta[0], theta[1 : 1 + dn], theta[1 + dn : 1 + dn + dc], theta[-1])

    def to_log(self) -> np.ndarray:
        return np.log(
            np.concatenate(
                [
                    [self.signal_variance],
                    self.lengthscales,
                    self.hamming_lengthscales,
                    [max(self.noise_variance, JITTER_FLOOR)],
                ]
            )
        )

    def to_dict(self) -> dict:
        return {
            "signal_variance": float(self.signal_variance),
            "lengthscales": [float(v) for v in self.lengthscales],
            "hamming_lengthscales": [float(v) for v in self.hamming_lengthscales],
            "noise_variance": float(self.noise_variance),
        }


def kernel_matrix(hp: KernelHyperparams, xn1, xc1, xn2, xc2) -> np.ndarray:
    """Noise-free cross covariance between two encoded blocks."""
    return kernels.cross_cov(
        xn1, xc1, xn2, xc2, 1.0 / hp.lengthscales, 1.0 / hp.hamming_lengthscales,
        float(hp.signal_variance),
    )


def kernel_eval(hp: KernelHyperparams, u, v, space: SearchSpace | None = None, same_point: bool = False) -> float:
    """k(u, v) for two encoded vectors.

    Without ``space`` the vectors are taken as all-numeric unless their
    length matches the hyperparameters' numeric + categorical split, in
    which case numeric dims come first. ``same_point`` adds the white-noise
    term (a training point's self-covariance).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if space is not None:
        un, uc = space.split(u[None, :])
        vn, vc = space.split(v[None, :])
    else:
        dn = hp.lengthscales.size
        un, uc = u[None, :dn], u[None, dn:]
        vn, vc = v[None, :dn], v[None, dn:]
    k = float(kernel_matrix(hp, un, uc, vn, vc)[0, 0])
    if same_point:
        k += hp.noise_variance
    return k


def _sq_diffs(xn: np.ndarray) -> np.ndarray:
    return (xn[:, None, :] - xn[None, :, :]) ** 2


def _mismatch(xc: np.ndarray) -> np.ndarray:
    return (xc[:, None, :] != xc[None, :, :]).astype(float)


def log_marginal_likelihood(
    theta: np.ndarray, xn: np.ndarray, xc: np.ndarray, y: np.ndarray, grad: bool = True
):
    """LML and its gradient w.r.t. log hyperparameters.

    theta = log([signal, lengthscales..., hamming lengthscales..., noise]).
    Returns (lml, grad) or lml alone; -inf when the Gram matrix is not PD.
    """
    n, dn = xn.shape
    dc = xc.shape[1]
    hp = np.exp(theta)
    sf2, ls, hls, noise = hp[0], hp[1 : 1 + dn], hp[1 + dn : 1 + dn + dc], hp[-1]
    d2 = _sq_diffs(xn)
    r2 = (d2 / ls**2).sum(axis=2) if dn else np.zeros((n, n))
    r = np.sqrt(r2)
    e = np.exp(-math.sqrt(5.0) * r)
    mism = _mismatch(xc)
    h = np.exp(-(mism / hls).sum(axis=2)) if dc else np.ones((n, n))
    kf = sf2 * (1.0 + math.sqrt(5.0) * r + 5.0 / 3.0 * r2) * e * h
    k = kf + noise * np.eye(n)
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return (-np.inf, np.zeros_like(theta)) if grad else -np.inf
    alpha = cho_solve((chol, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * math.log(2 * math.pi)
    if not grad:
        return lml
    kinv = cho_solve((chol, True), np.eye(n))
    w = np.outer(alpha, alpha) - kinv
    g = np.empty_like(theta)
    g[0] = 0.5 * (w * kf).sum()
    common = sf2 * (5.0 / 3.0) * (1.0 + math.sqrt(5.0) * r) * e * h
    for d in range(dn):
        g[1 + d] = 0.5 * (w * common * d2[:, :, d]).sum() / ls[d] ** 2
    for c in range(dc):
        g[1 + dn + c] = 0.5 * (w * kf * mism[:, :, c]).sum() / hls[c]
    g[-1] = 0.5 * noise * np.trace(w)
    return lml, g


def _bounds(dn: int, dc: int) -> list[tuple[float, float]]:
    lb, ub = np.log(LENGTHSCALE_BOUNDS)
    return (
        [tuple(np.log(SIGNAL_BOUNDS))]
        + [(lb, ub)] * (dn + dc)
        + [tuple(np.log(NOISE_BOUNDS))]
    )


def _initial_points(dn: int, dc: int, rng: np.random.Generator) -> list[np.ndarray]:
    default = np.log(np.r_[1.0, np.full(dn, 0.5), np.full(dc, 1.0), 1e-3])
    starts = [default]
    for _ in range(N_RESTARTS - 1):
        starts.append(
            np.r_[
                rng.uniform(np.log(0.2), np.log(5.0)),
                rng.uniform(np.log(0.01), np.log(10.0), size=dn + dc),
                rng.uniform(np.log(1e-6), np.log(0.1)),
            ]
        )
    return starts


def _factorize(k: np.ndarray, sf2: float) -> tuple[np.ndarray, float]:
    """Cholesky with jitter escalation from 1e-8*signal up to 1e-2*signal."""
    try:
        return np.linalg.cholesky(k), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_FLOOR * sf2
    eye = np.eye(k.shape[0])
    while jitter <= JITTER_CEIL * sf2 * (1 + 1e-12):
        try:
            return np.linalg.cholesky(k + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CovarianceError("covariance matrix not positive definite after jitter")


class GpSurrogate:
    """A fitted GP. Immutable after construction."""

    def __init__(self, space: SearchSpace, x: np.ndarray, y: np.ndarray, hyperparams: KernelHyperparams):
        self.space = space
        self.train_inputs = np.array(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.output_mean = float(y.mean())
        std = float(y.std())
        self.output_scale = std if std > 0 else 1.0
        self.train_outputs = (y - self.output_mean) / self.output_scale
        self.hyperparams = hyperparams
        self._xn, self._xc = space.split(self.train_inputs)
        k = kernel_matrix(hyperparams, self._xn, self._xc, self._xn, self._xc)
        k[np.diag_indices_from(k)] += hyperparams.noise_variance
        self.gram = k
        self.chol, self.jitter = _factorize(k, hyperparams.signal_variance)
        self.alpha = cho_solve((self.chol, True), self.train_outputs)
        for arr in (self.train_inputs, self.train_outputs, self.chol, self.alpha, self.gram):
            arr.setflags(write=False)

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    def log_marginal_likelihood(self) -> float:
        return float(
            log_marginal_likelihood(
                self.hyperparams.to_log(), self._xn, self._xc, self.train_outputs, grad=False
            )
        )

    def predict(self, x_enc: np.ndarray, return_var: bool = True):
        """Posterior mean and latent variance at encoded rows, original units."""
        xn, xc = self.space.split(np.atleast_2d(x_enc))
        ks = kernel_matrix(self.hyperparams, xn, xc, self._xn, self._xc)
        mean = ks @ self.alpha * self.output_scale + self.output_mean
        if not return_var:
            return mean
        v = solve_triangular(self.chol, ks.T, lower=True)
        var = self.hyperparams.signal_variance - np.einsum("ij,ij->j", v, v)
        var = np.maximum(var, 0.0) * self.output_scale**2
        return mean, var

    def predict_mean(self, x_enc: np.ndarray) -> np.ndarray:
        return self.predict(x_enc, return_var=False)

    def loo_means(self) -> np.ndarray:
        """Leave-one-out posterior means at the training inputs (fixed hyperparameters)."""
        kinv_diag = np.diag(cho_solve((self.chol, True), np.eye(self.n_train)))
        loo = self.train_outputs - self.alpha / kinv_diag
        return loo * self.output_scale + self.output_mean

    def summary(self) -> dict:
        return {
            **self.hyperparams.to_dict(),
            "output_mean": self.output_mean,
            "output_scale": self.output_scale,
            "n_train": self.n_train,
        }


def fit(space: SearchSpace, data: ObservationDataset, seed) -> GpSurrogate:
    """Fit hyperparameters by multi-start LML maximisation."""
    if len(data) < 1:
        raise ValueError("cannot fit a GP on an empty dataset")
    x = data.encoded(space)
    return fit_encoded(space, x, data.values, seed)


def fit_encoded(space: SearchSpace, x: np.ndarray, y: np.ndarray, seed) -> GpSurrogate:
    y = np.asarray(y, dtype=float)
    mean = y.mean()
    std = y.std()
    ys = (y - mean) / (std if std > 0 else 1.0)
    xn, xc = space.split(x)
    dn, dc = xn.shape[1], xc.shape[1]
    bounds = _bounds(dn, dc)
    rng = stream(seed, "gp-restarts")

    def objective(theta):
        lml, g = log_marginal_likelihood(theta, xn, xc, ys)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -g

    best_theta, best_val = None, np.inf
    for start in _initial_points(dn, dc, rng):
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 200})
        if res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    if best_theta is None or not np.isfinite(best_val) or best_val >= 1e25:
        best_theta = _initial_points(dn, dc, rng)[0]
    hp = KernelHyperparams.from_log(best_theta, dn, dc)
    return GpSurrogate(space, x, y, hp)


def posterior(gp: GpSurrogate, x: Configuration) -> tuple[float, float]:
    mean, var = gp.predict(gp.space.encode(x)[None, :])
    return float(mean[0]), float(var[0])
