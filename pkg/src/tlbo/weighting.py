"""Ensemble weighting strategies.

* lasso / ridge (optionally positive): bootstrap-averaged regularised
  regression of the target observations on the models' mean predictions.
* rgpe: bootstrap argmin frequency of discordant-pair ranking losses.
* tstr: Nadaraya-Watson weights from an Epanechnikov kernel on the
  fraction of discordant pairs.
* wac: SGD on mean squared error with an L2 penalty.

Columns of every prediction matrix are ordered (source_1 .. source_N, target).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from tlbo import kernels
from tlbo.seeding import stream

LASSO = "lasso"
RIDGE = "ridge"
RGPE = "rgpe"
TSTR = "tstr"
WAC = "wac"
STRATEGIES = (LASSO, RIDGE, RGPE, TSTR, WAC)

ALPHA_GRID = np.logspace(-4, 2, 20)
CV_FOLDS = 3
MIN_CV_POINTS = 2 * CV_FOLDS
CD_MAX_ITER = 1000
CD_TOL = 1e-9


class WeightingConfigError(ValueError):
    pass


class WacDivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    epochs: int = 500
    l2_penalty: float = 0.01
    validation_fraction: float = 0.2
    batch_size: int = 8
    patience: int = 50


@dataclass(frozen=True)
class WeightingConfig:
    strategy: str
    positive_constraint: bool = False
    alpha: float | None = None
    bandwidth_rho: float = 0.1
    bootstrap_samples: int = 1000
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise WeightingConfigError(f"unknown strategy {self.strategy!r}")
        if self.positive_constraint and self.strategy not in (LASSO, RIDGE):
            raise WeightingConfigError("positive_constraint applies to lasso/ridge only")
        if self.alpha is not None and not self.alpha > 0:
            raise WeightingConfigError("alpha must be positive")
        if not self.bandwidth_rho > 0:
            raise WeightingConfigError("bandwidth_rho must be positive")
        if self.bootstrap_samples < 1:
            raise WeightingConfigError("bootstrap_samples must be >= 1")

    @property
    def is_regression(self) -> bool:
        return self.strategy in (LASSO, RIDGE)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "positive_constraint": self.positive_constraint,
            "alpha": self.alpha,
            "bandwidth_rho": self.bandwidth_rho,
            "bootstrap_samples": self.bootstrap_samples,
            "sgd": vars(self.sgd).copy(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightingConfig":
        d = dict(d)
        sgd = SgdConfig(**d.pop("sgd", {}))
        return cls(sgd=sgd, **d)


@dataclass(frozen=True)
class PredictionMatrix:
    """Model mean predictions at the target inputs.

    ``means[j, i]`` is model i's posterior mean at target input j (last
    column: the target GP, in-sample). ``target_loo`` holds the target GP's
    leave-one-out means, used wherever the target model is scored against
    its own training data.
    """

    means: np.ndarray
    y: np.ndarray
    target_loo: np.ndarray | None = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if means.shape[0] != y.shape[0]:
            raise ValueError("means rows must match len(y)")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "y", y)
        if self.target_loo is not None:
            loo = np.asarray(self.target_loo, dtype=float).reshape(-1)
            if loo.shape[0] != y.shape[0]:
                raise ValueError("target_loo length must match len(y)")
            object.__setattr__(self, "target_loo", loo)

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def n_models(self) -> int:
        return self.means.shape[1]

    def ranking_columns(self) -> np.ndarray:
        """Means with the target column replaced by its leave-one-out means."""
        if self.target_loo is None:
            return self.means
        cols = self.means.copy()
        cols[:, -1] = self.target_loo
        return cols

    def rows(self, idx) -> "PredictionMatrix":
        loo = None if self.target_loo is None else self.target_loo[idx]
        return PredictionMatrix(self.means[idx], self.y[idx], loo)


def target_only_weights(n_models: int) -> np.ndarray:
    w = np.zeros(n_models)
    w[-1] = 1.0
    return w


def bootstrap_indices(m: int, n_samples: int, seed) -> np.ndarray:
    """Row resamples with replacement, shape (n_samples, m)."""
    rng = stream(seed, "bootstrap")
    return rng.integers(0, m, size=(n_samples, m))


# --------------------------------------------------------------------------
# Regularised regression
# --------------------------------------------------------------------------


def solve_regression(a, y, alpha: float, l1: bool, positive: bool) -> np.ndarray:
    """Minimise (1/M)||y - a w||^2 + alpha * (||w||_1 if l1 else ||w||_2^2)."""
    a = np.ascontiguousarray(a, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    return kernels.cd_solve(a, y, float(alpha), bool(l1), bool(positive), CD_MAX_ITER, CD_TOL)


def regression_weights(pm: PredictionMatrix, cfg: WeightingConfig, seed, alpha: float | None = None):
    if not cfg.is_regression:
        raise WeightingConfigError(f"{cfg.strategy} is not a regression strategy")
    alpha = cfg.alpha if alpha is None else alpha
    if alpha is None:
        raise WeightingConfigError("alpha is unresolved; pre-learn it or set it")
    if pm.n_obs < 2:
        return target_only_weights(pm.n_models)
    idx = bootstrap_indices(pm.n_obs, cfg.bootstrap_samples, seed)
    return kernels.bootstrap_cd(
        np.ascontiguousarray(pm.means), np.ascontiguousarray(pm.y), idx,
        float(alpha), cfg.strategy == LASSO, cfg.positive_constraint, CD_MAX_ITER, CD_TOL,
    )


def kfold_indices(m: int, k: int, seed=None) -> list[np.ndarray]:
    """Held-out row indices per fold (contiguous blocks of a seeded permutation)."""
    order = np.arange(m) if seed is None else stream(seed, "kfold").permutation(m)
    return [np.sort(f) for f in np.array_split(order, k)]


def kfold_mse(
    pm: PredictionMatrix,
    fit: Callable[[PredictionMatrix], np.ndarray],
    k: int = CV_FOLDS,
    seed=None,
) -> float | None:
    """Mean over folds of held-out MSE of ``means @ fit(train_rows)``.

    Returns None (guard inactive) when k < 2 or there are fewer than 2k rows.
    """
    if k < 2 or pm.n_obs < 2 * k:
        return None
    folds = kfold_indices(pm.n_obs, k, seed)
    errs = []
    for held in folds:
        train = np.setdiff1d(np.arange(pm.n_obs), held)
        w = fit(pm.rows(train))
        resid = pm.y[held] - pm.means[held] @ w
        errs.append(float(np.mean(resid**2)))
    return float(np.mean(errs))


def cross_validate_alpha(
    pm: PredictionMatrix, cfg: WeightingConfig, seed, grid: Sequence[float] = ALPHA_GRID
) -> tuple[float, float]:
    """Best alpha on ``grid`` by K-fold MSE; returns (alpha, its CV MSE)."""
    l1 = cfg.strategy == LASSO
    best = (None, np.inf)
    for alpha in grid:
        mse = kfold_mse(
            pm,
            lambda sub, a=alpha: solve_regression(sub.means, sub.y, a, l1, cfg.positive_constraint),
            CV_FOLDS,
            seed,
        )
        if mse is None:
            raise ValueError(f"cross validation needs >= {MIN_CV_POINTS} rows")
        if mse < best[1]:
            best = (float(alpha), mse)
    if best[0] is None:
        best = (float(grid[0]), float("inf"))
    return best


def prelearn_alpha(
    space, historic: Sequence, cfg: WeightingConfig, seed, models: Sequence | None = None
) -> float:
    """Median over pseudo-target tasks of the cross-validated best alpha.

    Each historic task in turn is the pseudo-target; the GPs of the
    remaining tasks provide the regression features. ``models`` may pass
    already-fitted source GPs (same order as ``historic``).
    """
    if len(historic) < 2:
        raise WeightingConfigError("pre-learning alpha needs at least 2 historic tasks")
    if models is None:
        from tlbo.ensemble import construct_ensemble

        models = construct_ensemble(space, historic, seed).source_models
    alphas = []
    for t, data in enumerate(historic):
        if len(data) < MIN_CV_POINTS:
            continue
        x = data.encoded(space)
        feats = np.column_stack([m.predict_mean(x) for i, m in enumerate(models) if i != t])
        alpha, _ = cross_validate_alpha(PredictionMatrix(feats, data.values), cfg, (seed, t))
        alphas.append(alpha)
    if not alphas:
        raise WeightingConfigError(
            f"no historic dataset has the {MIN_CV_POINTS} rows cross validation needs"
        )
    return float(np.median(alphas))


# --------------------------------------------------------------------------
# Ranking-based strategies
# --------------------------------------------------------------------------


def discordant_pairs(pred, y) -> int:
    """Number of ordered pairs (j, k) whose order under pred and y disagrees."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise ValueError("pred and y must have equal length")
    idx = np.arange(y.shape[0])[None, :]
    return int(kernels.ranking_losses(pred[:, None].copy(), y, idx)[0, 0])


def ranking_losses(pm: PredictionMatrix, idx: np.ndarray) -> np.ndarray:
    """(S, N+1) discordant-pair losses per bootstrap sample and model."""
    cols = np.ascontiguousarray(pm.ranking_columns())
    return kernels.ranking_losses(cols, np.ascontiguousarray(pm.y), np.ascontiguousarray(idx))


def rgpe_from_losses(losses: np.ndarray) -> np.ndarray:
    """Average over samples of argmin membership / argmin-set size."""
    losses = np.asarray(losses)
    is_min = losses == losses.min(axis=1, keepdims=True)
    return (is_min / is_min.sum(axis=1, keepdims=True)).mean(axis=0)


def rgpe_weights(pm: PredictionMatrix, cfg: WeightingConfig, seed, idx: np.ndarray | None = None):
    """RGPE weights; returns (weights, losses). Losses are None below 3 rows."""
    if pm.n_obs < 3:
        return np.full(pm.n_models, 1.0 / pm.n_models), None
    if idx is None:
        idx = bootstrap_indices(pm.n_obs, cfg.bootstrap_samples, seed)
    losses = ranking_losses(pm, idx)
    return rgpe_from_losses(losses), losses


def epanechnikov(t):
    t = np.asarray(t, dtype=float)
    return np.where(t <= 1.0, 0.75 * (1.0 - t**2), 0.0)


def tstr_distances(pm: PredictionMatrix) -> np.ndarray:
    """Fraction of discordant pairs per model, in [0, 1]."""
    m = pm.n_obs
    idx = np.arange(m)[None, :]
    counts = ranking_losses(pm, idx)[0]
    return counts / (m * (m - 1))


def tstr_weights(pm: PredictionMatrix, cfg: WeightingConfig) -> np.ndarray:
    if pm.n_obs < 2:
        return target_only_weights(pm.n_models)
    k = epanechnikov(tstr_distances(pm) / cfg.bandwidth_rho)
    total = k.sum()
    if total <= 0:
        return target_only_weights(pm.n_models)
    return k / total


# --------------------------------------------------------------------------
# WAC
# --------------------------------------------------------------------------


def _sgd(a, y, sgd: SgdConfig, lr: float, rng) -> np.ndarray:
    m, p = a.shape
    n_val = int(math.floor(sgd.validation_fraction * m))
    order = rng.permutation(m)
    val, train = order[:n_val], order[n_val:]
    if n_val == 0:
        val = train
    w = np.full(p, 1.0 / p)
    best_w, best_loss, stale = w.copy(), np.inf, 0
    for _ in range(sgd.epochs):
        perm = rng.permutation(train)
        for start in range(0, perm.size, sgd.batch_size):
            rows = perm[start : start + sgd.batch_size]
            resid = y[rows] - a[rows] @ w
            grad = -2.0 * a[rows].T @ resid / rows.size + 2.0 * sgd.l2_penalty * w
            w = w - lr * grad
        val_loss = float(np.mean((y[val] - a[val] @ w) ** 2) + sgd.l2_penalty * w @ w)
        if not np.isfinite(val_loss) or not np.all(np.isfinite(w)):
            raise FloatingPointError
        if val_loss < best_loss - 1e-15:
            best_w, best_loss, stale = w.copy(), val_loss, 0
        else:
            stale += 1
            if stale >= sgd.patience:
                break
    return best_w


def wac_weights(pm: PredictionMatrix, cfg: WeightingConfig, seed) -> np.ndarray:
    """SGD weights. Features and targets are divided by std(y) first, so the
    learning rate and penalty do not depend on the objective's units."""
    if pm.n_obs < 2:
        return target_only_weights(pm.n_models)
    scale = float(np.std(pm.y))
    scale = scale if scale > 0 else max(float(np.abs(pm.y).max()), 1.0)
    a = pm.means / scale
    y = pm.y / scale
    lr = cfg.sgd.learning_rate
    for _ in range(4):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                return _sgd(a, y, cfg.sgd, lr, stream(seed, "wac"))
        except FloatingPointError:
            lr *= 0.5
    raise WacDivergenceError("WAC SGD diverged after 3 learning-rate halvings")


def compute_weights(pm: PredictionMatrix, cfg: WeightingConfig, seed, alpha: float | None = None):
    """Dispatch to the configured strategy.

    Returns (weights, bootstrap ranking losses or None).
    """
    if cfg.strategy in (LASSO, RIDGE):
        return regression_weights(pm, cfg, seed, alpha), None
    if cfg.strategy == RGPE:
        return rgpe_weights(pm, cfg, seed)
    if cfg.strategy == TSTR:
        return tstr_weights(pm, cfg), None
    return wac_weights(pm, cfg, seed), None
