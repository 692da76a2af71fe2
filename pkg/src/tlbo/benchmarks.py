"""Benchmark task families: LQR cartpole, shifted synthetic functions, grid files."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from tlbo import kernels
from tlbo.dataset import read_dataset
from tlbo.space import Configuration, SearchSpace, VariableSpec

GRAVITY = 9.81


@dataclass(frozen=True)
class BenchmarkTask:
    id: str
    space: SearchSpace
    evaluator: Callable[[Configuration], float]
    known_range: tuple[float, float] | None = None
    candidates: tuple[Configuration, ...] | None = None
    noise_std: float = 0.0

    def evaluate(self, config: Configuration, rng: np.random.Generator | None = None) -> float:
        value = float(self.evaluator(config))
        if self.noise_std > 0 and rng is not None:
            value += self.noise_std * float(rng.normal())
        return value


# --------------------------------------------------------------------------
# Cartpole
# --------------------------------------------------------------------------

CARTPOLE_RANGES = {
    "cart_mass": (0.1, 0.5),
    "pole_mass": (0.01, 0.25),
    "pole_length": (0.25, 0.75),
    "cart_friction": (1e-4, 1e-3),
    "pole_friction": (1e-3, 1e-2),
}

CARTPOLE_SPACE = SearchSpace(
    (
        VariableSpec("theta1", "continuous", -3.0, 2.0),
        VariableSpec("theta2", "continuous", 1.0, 5.0),
    )
)


@dataclass(frozen=True)
class CartpoleParams:
    cart_mass: float
    pole_mass: float
    pole_length: float
    cart_friction: float
    pole_friction: float

    def __post_init__(self):
        for name, (lo, hi) in CARTPOLE_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self) + (GRAVITY,))


@dataclass(frozen=True)
class CartpoleSettings:
    """Simulation constants. ``riccati`` picks the gain design: "discrete"
    solves the DARE of the zero-order-hold plant at ``dt``; "continuous"
    solves the CARE and applies that gain with a zero-order hold."""

    dt: float = 0.01
    n_steps: int = 1000
    initial_state: tuple = (0.0, 0.1, 0.0, 0.0)
    blowup: float = 1e3
    penalty: float = 1e6
    riccati: str = "discrete"

    def __post_init__(self):
        if self.riccati not in ("discrete", "continuous"):
            raise ValueError("riccati must be 'discrete' or 'continuous'")


def sample_cartpole_family(n_tasks: int, seed) -> list[CartpoleParams]:
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in CARTPOLE_RANGES.values()])
    hi = np.array([r[1] for r in CARTPOLE_RANGES.values()])
    return [CartpoleParams(*map(float, rng.uniform(lo, hi))) for _ in range(n_tasks)]


def linearize(p: CartpoleParams) -> tuple[np.ndarray, np.ndarray]:
    """Upright-equilibrium linearisation; state (s, psi, s_dot, psi_dot)."""
    mc, mp, ln, bc, bp = astuple(p)
    a = np.zeros((4, 4))
    a[0, 2] = a[1, 3] = 1.0
    a[2, 1] = mp * GRAVITY / mc
    a[2, 2] = -bc / mc
    a[2, 3] = -bp / (mc * ln)
    a[3, 1] = (mc + mp) * GRAVITY / (mc * ln)
    a[3, 2] = -bc / (mc * ln)
    a[3, 3] = -(mc + mp) * bp / (mc * mp * ln * ln)
    b = np.array([[0.0], [0.0], [1.0 / mc], [1.0 / (mc * ln)]])
    return a, b


def discretize(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretisation."""
    n, m = b.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    e = scipy.linalg.expm(block * dt)
    return e[:n, :n], e[:n, n:]


def lqr_weights(theta) -> tuple[np.ndarray, np.ndarray]:
    t1, t2 = float(theta[0]), float(theta[1])
    return np.diag([10.0**t1, 1.0, 1.0, 0.1]), np.array([[10.0 ** (-t2)]])


def lqr_gain(p: CartpoleParams, theta, settings: CartpoleSettings = CartpoleSettings()):
    """Return (gain row vector, closed-loop eigenvalues); raises on Riccati failure."""
    a, b = linearize(p)
    q, r = lqr_weights(theta)
    if settings.riccati == "continuous":
        sol = scipy.linalg.solve_continuous_are(a, b, q, r)
        gain = np.linalg.solve(r, b.T @ sol)
        eig = np.linalg.eigvals(a - b @ gain)
    else:
        ad, bd = discretize(a, b, settings.dt)
        sol = scipy.linalg.solve_discrete_are(ad, bd, q, r)
        gain = np.linalg.solve(r + bd.T @ sol @ bd, bd.T @ sol @ ad)
        eig = np.linalg.eigvals(ad - bd @ gain)
    if not np.all(np.isfinite(gain)):
        raise np.linalg.LinAlgError("non-finite LQR gain")
    return gain.ravel(), eig


def is_stable(eig: np.ndarray, settings: CartpoleSettings = CartpoleSettings()) -> bool:
    if settings.riccati == "continuous":
        return bool(np.all(eig.real < 0))
    return bool(np.all(np.abs(eig) < 1.0))


def simulate_cost(
    p: CartpoleParams, gain, x0, settings: CartpoleSettings = CartpoleSettings()
) -> tuple[float, bool]:
    """Average stage cost of the nonlinear closed loop; (J, diverged)."""
    j, diverged, _ = kernels.cartpole_rollout(
        p.as_array(), np.asarray(gain, dtype=float), np.asarray(x0, dtype=float),
        float(settings.dt), int(settings.n_steps), float(settings.blowup),
    )
    return float(j), bool(diverged)


def cartpole_cost(p: CartpoleParams, theta, settings: CartpoleSettings = CartpoleSettings()) -> float:
    try:
        gain, eig = lqr_gain(p, theta, settings)
    except (np.linalg.LinAlgError, ValueError):
        return settings.penalty
    if not is_stable(eig, settings):
        return settings.penalty
    j, diverged = simulate_cost(p, gain, settings.initial_state, settings)
    if diverged or not math.isfinite(j):
        return settings.penalty
    return j


@dataclass(frozen=True)
class CartpoleEvaluator:
    params: CartpoleParams
    settings: CartpoleSettings = field(default_factory=CartpoleSettings)

    def __call__(self, config: Configuration) -> float:
        return cartpole_cost(self.params, config.values, self.settings)


def cartpole_tasks(
    params: Sequence[CartpoleParams], settings: CartpoleSettings = CartpoleSettings(), prefix="cartpole"
) -> list[BenchmarkTask]:
    return [
        BenchmarkTask(f"{prefix}{i:02d}", CARTPOLE_SPACE, CartpoleEvaluator(p, settings))
        for i, p in enumerate(params)
    ]


def cartpole_params_to_csv(params: Sequence[CartpoleParams]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task"] + list(CARTPOLE_RANGES))
    for i, p in enumerate(params):
        w.writerow([i] + [repr(v) for v in astuple(p)])
    return buf.getvalue()


def cartpole_params_from_csv(text: str) -> list[CartpoleParams]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [CartpoleParams(**{k: float(r[k]) for k in CARTPOLE_RANGES}) for r in rows]


# --------------------------------------------------------------------------
# Synthetic shifted families
# --------------------------------------------------------------------------

SHIFTED_QUADRATIC = "shifted_quadratic"
SHIFTED_BRANIN = "shifted_branin"
SYNTHETIC_KINDS = (SHIFTED_QUADRATIC, SHIFTED_BRANIN)

BRANIN_MINIMUM = 0.397887357729738
_BRANIN_ARGMINS = np.array([[-math.pi, 12.275], [math.pi, 2.275], [9.42478, 2.475]])


def unit_space(dim: int) -> SearchSpace:
    return SearchSpace(tuple(VariableSpec(f"x{i}", "continuous", 0.0, 1.0) for i in range(dim)))


def branin(x1, x2):
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


@dataclass(frozen=True)
class ShiftedQuadratic:
    """sum_d (x_d - 0.5 - shift_d)^2 on the unit cube."""

    shift: tuple

    @property
    def optimum(self) -> np.ndarray:
        return 0.5 + np.asarray(self.shift, dtype=float)

    def __call__(self, config: Configuration) -> float:
        x = np.asarray(config.values, dtype=float)
        return float(((x - self.optimum) ** 2).sum())

    def value_range(self) -> tuple[float, float]:
        c = self.optimum
        lo = float(((c - np.clip(c, 0.0, 1.0)) ** 2).sum())
        hi = float(np.maximum(c**2, (1.0 - c) ** 2).sum())
        return lo, hi


@dataclass(frozen=True)
class ShiftedBranin:
    """Branin on [-5, 10] x [0, 15] rescaled to the unit square, input shifted."""

    shift: tuple

    def _eval(self, u1, u2):
        z1 = u1 - self.shift[0]
        z2 = u2 - self.shift[1]
        return branin(-5.0 + 15.0 * z1, 15.0 * z2)

    def __call__(self, config: Configuration) -> float:
        return float(self._eval(float(config.values[0]), float(config.values[1])))

    def value_range(self, resolution: int = 401) -> tuple[float, float]:
        g = np.linspace(0.0, 1.0, resolution)
        u1, u2 = np.meshgrid(g, g)
        vals = self._eval(u1, u2)
        lo, hi = float(vals.min()), float(vals.max())
        # global minimisers that land inside the unit square pin the minimum exactly
        unit = np.column_stack(
            [(_BRANIN_ARGMINS[:, 0] + 5.0) / 15.0 + self.shift[0],
             _BRANIN_ARGMINS[:, 1] / 15.0 + self.shift[1]]
        )
        if np.any(np.all((unit >= 0) & (unit <= 1), axis=1)):
            lo = BRANIN_MINIMUM
        return lo, hi


def synthetic_family(
    kind: str, n_tasks: int, shift_range: float = 0.2, seed=0, dim: int = 2
) -> list[BenchmarkTask]:
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic family {kind!r}")
    if kind == SHIFTED_BRANIN:
        dim = 2
    rng = np.random.default_rng(seed)
    space = unit_space(dim)
    tasks = []
    for i in range(n_tasks):
        shift = tuple(float(v) for v in rng.uniform(-shift_range, shift_range, size=dim))
        fn = ShiftedQuadratic(shift) if kind == SHIFTED_QUADRATIC else ShiftedBranin(shift)
        tasks.append(BenchmarkTask(f"{kind}{i:02d}", space, fn, fn.value_range()))
    return tasks


# --------------------------------------------------------------------------
# Grid datasets
# --------------------------------------------------------------------------


class GridEvaluator:
    """Objective of the Gower-nearest stored row (first row wins ties)."""

    def __init__(self, space: SearchSpace, configs: Sequence[Configuration], values: np.ndarray):
        self.space = space
        self.configs = tuple(configs)
        self.values = np.asarray(values, dtype=float)
        self._num, self._cat = space.split(space.encode_many(self.configs))

    def nearest(self, config: Configuration) -> int:
        qn, qc = self.space.split(self.space.encode(config)[None, :])
        d = kernels.gower_matrix(qn, qc, self._num, self._cat)[0]
        return int(np.argmin(d))

    def __call__(self, config: Configuration) -> float:
        return float(self.values[self.nearest(config)])


def load_grid_tasks(files: Sequence, space: SearchSpace) -> list[BenchmarkTask]:
    tasks = []
    for path in files:
        path = Path(path)
        data = read_dataset(path, space)
        ev = GridEvaluator(space, data.configs, data.values)
        tasks.append(
            BenchmarkTask(
                path.stem, space, ev,
                (float(data.values.min()), float(data.values.max())),
                candidates=data.configs,
            )
        )
    return tasks
