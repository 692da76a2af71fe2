"""End-to-end transfer-learning BO runs and historic data generation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from tlbo import guard as guards
from tlbo import weighting as wt
from tlbo.acquisition import AcquisitionConfig, optimize_acquisition
from tlbo.benchmarks import BenchmarkTask
from tlbo.dataset import ObservationDataset
from tlbo.ensemble import TARGET_ONLY, WEIGHTED, EnsembleModel, construct_ensemble, update_ensemble
from tlbo.initialisation import candidate_pool, random_init, warm_start
from tlbo.seeding import derive_seed, stream
from tlbo.weighting import PredictionMatrix, WeightingConfig

log = logging.getLogger(__name__)

RANDOM_INIT = "random_10"
WARM_START = "warm_start_2"
INIT_MODES = {RANDOM_INIT: 10, WARM_START: 2}


@dataclass(frozen=True)
class MethodSpec:
    """One BO method. ``weighting=None`` means standard (single-GP) BO."""

    name: str
    init_mode: str = RANDOM_INIT
    weighting: WeightingConfig | None = None
    guard: str = guards.NONE
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    budget: int = 100
    n_init: int | None = None

    def __post_init__(self):
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.guard not in guards.GUARDS:
            raise ValueError(f"unknown guard {self.guard!r}")
        strategy = None if self.weighting is None else self.weighting.strategy
        if strategy is None and self.guard != guards.NONE:
            raise ValueError("standard BO takes no guard")
        if strategy is None and self.init_mode == WARM_START:
            raise ValueError("warm start needs historic data; use a weighting strategy")
        if self.guard == guards.MODE_SWITCH and strategy not in (wt.LASSO, wt.RIDGE):
            raise ValueError("mode switching applies to lasso/ridge only")
        if self.guard == guards.WEIGHT_DILUTION and strategy not in (wt.RGPE, wt.TSTR):
            raise ValueError("weight dilution applies to rgpe/tstr only")
        if self.budget < self.initial_points:
            raise ValueError("budget smaller than the initial design")

    @property
    def initial_points(self) -> int:
        return INIT_MODES[self.init_mode] if self.n_init is None else self.n_init

    @property
    def is_standard(self) -> bool:
        return self.weighting is None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "init_mode": self.init_mode,
            "weighting": None if self.weighting is None else self.weighting.to_dict(),
            "guard": self.guard,
            "acquisition": self.acquisition.to_dict(),
            "budget": self.budget,
            "n_init": self.n_init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        d = dict(d)
        weighting = d.pop("weighting", None)
        if weighting in (None, "standard_bo"):
            weighting = None
        else:
            weighting = WeightingConfig.from_dict(weighting)
        acq = AcquisitionConfig(**d.pop("acquisition", {}))
        return cls(weighting=weighting, acquisition=acq, **d)


@dataclass
class RunRecord:
    method: str
    task: str
    seed: int
    iterations: list = field(default_factory=list)
    status: str = "complete"
    error: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.method}__{self.task}__s{self.seed}"

    @property
    def values(self) -> np.ndarray:
        return np.array([it["value"] for it in self.iterations])

    @property
    def incumbents(self) -> np.ndarray:
        return np.array([it["incumbent"] for it in self.iterations])

    def to_dict(self, include_timing: bool = False) -> dict:
        its = self.iterations
        if not include_timing:
            its = [{k: v for k, v in it.items() if k != "wall_time"} for it in its]
        return {
            "schema": "tlbo.run_record/1",
            "method": self.method,
            "task": self.task,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "meta": self.meta,
            "iterations": its,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def timings(self) -> list[float]:
        return [it.get("wall_time", 0.0) for it in self.iterations]

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(d["method"], d["task"], d["seed"], d["iterations"], d["status"], d["error"], d.get("meta", {}))


def _to_jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _prediction_matrix(ens: EnsembleModel, data: ObservationDataset) -> PredictionMatrix:
    x = data.encoded(ens.space)
    src = ens.source_means(x)
    tgt = ens.target_model.predict_mean(x)
    return PredictionMatrix(np.column_stack([src, tgt]), data.values, ens.target_model.loo_means())


class _Weigher:
    """Per-run weighting state: resolved alpha, guard state."""

    def __init__(self, method: MethodSpec, ens0: EnsembleModel, historic, space, seed):
        self.method = method
        self.cfg = method.weighting
        self.seed = seed
        self.prelearned = None
        if self.cfg.is_regression and self.cfg.alpha is None:
            self.prelearned = wt.prelearn_alpha(
                space, historic, self.cfg, derive_seed(seed, "prelearn"), ens0.source_models
            )
        self.state = guards.GuardState(stream(seed, "guard"))

    def _alpha_and_mse(self, pm: PredictionMatrix, t: int):
        cfg = self.cfg
        l1 = cfg.strategy == wt.LASSO
        cv_seed = derive_seed(self.seed, "cv", t)
        if cfg.alpha is not None:
            alpha = cfg.alpha
            mse = wt.kfold_mse(
                pm, lambda sub: wt.solve_regression(sub.means, sub.y, alpha, l1, cfg.positive_constraint),
                wt.CV_FOLDS, cv_seed,
            )
            return alpha, mse
        if pm.n_obs < wt.MIN_CV_POINTS:
            return self.prelearned, None
        return wt.cross_validate_alpha(pm, cfg, cv_seed)

    def __call__(self, ens: EnsembleModel, data: ObservationDataset, t: int):
        """Returns (weights, variance_mode, info dict)."""
        cfg = self.cfg
        pm = _prediction_matrix(ens, data)
        info = {}
        seed_t = derive_seed(self.seed, "weights", t)
        budget = self.method.budget

        if cfg.is_regression:
            alpha = mse = None
            if self.method.guard == guards.MODE_SWITCH:
                self.state.record_observations(data.values)
                if self.state.mode == guards.ENSEMBLE:
                    alpha, mse = self._alpha_and_mse(pm, t)
                else:
                    mse = wt.kfold_mse(
                        pm, lambda sub: wt.target_only_weights(sub.n_models), wt.CV_FOLDS,
                        derive_seed(self.seed, "cv", t),
                    )
                self.state.record_mse(mse)
                info["switch_probability"] = guards.mode_switch_probability(self.state)
                guards.maybe_switch(self.state, t)
                info["mode"] = self.state.mode
                if self.state.mode == guards.TARGET_ONLY:
                    return wt.target_only_weights(pm.n_models), TARGET_ONLY, info
            if alpha is None:
                alpha, _ = self._alpha_and_mse(pm, t)
            info["alpha"] = alpha
            return wt.regression_weights(pm, cfg, seed_t, alpha), TARGET_ONLY, info

        if cfg.strategy == wt.WAC:
            return wt.wac_weights(pm, cfg, seed_t), WEIGHTED, info

        if cfg.strategy == wt.RGPE:
            w, losses = wt.rgpe_weights(pm, cfg, seed_t)
        else:
            w = wt.tstr_weights(pm, cfg)
            losses = None
            if self.method.guard == guards.WEIGHT_DILUTION and pm.n_obs >= 3:
                idx = wt.bootstrap_indices(pm.n_obs, cfg.bootstrap_samples, seed_t)
                losses = wt.ranking_losses(pm, idx)
        if self.method.guard == guards.WEIGHT_DILUTION and losses is not None:
            keep = guards.weight_dilution_mask(losses, min(t, budget), budget, self.state.rng)
            info["dropped"] = [int(i) for i in np.flatnonzero(~keep)]
            w = guards.apply_mask(w, keep)
        return w, TARGET_ONLY, info


def run_bo(
    method: MethodSpec,
    target: BenchmarkTask,
    historic: Sequence[ObservationDataset],
    seed: int,
    weights_override: Callable[[int, int], np.ndarray] | None = None,
) -> RunRecord:
    """One seeded run. The budget counts every objective evaluation,
    initial design included. ``weights_override(t, n_models)`` replaces the
    computed weights (used for equivalence checks)."""
    space = target.space
    record = RunRecord(
        method.name, target.id, int(seed),
        meta={"budget": method.budget, "n_init": method.initial_points, "init_mode": method.init_mode},
    )
    noise_rng = stream(seed, "noise")
    best = np.inf
    data = ObservationDataset((), np.empty(0), target.id)

    def observe(cfg, weights=None, info=None, started=None):
        nonlocal data, best
        y = target.evaluate(cfg, noise_rng)
        if not np.isfinite(y):
            raise FloatingPointError(f"objective returned {y}")
        data = data.append(cfg, y)
        best = min(best, y)
        entry = {
            "config": [_to_jsonable(v) for v in cfg.values],
            "value": y,
            "incumbent": best,
            "weights": None if weights is None else [float(w) for w in weights],
        }
        if info:
            entry.update({k: _to_jsonable(v) for k, v in info.items()})
        entry["wall_time"] = time.perf_counter() - (started or time.perf_counter())
        record.iterations.append(entry)

    weigher = None
    try:
        if method.is_standard:
            if method.init_mode == WARM_START:
                raise ValueError("warm start needs historic datasets")
            ens = EnsembleModel(space, ())
        else:
            if not historic:
                raise ValueError("transfer-learning methods need historic datasets")
            ens = construct_ensemble(space, historic, derive_seed(seed, "sources"))
            weigher = _Weigher(method, ens, historic, space, seed)

        t0 = time.perf_counter()
        if method.init_mode == WARM_START:
            init = warm_start(ens, candidate_pool(historic), method.initial_points)
        else:
            init = random_init(space, method.initial_points, derive_seed(seed, "init"))
        for cfg in init:
            observe(cfg, started=t0)
            t0 = time.perf_counter()

        while len(data) < method.budget:
            started = time.perf_counter()
            t = len(data)
            ens = update_ensemble(ens, data, derive_seed(seed, "target-gp", t))
            info = {}
            if weigher is None:
                weights, mode = np.ones(1), TARGET_ONLY
            else:
                weights, mode, info = weigher(ens, data, t)
            if weights_override is not None:
                weights = np.asarray(weights_override(t, len(ens)), dtype=float)
            ens = ens.with_weights(weights, mode)
            cfg = optimize_acquisition(
                ens, space, method.acquisition, exclude=set(data.configs),
                seed=derive_seed(seed, "acq", t), candidates=target.candidates,
            )
            observe(cfg, None if weigher is None and weights_override is None else weights,
                    info, started)
    except Exception as exc:  # noqa: BLE001 - recorded, not swallowed silently
        log.warning("run %s failed: %s", record.key, exc)
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    if weigher is not None and weigher.state.switches:
        record.meta["mode_switches"] = weigher.state.switches
    return record


def generate_historic(
    tasks: Sequence[BenchmarkTask],
    n_evals: int = 50,
    seeds: Sequence[int] = (0,),
    n_init: int = 10,
    acquisition: AcquisitionConfig = AcquisitionConfig(),
) -> list[ObservationDataset]:
    """Standard-BO datasets, task-major then seed order."""
    if n_evals < n_init:
        raise ValueError("n_evals must be >= the initial design size")
    method = MethodSpec("standard_bo", RANDOM_INIT, None, guards.NONE, acquisition, n_evals, n_init)
    out = []
    for task in tasks:
        for s in seeds:
            rec = run_bo(method, task, (), derive_seed(s, "historic", task.id))
            if rec.status != "complete":
                raise RuntimeError(f"historic run for {task.id} seed {s} failed: {rec.error}")
            configs = tuple(task.space.make(it["config"]) for it in rec.iterations)
            out.append(ObservationDataset(configs, rec.values, task.id))
    return out


def run_seed(seed: int, task_id: str) -> int:
    """Run seed shared by every method for one (task, seed) cell."""
    return derive_seed(seed, "run", task_id)


def leave_one_task_out(
    family: Sequence[BenchmarkTask],
    historic: Sequence[ObservationDataset],
    method: MethodSpec,
    seeds: Sequence[int] = tuple(range(15)),
) -> list[RunRecord]:
    if len(family) < 2:
        raise ValueError("leave-one-task-out needs at least 2 tasks")
    if len(historic) != len(family):
        raise ValueError("need exactly one historic dataset per task")
    records = []
    for i, task in enumerate(family):
        sources = [d for j, d in enumerate(historic) if j != i]
        assert all(d is not historic[i] for d in sources)
        for s in seeds:
            rec = run_bo(method, task, sources, run_seed(s, task.id))
            rec.seed = int(s)
            records.append(rec)
    return records
