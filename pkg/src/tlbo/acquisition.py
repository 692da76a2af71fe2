"""LCB acquisition and its optimiser over mixed spaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Sequence

import numpy as np

from tlbo.ensemble import EnsembleModel
from tlbo.seeding import stream
from tlbo.space import CATEGORICAL, Configuration, SearchSpace, latin_hypercube_encoded

N_LOCAL_STARTS = 5
LOCAL_STEP = 0.05
CATEGORY_FLIP_PROB = 0.2


class NoCandidateError(RuntimeError):
    """Every candidate configuration is excluded."""


@dataclass(frozen=True)
class AcquisitionConfig:
    beta: float = 2.0
    n_random_candidates: int = 2000
    n_local_steps: int = 20
    local_neighbors: int = 10

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        for name in ("n_random_candidates", "n_local_steps", "local_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return vars(self).copy()


def lcb(mean, variance, beta: float):
    """mean - beta * sqrt(variance)."""
    return np.asarray(mean) - beta * np.sqrt(np.maximum(variance, 0.0))


def _score(ens: EnsembleModel, enc: np.ndarray, beta: float) -> np.ndarray:
    mean, var = ens.predict_encoded(enc)
    return lcb(mean, var, beta)


def _neighbours(space: SearchSpace, enc: np.ndarray, n: int, rng) -> np.ndarray:
    """``n`` random perturbations of each row of ``enc``."""
    reps = np.repeat(enc, n, axis=0)
    out = reps.copy()
    for i, var in enumerate(space.variables):
        if var.kind == CATEGORICAL:
            flip = rng.random(reps.shape[0]) < CATEGORY_FLIP_PROB
            out[flip, i] = rng.integers(0, len(var.categories), size=int(flip.sum()))
        else:
            step = LOCAL_STEP
            if var.kind != "continuous":
                step = max(step, 1.0 / (var.upper - var.lower))
            out[:, i] = reps[:, i] + rng.normal(0.0, step, size=reps.shape[0])
    return space.snap(out)


def _first_allowed(space: SearchSpace, enc: np.ndarray, order, exclude: Collection):
    """First row in ``order`` whose decoded configuration is not excluded."""
    for j in order:
        cfg = space.decode(enc[j])
        if cfg not in exclude:
            return int(j), cfg
    return None, None


def optimize_acquisition(
    ens: EnsembleModel,
    space: SearchSpace,
    cfg: AcquisitionConfig,
    exclude: Collection[Configuration] = frozenset(),
    seed=0,
    candidates: Sequence[Configuration] | None = None,
    return_details: bool = False,
):
    """Minimise LCB.

    With ``candidates`` (a finite pool such as grid rows) every
    non-excluded pool member is scored. Otherwise the candidate set is a
    Latin hypercube of ``n_random_candidates`` points followed by
    ``n_local_steps`` rounds of greedy neighbourhood moves from the best
    few. Ties go to the lowest candidate index.
    """
    exclude = frozenset(exclude)
    if candidates is not None:
        pool = [c for c in candidates if c not in exclude]
        if not pool:
            raise NoCandidateError("all candidates are excluded")
        enc = space.encode_many(pool)
        vals = _score(ens, enc, cfg.beta)
        j = int(np.argmin(vals))
        if return_details:
            return pool[j], {"encoded": enc, "values": vals}
        return pool[j]

    rng = stream(seed, "acq-lhs")
    enc = latin_hypercube_encoded(space, cfg.n_random_candidates, rng)
    vals = _score(ens, enc, cfg.beta)
    all_enc = [enc]
    all_vals = [vals]

    rng = stream(seed, "acq-local")
    starts = []
    for j in np.argsort(vals, kind="stable"):
        if space.decode(enc[j]) not in exclude:
            starts.append(j)
            if len(starts) == N_LOCAL_STARTS:
                break
    cur = enc[starts]
    cur_val = vals[starts]
    k = cfg.local_neighbors
    for _ in range(cfg.n_local_steps if starts else 0):
        nb = _neighbours(space, cur, k, rng)
        nb_vals = _score(ens, nb, cfg.beta)
        all_enc.append(nb)
        all_vals.append(nb_vals)
        for s in range(len(starts)):
            block = slice(s * k, (s + 1) * k)
            order = np.argsort(nb_vals[block], kind="stable")
            if nb_vals[block][order[0]] >= cur_val[s]:
                continue
            j, _ = _first_allowed(space, nb[block], order, exclude)
            if j is not None and nb_vals[block][j] < cur_val[s]:
                cur[s] = nb[block][j]
                cur_val[s] = nb_vals[block][j]

    enc = np.vstack(all_enc)
    values = np.concatenate(all_vals)
    j, best = _first_allowed(space, enc, np.argsort(values, kind="stable"), exclude)
    if j is None:
        raise NoCandidateError("all candidates are excluded")
    if return_details:
        return best, {"encoded": enc, "values": values, "index": j}
    return best
