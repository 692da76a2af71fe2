"""Initial designs: Latin hypercube or greedy warm start from the source models."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from tlbo.ensemble import EnsembleModel
from tlbo.space import Configuration, SearchSpace, sample_latin_hypercube


def random_init(space: SearchSpace, n: int = 10, seed=0) -> list[Configuration]:
    return sample_latin_hypercube(space, n, seed)


def candidate_pool(historic: Sequence) -> list[Configuration]:
    """Union of historic inputs, first occurrence order, duplicates removed."""
    seen = {}
    for data in historic:
        for cfg in data.configs:
            seen.setdefault(cfg, None)
    return list(seen)


def warm_start_from_means(means: np.ndarray, n: int) -> tuple[list[int], list[float]]:
    """Greedy portfolio selection on a (candidates, models) mean matrix.

    Round p scores candidate x by the mean over models q of
    min(mu_q(x), best mu_q over already selected points) and takes the
    lowest score among unselected candidates (first index on ties).
    Returns selected row indices and their round scores.
    """
    means = np.asarray(means, dtype=float)
    n_cand = means.shape[0]
    if n > n_cand:
        raise ValueError(f"asked for {n} warm-start points from {n_cand} candidates")
    best = np.full(means.shape[1], np.inf)
    available = np.ones(n_cand, dtype=bool)
    chosen, scores = [], []
    for _ in range(n):
        score = np.minimum(means, best).mean(axis=1)
        score = np.where(available, score, np.inf)
        j = int(np.argmin(score))
        chosen.append(j)
        scores.append(float(score[j]))
        available[j] = False
        best = np.minimum(best, means[j])
    return chosen, scores


def warm_start(
    ens: EnsembleModel, candidates: Sequence[Configuration], n: int = 2
) -> list[Configuration]:
    if ens.n_sources < 1:
        raise ValueError("warm start needs at least one source model")
    if not candidates:
        raise ValueError("warm start needs a non-empty candidate pool")
    enc = ens.space.encode_many(candidates)
    means = ens.source_means(enc)
    chosen, _ = warm_start_from_means(means, n)
    return [candidates[j] for j in chosen]
