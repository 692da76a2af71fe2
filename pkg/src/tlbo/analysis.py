"""Evaluation metrics: normalised regret, rank curves and minima overlap."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from scipy.stats import rankdata

from tlbo.dataset import ObservationDataset
from tlbo.space import Configuration, SearchSpace, gower_matrix

log = logging.getLogger(__name__)

CLUSTER_THRESHOLD = 0.02
REGRET_CONVENTION = (
    "regret = (incumbent - min) / (max - min); (min, max) is the known task range "
    "when available, else the extremes of every value recorded for the task"
)


@dataclass(frozen=True)
class RegretCurve:
    method: str
    mean: np.ndarray
    count: int


@dataclass(frozen=True)
class RankCurve:
    method: str
    mean: np.ndarray
    count: int


@dataclass(frozen=True)
class ClusterAssignment:
    points: tuple  # (task id, seed, Configuration)
    labels: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.n_clusters).tolist()


def _complete(records):
    out = []
    for r in records:
        if r.status == "complete":
            out.append(r)
        else:
            log.warning("skipping failed record %s", r.key)
    return out


def task_ranges(records, known: Mapping[str, tuple] | None = None) -> dict[str, tuple[float, float]]:
    """Known range where given, otherwise min/max over every recorded value."""
    known = dict(known or {})
    seen = defaultdict(list)
    for r in records:
        seen[r.task].extend(it["value"] for it in r.iterations)
    out = {}
    for task, vals in seen.items():
        if known.get(task) is not None:
            out[task] = tuple(float(v) for v in known[task])
        else:
            out[task] = (float(min(vals)), float(max(vals)))
    return out


def regret_trace(incumbents, lo: float, hi: float) -> np.ndarray:
    return (np.asarray(incumbents, dtype=float) - lo) / (hi - lo)


def normalized_regret(records, ranges: Mapping[str, tuple]) -> dict[str, RegretCurve]:
    """Per-method mean normalised simple regret per iteration.

    Methods whose runs have different lengths are truncated to the shortest.
    """
    per_method = defaultdict(list)
    for r in _complete(records):
        if r.task not in ranges:
            raise KeyError(f"no (min, max) range for task {r.task!r}")
        lo, hi = ranges[r.task]
        if not hi > lo:
            raise ValueError(f"task {r.task!r} has max <= min ({lo}, {hi})")
        per_method[r.method].append(regret_trace(r.incumbents, lo, hi))
    curves = {}
    for method in sorted(per_method):
        traces = per_method[method]
        n = min(len(t) for t in traces)
        curves[method] = RegretCurve(method, np.mean([t[:n] for t in traces], axis=0), len(traces))
    return curves


def ranking_curves(records) -> dict[str, RankCurve]:
    """Mean rank per iteration; ranks are computed per (task, seed, iteration)
    over incumbents with average ranks for ties."""
    records = _complete(records)
    methods = sorted({r.method for r in records})
    cells = defaultdict(dict)
    for r in records:
        cells[(r.task, r.seed)][r.method] = r.incumbents
    for cell, by_method in sorted(cells.items()):
        missing = [m for m in methods if m not in by_method]
        if missing:
            raise ValueError(f"cell task={cell[0]} seed={cell[1]} lacks methods {missing}")
    if not cells:
        return {}
    n = min(len(v) for c in cells.values() for v in c.values())
    total = np.zeros((len(methods), n))
    for cell in sorted(cells):
        inc = np.array([cells[cell][m][:n] for m in methods])
        total += rankdata(inc, axis=0, method="average")
    return {m: RankCurve(m, total[i] / len(cells), len(cells)) for i, m in enumerate(methods)}


def filter_minima(data: ObservationDataset, tolerance: float = 1e-9) -> list[Configuration]:
    """Inputs whose value is within a relative ``tolerance`` of the minimum."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    y = data.values
    m = y.min()
    keep = y - m <= tolerance * max(abs(m), np.finfo(float).tiny)
    return [c for c, k in zip(data.configs, keep) if k]


def _first_appearance(labels) -> np.ndarray:
    mapping = {}
    return np.array([mapping.setdefault(int(l), len(mapping)) for l in labels], dtype=np.int64)


def _configs(points) -> list[Configuration]:
    return [p[2] if isinstance(p, tuple) else p for p in points]


def agglomerative_clusters(points: Sequence, space: SearchSpace, threshold: float = CLUSTER_THRESHOLD):
    """Complete-linkage clustering on Gower distances cut at ``threshold``."""
    points = tuple(points)
    if not points:
        raise ValueError("need at least one point")
    if len(points) == 1:
        return ClusterAssignment(points, np.zeros(1, dtype=np.int64))
    d = gower_matrix(space, _configs(points))
    z = linkage(squareform(d, checks=False), method="complete")
    labels = fcluster(z, t=threshold, criterion="distance")
    return ClusterAssignment(points, _first_appearance(labels))


def spectral_clusters(points: Sequence, space: SearchSpace, k: int, seed: int = 0):
    """Spectral clustering on similarity 1 - d^2 (validation view only)."""
    from sklearn.cluster import SpectralClustering

    points = tuple(points)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    if k == n:
        return ClusterAssignment(points, np.arange(n, dtype=np.int64))
    if k == 1:
        return ClusterAssignment(points, np.zeros(n, dtype=np.int64))
    d = gower_matrix(space, _configs(points))
    affinity = 1.0 - d**2
    try:
        distinct = len({tuple(row) for row in np.round(d, 12)})
        if distinct < k:
            raise ValueError(f"only {distinct} distinct points for {k} clusters")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            labels = SpectralClustering(
                n_clusters=k, affinity="precomputed", random_state=seed, assign_labels="discretize"
            ).fit_predict(affinity)
        if len(set(labels.tolist())) != k:
            raise ValueError(f"spectral clustering found {len(set(labels.tolist()))} of {k} clusters")
    except Exception as exc:  # noqa: BLE001
        warnings.warn(f"spectral clustering degenerate ({exc}); using agglomerative labels")
        return agglomerative_clusters(points, space)
    return ClusterAssignment(points, _first_appearance(labels))


def overlap_probability(cluster_ids: Mapping[str, Sequence]) -> dict[str, float]:
    """Probability of at least one shared minimum cluster with another task.

    ``cluster_ids[task]`` holds, per seed, the set of cluster ids of that
    seed's minima. For task i and seed s:
    p = 1 - prod_{j != i} mean_{s'} [ids(i, s) and ids(j, s') are disjoint],
    then averaged over the seeds of task i.
    """
    tasks = list(cluster_ids)
    if len(tasks) < 2:
        raise ValueError("need at least 2 tasks")
    ids = {t: [frozenset(s) for s in cluster_ids[t]] for t in tasks}
    out = {}
    for ti in tasks:
        if not ids[ti] or not any(ids[ti]):
            warnings.warn(f"task {ti!r} has no minima points; probability 0")
            out[ti] = 0.0
            continue
        probs = []
        for own in ids[ti]:
            prod = 1.0
            for tj in tasks:
                if tj == ti:
                    continue
                seeds = ids[tj]
                disjoint = sum(1 for other in seeds if not own & other)
                prod *= disjoint / len(seeds) if seeds else 1.0
            probs.append(1.0 - prod)
        out[ti] = float(np.mean(probs))
    return out


def minima_analysis(historic: Sequence[tuple[str, int, ObservationDataset]], space: SearchSpace, tolerance=1e-9):
    """Cluster the minima of seed-indexed historic datasets.

    Returns (agglomerative, spectral, overlap) where ``overlap`` maps task
    to probability.
    """
    points = []
    for task, seed, data in historic:
        points.extend((task, seed, c) for c in filter_minima(data, tolerance))
    agg = agglomerative_clusters(points, space)
    spec = spectral_clusters(points, space, agg.n_clusters)
    ids = defaultdict(dict)
    for (task, seed, _), label in zip(agg.points, agg.labels):
        ids[task].setdefault(seed, set()).add(int(label))
    for task, seed, _ in historic:
        ids[task].setdefault(seed, set())
    overlap = overlap_probability({t: [ids[t][s] for s in sorted(ids[t])] for t in ids})
    return agg, spec, overlap


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def _table(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def regret_table(curves: Mapping[str, RegretCurve]) -> str:
    rows = [
        (m, t, _fmt(v), c.count) for m, c in sorted(curves.items()) for t, v in enumerate(c.mean, start=1)
    ]
    return _table(("method", "evaluation", "mean_regret", "n_runs"), rows, [REGRET_CONVENTION])


def rank_table(curves: Mapping[str, RankCurve]) -> str:
    rows = [(m, t, _fmt(v), c.count) for m, c in sorted(curves.items()) for t, v in enumerate(c.mean, start=1)]
    return _table(("method", "evaluation", "mean_rank", "n_cells"), rows)


def overlap_table(overlap: Mapping[str, float], n_seeds: int) -> str:
    rows = [(t, _fmt(p)) for t, p in sorted(overlap.items())]
    return _table(("task", "overlap_probability"), rows, [f"historic seeds per task S={n_seeds}"])


def cluster_table(agg: ClusterAssignment, spec: ClusterAssignment, space: SearchSpace) -> str:
    rows = []
    for (task, seed, cfg), a, s in zip(agg.points, agg.labels, spec.labels):
        rows.append((task, seed, int(a), int(s), *cfg.values))
    comments = [
        f"agglomerative sizes {agg.sizes()}",
        f"spectral sizes {spec.sizes()}",
    ]
    return _table(("task", "seed", "agglomerative", "spectral", *space.names), rows, comments)
