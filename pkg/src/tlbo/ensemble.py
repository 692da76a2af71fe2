"""Weighted ensemble of source GPs plus a target GP.

mean(x) = sum_i w_i mu_i(x) + w_target mu_target(x)
var(x)  = sigma^2_target(x)                  (target_only mode)
        = sum_i w_i sigma^2_i(x), clipped >= 0 (weighted mode, used by WAC)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from tlbo import surrogate
from tlbo.dataset import ObservationDataset
from tlbo.seeding import derive_seed
from tlbo.space import Configuration, SearchSpace
from tlbo.surrogate import GpSurrogate

TARGET_ONLY = "target_only"
WEIGHTED = "weighted"


class EnsembleStateError(RuntimeError):
    pass


class SourceFitError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"fitting source task {index} failed: {cause}")
        self.index = index


@dataclass(frozen=True)
class EnsembleModel:
    space: SearchSpace
    source_models: tuple[GpSurrogate, ...]
    target_model: GpSurrogate | None = None
    weights: np.ndarray | None = None
    variance_mode: str = TARGET_ONLY

    @property
    def n_sources(self) -> int:
        return len(self.source_models)

    @property
    def models(self) -> tuple[GpSurrogate, ...]:
        if self.target_model is None:
            return self.source_models
        return self.source_models + (self.target_model,)

    def __len__(self):
        return len(self.models)

    def with_weights(self, weights, variance_mode: str | None = None) -> "EnsembleModel":
        w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != len(self):
            raise ValueError(f"expected {len(self)} weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        return replace(
            self, weights=w, variance_mode=variance_mode or self.variance_mode
        )

    def source_means(self, x_enc: np.ndarray) -> np.ndarray:
        """(n, N) matrix of source posterior means."""
        x_enc = np.atleast_2d(x_enc)
        if not self.source_models:
            return np.empty((x_enc.shape[0], 0))
        return np.column_stack([m.predict_mean(x_enc) for m in self.source_models])

    def predict_encoded(self, x_enc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.weights is None:
            raise EnsembleStateError("ensemble weights are not set")
        if self.target_model is None:
            raise EnsembleStateError("ensemble has no target model")
        x_enc = np.atleast_2d(x_enc)
        w_src = self.weights[:-1]
        w_t = self.weights[-1]
        mu_t, var_t = self.target_model.predict(x_enc)
        if self.variance_mode == WEIGHTED:
            mean = w_t * mu_t
            var = w_t * var_t
            for w, m in zip(w_src, self.source_models):
                mu_i, var_i = m.predict(x_enc)
                mean = mean + w * mu_i
                var = var + w * var_i
            return mean, np.maximum(var, 0.0)
        mean = self.source_means(x_enc) @ w_src + w_t * mu_t
        return mean, var_t


def construct_ensemble(
    space: SearchSpace, historic: Sequence[ObservationDataset], seed
) -> EnsembleModel:
    if not historic:
        raise ValueError("at least one historic dataset is required")
    models = []
    for i, data in enumerate(historic):
        if len(data) == 0:
            raise ValueError(f"historic dataset {i} is empty")
        try:
            models.append(surrogate.fit(space, data, derive_seed(seed, "source", i)))
        except Exception as exc:
            raise SourceFitError(i, exc) from exc
    return EnsembleModel(space, tuple(models))


def update_ensemble(ens: EnsembleModel, target_data: ObservationDataset, seed) -> EnsembleModel:
    """Drop any previous target GP and fit a fresh one on ``target_data``."""
    if len(target_data) == 0:
        raise ValueError("target dataset is empty")
    target = surrogate.fit(ens.space, target_data, seed)
    return EnsembleModel(ens.space, ens.source_models, target, None, ens.variance_mode)


def predict(ens: EnsembleModel, x: Configuration) -> tuple[float, float]:
    mean, var = ens.predict_encoded(ens.space.encode(x)[None, :])
    return float(mean[0]), float(var[0])
