"""Bad-transfer guards: weight dilution dropping and two-mode switching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ENSEMBLE = "ensemble"
TARGET_ONLY = "target_only"

NONE = "none"
WEIGHT_DILUTION = "weight_dilution"
MODE_SWITCH = "mode_switch"
GUARDS = (NONE, WEIGHT_DILUTION, MODE_SWITCH)


def drop_probabilities(losses: np.ndarray, t: int, budget: int) -> np.ndarray:
    """Per-source drop probability from (S, N+1) bootstrap losses.

    p_i = 1 - (1 - t/T) * #{s : L[s, i] < L[s, target]} / S
    """
    losses = np.asarray(losses)
    if not 0 <= t <= budget or budget < 1:
        raise ValueError("need 0 <= t <= budget and budget >= 1")
    beats = (losses[:, :-1] < losses[:, -1:]).mean(axis=0)
    return np.clip(1.0 - (1.0 - t / budget) * beats, 0.0, 1.0)


def weight_dilution_mask(losses: np.ndarray, t: int, budget: int, rng) -> np.ndarray:
    """Boolean keep-mask over source models (True = keep)."""
    p = drop_probabilities(losses, t, budget)
    return rng.random(p.shape[0]) >= p


def apply_mask(weights: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Zero dropped sources and renormalise; all-zero falls back to the target."""
    w = np.array(weights, dtype=float)
    w[:-1][~np.asarray(keep, dtype=bool)] = 0.0
    total = w.sum()
    if total <= 0:
        w = np.zeros_like(w)
        w[-1] = 1.0
        return w
    return w / total


@dataclass
class GuardState:
    rng: np.random.Generator
    mode: str = ENSEMBLE
    mse_history: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    switches: list = field(default_factory=list)

    def record_mse(self, mse: float | None) -> None:
        if mse is not None:
            self.mse_history.append(float(mse))

    def record_observations(self, values) -> None:
        """Set the observed objective values so far (may only grow)."""
        values = [float(v) for v in values]
        if values[: len(self.observations)] != self.observations:
            raise ValueError("observation history can only grow")
        self.observations = values


def mode_switch_probability(state: GuardState) -> float:
    """max(0, (mse_{t-1} - m) / m), m the mean of the last two MSEs, gated on
    the last observation failing to improve the incumbent; clamped to [0, 1]."""
    ys = state.observations
    if len(state.mse_history) < 2 or len(ys) < 2:
        return 0.0
    if not ys[-1] > min(ys[:-1]):
        return 0.0
    last, prev = state.mse_history[-1], state.mse_history[-2]
    mean = 0.5 * (last + prev)
    if mean <= 0:
        return 0.0
    return float(min(1.0, max(0.0, (last - mean) / mean)))


def maybe_switch(state: GuardState, iteration: int | None = None) -> bool:
    """Bernoulli draw on the switch probability; flips ``state.mode``."""
    p = mode_switch_probability(state)
    flip = bool(state.rng.random() < p) if p > 0 else False
    if flip:
        state.mode = TARGET_ONLY if state.mode == ENSEMBLE else ENSEMBLE
        state.switches.append({"iteration": iteration, "probability": p, "to": state.mode})
    return flip
