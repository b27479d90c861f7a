"""Between-round server policies: periodic averaging of recent global models and local-epoch decay."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StructuralError

log = logging.getLogger(__name__)


@dataclass
class ServerAveragingConfig:
    P: int = 1
    R: int = 1
    enabled: bool = False

    def __post_init__(self):
        if self.P < 1:
            raise ConfigError("must be >= 1", "P")
        if self.R < 1:
            raise ConfigError("must be >= 1", "R")


@dataclass
class EpochDecayConfig:
    initial_epochs: float = 5.0
    decay_interval: int = 100
    enabled: bool = False

    def __post_init__(self):
        if not self.initial_epochs > 0:
            raise ConfigError("must be positive", "initial_epochs")
        if self.enabled and self.initial_epochs < 1:
            raise ConfigError("must be >= 1 when decay is enabled", "initial_epochs")
        if self.decay_interval < 1:
            raise ConfigError("must be >= 1", "decay_interval")


class ModelHistory:
    """Bounded FIFO of ``(round, params)`` for the most recent broadcast models."""

    def __init__(self, capacity: int):
        self.capacity = max(int(capacity), 1)
        self._buf = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._buf)

    @property
    def rounds(self) -> list[int]:
        return [t for t, _ in self._buf]

    def newest(self, k: int) -> list[np.ndarray]:
        return [w for _, w in list(self._buf)[-k:]]

    def push(self, t: int, w: np.ndarray) -> "ModelHistory":
        if self._buf and t <= self._buf[-1][0]:
            raise StructuralError(f"round {t} pushed after round {self._buf[-1][0]}")
        self._buf.append((t, w))
        return self

    def replace_newest(self, w: np.ndarray):
        t, _ = self._buf[-1]
        self._buf[-1] = (t, w)


def push_history(history: ModelHistory, t: int, w: np.ndarray) -> ModelHistory:
    return history.push(t, w)


def uniform_mean(models: list[np.ndarray]) -> np.ndarray:
    """Coordinate-wise mean, clamped to the inputs' per-coordinate range.

    The clamp only removes sub-ulp rounding excursions, which keeps the mean of
    identical models exactly equal to them.
    """
    if len(models) == 1:
        return models[0].copy()
    stack = np.stack(models)
    return np.clip(stack.mean(axis=0), stack.min(axis=0), stack.max(axis=0))


def maybe_server_average(history: ModelHistory, t: int, cfg: ServerAveragingConfig):
    """Mean of the newest ``P`` models when round ``t`` is a multiple of ``R``, else ``None``.

    The caller replaces the just-aggregated model with the result, both for
    broadcast and as the newest history entry.
    """
    if not cfg.enabled or t % cfg.R != 0:
        return None
    if len(history) < cfg.P:
        log.info("round %d: %d models in history, need %d; skipping average", t, len(history), cfg.P)
        return None
    return uniform_mean(history.newest(cfg.P))


def epochs_at(t: int, cfg: EpochDecayConfig) -> float:
    """Local epochs for 1-indexed round ``t``: halve every ``decay_interval`` rounds, floor at 1."""
    if not cfg.enabled:
        return float(cfg.initial_epochs)
    halvings = (t - 1) // cfg.decay_interval
    return max(math.ldexp(float(cfg.initial_epochs), -halvings), 1.0)


def cumulative_epochs(rounds: int, cfg: EpochDecayConfig) -> float:
    return float(sum(epochs_at(t, cfg) for t in range(1, rounds + 1)))
