"""Per-round records, rounds-to-accuracy and cross-trial statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

THRESHOLDS = (0.90, 0.95, 0.97, 0.98)


@dataclass
class RoundRecord:
    round: int
    test_accuracy: float
    mean_train_loss: float
    epochs_used: float
    cumulative_epoch_units: float
    server_avg_applied: bool
    wall_ms: int = 0


@dataclass
class TrialSummary:
    seed: int
    records: list[RoundRecord]
    T: dict[float, int | None] = field(default_factory=dict)

    @classmethod
    def from_records(cls, seed, records, thresholds=THRESHOLDS):
        return cls(seed, records, {a: rounds_to_accuracy(records, a) for a in thresholds})


@dataclass
class ThresholdStats:
    mean: float | None
    std: float | None
    reached: int
    variance_defined: bool


def _check_threshold(a):
    if not 0 < a <= 1:
        raise ConfigError(f"threshold {a} outside (0, 1]", "threshold")


def rounds_to_accuracy(records: list[RoundRecord], a: float) -> int | None:
    """First round whose test accuracy is at least ``a``; ``None`` if never reached."""
    _check_threshold(a)
    for r in records:
        if r.test_accuracy >= a:
            return r.round
    return None


def summarize(trials: list[TrialSummary], a: float) -> ThresholdStats:
    """Mean and sample (n-1) std of T_a over the trials that reached ``a``.

    A lone reaching trial reports std 0 with ``variance_defined`` false.
    """
    _check_threshold(a)
    if not trials:
        raise ConfigError("need at least one trial", "trials")
    hits = [t.T[a] if a in t.T else rounds_to_accuracy(t.records, a) for t in trials]
    hits = [h for h in hits if h is not None]
    n = len(hits)
    if n == 0:
        return ThresholdStats(None, None, 0, False)
    mean = math.fsum(hits) / n
    if n == 1:
        return ThresholdStats(mean, 0.0, 1, False)
    var = math.fsum((h - mean) ** 2 for h in hits) / (n - 1)
    return ThresholdStats(mean, math.sqrt(var), n, True)
