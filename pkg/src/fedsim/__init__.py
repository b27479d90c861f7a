"""Deterministic FedAvg simulator with periodic server-side model averaging and local-epoch decay."""

from .errors import ConfigError, DivergenceError, FormatError, RangeError, StructuralError

__version__ = "0.1.0"
