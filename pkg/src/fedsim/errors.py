"""Exception types raised across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration or precondition; ``field`` names the offending setting."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class StructuralError(ValueError):
    """Array shapes or layouts that do not line up."""


class FormatError(ValueError):
    """Malformed IDX payload."""


class RangeError(ValueError):
    """Value outside its permitted domain (e.g. a label byte above 9)."""


class DivergenceError(RuntimeError):
    def __init__(self, trial, round_):
        super().__init__(f"non-finite parameters in trial {trial} at round {round_}")
        self.trial = trial
        self.round = round_
