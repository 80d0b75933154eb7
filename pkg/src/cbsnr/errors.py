"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value or file is invalid; message names the offending key."""


class CalibrationError(ConfigError):
    """Load calibration cannot reach the requested operating point."""


class InvariantError(RuntimeError):
    """A runtime invariant was violated; carries the offending slot when known."""

    def __init__(self, message: str, slot: int | None = None, detail: dict | None = None):
        super().__init__(message if slot is None else f"slot {slot}: {message}")
        self.slot = slot
        self.detail = detail or {}
