"""Exception hierarchy shared across the simulator."""


class CurbsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(CurbsimError):
    """Invalid vehicle/sensor configuration (bad value, unknown field)."""


class SceneError(CurbsimError):
    """Scene document failed to parse or violated a geometric invariant."""


class SimulationFault(CurbsimError):
    """Numerical fault detected mid-step (NaN, runaway state).

    Carries the name of the offending quantity so logs point at the
    first value that went bad, not a downstream symptom.
    """

    def __init__(self, quantity: str, detail: str = ""):
        self.quantity = quantity
        super().__init__(f"simulation fault in '{quantity}'" + (f": {detail}" if detail else ""))


class ProjectionError(CurbsimError):
    """Point cannot be projected (w == 0 after view transform)."""


class ProtocolError(CurbsimError):
    """Malformed or out-of-contract bridge message."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}" + (f": {detail}" if detail else ""))


class RecordError(CurbsimError):
    """Record file unreadable, truncated, or from an incompatible version."""
