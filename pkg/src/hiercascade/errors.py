"""Exception types raised across the package."""


class CascadeError(Exception):
    """Base class for all package errors."""


class CalibrationError(CascadeError):
    """A calibration file or profile violates its schema or invariants."""


class ThresholdError(CascadeError, ValueError):
    """Thresholds are out of [0, 1] or out of order."""


class ConfigError(CascadeError, ValueError):
    """A cascade configuration violates its invariants."""


class InfeasibleTask(CascadeError):
    """No cascade, not even the fallback alone, satisfies the node constraints."""

    def __init__(self, reasons):
        self.reasons = tuple(reasons)
        super().__init__("infeasible task: " + ", ".join(self.reasons))


class ConstraintUnsatisfiable(CascadeError):
    """The fallback alone violates the latency deadline."""


class ScenarioError(CascadeError, ValueError):
    """A workload scenario is inconsistent with the deployed cascade."""
