"""Exception hierarchy shared by the pipeline stages."""


class ChoreoError(Exception):
    """Base class for all package errors."""


class CollisionError(ChoreoError):
    """Two bodies came closer than the configured collision threshold."""

    def __init__(self, message: str, t=None):
        super().__init__(message)
        self.t = t


class ZeroEnergyError(ChoreoError):
    pass


class MaxStepsExceeded(ChoreoError):
    pass


class DegenerateSeries(ChoreoError):
    pass


class OutOfRange(ChoreoError):
    pass


class RankDeficient(ChoreoError):
    pass


class NotPeriodic(ChoreoError):
    pass


class VerificationMismatch(ChoreoError):
    pass


class NoConvergence(ChoreoError):
    pass


class UnitCountMismatch(ChoreoError):
    pass


class VerificationFailed(ChoreoError):
    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateSyzygy(ChoreoError):
    pass


class EmptyWord(ChoreoError):
    pass


class ConfigError(ChoreoError):
    pass


class Divergence(ChoreoError):
    """Newton iteration failed; ``trace`` holds the iterations so far."""

    def __init__(self, message: str, trace=None, cause=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
        self.cause = cause
