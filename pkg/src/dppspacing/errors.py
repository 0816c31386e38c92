"""Exception hierarchy for the package."""


class DPPError(Exception):
    """Base class for all errors raised by dppspacing."""


# spectral densities and kernels
class RangeViolation(DPPError):
    pass


class NotEven(DPPError):
    pass


class DivergentMoment(DPPError):
    pass


class QuadratureFailure(DPPError):
    pass


# finite-point algebra
class DegenerateTuple(DPPError):
    pass


class TooLarge(DPPError):
    pass


class PartitionAmbiguity(DPPError):
    pass


class NotPSD(DPPError):
    pass


# operators
class OrderTooSmall(DPPError):
    pass


class EigOutOfRange(DPPError):
    pass


class SingularBlock(DPPError):
    pass


class TruncationNotConverged(DPPError):
    pass


# sampling and statistics
class SamplerError(DPPError):
    pass


class NumericalUnderflow(SamplerError):
    pass


class InsufficientTrials(DPPError):
    pass


class ConfigError(DPPError):
    pass


class RunAborted(DPPError):
    pass
