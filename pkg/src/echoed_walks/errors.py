"""Exception types raised across the package."""


class EchoedWalksError(Exception):
    pass


class InvalidLaw(EchoedWalksError, ValueError):
    pass


class DegenerateModel(EchoedWalksError, ValueError):
    pass


class NegativeMomentOfAtomAtZero(EchoedWalksError, ValueError):
    pass


class DivergentIntegral(EchoedWalksError, ArithmeticError):
    pass


class OutOfMomentDomain(EchoedWalksError, ValueError):
    pass


class HypothesisViolation(EchoedWalksError, ValueError):
    pass


class BadIndices(EchoedWalksError, ValueError):
    pass


class EqualParameters(EchoedWalksError, ValueError):
    pass


class MomentConditionError(EchoedWalksError, ValueError):
    """Requested moment order exceeds what the law admits."""

    def __init__(self, message, largest_valid_k):
        super().__init__(message)
        self.largest_valid_k = largest_valid_k


class HorizonTooLarge(EchoedWalksError, ValueError):
    pass


class TiltingUnavailable(EchoedWalksError, ValueError):
    pass


class InsufficientCheckpoints(EchoedWalksError, ValueError):
    pass


class TooFewSamples(EchoedWalksError, ValueError):
    pass
