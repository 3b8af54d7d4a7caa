"""Exception hierarchy shared by all modules."""


class HyperbatError(Exception):
    """Base class for every error raised by the package."""


class InvalidParams(HyperbatError, ValueError):
    pass


class InvalidTime(HyperbatError, ValueError):
    pass


class NoCharging(HyperbatError, ValueError):
    """Raised when the holder can never charge (zero coupling)."""


class InvalidCutoff(HyperbatError, ValueError):
    pass


class TruncationInsufficient(HyperbatError, RuntimeError):
    """The Fock cutoff leaves too much population in the top shells."""

    def __init__(self, message, weight=None):
        super().__init__(message)
        self.weight = weight


class IntegrationFailure(HyperbatError, RuntimeError):
    pass


class UnphysicalMoments(HyperbatError, ValueError):
    pass


class ConfigInvalid(HyperbatError, ValueError):
    pass
