"""Exception hierarchy shared by every module."""


class PosVerifyError(Exception):
    pass


class ConfigurationError(PosVerifyError, ValueError):
    """Invalid parameters or scenario contents, detected before anything runs."""


class UsageError(PosVerifyError, ValueError):
    """A function was called with arguments that violate its preconditions."""


class ProtocolError(PosVerifyError):
    """A protocol step cannot be carried out, e.g. the key block is exhausted."""


class MeasurementRejected(PosVerifyError):
    """Timing data that is physically impossible for an honest exchange."""
