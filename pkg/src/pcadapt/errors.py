"""Exception types shared across the package."""


class PcAdaptError(Exception):
    """Base class for all package errors."""


class DegenerateCloud(PcAdaptError):
    """Cloud cannot be normalized (all points coincide / zero spread)."""


class KTooLarge(PcAdaptError):
    """Requested k >= number of points."""


class DegenerateRotationSeed(PcAdaptError):
    """6D rotation seed has (near-)parallel or (near-)zero vectors."""


class ShapeMismatch(PcAdaptError):
    """Array shapes disagree with the operation's contract."""


class TimestepOutOfRange(PcAdaptError):
    """Timestep outside [0, T]."""


class AlphaZero(PcAdaptError):
    """Denoised estimate undefined at t = T where alpha_t = 0."""


class EmptyRange(PcAdaptError):
    """Timestep range contains no integer timestep."""


class EmptyVoteSet(PcAdaptError):
    """Voting over zero predictions."""


class EmptyDataset(PcAdaptError):
    """Training requested on an empty dataset."""


class EmptyResult(PcAdaptError):
    """A corruption would leave fewer than the minimum number of points."""


class InfeasibleImbalance(PcAdaptError):
    """Requested class-imbalance profile gives some class zero instances."""


class UndefinedClassRecall(PcAdaptError):
    """Macro-recall undefined: no evaluated class has support."""


class ProtocolError(PcAdaptError):
    """Malformed line or out-of-contract message on the denoiser wire."""


class RemoteFailure(PcAdaptError):
    """Remote denoiser answered with an error object."""


class Timeout(PcAdaptError):
    """Remote denoiser did not answer within the deadline."""


class ConfigError(PcAdaptError):
    """Invalid run configuration."""
