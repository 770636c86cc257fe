"""Exception hierarchy for the sracare model."""


class SracareError(Exception):
    """Base class for every error raised by the model."""


class ConfigError(SracareError):
    pass


class MapInvalid(SracareError):
    """Memory map has overlapping, empty or misplaced regions."""


class SizeMismatch(SracareError):
    pass


class OutOfRange(SracareError):
    pass


class BadBaud(SracareError):
    pass


class WrongPhase(SracareError):
    """Session operation called outside its phase."""


class MalformedMessage(SracareError):
    pass


class UnexpectedMessage(SracareError):
    pass


class ChannelClosed(SracareError):
    pass


class BadPayloadLength(SracareError):
    pass


class EmptyBinary(SracareError):
    pass


class FrameOutOfRange(SracareError):
    pass


class GoldenCorrupt(SracareError):
    """The ROM recovery source failed its own verification."""


class AddrInvalid(SracareError):
    pass


class RegionInvalid(SracareError):
    pass


class OffsetInvalid(SracareError):
    pass


class UnknownProposition(SracareError):
    pass


class FormulaSyntaxError(SracareError):
    pass


class TraceFormatError(SracareError):
    pass


class TraceFinalized(SracareError):
    pass


class IncompleteScenario(SracareError):
    pass


class DepthExceeded(SracareError):
    pass


class PmpLocked(SracareError):
    """Attempt to modify a locked PMP entry."""
