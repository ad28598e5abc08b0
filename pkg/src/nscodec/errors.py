"""Exception types raised across the codec."""


class CodecError(Exception):
    """Base class for every error the package raises on purpose."""


class UnsupportedFormat(CodecError):
    pass


class CorruptFile(CodecError):
    pass


class EmptySignal(CodecError):
    pass


class NotEnoughFiles(CodecError):
    pass


class LengthMismatch(CodecError):
    pass


class ShapeMismatch(CodecError):
    pass


class OddChannels(ShapeMismatch):
    pass


class TooFewDistinctValues(CodecError):
    pass


class SymbolOutOfRange(CodecError):
    pass


class CorruptPayload(CodecError):
    pass


class BadMagic(CodecError):
    pass


class UnsupportedVersion(CodecError):
    pass


class Truncated(CodecError):
    pass


class ModelMismatch(CodecError):
    pass


class NanLoss(CodecError):
    pass
