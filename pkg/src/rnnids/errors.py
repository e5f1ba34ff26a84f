"""Exception hierarchy shared by every rnnids module.

The CLI reports these by class name, so names are part of the interface.
"""


class RnnIdsError(Exception):
    """Base class for all errors raised by this package."""


# seqmodel
class EmptyCorpus(RnnIdsError):
    pass


class ShapeError(RnnIdsError):
    pass


class TooShort(RnnIdsError):
    pass


class TrainingDiverged(RnnIdsError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite in epoch {epoch}")


class UnknownToken(RnnIdsError):
    pass


class ModelFormatError(RnnIdsError):
    pass


# simmetrics
class EmptyInput(RnnIdsError):
    pass


class NotEnoughSequences(RnnIdsError):
    pass


# signatures
class ParseError(RnnIdsError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RegexSyntaxError(RnnIdsError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class DfaTooLarge(RnnIdsError):
    pass


class GenerationImpossible(RnnIdsError):
    pass


class UnrepairableOutput(RnnIdsError):
    def __init__(self, raw, cause):
        self.raw = raw
        self.cause = cause
        super().__init__(f"cannot repair {raw!r}: {cause}")


# payloads
class EmptyKey(RnnIdsError):
    pass


# dataset
class PcapFormatError(RnnIdsError):
    pass


class HostOverlapError(RnnIdsError):
    def __init__(self, addresses):
        self.addresses = sorted(addresses)
        super().__init__("hosts shared by benign and malicious pools: " + ", ".join(self.addresses))


class DatasetFormatError(RnnIdsError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# detector
class LeakageError(RnnIdsError):
    pass
