"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to: 2 for malformed input or
files, 3 for consistency failures between artifacts, 4 for numerical failure.
"""


class CodecError(Exception):
    exit_code = 2


class InvalidInput(CodecError, ValueError):
    pass


class InvalidRank(InvalidInput):
    pass


class InvalidConfig(InvalidInput):
    pass


class DegenerateInput(InvalidInput):
    pass


class InsufficientData(CodecError):
    pass


class ShapeMismatch(InvalidInput):
    exit_code = 3


class CodebookMismatch(CodecError):
    exit_code = 3


class CorruptStream(CodecError):
    pass


class UnsupportedVersion(CodecError):
    pass


class UnsupportedFormat(CodecError):
    pass


class UnsupportedDepth(CodecError):
    pass


class CorruptFile(CodecError):
    pass


class NumericalFailure(CodecError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, off_diagonal=None):
        super().__init__(message)
        self.off_diagonal = off_diagonal
