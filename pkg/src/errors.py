"""Exception types shared by the library, the bench CLI and the MCP server."""


class MergePathError(Exception):
    """Base class for every error raised on purpose by this package"""


class InvalidArgumentError(MergePathError, ValueError):
    """A caller passed a value outside an operation's domain (p=0, C<3, ...)"""


class InputValidationError(MergePathError):
    """Input data breaks a precondition: unsorted operands, malformed files"""


class OracleMismatchError(MergePathError):
    """A merge or sort result differs from the sequential reference"""
