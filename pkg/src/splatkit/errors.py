"""Exception hierarchy shared across the toolkit."""


class SplatkitError(Exception):
    """Base class for all errors raised by splatkit."""


class InvalidParameterError(SplatkitError):
    """A caller-supplied value violates an operation's preconditions."""


class ParseError(SplatkitError):
    """Base class for file-format errors."""


class PlyParseError(ParseError):
    """Malformed PLY header or body structure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class PlySchemaError(ParseError):
    """PLY header is well-formed but does not carry the splat attribute schema."""

    def __init__(self, message: str, property_name: str | None = None):
        if property_name is not None:
            message = f"{message}: {property_name}"
        super().__init__(message)
        self.property_name = property_name


class PlyTruncationError(ParseError):
    """PLY body is shorter than the header-declared element count requires."""

    def __init__(self, expected: int, actual: int, unit: str = "bytes", offset: int | None = None):
        message = f"truncated PLY body: expected {expected} {unit}, got {actual}"
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.expected = expected
        self.actual = actual
        self.offset = offset


class ColmapParseError(ParseError):
    """Malformed COLMAP sparse-model file."""


class UnsupportedCameraModelError(ColmapParseError):
    """Camera model id/name outside the supported set."""


class DanglingReferenceError(ColmapParseError):
    """An image references a camera id that does not exist."""


class DatasetError(SplatkitError):
    """Training dataset cannot be assembled."""


class InsufficientSeedError(SplatkitError):
    """Too few sparse points to seed a cloud."""


class TrainDivergedError(SplatkitError):
    """Training aborted on a non-finite loss."""


class TrainCancelled(SplatkitError):
    """Training interrupted by a cancellation request."""


class ServiceError(SplatkitError):
    """Pipeline-service level failure."""
