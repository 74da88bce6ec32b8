"""Exception types shared across the package."""


class CuterError(Exception):
    """Base class for errors raised by this package."""


class DegenerateFeatureError(CuterError, ValueError):
    """A feature vector is unusable for the requested kernel (e.g. zero norm for cosine)."""


class IsolatedNodeError(CuterError, ValueError):
    """A graph node has zero degree where a normalized quantity is required."""


class SizeLimitError(CuterError, ValueError):
    """A brute-force oracle was asked to enumerate a graph above its size limit."""


class DegeneratePartitionError(CuterError, ValueError):
    """A partition side has zero volume, so a normalized cut energy is undefined."""


class AmbiguousCutError(CuterError, ValueError):
    """The graph has no usable spectral gap (disconnected or numerically so)."""


class EmptyMaskError(CuterError, ValueError):
    """A mask with no set patches has no bounding box."""


class EmptyRegionError(CuterError, ValueError):
    """A pooling region contains no patches."""


class OversizeItemError(CuterError, ValueError):
    """A memory item is larger than the whole buffer budget."""


class EndOfTask(CuterError):
    """Signal: the current task's sample budget is exhausted."""


class ConfigurationError(CuterError, ValueError):
    """A configuration value or combination is invalid.

    ``path`` names the offending field in dotted JSON-path form when the
    configuration came from a file.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class FileFormatError(CuterError, ValueError):
    """A binary or JSON artifact failed to parse.

    Carries the file name and, for binary formats, the byte offset at which
    parsing failed.
    """

    def __init__(self, message, filename=None, offset=None):
        self.filename = filename
        self.offset = offset
        parts = []
        if filename is not None:
            parts.append(str(filename))
        if offset is not None:
            parts.append(f"byte {offset}")
        if parts:
            message = f"{' @ '.join(parts)}: {message}"
        super().__init__(message)
