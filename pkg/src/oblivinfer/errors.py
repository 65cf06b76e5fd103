"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or layer shape mismatch."""


class ModelError(Exception):
    """Base for model manifest / weight blob problems."""


class ParseError(ModelError):
    """Manifest JSON is malformed or missing required fields."""


class ShapeChainError(ModelError):
    """Layer shapes do not chain consistently."""


class BlobError(ModelError):
    """Weight blob length does not match the declared parameters."""


class ChecksumError(ModelError):
    """Weight blob checksum does not match the manifest."""


class TraceError(Exception):
    """Trace recording, comparison, or file format problem."""


class GranularityError(TraceError):
    """Operation mixed traces of different granularities or layouts."""


class ExtractionError(Exception):
    """A channel trace could not be parsed into branch features."""


class TrainingError(Exception):
    """Training diverged or was misconfigured."""


class DatasetError(Exception):
    """Dataset file is missing, malformed, or inconsistent."""
