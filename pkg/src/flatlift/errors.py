"""Exception hierarchy shared across the package."""


class FlatliftError(Exception):
    """Base class for all package errors."""


class MalformedImage(FlatliftError):
    pass


class UnsupportedFormat(FlatliftError):
    pass


class DimensionMismatch(FlatliftError):
    pass


class EmptyForeground(FlatliftError):
    pass


class MalformedMesh(FlatliftError):
    pass


class DegenerateMesh(FlatliftError):
    pass


class BackendUnavailable(FlatliftError):
    pass


class MalformedResponse(FlatliftError):
    pass


class Unparseable(FlatliftError):
    pass


class NoCandidates(FlatliftError):
    pass


class CacheIo(FlatliftError):
    pass


class ManifestCorrupt(FlatliftError):
    pass


class RunMismatch(FlatliftError):
    pass


class ManifestInvalid(FlatliftError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class StageError(FlatliftError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}': {cause}")
