"""Exception types shared across the pipeline."""


class ViewshiftError(Exception):
    """Base class for all library errors."""


class FrameMismatch(ViewshiftError):
    """Transform composition attempted across incompatible frame tags."""


class ParseError(ViewshiftError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateImageName(ParseError):
    pass


class VersionMismatch(ParseError):
    pass


class DegenerateTrajectory(ViewshiftError):
    """All frames coincide; no displacement scale can be derived."""


class ZeroAction(ViewshiftError):
    """Relative displacement too small to define a direction."""


class IndexOutOfRange(ViewshiftError, IndexError):
    pass


class MissingScale(ViewshiftError):
    """Non-metric trajectory used without reconstruction scale."""


class SynthesizerError(ViewshiftError):
    """View synthesis failed.

    kind is one of 'unavailable', 'malformed-response', 'dimension-mismatch'.
    """

    def __init__(self, kind: str, message: str, provenance: dict | None = None):
        self.kind = kind
        self.provenance = dict(provenance or {})
        super().__init__(f"{kind}: {message}")


class DimensionMismatch(ViewshiftError):
    pass


class EmptyDataset(ViewshiftError):
    pass


class MixedActionDims(ViewshiftError):
    pass


class NotUnit(ViewshiftError):
    pass


class EmptyTestSet(ViewshiftError):
    pass


class PlanReuse(ViewshiftError):
    """An A/B trial plan may be executed only once."""


class ConfigError(ViewshiftError):
    pass


class MissingInput(ViewshiftError):
    pass
