"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit-specific errors."""


class EmptyCorpusError(ToolkitError):
    """An ingestion or evaluation run produced zero usable records."""


class UnresolvableHeadError(ToolkitError):
    """No head noun could be identified, or it matches no scene-graph entity."""


class HallucinationError(ToolkitError):
    """Generated text mentions objects or relations outside the source chain."""

    def __init__(self, text, offending):
        super().__init__(f"generated text mentions out-of-chain words {sorted(offending)!r}: {text!r}")
        self.text = text
        self.offending = frozenset(offending)


class GeneratorUnavailableError(ToolkitError):
    """The external text generator could not be reached."""


class ParseFormatError(ToolkitError):
    """A constituency or dependency parse file is malformed."""


class InconsistentParseError(ToolkitError):
    """Constituency and dependency parses disagree on tokenization."""


class BoxOutOfBoundsError(ToolkitError, ValueError):
    """A bounding box does not fit inside its image."""


class InvalidLocPairError(ToolkitError, ValueError):
    """A location-token pair is not ordered top-left before bottom-right."""


class IncompleteInstanceError(ToolkitError):
    """A nested instance is missing expressions required for rendering."""


class MalformedRecordError(ToolkitError):
    """An evaluation record does not satisfy its protocol's requirements."""


class BackendError(ToolkitError):
    """A model backend call failed after exhausting retries."""
