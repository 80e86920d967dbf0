"""Exception types shared across the pipeline."""


class HistnerError(Exception):
    """Base class for all package errors."""


# corpus ---------------------------------------------------------------

class MalformedRow(HistnerError):
    """A data row has the wrong column count or an empty surface."""


class UnknownTagSyntax(HistnerError):
    """A tag is not O, B-X or I-X."""


class DanglingInsideTag(HistnerError):
    """An I-X tag appears with no open B-X/I-X run of the same label."""


class OverlappingSpans(HistnerError):
    """Entity spans overlap where they must not."""


class InvalidSpans(HistnerError):
    """A span violates document bounds or ordering."""


class DatasetError(HistnerError):
    """Dataset-level problem (duplicate ids, missing files, bad label set)."""


# retrieval ------------------------------------------------------------

class EmptyCorpus(HistnerError):
    """No documents were given to build statistics from."""


class ModelMismatch(HistnerError):
    """Filtered documents come from different term-weight models."""


class NoCandidates(HistnerError):
    """The candidate pool for ranking is empty."""


class MissingVector(HistnerError):
    """A document id has no embedding vector."""


class ZeroVector(HistnerError):
    """A vector has zero norm, cosine similarity is undefined."""


class EmbeddingTableFormatError(HistnerError):
    """An embedding table file does not follow the wire format."""


# prompting ------------------------------------------------------------

class EmptyDocument(HistnerError):
    """A prompt was requested for a document with no tokens."""


class EmptyExamples(HistnerError):
    """Few-shot rendering requires at least one example."""


# llm gateway ----------------------------------------------------------

class ProviderUnavailable(HistnerError):
    """The provider kept failing transiently until retries ran out."""


class MalformedProviderReply(HistnerError):
    """The provider answered with a payload that carries no text."""


class ScriptMiss(HistnerError):
    """A scripted mock provider has no entry for the request."""


# response processing --------------------------------------------------

class UnparseableReply(HistnerError):
    """No bracketed tuple list could be extracted from a reply."""


# voting ---------------------------------------------------------------

class LengthMismatch(HistnerError):
    """Per-run tag sequences disagree on length."""


# scoring --------------------------------------------------------------

class TooFewRuns(HistnerError):
    """Cross-run statistics need at least two runs."""


# runner ---------------------------------------------------------------

class ConfigError(HistnerError):
    """The experiment configuration is invalid."""
