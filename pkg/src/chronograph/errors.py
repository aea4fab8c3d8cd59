"""Exception types shared across the pipeline."""


class ChronographError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ChronographError):
    """Bad parameter, bad config file, or a non-retryable (4xx) provider response."""


class ProviderError(ChronographError):
    """A model provider failed after retries, or returned unusable output."""


class TemplateError(ChronographError):
    """A prompt template is missing a required slot or does not exist."""


class GraphBuildError(ChronographError):
    """Inconsistent inputs while materializing the graph (e.g. cluster mismatch)."""


class GraphFormatError(ChronographError):
    """A persisted graph or index file is unreadable, truncated, or version-mismatched."""


class StaleIndexError(ChronographError):
    """A vector sidecar is paired with a graph whose content hash does not match."""


class SummarizationError(ChronographError):
    """One or more clusters ended the summarization stage without a summary."""


class DatasetError(ChronographError):
    """A QA dataset file failed validation; message cites the offending line."""
