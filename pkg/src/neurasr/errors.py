"""Exception types shared across the toolkit."""


class CorpusError(Exception):
    """A corpus file or directory is missing or unreadable."""


class SchemaError(ValueError):
    """An on-disk artifact violates the corpus schema."""


class FilterDesignError(ValueError):
    """A requested filter cannot be realized stably."""


class StaleTapeError(RuntimeError):
    """backward() was called twice on the same recorded computation."""


class ConfigError(ValueError):
    """An experiment configuration is inconsistent with itself or the corpus."""
