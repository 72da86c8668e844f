"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes: ConfigError -> 1,
LoadError -> 2, PipelineError and anything else -> 3.
"""


class PseudoboxError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PseudoboxError):
    """Invalid configuration value or inconsistent option combination."""


class LoadError(PseudoboxError):
    """A required input file is missing, malformed, or inconsistent."""


class GeometryError(PseudoboxError):
    """Invalid geometric input (bad intrinsics, nonpositive depth, ...)."""


class DomainError(PseudoboxError):
    """An operation was called outside its mathematical domain."""


class PipelineError(PseudoboxError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
