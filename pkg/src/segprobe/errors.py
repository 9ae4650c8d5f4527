"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, MissingArtifactError -> 2,
NumericalError -> 3. Everything else inherits SegprobeError and exits 1.
"""


class SegprobeError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SegprobeError):
    """Invalid argument or data value (bad rating, empty target set, ...)."""


class ParseError(SegprobeError):
    """Malformed input file; message carries file/line/tier context."""


class ConfigError(SegprobeError):
    """Run configuration is invalid or references missing paths."""


class MissingArtifactError(SegprobeError):
    """A pipeline stage was invoked before its dependency stages."""


class NumericalError(SegprobeError):
    """An optimization or linear-algebra step failed to produce a result."""
