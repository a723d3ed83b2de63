"""Exception hierarchy shared by every module in the package.

Plain I/O failures (missing file, permission denied) are left to the standard
OSError family; everything the package itself detects derives from
DemoretError so callers can catch one base class.
"""


class DemoretError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(DemoretError):
    """Records or tensors do not fit the declared container geometry."""


class ValidationError(DemoretError):
    """Invalid values: non-finite floats, duplicate ids, bad enum members."""


class UnsupportedFormatError(DemoretError):
    """Wrong magic bytes or a format version this build does not read."""


class CorruptionError(DemoretError):
    """File ends mid-structure or fails an internal consistency check."""


class IncompatibleError(DemoretError):
    """Two artifacts disagree on geometry (dims, layer ids, pooling, digest)."""


class ShapeError(DemoretError):
    """Array arguments have mismatched or unexpected dimensions."""


class ConfigError(DemoretError):
    """Configuration value out of range or inconsistent with another."""


class ParseError(DemoretError):
    """Structured text input violates its schema."""


class DataError(DemoretError):
    """Referenced example ids cannot be resolved against the corpus."""


class NumericError(DemoretError):
    """A computation produced non-finite values."""


class NoCandidatesError(DemoretError):
    """A retrieval filter left nothing to rank."""
