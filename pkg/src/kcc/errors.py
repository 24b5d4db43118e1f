"""Exception hierarchy shared across the package.

Validation problems (bad inputs, violated invariants, configuration drift)
and storage problems (corrupt or unreadable files) are kept on separate
branches so callers can map them to distinct exit codes.
"""


class KCCError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(KCCError):
    """Input object or configuration violates a documented invariant."""


class ConfigDriftError(ValidationError):
    """Stored gallery fingerprint does not match the expected configuration."""


class NoForegroundError(ValidationError):
    """Operation requires at least one foreground pixel."""


class ContainerFormatError(KCCError):
    """Container file is unreadable; base for the distinct failure modes."""


class ChecksumError(ContainerFormatError):
    """Payload bytes of an entry do not match their stored CRC-32."""


class VersionError(ContainerFormatError):
    """File declares a format version this code does not understand."""


class TruncatedFileError(ContainerFormatError):
    """File ends before the bytes the manifest promises."""
