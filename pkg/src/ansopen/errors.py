"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: format/IO problems exit 3,
validation problems exit 4, numeric problems exit 5.
"""


class AnsError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AnsError):
    """An input violates a documented invariant or precondition."""


class ShapeError(ValidationError):
    """Array dimensions do not match what an operation requires."""


class NumericError(AnsError):
    """A value is non-finite or an update would produce one."""


class FormatError(AnsError):
    """A serialized artifact has a bad magic, version, or structure."""
