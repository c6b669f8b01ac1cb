"""Exception taxonomy shared across the package.

Every error raised by xsng code derives from XsngError so callers can
catch the package's failures without swallowing genuine bugs.  The CLI
maps these onto its exit-code contract (see cli.py).
"""


class XsngError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(XsngError):
    """Operands have incompatible shapes or ranks."""


class ConfigError(XsngError):
    """A configuration value is invalid or internally inconsistent."""


class ContractError(XsngError):
    """A caller violated an operation's precondition."""


class ParseError(XsngError):
    """An input document could not be parsed; message carries line info."""


class ValidationError(XsngError):
    """Parsed input is structurally valid but semantically wrong."""


class NumericError(XsngError):
    """A numeric quantity became non-finite or otherwise unusable."""


class TrainingDiverged(NumericError):
    """Training loss exceeded the divergence bound or went non-finite."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FormatError(XsngError):
    """A binary artifact (checkpoint) is corrupt or has a bad version."""
