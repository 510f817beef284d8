"""
Errors - bootstrap diagnostics exception hierarchy

Every error raised by the package derives from BootDiagError; the CLI maps
the families below onto its exit codes.
"""


class BootDiagError(Exception):
    """Base class for all package errors"""


class DomainError(BootDiagError, ValueError):
    """Argument outside the domain of a probability function or measure"""


class DegenerateTailError(DomainError):
    """Anderson-Darling weight undefined: a draw maps to Phi = 0 or 1"""


class SingularOmegaError(DomainError):
    """Moment-discrepancy weight matrix is not invertible"""


class DegenerateFitError(BootDiagError):
    """A fitted model hit an exact zero denominator"""


class MissingReferenceTableError(BootDiagError, LookupError):
    """No null reference table is available for a measure"""


class ConfigError(BootDiagError, ValueError):
    """Run configuration could not be parsed or validated"""

    def __init__(self, message: str, key: str = ""):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class EmptyConditioningSetError(BootDiagError):
    """Post-test conditioning event never occurred"""


class ExternalPoolError(BootDiagError, ValueError):
    """External bootstrap pool is unusable"""


class ResultsIOError(BootDiagError, OSError):
    """Reading or writing a results / cache file failed"""

    def __init__(self, path, reason: str):
        self.path = path
        super().__init__(f"{path}: {reason}")
