from typing import Iterable, List, Optional


class BeamformingError(Exception):
    """Base class for every error raised by the simulator"""

    exit_code = 1

    @property
    def code(self) -> str:
        return type(self).__name__


class ConfigurationError(BeamformingError, ValueError):
    """Invalid system or experiment configuration"""

    exit_code = 2

    def __init__(self, violations: Iterable[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionMismatch(BeamformingError, ValueError):
    exit_code = 2


class InsufficientFactors(BeamformingError):
    """More nulls requested than the array has Kronecker factors"""

    exit_code = 3

    def __init__(self, required: int, available: int, n: Optional[int] = None):
        self.required = required
        self.available = available
        message = f"{required} factors required but only {available} available"
        if n is not None:
            message += (f" for N={n}; use a composite array size or select a"
                        f" subset of antennas with more prime factors")
        super().__init__(message)


class DegenerateScenario(BeamformingError):
    """A data path coincides with a path that must be nulled"""

    exit_code = 4


class TargetInNullSet(BeamformingError, ValueError):
    exit_code = 4


class ZeroSeparation(BeamformingError, ValueError):
    exit_code = 4


class UnsupportedPilotLength(BeamformingError, ValueError):
    exit_code = 2


class InvalidRowIndex(BeamformingError, ValueError):
    exit_code = 2


class EmptySpectrum(BeamformingError, ValueError):
    exit_code = 4


class SingularSystem(BeamformingError):
    exit_code = 4


class UnknownPreset(BeamformingError, KeyError):
    exit_code = 2

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown preset"


class StorageError(BeamformingError, OSError):
    exit_code = 5
