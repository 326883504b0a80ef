import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from models.errors import ConfigurationError


class PathClass(str, Enum):
    STRONG = "strong"   # data path, owned by an intended user
    WEAK = "weak"       # interference path


@dataclass(frozen=True)
class PilotBook:
    """Binary pilots: orthogonal rows for the cell, i.i.d. rows for interferers"""

    intended: np.ndarray      # K x Z, entries +-1
    interfering: np.ndarray   # M x Z, entries +-1

    def __post_init__(self):
        intended = np.atleast_2d(np.asarray(self.intended, dtype=float))
        interfering = np.asarray(self.interfering, dtype=float).reshape(-1, intended.shape[1])
        if not np.all(np.abs(intended) == 1) or not np.all(np.abs(interfering) == 1):
            raise ConfigurationError("pilot entries must be +1 or -1")
        object.__setattr__(self, "intended", intended)
        object.__setattr__(self, "interfering", interfering)

    @property
    def z(self) -> int:
        return self.intended.shape[1]

    def gammas(self, user: int) -> np.ndarray:
        """Cross-correlation s_n^T x_k / sqrt(Z) for every interferer"""
        return self.interfering @ self.intended[user] / math.sqrt(self.z)


@dataclass(frozen=True)
class AoaSpectrum:
    """Beam-scan magnitudes F(Omega_i) over a uniform grid on [0, 2*pi)"""

    values: np.ndarray
    n_antennas: int
    scan_slots: int = 0

    @property
    def n_sam(self) -> int:
        return self.values.size

    @property
    def resolution(self) -> float:
        return 2 * math.pi / self.n_sam

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_sam) * self.resolution


@dataclass(frozen=True)
class DetectedPeak:
    angle: float
    magnitude: float
    kind: PathClass


@dataclass(frozen=True)
class PathEstimate:
    """Estimated path: angle, gain (data paths only) and owner user"""

    angle: float
    kind: PathClass
    gain: Optional[complex] = None
    owner: Optional[int] = None
    magnitude: float = 0.0

    def __post_init__(self):
        if self.kind is PathClass.STRONG and self.owner is None:
            raise ConfigurationError("strong path estimates need an owner user")


@dataclass
class EstimationResult:
    data: List[PathEstimate] = field(default_factory=list)
    interference: List[PathEstimate] = field(default_factory=list)
    spectra: List[AoaSpectrum] = field(default_factory=list)

    def user_paths(self, user: int) -> List[PathEstimate]:
        return [p for p in self.data if p.owner == user]

    @property
    def interference_angles(self) -> Tuple[float, ...]:
        return tuple(p.angle for p in self.interference)
