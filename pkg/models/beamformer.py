from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from models.errors import ConfigurationError


@dataclass(frozen=True)
class FactorShape:
    """Ordered factor lengths (n_1 <= ... <= n_D) whose product is N"""

    lengths: Tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(sorted(int(n) for n in self.lengths))
        if not lengths:
            raise ConfigurationError("a factor shape needs at least one factor")
        if any(n < 2 for n in lengths):
            raise ConfigurationError(f"factor lengths must be >= 2, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return int(np.prod(self.lengths))

    @property
    def d(self) -> int:
        return len(self.lengths)

    def grouped(self, leading: int) -> Tuple[int, ...]:
        """Keep the first `leading` factors and merge the rest into one

        The merged tail has length 1 when every factor is kept.
        """
        head = self.lengths[:leading]
        tail = int(np.prod(self.lengths[leading:])) if leading < self.d else 1
        return head + (tail,)


def strides(lengths: Sequence[int]) -> Tuple[int, ...]:
    """Stride n_{m-1}...n_1 n_0 of every factor, with n_0 = 1"""
    out, acc = [], 1
    for n in lengths:
        out.append(acc)
        acc *= int(n)
    return tuple(out)


@dataclass(frozen=True)
class KronFactors:
    """Short complex vectors whose left-Kronecker composition has length N"""

    factors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "factors", tuple(np.asarray(f, dtype=complex).ravel() for f in self.factors))

    @property
    def lengths(self) -> Tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    def __len__(self) -> int:
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def __getitem__(self, index):
        return self.factors[index]

    def is_unimodular(self, tol: float = 1e-12) -> bool:
        return all(np.max(np.abs(np.abs(f) - 1.0)) <= tol for f in self.factors)


@dataclass(frozen=True)
class NullingAssignment:
    """Interferer index -> position in the sorted factor shape; unassigned positions enhance"""

    pairs: Dict[int, int]
    factor_count: int

    def __post_init__(self):
        factors = list(self.pairs.values())
        if len(set(factors)) != len(factors):
            raise ConfigurationError("each factor can null at most one interferer")
        if any(f < 0 or f >= self.factor_count for f in factors):
            raise ConfigurationError(f"factor index out of range 0..{self.factor_count - 1}")

    @property
    def enhancement_factors(self) -> List[int]:
        used = set(self.pairs.values())
        return [m for m in range(self.factor_count) if m not in used]


@dataclass(frozen=True)
class KronBeam:
    """One analog column with the factor form it was built from

    Composing `factors` gives `weights` only when the nulls sit on the leading
    factors; `assignment` records where they actually sit.
    """

    weights: np.ndarray
    factors: KronFactors
    assignment: NullingAssignment
    enhancement_gain: float = 0.0
    degenerate: bool = False


@dataclass(frozen=True)
class AnalogBeamformer:
    """Uni-modulus N x K analog matrix, one column per user"""

    columns: Tuple[np.ndarray, ...]
    factor_forms: Tuple[KronFactors, ...] = field(default=())
    degenerate: Tuple[bool, ...] = field(default=())

    @classmethod
    def from_beams(cls, beams: Iterable[KronBeam]) -> "AnalogBeamformer":
        beams = list(beams)
        return cls(
            columns=tuple(b.weights for b in beams),
            factor_forms=tuple(b.factors for b in beams),
            degenerate=tuple(b.degenerate for b in beams),
        )

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "AnalogBeamformer":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex).T).T
        return cls(columns=tuple(matrix[:, k].copy() for k in range(matrix.shape[1])))

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack(self.columns)

    @property
    def n_rf(self) -> int:
        return len(self.columns)

    def is_unimodular(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(np.abs(self.matrix) - 1.0)) <= tol)


@dataclass(frozen=True)
class HybridBeamformer:
    """Analog N x N_RF stage followed by a digital N_RF x K stage"""

    analog: AnalogBeamformer
    digital: np.ndarray

    def __post_init__(self):
        digital = np.atleast_2d(np.asarray(self.digital, dtype=complex))
        if digital.shape[0] != self.analog.n_rf:
            raise ConfigurationError(
                f"digital stage has {digital.shape[0]} rows, analog stage {self.analog.n_rf} columns")
        object.__setattr__(self, "digital", digital)

    @property
    def combiner(self) -> np.ndarray:
        return self.analog.matrix @ self.digital


@dataclass(frozen=True)
class EnhancementFactor:
    """Enhancement factor with the effective channel g~ it was aligned to"""

    factor: np.ndarray
    effective_channel: np.ndarray
    degenerate: bool = False

    @property
    def gain(self) -> float:
        return float(abs(np.vdot(self.factor, self.effective_channel)))
