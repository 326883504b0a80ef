from dataclasses import dataclass, field, replace
from typing import Sequence, Tuple

import numpy as np

from models.errors import ConfigurationError

# Inter-antenna phase difference in radians, canonical range [0, 2*pi)
PhaseAngle = float


def _broadcast(value, count: int, name: str) -> Tuple[float, ...]:
    if np.isscalar(value):
        return tuple(float(value) for _ in range(count))
    values = tuple(float(v) for v in value)
    if len(values) != count:
        raise ConfigurationError(f"{name} needs {count} entries, got {len(values)}")
    return values


@dataclass(frozen=True)
class SystemConfig:
    """System dimensions, powers and noise level (all linear units)"""

    n: int
    k: int
    m: int
    l: int
    z: int
    user_power: Tuple[float, ...]
    interferer_power: Tuple[float, ...]
    noise_var: float
    path_var: Tuple[float, ...]

    def __post_init__(self):
        violations = self.violations()
        if violations:
            raise ConfigurationError(violations)

    def violations(self, orthogonal_pilots: bool = False) -> list:
        problems = []
        if self.n < 2:
            problems.append(f"n must be >= 2 (got {self.n})")
        if self.k < 1:
            problems.append(f"k must be >= 1 (got {self.k})")
        if self.m < 0:
            problems.append(f"m must be >= 0 (got {self.m})")
        if self.l < 1:
            problems.append(f"l must be >= 1 (got {self.l})")
        if self.z < 1:
            problems.append(f"z must be >= 1 (got {self.z})")
        if len(self.user_power) != self.k:
            problems.append(f"user_power needs {self.k} entries")
        if len(self.interferer_power) != self.m:
            problems.append(f"interferer_power needs {self.m} entries")
        if len(self.path_var) != self.k:
            problems.append(f"path_var needs {self.k} entries")
        if any(p < 0 for p in self.user_power + self.interferer_power + self.path_var):
            problems.append("powers and variances must be >= 0")
        if self.noise_var < 0:
            problems.append(f"noise_var must be >= 0 (got {self.noise_var})")
        if orthogonal_pilots and self.k > self.z:
            problems.append(f"k={self.k} orthogonal pilots need z >= k (got z={self.z})")
        return problems

    @classmethod
    def uniform(cls, n: int, k: int = 1, m: int = 0, l: int = 1, z: int = 1,
                user_power=1.0, interferer_power=1.0, noise_var: float = 1.0,
                path_var=1.0) -> "SystemConfig":
        """Build a config broadcasting scalar powers and variances"""
        return cls(
            n=int(n), k=int(k), m=int(m), l=int(l), z=int(z),
            user_power=_broadcast(user_power, int(k), "user_power"),
            interferer_power=_broadcast(interferer_power, int(m), "interferer_power"),
            noise_var=float(noise_var),
            path_var=_broadcast(path_var, int(k), "path_var"),
        )

    def with_powers(self, user_power=None, interferer_power=None) -> "SystemConfig":
        return replace(
            self,
            user_power=self.user_power if user_power is None
            else _broadcast(user_power, self.k, "user_power"),
            interferer_power=self.interferer_power if interferer_power is None
            else _broadcast(interferer_power, self.m, "interferer_power"),
        )


@dataclass(frozen=True)
class Scenario:
    """Ground-truth world state: data paths per user and interference paths"""

    config: SystemConfig
    data_gains: np.ndarray      # K x L complex
    data_angles: np.ndarray     # K x L, radians in [0, 2*pi)
    interf_gains: np.ndarray    # M complex
    interf_angles: np.ndarray   # M, radians in [0, 2*pi)
    degenerate: bool = field(default=False)

    def __post_init__(self):
        cfg = self.config
        if self.data_gains.shape != (cfg.k, cfg.l) or self.data_angles.shape != (cfg.k, cfg.l):
            raise ConfigurationError(
                f"scenario needs {cfg.k}x{cfg.l} data paths, got {self.data_gains.shape}")
        if self.interf_gains.shape != (cfg.m,) or self.interf_angles.shape != (cfg.m,):
            raise ConfigurationError(
                f"scenario needs {cfg.m} interference paths, got {self.interf_gains.shape}")
        # exact data/interference angle collision
        collision = bool(np.isin(self.interf_angles, self.data_angles).any())
        object.__setattr__(self, "degenerate", self.degenerate or collision)

    def data_paths(self, user: int) -> Sequence[Tuple[complex, float]]:
        return list(zip(self.data_gains[user], self.data_angles[user]))

    def interference_paths(self) -> Sequence[Tuple[complex, float]]:
        return list(zip(self.interf_gains, self.interf_angles))
