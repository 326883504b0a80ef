"""Ground-truth channel and signal synthesis for a uniform linear array.

Everything here works in the phase-difference domain: a path at physical
angle phi reaches adjacent antennas with phase difference
Phi = (2*pi*d/lambda) * cos(phi), and the array response is the steering
vector [1, e^{j Phi}, ..., e^{j (N-1) Phi}].
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from models.errors import ConfigurationError, DimensionMismatch
from models.estimation import PilotBook
from models.system import Scenario, SystemConfig

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
_SERIES_CUTOFF = 1e-9
_MAX_SEPARATION_DRAWS = 10_000


def canonical_angle(phi):
    """Reduce any real angle (or array of angles) modulo 2*pi into [0, 2*pi)"""
    out = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if out.ndim == 0 else out


def circular_distance(a, b):
    """Smallest absolute phase difference between a and b, in [0, pi]"""
    d = np.abs(canonical_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return np.minimum(d, TWO_PI - d)


def aoa_to_phase(aoa: float, spacing: float, wavelength: float) -> float:
    """Physical angle of arrival (radians) to inter-antenna phase difference"""
    if wavelength <= 0:
        raise ConfigurationError(f"wavelength must be positive, got {wavelength}")
    return canonical_angle(TWO_PI * spacing / wavelength * math.cos(aoa))


def steering_vector(phi: float, n: int) -> np.ndarray:
    if n < 1:
        raise ConfigurationError(f"steering vector length must be >= 1, got {n}")
    return np.exp(1j * float(phi) * np.arange(n))


def _paths_as_arrays(paths) -> Tuple[np.ndarray, np.ndarray]:
    paths = list(paths)
    if not paths:
        raise ConfigurationError("a data channel needs at least one path")
    gains = np.array([p[0] for p in paths], dtype=complex)
    angles = np.array([p[1] for p in paths], dtype=float)
    return gains, angles


def synthesize_data_channel(paths: Sequence[Tuple[complex, float]], n: int) -> np.ndarray:
    """Sum over paths of gain * steering_vector(angle, n)"""
    gains, angles = _paths_as_arrays(paths)
    return gains @ np.exp(1j * np.outer(angles, np.arange(n)))


def synthesize_interference_channel(gain: complex, angle: float, n: int) -> np.ndarray:
    return complex(gain) * steering_vector(angle, n)


def data_channel_matrix(scenario: Scenario) -> np.ndarray:
    """N x K matrix G whose k-th column is user k's channel"""
    n = scenario.config.n
    return np.column_stack([
        synthesize_data_channel(scenario.data_paths(k), n) for k in range(scenario.config.k)
    ])


def interference_channel_matrix(scenario: Scenario) -> np.ndarray:
    """N x M matrix H whose n-th column is interferer n's channel"""
    n = scenario.config.n
    if scenario.config.m == 0:
        return np.zeros((n, 0), dtype=complex)
    return np.column_stack([
        synthesize_interference_channel(b, t, n) for b, t in scenario.interference_paths()
    ])


def complex_gaussian(rng: np.random.Generator, variance: float, size) -> np.ndarray:
    """Circularly-symmetric CN(0, variance) samples"""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def _draw_angles(rng: np.random.Generator, count: int, min_separation: float) -> np.ndarray:
    angles = rng.uniform(0.0, TWO_PI, count)
    if min_separation <= 0 or count < 2:
        return angles
    for _ in range(_MAX_SEPARATION_DRAWS):
        gaps = circular_distance(angles[:, None], angles[None, :])
        gaps[np.diag_indices(count)] = np.inf
        if gaps.min() >= min_separation:
            return angles
        angles = rng.uniform(0.0, TWO_PI, count)
    raise ConfigurationError(
        f"could not place {count} paths with separation >= {min_separation} rad")


def draw_scenario(config: SystemConfig, rng: np.random.Generator,
                  min_separation: float = 0.0) -> Scenario:
    """Draw path gains CN(0, delta_k^2) / CN(0, 1) and uniform angles

    With min_separation > 0 every pair of path angles (data and
    interference, all users) is at least that far apart on the circle.
    """
    k, l, m = config.k, config.l, config.m
    angles = canonical_angle(_draw_angles(rng, k * l + m, min_separation))
    data_gains = np.empty((k, l), dtype=complex)
    for user in range(k):
        data_gains[user] = complex_gaussian(rng, config.path_var[user], l)
    interf_gains = complex_gaussian(rng, 1.0, m)

    scenario = Scenario(
        config=config,
        data_gains=data_gains,
        data_angles=np.asarray(angles[: k * l]).reshape(k, l),
        interf_angles=np.asarray(angles[k * l:]).reshape(m),
        interf_gains=interf_gains,
    )
    if scenario.degenerate:
        logger.warning("Drawn scenario has an exact data/interference angle collision")
    return scenario


def received_signal(scenario: Scenario, x: Sequence[complex], s: Sequence[complex],
                    noise: Sequence[complex]) -> np.ndarray:
    """y = G x + H s + n"""
    cfg = scenario.config
    x = np.asarray(x, dtype=complex).ravel()
    s = np.asarray(s, dtype=complex).ravel()
    noise = np.asarray(noise, dtype=complex).ravel()
    if x.size != cfg.k or s.size != cfg.m or noise.size != cfg.n:
        raise DimensionMismatch(
            f"expected x[{cfg.k}], s[{cfg.m}], noise[{cfg.n}]; "
            f"got x[{x.size}], s[{s.size}], noise[{noise.size}]")
    return data_channel_matrix(scenario) @ x + interference_channel_matrix(scenario) @ s + noise


def received_training_matrix(scenario: Scenario, pilots, interf_pilots, noise) -> np.ndarray:
    """Y = sum_k g_k x_k^T + sum_n h_n s_n^T + N  (N x Z)"""
    cfg = scenario.config
    pilots = np.atleast_2d(np.asarray(pilots, dtype=complex))
    if pilots.shape[0] != cfg.k:
        raise DimensionMismatch(f"expected {cfg.k} pilot sequences, got {pilots.shape[0]}")
    z = pilots.shape[1]
    interf_pilots = np.asarray(interf_pilots, dtype=complex)
    if cfg.m == 0:
        interf_pilots = np.zeros((0, z), dtype=complex)
    interf_pilots = np.atleast_2d(interf_pilots)
    noise = np.asarray(noise, dtype=complex)
    if interf_pilots.shape != (cfg.m, z) or noise.shape != (cfg.n, z):
        raise DimensionMismatch(
            f"pilots have length {z}; interferer pilots {interf_pilots.shape}, noise {noise.shape}")
    return (data_channel_matrix(scenario) @ pilots
            + interference_channel_matrix(scenario) @ interf_pilots + noise)


def draw_training_observation(scenario: Scenario, pilot_book: PilotBook,
                              rng: Optional[np.random.Generator] = None,
                              noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Training observation with power-scaled pilots and CN(0, N0) noise

    A pre-drawn noise matrix may be passed to compare scenarios under the
    same noise realization.
    """
    cfg = scenario.config
    user_amp = np.sqrt(np.asarray(cfg.user_power))[:, None]
    interf_amp = np.sqrt(np.asarray(cfg.interferer_power))[:, None]
    if noise is None:
        if rng is None:
            raise ConfigurationError("either a generator or a noise matrix is required")
        noise = complex_gaussian(rng, cfg.noise_var, (cfg.n, pilot_book.z))
    return received_training_matrix(
        scenario,
        user_amp * pilot_book.intended,
        interf_amp * pilot_book.interfering,
        noise,
    )


def normalized_inner_product(phi, omega, n: int):
    """|v(omega)^H v(phi)| / n via the sine-ratio closed form

    Works elementwise on arrays. Near a multiple of 2*pi the ratio is
    replaced by its series 1 - (n^2 - 1) eps^2 / 24.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    delta = np.asarray(phi, dtype=float) - np.asarray(omega, dtype=float)
    # wrap to (-pi, pi]; the magnitude is 2*pi periodic
    eps = np.pi - np.mod(np.pi - delta, TWO_PI)
    half_sin = np.sin(eps / 2.0)
    small = np.abs(half_sin) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, half_sin)
    ratio = np.abs(np.sin(n * eps / 2.0) / (n * safe))
    series = 1.0 - (n * n - 1.0) * eps * eps / 24.0
    out = np.clip(np.where(small, series, ratio), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
