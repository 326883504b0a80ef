"""Uni-modulus analog beamformers built factor by factor.

A column is the left-Kronecker composition of M nulling factors (one per
interferer, on the M shortest factors) and one enhancement factor spanning
the merged remainder of the array. The placement search may move a null to
any other factor of the same length, in which case the enhancement factor
spans the antennas whose digits on the nulled factors are zero.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_ROW_INDEX
from models.beamformer import (
    AnalogBeamformer,
    EnhancementFactor,
    FactorShape,
    KronBeam,
    KronFactors,
    NullingAssignment,
    strides,
)
from models.errors import (
    ConfigurationError,
    DegenerateScenario,
    InsufficientFactors,
    InvalidRowIndex,
    TargetInNullSet,
)
from models.system import Scenario
from services.array_channel import circular_distance
from services.kron_core import (
    fourier_row,
    hadamard_matrix,
    kron_compose,
    prime_factorization,
    steering_factors,
)

logger = logging.getLogger(__name__)

BASES = ("fourier", "hadamard")
COLLISION_TOL = 1e-12
# assignments are searched exhaustively only up to this many nulls
MAX_SEARCH_NULLS = 5
MAX_PLACEMENTS = 5040


def _basis_row(n: int, row_index: int, basis: str) -> np.ndarray:
    if basis not in BASES:
        raise ConfigurationError(f"unknown nulling basis {basis!r}; use one of {BASES}")
    if not 2 <= row_index <= n:
        raise InvalidRowIndex(f"row index must be in 2..{n} for a length-{n} factor, got {row_index}")
    if basis == "hadamard" and (n == 2 or n % 4 == 0):
        return hadamard_matrix(n)[row_index - 1].astype(complex)
    return fourier_row(n, row_index)


def nulling_factor(target, row_index: int = DEFAULT_ROW_INDEX, basis: str = "fourier") -> np.ndarray:
    """Target factor multiplied elementwise by a non-first basis row

    The result is orthogonal to the target because every non-first row of
    the Fourier and Hadamard matrices sums to zero.
    """
    target = np.asarray(target, dtype=complex).ravel()
    return target * _basis_row(target.size, row_index, basis)


def _resolve_shape(shape, n: int) -> FactorShape:
    if shape is None:
        return prime_factorization(n)
    if not isinstance(shape, FactorShape):
        shape = FactorShape(tuple(shape))
    if shape.n != n:
        raise ConfigurationError(f"factor shape {shape.lengths} does not multiply to N={n}")
    return shape


def _align(g_eff: np.ndarray, scale: float) -> EnhancementFactor:
    if g_eff.size == 0 or np.max(np.abs(g_eff)) <= 1e-12 * scale:
        logger.warning("Every data path is annihilated by the nulling factors; "
                       "using an all-ones enhancement factor")
        return EnhancementFactor(np.ones(g_eff.size, dtype=complex), g_eff, degenerate=True)
    return EnhancementFactor(phase_of(g_eff), g_eff)


def enhancement_factor(data_paths: Sequence[Tuple[complex, float]],
                       fixed_factors: Sequence[np.ndarray],
                       shape: FactorShape) -> EnhancementFactor:
    """Phase-align the merged tail factor to the effective data channel"""
    fixed = [np.asarray(f, dtype=complex).ravel() for f in fixed_factors]
    grouped = shape.grouped(len(fixed))
    g_eff = np.zeros(grouped[-1], dtype=complex)
    for gain, angle in data_paths:
        u = steering_factors(angle, grouped)
        weight = complex(gain)
        for f, u_m in zip(fixed, u):
            weight *= np.vdot(f, u_m)
        g_eff += weight * u[-1]
    total = sum(abs(gain) for gain, _ in data_paths)
    scale = total * float(np.prod([f.size for f in fixed])) if fixed else total
    return _align(g_eff, scale)


def phase_of(values) -> np.ndarray:
    """e^{j angle(x)} elementwise; the phase of zero is 0"""
    values = np.asarray(values, dtype=complex)
    magnitude = np.abs(values)
    return np.where(magnitude > 0, values / np.where(magnitude > 0, magnitude, 1.0), 1.0 + 0j)


@dataclass(frozen=True)
class _Layout:
    """Candidate null positions on one sorted shape and the antenna digits they zero"""

    lengths: Tuple[int, ...]
    strides: np.ndarray      # D
    digits: np.ndarray       # N x D, digit of antenna n on factor q
    placements: np.ndarray   # P x count, factor position of each null
    rest: np.ndarray         # P x N, antennas spanned by the enhancement factor


@lru_cache(maxsize=64)
def _layout(lengths: Tuple[int, ...], count: int, search: bool) -> _Layout:
    d = len(lengths)
    if not search or count == 0:
        rows = [tuple(range(count))]
    elif math.perm(d, count) <= MAX_PLACEMENTS:
        # any factor as short as the count shortest can host a null
        rows = [p for p in permutations(range(d), count)
                if sorted(lengths[q] for q in p) == list(lengths[:count])]
    else:
        logger.warning(f"{math.perm(d, count)} null placements exceed {MAX_PLACEMENTS}; "
                       f"searching pairings on the shortest factors only")
        rows = list(permutations(range(count)))
    placements = np.array(rows, dtype=int).reshape(len(rows), count)
    stride = np.array(strides(lengths), dtype=int)
    n = int(np.prod(lengths))
    digits = (np.arange(n)[:, None] // stride[None, :]) % np.array(lengths)[None, :]
    rest = (digits[:, placements] == 0).all(axis=2).T
    return _Layout(tuple(lengths), stride, digits, placements, rest)


def _null_responses(layout: _Layout, phis: np.ndarray, thetas: np.ndarray,
                    row_index: int, basis: str) -> np.ndarray:
    """R[m, q, l] = f^H u_q(Phi_l) for interferer m's nulling factor placed on factor q"""
    responses = np.zeros((thetas.size, len(layout.lengths), phis.size), dtype=complex)
    used = np.unique(layout.placements)
    diff = phis[None, :] - thetas[:, None]
    for length in sorted({layout.lengths[q] for q in used}):
        qs = np.array([q for q in used if layout.lengths[q] == length])
        row = _basis_row(length, row_index, basis)
        phase = diff[:, None, :, None] * (layout.strides[qs][None, :, None, None] * np.arange(length))
        responses[:, qs, :] = np.exp(1j * phase) @ row.conj()
    return responses


def _build_column(data_paths, interf_angles: Sequence[float], selected: Sequence[int],
                  shape: FactorShape, row_index: int, basis: str, search: bool = False) -> KronBeam:
    """Best column over the candidate null placements of `selected`

    Every placement is scored at once: the effective channel of placement
    P is g_P[n] = sum_l a_l prod_m R[m, P_m, l] e^{j Phi_l n} on the
    antennas the enhancement factor spans, and its gain is sum |g_P|.
    """
    layout = _layout(shape.lengths, len(selected), search)
    gains = np.array([g for g, _ in data_paths], dtype=complex)
    phis = np.array([a for _, a in data_paths], dtype=float)
    thetas = np.asarray(interf_angles, dtype=float)[list(selected)]

    responses = _null_responses(layout, phis, thetas, row_index, basis)
    weights = gains[None, :] * np.prod(
        responses[np.arange(thetas.size)[None, :], layout.placements], axis=1)
    g_all = weights @ np.exp(1j * np.outer(phis, np.arange(shape.n)))
    scores = np.where(layout.rest, np.abs(g_all), 0.0).sum(axis=1)
    best = int(np.argmax(scores))

    positions = layout.placements[best]
    nulls = [
        nulling_factor(np.exp(1j * theta * layout.strides[q] * np.arange(shape.lengths[q])), row_index, basis)
        for theta, q in zip(thetas, positions)
    ]
    spanned = np.flatnonzero(layout.rest[best])
    scale = float(np.abs(gains).sum()) * float(np.prod([f.size for f in nulls]))
    enhancement = _align(g_all[best, spanned], scale)

    tail = np.zeros(shape.n, dtype=complex)
    tail[spanned] = enhancement.factor
    digits = layout.digits[:, positions]
    column = tail[np.arange(shape.n) - digits @ layout.strides[positions]]
    for m, f in enumerate(nulls):
        column = column * f[digits[:, m]]

    factors = KronFactors(tuple(nulls) + (enhancement.factor,))
    return KronBeam(
        weights=column,
        factors=factors,
        assignment=NullingAssignment(
            {int(n_idx): int(q) for n_idx, q in zip(selected, positions)}, shape.d),
        enhancement_gain=enhancement.gain,
        degenerate=enhancement.degenerate,
    )


def kron_analog_beamformer(scenario: Scenario, user: int, shape=None,
                           row_index: int = DEFAULT_ROW_INDEX, basis: str = "fourier",
                           search_assignment: bool = False,
                           interferers: Optional[Iterable[int]] = None) -> KronBeam:
    """Analog column for `user` that nulls the selected interference paths

    By default every interferer is nulled, interferer i on factor i of the
    sorted shape. With search_assignment every placement of the nulls on
    factors as short as the shortest ones, and every pairing of interferers
    to those factors, is scored and the one with the largest enhancement
    gain is kept.
    """
    cfg = scenario.config
    shape = _resolve_shape(shape, cfg.n)
    selected = list(range(cfg.m)) if interferers is None else [int(i) for i in interferers]
    if any(i < 0 or i >= cfg.m for i in selected):
        raise ConfigurationError(f"interferer indices must be in 0..{cfg.m - 1}, got {selected}")
    if len(selected) > shape.d:
        logger.error(f"Cannot null {len(selected)} interferers with {shape.d} factors (N={cfg.n})")
        raise InsufficientFactors(len(selected), shape.d, cfg.n)

    data_paths = scenario.data_paths(user)
    if selected:
        gaps = circular_distance(scenario.data_angles[user][:, None],
                                 scenario.interf_angles[selected][None, :])
        if np.any(gaps <= COLLISION_TOL):
            raise DegenerateScenario(
                f"a data path of user {user} coincides with a nulled interference path")

    search = search_assignment and bool(selected)
    if search and len(selected) > MAX_SEARCH_NULLS:
        logger.warning(f"Assignment search skipped for {len(selected)} nulls "
                       f"(limit {MAX_SEARCH_NULLS}); using the default pairing")
        search = False
    beam = _build_column(data_paths, scenario.interf_angles, selected, shape, row_index, basis, search)
    if search:
        logger.debug(f"Assignment search for user {user}: best gain {beam.enhancement_gain:.4g}")
    return beam


def multiuser_analog(scenario: Scenario, shape=None, row_index: int = DEFAULT_ROW_INDEX,
                     basis: str = "fourier", search_assignment: bool = False,
                     interferers: Optional[Iterable[int]] = None) -> AnalogBeamformer:
    """One Kronecker column per user"""
    interferers = None if interferers is None else tuple(interferers)
    beams = [
        kron_analog_beamformer(scenario, k, shape, row_index, basis, search_assignment, interferers)
        for k in range(scenario.config.k)
    ]
    flagged = [k for k, b in enumerate(beams) if b.degenerate]
    if flagged:
        logger.warning(f"Degenerate enhancement for users {flagged}")
    return AnalogBeamformer.from_beams(beams)


def kron_zf_beamformer(target: float, nulls: Sequence[float], shape, n: Optional[int] = None,
                       row_index: int = DEFAULT_ROW_INDEX, basis: str = "fourier") -> np.ndarray:
    """Beam towards `target` with an exact null at every angle in `nulls`

    Null i sits on factor i of the sorted shape; the merged tail is the
    target's own tail factor, so f^H v(target) is a product of the factor
    inner products with no extra phase rotation.
    """
    if not isinstance(shape, FactorShape):
        shape = prime_factorization(int(shape)) if np.isscalar(shape) else FactorShape(tuple(shape))
    if n is not None and shape.n != n:
        raise ConfigurationError(f"factor shape {shape.lengths} does not multiply to N={n}")
    nulls = [float(t) for t in nulls]
    if len(nulls) > shape.d:
        raise InsufficientFactors(len(nulls), shape.d, shape.n)
    if nulls and np.min(circular_distance(target, np.asarray(nulls))) <= COLLISION_TOL:
        raise TargetInNullSet(f"target angle {target:.6g} is also in the null set")

    grouped = shape.grouped(len(nulls))
    factors = [
        nulling_factor(steering_factors(theta, grouped)[m], row_index, basis)
        for m, theta in enumerate(nulls)
    ]
    factors.append(steering_factors(target, grouped)[-1])
    return kron_compose(factors)


def adaptive_allocation(scenario: Scenario, threshold: float, shape=None) -> Tuple[int, ...]:
    """Interferers worth a nulling factor: P'|beta|^2 >= threshold, strongest first

    At most D - 1 are kept so one factor is always left for enhancement.
    """
    if threshold < 0:
        raise ConfigurationError(f"power threshold must be >= 0, got {threshold}")
    shape = _resolve_shape(shape, scenario.config.n)
    powers = np.asarray(scenario.config.interferer_power) * np.abs(scenario.interf_gains) ** 2
    ranked = sorted(range(scenario.config.m), key=lambda i: (-powers[i], i))
    chosen = tuple(i for i in ranked if powers[i] >= threshold)[: max(shape.d - 1, 0)]
    logger.debug(f"Adaptive allocation keeps {len(chosen)} of {scenario.config.m} interferers")
    return chosen
