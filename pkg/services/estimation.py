"""Two-stage channel estimation: beam-scan AoA spectra, strong/weak peak
detection with decision feedback, then per-path gain estimation.

Per-user observations are the despread training signal normalized so a
data path of gain a peaks at |a| in the spectrum.
"""
import logging
import math
import time
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from config import DEFAULT_NSAM_FACTOR, DEFAULT_ROW_INDEX
from models.errors import (
    ConfigurationError,
    DegenerateScenario,
    DimensionMismatch,
    EmptySpectrum,
    InsufficientFactors,
    TargetInNullSet,
    ZeroSeparation,
)
from models.estimation import (
    AoaSpectrum,
    DetectedPeak,
    EstimationResult,
    PathClass,
    PathEstimate,
    PilotBook,
)
from models.system import Scenario, SystemConfig
from services.analog_design import kron_zf_beamformer
from services.array_channel import canonical_angle, circular_distance, steering_vector
from services.kron_core import hadamard_matrix, prime_factorization

logger = logging.getLogger(__name__)

PEAK_MODES = ("count", "threshold")
SPECTRUM_METHODS = ("fft", "direct")
STRONG_FRACTION = 0.5
WEAK_SIGMAS = 4.0
MAD_SCALE = 1.4826
_DIRECT_CHUNK = 256
REFINE_SWEEPS = 2


def make_pilots(k: int, z: int, rng: np.random.Generator, m: int = 0) -> PilotBook:
    """Hadamard rows for the K users, Rademacher rows for the M interferers

    A single user may use any length and gets the all-ones pilot.
    """
    if k < 1 or z < 1 or m < 0:
        raise ConfigurationError(f"invalid pilot request k={k}, z={z}, m={m}")
    if k > z:
        raise ConfigurationError(f"{k} orthogonal pilots need z >= {k}, got z={z}")
    intended = np.ones((1, z)) if k == 1 else hadamard_matrix(z)[:k].astype(float)
    interfering = rng.choice(np.array([-1.0, 1.0]), size=(m, z))
    return PilotBook(intended=intended, interfering=interfering)


def despread(y, pilot) -> np.ndarray:
    """Y x / sqrt(Z) = sqrt(Z) g + sum_n gamma_n h_n + noise"""
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    pilot = np.asarray(pilot, dtype=float).ravel()
    if y.shape[1] != pilot.size:
        raise DimensionMismatch(f"observation has {y.shape[1]} symbols, pilot has {pilot.size}")
    return y @ pilot / math.sqrt(pilot.size)


def user_observation(y, pilot_book: PilotBook, user: int, power: float = 1.0) -> np.ndarray:
    """Despread observation scaled back to unit pilot power and unit despreading gain"""
    if power <= 0:
        raise ConfigurationError(f"user {user} has no training power")
    return despread(y, pilot_book.intended[user]) / math.sqrt(pilot_book.z * power)


def scan_slots(n_sam: int, n_rf: int) -> int:
    """Symbol slots needed when n_rf beams scan in parallel"""
    return int(math.ceil(n_sam / max(int(n_rf), 1)))


def aoa_spectrum(observation, n_sam: Optional[int] = None, method: str = "fft",
                 n_rf: int = 1) -> AoaSpectrum:
    """F(Omega_i) = |v(Omega_i)^H y| / N on a uniform grid over [0, 2*pi)"""
    y = np.asarray(observation, dtype=complex).ravel()
    n = y.size
    n_sam = DEFAULT_NSAM_FACTOR * n if n_sam is None else int(n_sam)
    if n_sam < 2 * n:
        raise ConfigurationError(f"scan grid needs at least 2N={2 * n} points, got {n_sam}")
    if method == "fft":
        projections = np.fft.fft(y, n_sam)
    elif method == "direct":
        grid = 2 * math.pi * np.arange(n_sam) / n_sam
        idx = np.arange(n)
        projections = np.concatenate([
            np.exp(-1j * np.outer(grid[i:i + _DIRECT_CHUNK], idx)) @ y
            for i in range(0, n_sam, _DIRECT_CHUNK)
        ])
    else:
        raise ConfigurationError(f"unknown spectrum method {method!r}; use one of {SPECTRUM_METHODS}")
    return AoaSpectrum(np.abs(projections) / n, n, scan_slots(n_sam, n_rf))


def _bin_of(angle: float, n_sam: int) -> int:
    return int(np.round(angle * n_sam / (2 * math.pi))) % n_sam


def _grid_angle(b: int, n_sam: int) -> float:
    return float(2 * math.pi * b / n_sam)


def _circular_peaks(values: np.ndarray, height: Optional[float] = None
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(bins, magnitudes, prominences) of every local maximum of a circular spectrum"""
    n_sam = values.size
    padded = np.concatenate([values, values, values])
    idx, props = find_peaks(padded, height=height, prominence=0.0, wlen=n_sam)
    keep = (idx >= n_sam) & (idx < 2 * n_sam)
    return idx[keep] - n_sam, padded[idx[keep]], props["prominences"][keep]


def _by_prominence(bins: np.ndarray, prominences: np.ndarray) -> np.ndarray:
    return np.lexsort((bins, -prominences))


def detect_peaks(spectrum: AoaSpectrum, mode: str = "count", l: int = 1, m: int = 0,
                 strong_threshold: Optional[float] = None,
                 weak_threshold: Optional[float] = None) -> List[DetectedPeak]:
    """Grid peaks classified as strong (data) or weak (interference)

    Count mode ranks the local maxima by prominence, keeps the L most
    prominent as strong and the next M as weak; it never repeats a peak,
    so merged lobes yield fewer detections. Threshold mode keeps peaks
    above the noise-floor threshold and calls those above the strong
    threshold strong.
    """
    values = np.asarray(spectrum.values, dtype=float)
    if values.size == 0:
        raise EmptySpectrum("cannot detect peaks in an empty spectrum")
    n_sam = values.size

    if mode == "count":
        bins, mags, proms = _circular_peaks(values)
        wanted = l + m
        if bins.size < wanted:
            logger.warning(f"Found {bins.size} local maxima but {wanted} paths were requested")
        order = _by_prominence(bins, proms)[:wanted]
        return [
            DetectedPeak(_grid_angle(bins[i], n_sam), float(mags[i]),
                         PathClass.STRONG if rank < l else PathClass.WEAK)
            for rank, i in enumerate(order)
        ]
    if mode != "threshold":
        raise ConfigurationError(f"unknown peak mode {mode!r}; use one of {PEAK_MODES}")

    theta_s = STRONG_FRACTION * values.max() if strong_threshold is None else strong_threshold
    theta_w = WEAK_SIGMAS * MAD_SCALE * np.median(values) if weak_threshold is None else weak_threshold
    strong_floor = max(theta_s, theta_w)
    bins, mags, _ = _circular_peaks(values, height=theta_w)
    return [
        DetectedPeak(_grid_angle(bins[i], n_sam), float(mags[i]),
                     PathClass.STRONG if mags[i] >= strong_floor else PathClass.WEAK)
        for i in np.lexsort((bins, -mags))
    ]


def _shared_lobes(major: Sequence[np.ndarray], n_sam: int, tolerance: int) -> List[np.ndarray]:
    """Per stream, which major peaks sit within `tolerance` bins of another stream's"""
    shared = []
    for user, bins in enumerate(major):
        pool = [b for other, b in enumerate(major) if other != user and b.size]
        if not pool or not bins.size:
            shared.append(np.zeros(bins.size, dtype=bool))
            continue
        gap = np.abs(bins[:, None] - np.concatenate(pool)[None, :]) % n_sam
        shared.append(np.minimum(gap, n_sam - gap).min(axis=1) <= tolerance)
    return shared


def assign_strong_paths(spectra: Sequence[AoaSpectrum], mode: str = "count", l: int = 1,
                        m: int = 0) -> Dict[int, List[DetectedPeak]]:
    """Strong peaks per user

    With interferers present (m > 0) and several streams, a lobe found among
    the major peaks of two or more despread streams is interference leaking
    through every pilot and is never a data path. A grid bin still claimed
    by several users goes to the strongest stream.
    """
    per_user = []
    for spectrum in spectra:
        values = np.asarray(spectrum.values, dtype=float)
        if mode == "count":
            bins, mags, proms = _circular_peaks(values)
            major = bins[_by_prominence(bins, proms)[: l + m]]
        else:
            peaks = detect_peaks(spectrum, mode)
            major = np.array([_bin_of(p.angle, spectrum.n_sam) for p in peaks], dtype=int)
            strong = [p for p in peaks if p.kind is PathClass.STRONG]
            bins = np.array([_bin_of(p.angle, spectrum.n_sam) for p in strong], dtype=int)
            mags = np.array([p.magnitude for p in strong])
        per_user.append((bins, mags, major))

    rejected: List[set] = [set() for _ in spectra]
    if m > 0 and len(spectra) > 1:
        n_sam = spectra[0].n_sam
        tolerance = max(1, n_sam // (4 * spectra[0].n_antennas))
        shared = _shared_lobes([major for _, _, major in per_user], n_sam, tolerance)
        for user, ((_, _, major), mask) in enumerate(zip(per_user, shared)):
            rejected[user] = set(int(b) for b in major[mask])
        logger.debug(f"Lobes shared across streams: {[sorted(r) for r in rejected]}")

    candidates = [
        (float(mag), user, int(b))
        for user, (bins, mags, _) in enumerate(per_user)
        for b, mag in zip(bins, mags) if int(b) not in rejected[user]
    ]
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    owned: Dict[int, List[DetectedPeak]] = {user: [] for user in range(len(spectra))}
    claimed: Dict[int, int] = {}
    for mag, user, b in candidates:
        if mode == "count" and len(owned[user]) >= l:
            continue
        if claimed.get(b, user) != user:
            continue
        claimed[b] = user
        owned[user].append(DetectedPeak(_grid_angle(b, spectra[user].n_sam), mag, PathClass.STRONG))
    if mode == "count":
        short = [u for u, peaks in owned.items() if len(peaks) < l]
        if short:
            logger.warning(f"Users {short} have fewer than {l} resolvable data paths")
    return owned


def decision_feedback_interference_aoa(observations: Sequence[np.ndarray],
                                       data_estimates: Sequence[Sequence[Tuple[complex, float]]],
                                       m: int, n_sam: Optional[int] = None,
                                       mode: str = "count") -> List[float]:
    """Cancel the estimated data paths, average the K residual spectra, find M weak peaks"""
    if mode == "count" and m == 0:
        return []
    spectra = []
    for y, paths in zip(observations, data_estimates):
        residual = np.asarray(y, dtype=complex).copy()
        for gain, angle in paths:
            residual -= complex(gain) * steering_vector(angle, residual.size)
        spectra.append(aoa_spectrum(residual, n_sam))
    if not spectra:
        return []
    averaged = AoaSpectrum(np.mean([s.values for s in spectra], axis=0), spectra[0].n_antennas,
                           spectra[0].scan_slots)
    if mode == "count":
        peaks = detect_peaks(averaged, "count", l=0, m=m)
    else:
        peaks = detect_peaks(averaged, "threshold", strong_threshold=math.inf)
    return [p.angle for p in peaks]


def _peak_near(objective: Callable[[float], float], angle: float, half_width: float) -> float:
    """Local maximum of `objective` within half_width of a grid estimate"""
    result = minimize_scalar(lambda w: -objective(w), bounds=(angle - half_width, angle + half_width),
                             method="bounded", options={"xatol": 1e-9})
    best = result.x if -result.fun >= objective(angle) else angle
    return float(canonical_angle(best))


def refine_angles(observations: Sequence[np.ndarray], data: Sequence[PathEstimate],
                  interference: Sequence[float], sweeps: int = REFINE_SWEEPS
                  ) -> Tuple[List[PathEstimate], List[float]]:
    """Move grid angles off the grid by cyclic re-estimation

    Each data angle maximizes |v(w)^H r| over its owner's observation with
    every other detected path cancelled; each interference angle maximizes
    the same response summed in power over all streams. Searches stay
    within pi/N of the current angle, so a path never jumps to another lobe.
    Refined data estimates carry the gains fitted jointly with the other paths.
    """
    obs = np.array([np.asarray(y, dtype=complex).ravel() for y in observations])
    k, n = obs.shape
    idx = np.arange(n)
    half_width = math.pi / n

    def steer(w: float) -> np.ndarray:
        return np.exp(1j * w * idx)

    angles = [p.angle for p in data]
    owners = [p.owner for p in data]
    thetas = [float(t) for t in interference]
    gains = [complex(np.vdot(steer(a), obs[o]) / n) for a, o in zip(angles, owners)]
    data_part = np.array([g * steer(a) for g, a in zip(gains, angles)]).reshape(len(angles), n)
    interf_part = np.zeros((len(thetas), k, n), dtype=complex)

    def model(user: int) -> np.ndarray:
        own = [i for i, o in enumerate(owners) if o == user]
        return data_part[own].sum(axis=0) + interf_part[:, user].sum(axis=0)

    for _ in range(sweeps):
        for i, user in enumerate(owners):
            residual = obs[user] - model(user) + data_part[i]
            angles[i] = _peak_near(lambda w: abs(np.vdot(steer(w), residual)), angles[i], half_width)
            v = steer(angles[i])
            gains[i] = np.vdot(v, residual) / n
            data_part[i] = gains[i] * v
        for j in range(len(thetas)):
            residual = obs - np.array([model(u) for u in range(k)]) + interf_part[j]
            thetas[j] = _peak_near(lambda w: float(np.linalg.norm(residual @ steer(-w))), thetas[j],
                                   half_width)
            v = steer(thetas[j])
            interf_part[j] = np.outer(residual @ v.conj() / n, v)

    refined = [replace(p, angle=a, gain=complex(g)) for p, a, g in zip(data, angles, gains)]
    return refined, thetas


def gain_cc(observation, angle: float) -> complex:
    """Coherent combining v(angle)^H y / N"""
    y = np.asarray(observation, dtype=complex).ravel()
    return complex(np.vdot(steering_vector(angle, y.size), y) / y.size)


def gain_zf(observation, target: float, nulls: Sequence[float], shape=None,
            row_index: int = DEFAULT_ROW_INDEX) -> complex:
    """f_ZF^H y / f_ZF^H v(target), exact in the noiseless case"""
    y = np.asarray(observation, dtype=complex).ravel()
    shape = prime_factorization(y.size) if shape is None else shape
    f = kron_zf_beamformer(target, nulls, shape, n=y.size, row_index=row_index)
    response = np.vdot(f, steering_vector(target, y.size))
    if abs(response) <= 1e-12 * y.size:
        raise DegenerateScenario(f"ZF beam has no response at the target angle {target:.6g}")
    return complex(np.vdot(f, y) / response)


def _effective_interference(scenario: Scenario, user: int) -> np.ndarray:
    cfg = scenario.config
    p = cfg.user_power[user]
    ratio = np.sqrt(np.asarray(cfg.interferer_power) / p) if p > 0 else np.zeros(cfg.m)
    return scenario.interf_gains * ratio


def contamination_level(scenario: Scenario, pilot_book: PilotBook, user: int = 0,
                        gammas: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """Pilot contamination at the user's data angles and its closed-form bound

    Returns (eta, bound) with
    eta = max_l |sum_n gamma_n beta_n v(Phi_l)^H v(Theta_n) / N| / sqrt(Z) and
    bound = 2 sum_n |gamma_n beta_n| / (sqrt(Z) N min |Theta_n - Phi_l|).
    """
    cfg = scenario.config
    if cfg.m == 0:
        return 0.0, 0.0
    gammas = pilot_book.gammas(user) if gammas is None else np.asarray(gammas, dtype=float)
    beta = _effective_interference(scenario, user)
    phis = scenario.data_angles[user]
    thetas = scenario.interf_angles
    separation = float(np.min(circular_distance(phis[:, None], thetas[None, :])))
    if separation <= 0:
        raise ZeroSeparation(f"a data path of user {user} coincides with an interference path")

    n = np.arange(cfg.n)
    inner = np.exp(1j * np.outer(thetas, n)) @ np.exp(-1j * np.outer(n, phis)) / cfg.n
    eta = float(np.max(np.abs((gammas * beta) @ inner))) / math.sqrt(pilot_book.z)
    bound = 2 * float(np.sum(np.abs(gammas * beta))) / (math.sqrt(pilot_book.z) * cfg.n * separation)
    return eta, bound


def cc_error_bound(scenario: Scenario, path: int, user: int = 0) -> float:
    """2 alpha_max (L + M - 1) / (Psi_min N) for the coherent-combining gain error"""
    cfg = scenario.config
    others = [a for i, a in enumerate(scenario.data_angles[user]) if i != path]
    others.extend(scenario.interf_angles)
    if not others:
        return 0.0
    psi_min = float(np.min(circular_distance(scenario.data_angles[user][path], np.asarray(others))))
    if psi_min <= 0:
        raise ZeroSeparation(f"path {path} of user {user} coincides with another path")
    alpha = np.concatenate([np.abs(scenario.data_gains[user]),
                            np.abs(_effective_interference(scenario, user))])
    return 2 * float(alpha.max()) * (cfg.l + cfg.m - 1) / (psi_min * cfg.n)


def predicted_error_ratio(rho: float, n: int, phi: float, theta: float) -> float:
    """Expected CC-to-ZF gain-error ratio rho / sqrt(N) + |Phi - Theta| / 2"""
    return rho / math.sqrt(n) + float(circular_distance(phi, theta)) / 2


class TwoStageEstimator:
    """AoA estimation by beam scanning followed by path-gain estimation"""

    def __init__(self, nsam_factor: int = DEFAULT_NSAM_FACTOR, peak_mode: str = "count",
                 zf_gains: bool = False, row_index: int = DEFAULT_ROW_INDEX, refine: bool = True):
        if peak_mode not in PEAK_MODES:
            raise ConfigurationError(f"unknown peak mode {peak_mode!r}; use one of {PEAK_MODES}")
        if nsam_factor < 2:
            raise ConfigurationError(f"nsam_factor must be >= 2, got {nsam_factor}")
        self.logger = logging.getLogger(__name__)
        self.nsam_factor = nsam_factor
        self.peak_mode = peak_mode
        self.zf_gains = zf_gains
        self.row_index = row_index
        self.refine = refine

    def observations(self, y, pilot_book: PilotBook, config: SystemConfig) -> List[np.ndarray]:
        return [user_observation(y, pilot_book, k, config.user_power[k]) for k in range(config.k)]

    def estimate(self, y, pilot_book: PilotBook, config: SystemConfig) -> EstimationResult:
        start = time.time()
        n_sam = self.nsam_factor * config.n
        try:
            obs = self.observations(y, pilot_book, config)
            spectra = [aoa_spectrum(o, n_sam, n_rf=config.k) for o in obs]
            owned = assign_strong_paths(spectra, self.peak_mode, config.l, config.m)

            data = [
                PathEstimate(p.angle, PathClass.STRONG, gain_cc(obs[k], p.angle), k, p.magnitude)
                for k in range(config.k) for p in owned[k]
            ]
            if self.refine:
                # cancel off-grid data paths before looking for interference
                data, _ = refine_angles(obs, data, [])
            interference = decision_feedback_interference_aoa(
                obs, [[(p.gain, p.angle) for p in data if p.owner == k] for k in range(config.k)],
                config.m, n_sam, self.peak_mode)
            if self.refine:
                data, interference = refine_angles(obs, data, interference)
                data = [replace(p, gain=gain_cc(obs[p.owner], p.angle)) for p in data]
            result = EstimationResult(
                data=data,
                interference=[PathEstimate(a, PathClass.WEAK) for a in interference],
                spectra=spectra,
            )
            if self.zf_gains:
                result = self.refine_zf(result, obs)
        except Exception as e:
            self.logger.error(f"Channel estimation failed: {str(e)}")
            raise

        self.logger.debug(f"Two-stage estimation took {time.time() - start:.2f} seconds")
        return result

    def refine_zf(self, result: EstimationResult, observations: Sequence[np.ndarray]) -> EstimationResult:
        """Re-estimate every data gain with a beam nulling all other detected paths"""
        interference = list(result.interference_angles)
        refined = []
        for k, y in enumerate(observations):
            paths = result.user_paths(k)
            angles = [p.angle for p in paths]
            for i, path in enumerate(paths):
                nulls = angles[:i] + angles[i + 1:] + interference
                gain = self._zf_or_cc(y, path.angle, nulls, path.gain)
                refined.append(replace(path, gain=gain))
        return EstimationResult(refined, list(result.interference), list(result.spectra))

    def _zf_or_cc(self, y: np.ndarray, angle: float, nulls: List[float], fallback: complex) -> complex:
        try:
            return gain_zf(y, angle, nulls, row_index=self.row_index)
        except (InsufficientFactors, DegenerateScenario, TargetInNullSet) as e:
            self.logger.debug(f"Keeping the CC gain at {angle:.4f}: {str(e)}")
            return fallback


def scenario_from_estimates(result: EstimationResult, config: SystemConfig) -> Scenario:
    """Scenario built from estimates so beamformers can be designed on estimated CSI

    Users with fewer detected paths are padded with zero-gain copies of their
    first path; estimated interferers get unit gain since only their angles
    are used for nulling.
    """
    per_user = [sorted(result.user_paths(k), key=lambda p: -abs(p.gain or 0))[: config.l]
                for k in range(config.k)]
    l = max(1, max(len(p) for p in per_user))
    gains = np.zeros((config.k, l), dtype=complex)
    angles = np.zeros((config.k, l))
    for k, paths in enumerate(per_user):
        if not paths:
            logger.warning(f"No data path estimated for user {k}")
            continue
        for i in range(l):
            src = paths[i] if i < len(paths) else paths[0]
            gains[k, i] = (src.gain or 0) if i < len(paths) else 0
            angles[k, i] = src.angle
    interf = np.asarray(result.interference_angles, dtype=float)
    estimated = replace(config, l=l, m=interf.size, interferer_power=(1.0,) * interf.size)
    return Scenario(
        config=estimated,
        data_gains=gains,
        data_angles=angles,
        interf_gains=np.ones(interf.size, dtype=complex),
        interf_angles=interf,
    )
