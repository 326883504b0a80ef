import logging
import math
import time
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from config import DEFAULT_SEARCH_ASSIGNMENT, DEFAULT_TIMING_REPETITIONS
from models.beamformer import HybridBeamformer
from models.errors import ConfigurationError, DimensionMismatch
from models.estimation import EstimationResult
from models.system import Scenario, SystemConfig
from services.analog_design import multiuser_analog
from services.array_channel import (
    circular_distance,
    data_channel_matrix,
    draw_scenario,
    interference_channel_matrix,
)
from services.digital_design import (
    analog_mmse_hybrid,
    equal_gain_hybrid,
    fully_digital_mmse,
)

logger = logging.getLogger(__name__)

Combiner = Union[HybridBeamformer, np.ndarray]


def _combiner_matrix(beamformer: Combiner, k: int) -> np.ndarray:
    if isinstance(beamformer, HybridBeamformer):
        return beamformer.combiner
    w = np.asarray(beamformer, dtype=complex)
    w = w.reshape(-1, 1) if w.ndim == 1 else w
    if w.shape[1] != k:
        raise DimensionMismatch(f"combiner has {w.shape[1]} columns for {k} users")
    return w


def sinr(beamformer: Combiner, scenario: Scenario, k: int) -> float:
    """Post-combining SINR of user k: intra-cell, inter-cell and noise terms"""
    cfg = scenario.config
    w = _combiner_matrix(beamformer, cfg.k)[:, k]
    if w.size != cfg.n:
        raise DimensionMismatch(f"combiner has {w.size} rows, array has {cfg.n}")
    p = np.asarray(cfg.user_power)
    data = np.abs(w.conj() @ data_channel_matrix(scenario)) ** 2 * p
    inter = np.abs(w.conj() @ interference_channel_matrix(scenario)) ** 2 * np.asarray(cfg.interferer_power)
    numerator = float(data[k])
    denominator = math.fsum(np.delete(data, k)) + math.fsum(inter) + cfg.noise_var * float(np.vdot(w, w).real)
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator


def user_rate(beamformer: Combiner, scenario: Scenario, k: int) -> float:
    """log2(1 + SINR_k) in bits/s/Hz"""
    return float(math.log2(1.0 + sinr(beamformer, scenario, k)))


def sum_rate(beamformer: Combiner, scenario: Scenario) -> float:
    return math.fsum(user_rate(beamformer, scenario, k) for k in range(scenario.config.k))


def aoa_error(estimated: Sequence[float], true: Sequence[float]) -> float:
    """Mean circular error under the cheapest one-to-one matching

    True angles left without an estimate count as the worst case, pi.
    """
    estimated = np.asarray(estimated, dtype=float).ravel()
    true = np.asarray(true, dtype=float).ravel()
    if estimated.size > true.size:
        raise ConfigurationError(f"{estimated.size} estimates for {true.size} true angles")
    if true.size == 0:
        return 0.0
    if estimated.size == 0:
        return math.pi
    cost = circular_distance(estimated[:, None], true[None, :])
    rows, cols = linear_sum_assignment(cost)
    missing = true.size - rows.size
    return math.fsum(list(cost[rows, cols]) + [math.pi] * missing) / true.size


def matched_gain_error(result: EstimationResult, scenario: Scenario, user: int = 0) -> float:
    """Mean |a_hat - a| over the user's true paths, pairing estimates by angle

    A true path without an estimate contributes |a|.
    """
    paths = result.user_paths(user)
    true_angles = scenario.data_angles[user]
    true_gains = scenario.data_gains[user]
    errors = list(np.abs(true_gains))
    if paths:
        cost = circular_distance(np.array([p.angle for p in paths])[:, None], true_angles[None, :])
        for r, c in zip(*linear_sum_assignment(cost)):
            errors[c] = abs((paths[r].gain or 0) - true_gains[c])
    return math.fsum(errors) / len(errors)


def gain_error(estimates: Sequence[complex], truth: Sequence[complex]) -> float:
    estimates = np.asarray(estimates, dtype=complex)
    truth = np.asarray(truth, dtype=complex)
    if estimates.shape != truth.shape:
        raise DimensionMismatch(f"{estimates.shape} estimates for {truth.shape} gains")
    return math.fsum(np.abs(estimates - truth)) / max(truth.size, 1)


def _kronecker_construction(scenario: Scenario):
    """Analog stage only, with the placement search the experiments use"""
    return multiuser_analog(scenario, search_assignment=DEFAULT_SEARCH_ASSIGNMENT)


CONSTRUCTIONS: Dict[str, Callable[[Scenario], object]] = {
    "kronecker": _kronecker_construction,
    "digital_mmse": fully_digital_mmse,
    "equal_gain": equal_gain_hybrid,
    "analog_mmse": analog_mmse_hybrid,
}


def benchmark_construction(n_values: Sequence[int], methods: Sequence[str],
                           repetitions: int = DEFAULT_TIMING_REPETITIONS,
                           rng: Optional[np.random.Generator] = None,
                           k: int = 1, l: int = 2, m: int = 2) -> List[Dict[str, object]]:
    """Median wall-clock construction time per (N, method); channels are drawn once per N"""
    unknown = [name for name in methods if name not in CONSTRUCTIONS]
    if unknown:
        raise ConfigurationError(f"no construction benchmark for {unknown}; "
                                 f"known: {sorted(CONSTRUCTIONS)}")
    if repetitions < 1:
        raise ConfigurationError(f"repetitions must be >= 1, got {repetitions}")
    rng = np.random.default_rng() if rng is None else rng
    rows = []
    for n in n_values:
        scenario = draw_scenario(SystemConfig.uniform(n, k=k, m=m, l=l), rng)
        for name in methods:
            build = CONSTRUCTIONS[name]
            # untimed first call fills the per-shape caches
            build(scenario)
            samples = []
            for _ in range(repetitions):
                start = time.perf_counter()
                build(scenario)
                samples.append(time.perf_counter() - start)
            median = float(np.median(samples))
            logger.info(f"Construction of {name} for N={n} took {median:.6f} seconds (median)")
            rows.append({"n": int(n), "method": name, "median_seconds": median,
                         "repetitions": repetitions})
    return rows
