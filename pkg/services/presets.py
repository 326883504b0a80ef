"""Named experiments and the per-trial evaluators the Monte Carlo engine runs.

Every evaluator takes one trial's generator and returns an ordered mapping
(method, metric) -> value; the engine averages those over trials.
"""
import logging
import math
from dataclasses import replace
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

import config as settings
from models.errors import ConfigurationError, UnknownPreset
from models.experiment import ExperimentSpec
from models.system import Scenario, SystemConfig
from services.analog_design import adaptive_allocation, multiuser_analog
from services.array_channel import (
    canonical_angle,
    complex_gaussian,
    draw_scenario,
    draw_training_observation,
    steering_vector,
)
from services.digital_design import (
    analog_mmse_hybrid,
    equal_gain_hybrid,
    fully_digital_mmse,
    kronecker_hybrid,
)
from services.estimation import (
    TwoStageEstimator,
    gain_cc,
    gain_zf,
    make_pilots,
    scenario_from_estimates,
    user_observation,
)
from services.kron_core import prime_factorization
from services.metrics import CONSTRUCTIONS, aoa_error, benchmark_construction, matched_gain_error, sum_rate

logger = logging.getLogger(__name__)

TrialResult = Dict[Tuple[str, str], float]

RATE_METHODS = ("kronecker", "kronecker_estimated", "digital_mmse", "equal_gain", "analog_mmse")
ESTIMATION_METHODS = ("cc", "zf")
SPECTRUM_METHODS = ("spectrum",)
KINDS = ("rate", "timing", "estimation", "spectrum")
SWEEP_PARAMS = ("rho_u", "rho_i", "n", "z", "k", "m", "l", "separation")
INTEGER_PARAMS = ("n", "z", "k", "m", "l")


def split_method(label: str) -> Tuple[str, Optional[float]]:
    """'zf@0.05' -> ('zf', 0.05): the suffix pins the data/interference separation"""
    base, _, suffix = label.partition("@")
    if not suffix:
        return base, None
    try:
        return base, float(suffix)
    except ValueError:
        raise ConfigurationError(f"method {label!r} has a non-numeric separation suffix")


def infer_kind(methods: Sequence[str]) -> str:
    bases = {split_method(m)[0] for m in methods}
    if bases <= set(ESTIMATION_METHODS):
        return "estimation"
    if bases <= set(SPECTRUM_METHODS):
        return "spectrum"
    return "rate"


def method_violations(kind: str, methods: Sequence[str]) -> list:
    allowed = {
        "rate": RATE_METHODS,
        "timing": tuple(CONSTRUCTIONS),
        "estimation": ESTIMATION_METHODS,
        "spectrum": SPECTRUM_METHODS,
    }.get(kind)
    if allowed is None:
        return [f"unknown kind {kind!r}; use one of {KINDS}"]
    return [f"method {m!r} is not available for kind {kind!r} (use {', '.join(allowed)})"
            for m in methods if split_method(m)[0] not in allowed]


def system_config(system: Mapping[str, Any]) -> SystemConfig:
    """Linear-unit system dictionary to a validated SystemConfig"""
    return SystemConfig.uniform(
        n=int(system["n"]), k=int(system["k"]), m=int(system["m"]), l=int(system["l"]),
        z=int(system["z"]),
        user_power=system["user_power"],
        interferer_power=system["interferer_power"],
        noise_var=system["noise_var"],
        path_var=system["path_var"],
    )


def system_at(system: Mapping[str, Any], param: str, value: float) -> Dict[str, Any]:
    """Apply one sweep value (linear) to the fixed system settings"""
    point = dict(system)
    if param == "rho_u":
        point["user_power"] = value * point["noise_var"]
    elif param == "rho_i":
        point["interferer_power"] = value * point["noise_var"]
    elif param == "separation":
        point["min_separation"] = value
    elif param in INTEGER_PARAMS:
        point[param] = int(round(value))
    else:
        raise ConfigurationError(f"unknown sweep parameter {param!r}; use one of {SWEEP_PARAMS}")
    return point


def base_system(**overrides) -> Dict[str, Any]:
    """The reference system in linear units; SNRs are P / N0"""
    defaults = settings.DEFAULT_SYSTEM
    noise_var = overrides.pop("noise_var", defaults["noise_var"])
    system = {
        "n": defaults["n"], "k": defaults["k"], "m": defaults["m"], "l": defaults["l"],
        "z": defaults["z"],
        "user_power": settings.db_to_linear(defaults["rho_u_db"]) * noise_var,
        "interferer_power": settings.db_to_linear(defaults["rho_i_db"]) * noise_var,
        "noise_var": noise_var,
        "path_var": defaults["path_var"],
        "min_separation": defaults["min_separation"],
    }
    system.update(overrides)
    return system


def _interferer_subset(scenario: Scenario, options: Mapping[str, Any]):
    threshold = options.get("null_threshold")
    if threshold is None:
        return None
    return adaptive_allocation(scenario, float(threshold))


def analog_options(options: Mapping[str, Any]) -> Dict[str, Any]:
    return {
        "row_index": int(options.get("row_index", settings.DEFAULT_ROW_INDEX)),
        "basis": options.get("basis", "fourier"),
        "search_assignment": bool(options.get("search_assignment", settings.DEFAULT_SEARCH_ASSIGNMENT)),
    }


def _estimator(options: Mapping[str, Any]) -> TwoStageEstimator:
    return TwoStageEstimator(
        nsam_factor=int(options.get("nsam_factor", settings.NSAM_FACTOR)),
        peak_mode=options.get("peak_mode", "count"),
        row_index=int(options.get("row_index", settings.DEFAULT_ROW_INDEX)),
        refine=bool(options.get("refine", settings.DEFAULT_REFINE_ANGLES)),
    )


def _estimated_csi_hybrid(scenario: Scenario, rng: np.random.Generator, options: Mapping[str, Any]):
    cfg = scenario.config
    book = make_pilots(cfg.k, cfg.z, rng, cfg.m)
    y = draw_training_observation(scenario, book, rng)
    result = _estimator(options).estimate(y, book, cfg)
    estimated = scenario_from_estimates(result, cfg)
    budget = prime_factorization(cfg.n).d
    interferers = tuple(range(min(estimated.config.m, budget)))
    analog = multiuser_analog(estimated, interferers=interferers, **analog_options(options))
    # both stages see only the estimates; the caller scores on the true channels
    return kronecker_hybrid(analog, estimated)


def evaluate_rate(config: SystemConfig, methods: Sequence[str], options: Mapping[str, Any],
                  rng: np.random.Generator, min_separation: float = 0.0) -> TrialResult:
    scenario = draw_scenario(config, rng, min_separation)
    metric = "spectral_efficiency" if config.k == 1 else "sum_rate"
    out: TrialResult = {}
    for method in methods:
        if method == "kronecker":
            analog = multiuser_analog(scenario, interferers=_interferer_subset(scenario, options),
                                      **analog_options(options))
            beamformer = kronecker_hybrid(analog, scenario)
        elif method == "kronecker_estimated":
            beamformer = _estimated_csi_hybrid(scenario, rng, options)
        elif method == "digital_mmse":
            beamformer = fully_digital_mmse(scenario)
        elif method == "equal_gain":
            beamformer = equal_gain_hybrid(scenario)
        elif method == "analog_mmse":
            beamformer = analog_mmse_hybrid(scenario)
        else:
            raise ConfigurationError(f"unknown rate method {method!r}")
        out[(method, metric)] = sum_rate(beamformer, scenario)
    return out


def evaluate_timing(config: SystemConfig, methods: Sequence[str], options: Mapping[str, Any],
                    rng: np.random.Generator, min_separation: float = 0.0) -> TrialResult:
    rows = benchmark_construction(
        [config.n], methods,
        repetitions=int(options.get("repetitions", settings.DEFAULT_TIMING_REPETITIONS)),
        rng=rng, k=config.k, l=config.l, m=config.m)
    return {(row["method"], "median_seconds"): row["median_seconds"] for row in rows}


def _with_separation(scenario: Scenario, separation: Optional[float]) -> Scenario:
    """Move the first interferer to `separation` rad from the first data path"""
    if separation is None or scenario.config.m == 0:
        return scenario
    angles = scenario.interf_angles.copy()
    angles[0] = canonical_angle(scenario.data_angles[0, 0] + separation)
    return replace(scenario, interf_angles=angles, degenerate=False)


def _known_aoa_errors(scenario: Scenario, book, noise: np.ndarray, base: str) -> float:
    cfg = scenario.config
    y = draw_training_observation(scenario, book, noise=noise)
    errors = []
    for k in range(cfg.k):
        obs = user_observation(y, book, k, cfg.user_power[k])
        angles = list(scenario.data_angles[k])
        for i, (gain, angle) in enumerate(scenario.data_paths(k)):
            if base == "cc":
                estimate = gain_cc(obs, angle)
            else:
                nulls = angles[:i] + angles[i + 1:] + list(scenario.interf_angles)
                estimate = gain_zf(obs, angle, nulls)
            errors.append(abs(estimate - gain))
    return math.fsum(errors) / len(errors)


def evaluate_estimation(config: SystemConfig, methods: Sequence[str], options: Mapping[str, Any],
                        rng: np.random.Generator, min_separation: float = 0.0) -> TrialResult:
    scenario = draw_scenario(config, rng, min_separation)
    book = make_pilots(config.k, config.z, rng, config.m)
    noise = complex_gaussian(rng, config.noise_var, (config.n, config.z))
    out: TrialResult = {}

    if options.get("known_aoa", False):
        for label in methods:
            base, separation = split_method(label)
            variant = _with_separation(scenario, separation)
            out[(label, "gain_error")] = _known_aoa_errors(variant, book, noise, base)
        return out

    estimator = _estimator(options)
    y = draw_training_observation(scenario, book, noise=noise)
    cc_result = estimator.estimate(y, book, config)
    results = {"cc": cc_result}
    if any(split_method(label)[0] == "zf" for label in methods):
        results["zf"] = estimator.refine_zf(cc_result, estimator.observations(y, book, config))

    users = range(config.k)
    angle_error = math.fsum(
        aoa_error([p.angle for p in cc_result.user_paths(k)], scenario.data_angles[k]) for k in users
    ) / config.k
    interference_error = aoa_error(cc_result.interference_angles[: config.m], scenario.interf_angles)
    for label in methods:
        result = results[split_method(label)[0]]
        out[(label, "gain_error")] = math.fsum(
            matched_gain_error(result, scenario, k) for k in users) / config.k
        out[(label, "aoa_error")] = angle_error
        out[(label, "interference_aoa_error")] = interference_error
    return out


def evaluate_spectrum(config: SystemConfig, methods: Sequence[str], options: Mapping[str, Any],
                      rng: np.random.Generator, min_separation: float = 0.0) -> TrialResult:
    """Beam-scan response of the despread observation at the true path angles"""
    scenario = draw_scenario(config, rng, min_separation)
    book = make_pilots(config.k, config.z, rng, config.m)
    y = draw_training_observation(scenario, book, rng)
    user = int(options.get("user", 0))
    obs = user_observation(y, book, user, config.user_power[user])

    def response(angle: float) -> float:
        return float(abs(np.vdot(steering_vector(angle, config.n), obs)) / config.n)

    data_peak = float(np.mean([response(a) for a in scenario.data_angles[user]]))
    interference_peak = float(np.mean([response(t) for t in scenario.interf_angles])) \
        if config.m else 0.0
    out: TrialResult = {}
    for method in methods:
        out[(method, "data_peak")] = data_peak
        out[(method, "interference_peak")] = interference_peak
    return out


EVALUATORS: Dict[str, Callable[..., TrialResult]] = {
    "rate": evaluate_rate,
    "timing": evaluate_timing,
    "estimation": evaluate_estimation,
    "spectrum": evaluate_spectrum,
}


def evaluate_trial(kind: str, config: SystemConfig, methods: Sequence[str],
                   options: Mapping[str, Any], rng: np.random.Generator,
                   min_separation: float = 0.0) -> TrialResult:
    try:
        evaluate = EVALUATORS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown kind {kind!r}; use one of {KINDS}")
    return evaluate(config, methods, options, rng, min_separation)


def db_grid(start: float, stop: float, points: int) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """(linear grid, dB labels) for a sweep written in dB"""
    labels = tuple(float(v) for v in np.linspace(start, stop, points))
    return tuple(settings.db_to_linear(v) for v in labels), labels


def _snr_sweep(name: str, param: str, system: Dict[str, Any], methods: Tuple[str, ...],
               seed: int, trials: int, notes: str = "") -> ExperimentSpec:
    grid, labels = db_grid(-20.0, 20.0, 9)
    return ExperimentSpec(name=name, kind="rate", param=param, grid=grid, labels=labels,
                          system=system, methods=methods, trials=trials, seed=seed,
                          scale="db", notes=notes)


SINGLE_USER_METHODS = ("kronecker", "digital_mmse", "equal_gain", "analog_mmse")
MULTIUSER_NOTE = "external hybrid baselines are not reproduced"


def _fig6a(seed: int, trials: int) -> ExperimentSpec:
    return _snr_sweep("fig6a", "rho_u", base_system(k=1), SINGLE_USER_METHODS, seed, trials)


def _fig6b(seed: int, trials: int) -> ExperimentSpec:
    return _snr_sweep("fig6b", "rho_i", base_system(k=1), SINGLE_USER_METHODS, seed, trials)


def _fig8a(seed: int, trials: int) -> ExperimentSpec:
    return _snr_sweep("fig8a", "rho_u", base_system(k=4), ("kronecker", "digital_mmse"),
                      seed, trials, MULTIUSER_NOTE)


def _fig8b(seed: int, trials: int) -> ExperimentSpec:
    return _snr_sweep("fig8b", "rho_i", base_system(k=4), ("kronecker", "digital_mmse"),
                      seed, trials, MULTIUSER_NOTE)


def _fig7(seed: int, trials: int) -> ExperimentSpec:
    sizes = (128.0, 256.0, 512.0, 1024.0, 2048.0)
    return ExperimentSpec(
        name="fig7", kind="timing", param="n", grid=sizes, labels=sizes,
        system=base_system(k=1), methods=SINGLE_USER_METHODS, trials=1, seed=seed,
        options={"repetitions": settings.DEFAULT_TIMING_REPETITIONS},
        notes="wall-clock timings are not reproducible byte for byte")


def _fig5a(seed: int, trials: int) -> ExperimentSpec:
    sizes = (64.0, 128.0, 256.0, 512.0, 1024.0)
    return ExperimentSpec(
        name="fig5a", kind="estimation", param="n", grid=sizes, labels=sizes,
        system=base_system(min_separation=0.1), methods=ESTIMATION_METHODS,
        trials=trials, seed=seed)


def _fig5b(seed: int, trials: int) -> ExperimentSpec:
    grid, labels = db_grid(-10.0, 30.0, 9)
    return ExperimentSpec(
        name="fig5b", kind="estimation", param="rho_i", grid=grid, labels=labels,
        system=base_system(k=1, l=1, m=1, z=1),
        methods=("cc@0.05", "zf@0.05", "cc@0.3", "zf@0.3"),
        trials=trials, seed=seed, options={"known_aoa": True}, scale="db")


def _fig4(seed: int, trials: int) -> ExperimentSpec:
    return ExperimentSpec(
        name="fig4", kind="spectrum", param="z", grid=(1.0, 10.0), labels=(1.0, 10.0),
        system=base_system(k=1), methods=SPECTRUM_METHODS, trials=trials, seed=seed)


PRESETS: Dict[str, Callable[[int, int], ExperimentSpec]] = {
    "fig4": _fig4,
    "fig5a": _fig5a,
    "fig5b": _fig5b,
    "fig6a": _fig6a,
    "fig6b": _fig6b,
    "fig7": _fig7,
    "fig8a": _fig8a,
    "fig8b": _fig8b,
}


def get_preset(name: str, seed: Optional[int] = None,
               trials: int = settings.DEFAULT_TRIALS) -> ExperimentSpec:
    """Named experiment; the seed defaults to the environment-resolved settings.SEED"""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return factory(settings.SEED if seed is None else seed, trials)
