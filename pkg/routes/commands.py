import logging
import math
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

import config as settings
from models.errors import ConfigurationError, StorageError
from models.experiment import ExperimentSpec, RunConfig
from services.analog_design import multiuser_analog
from services.array_channel import (
    circular_distance,
    draw_scenario,
    draw_training_observation,
    interference_channel_matrix,
)
from services.config_parser import apply_overrides, parse_config
from services.digital_design import kronecker_hybrid
from services.estimation import TwoStageEstimator, aoa_spectrum, make_pilots, user_observation
from services.metrics import CONSTRUCTIONS, benchmark_construction, user_rate
from services.monte_carlo import MonteCarloEngine
from services.presets import analog_options, get_preset, split_method, system_at, system_config
from storage.base import ResultStoreInterface

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig, ExperimentSpec, ResultStoreInterface], int]

SPECTRUM_COLUMNS = ["angle", "magnitude"]
BEAMFORM_COLUMNS = ["record", "user", "index", "re", "im"]
ESTIMATE_COLUMNS = ["record", "user", "index", "angle", "gain_re", "gain_im", "true_angle",
                    "true_gain_re", "true_gain_im", "angle_error", "gain_error"]
BENCH_COLUMNS = ["n", "method", "median_seconds", "repetitions"]


class CommandRegistry:
    """Subcommand name -> handler, registered with a decorator"""

    def __init__(self, name: str):
        self.name = name
        self.handlers: Dict[str, Handler] = {}
        self.descriptions: Dict[str, str] = {}

    def route(self, command: str, description: str = ""):
        def register(handler: Handler) -> Handler:
            self.handlers[command] = handler
            self.descriptions[command] = description or (handler.__doc__ or "").strip()
            return handler
        return register

    def dispatch(self, run: RunConfig, store: ResultStoreInterface) -> int:
        try:
            handler = self.handlers[run.subcommand]
        except KeyError:
            raise ConfigurationError(f"unknown subcommand {run.subcommand!r}")
        return handler(run, load_experiment(run), store)


commands = CommandRegistry("beamsim")


def load_experiment(run: RunConfig) -> ExperimentSpec:
    """Preset or experiment file plus --set overrides; --seed wins over both"""
    if run.preset:
        if run.config_path:
            raise ConfigurationError("use either --preset or --config, not both")
        spec = apply_overrides(get_preset(run.preset), run.overrides)
    else:
        text = ""
        if run.config_path:
            try:
                with open(run.config_path, encoding="utf-8") as handle:
                    text = handle.read()
            except OSError as e:
                logger.error(f"Failed to read experiment file {run.config_path}: {str(e)}")
                raise StorageError(f"cannot read {run.config_path}: {e.strerror or str(e)}") from e
        spec = parse_config(text, run.overrides)
    if run.seed is not None:
        spec = apply_overrides(spec, [f"run.seed={run.seed}"])
    return spec


def _single_point(spec: ExperimentSpec, value: Optional[float] = None):
    """System at one sweep value (the first by default) and a generator seeded from the spec"""
    point = system_at(spec.system, spec.param, spec.grid[0] if value is None else value)
    rng = np.random.default_rng(spec.seed)
    return system_config(point), float(point.get("min_separation", 0.0)), rng


def _nsam(spec: ExperimentSpec, n: int) -> int:
    return int(spec.options.get("nsam_factor", settings.NSAM_FACTOR)) * n


@commands.route("spectrum")
def spectrum_command(run: RunConfig, spec: ExperimentSpec, store: ResultStoreInterface) -> int:
    """Beam-scan AoA spectrum of one user's training observation at every sweep value

    A sweep over several values gets a leading column named after the swept
    parameter. Each value reuses the spec's seed, so the snapshots share one
    channel whenever the swept parameter leaves the channel draw alone.
    """
    user = int(spec.options.get("user", 0))
    rows: List[Dict[str, Any]] = []
    for label, value in zip(spec.labels, spec.grid):
        cfg, min_separation, rng = _single_point(spec, value)
        scenario = draw_scenario(cfg, rng, min_separation)
        book = make_pilots(cfg.k, cfg.z, rng, cfg.m)
        y = draw_training_observation(scenario, book, rng)
        spectrum = aoa_spectrum(user_observation(y, book, user, cfg.user_power[user]),
                                _nsam(spec, cfg.n), n_rf=cfg.k)
        logger.info(f"Spectrum at {spec.param}={label:g} over {spectrum.n_sam} angles needs "
                    f"{spectrum.scan_slots} scan slots")
        rows.extend({spec.param: label, "angle": a, "magnitude": v}
                    for a, v in zip(spectrum.grid, spectrum.values))
    columns = SPECTRUM_COLUMNS if len(spec.grid) == 1 else [spec.param] + SPECTRUM_COLUMNS
    store.write_rows(rows, columns, run.out)
    return 0


@commands.route("beamform")
def beamform_command(run: RunConfig, spec: ExperimentSpec, store: ResultStoreInterface) -> int:
    """Kronecker hybrid beamformer weights, nulling residuals and rates for one scenario"""
    cfg, min_separation, rng = _single_point(spec)
    scenario = draw_scenario(cfg, rng, min_separation)
    analog = multiuser_analog(scenario, **analog_options(spec.options))
    hybrid = kronecker_hybrid(analog, scenario)
    h = interference_channel_matrix(scenario)

    rows: List[Dict[str, Any]] = []
    for k, column in enumerate(analog.columns):
        rows.extend({"record": "weight", "user": k, "index": i, "re": w.real, "im": w.imag}
                    for i, w in enumerate(column))
        rows.extend({"record": "nulling_residual", "user": k, "index": n, "re": r.real, "im": r.imag}
                    for n, r in enumerate(column.conj() @ h))
        rows.append({"record": "rate", "user": k, "index": 0,
                     "re": user_rate(hybrid, scenario, k), "im": 0.0})
    store.write_rows(rows, BEAMFORM_COLUMNS, run.out)
    return 0


def _match(estimated: List[float], true: np.ndarray) -> List[Tuple[int, int]]:
    if not estimated or true.size == 0:
        return []
    cost = circular_distance(np.asarray(estimated)[:, None], true[None, :])
    return list(zip(*linear_sum_assignment(cost)))


@commands.route("estimate")
def estimate_command(run: RunConfig, spec: ExperimentSpec, store: ResultStoreInterface) -> int:
    """Two-stage estimates for one scenario next to the true paths"""
    cfg, min_separation, rng = _single_point(spec)
    scenario = draw_scenario(cfg, rng, min_separation)
    book = make_pilots(cfg.k, cfg.z, rng, cfg.m)
    y = draw_training_observation(scenario, book, rng)
    estimator = TwoStageEstimator(
        nsam_factor=int(spec.options.get("nsam_factor", settings.NSAM_FACTOR)),
        peak_mode=spec.options.get("peak_mode", "count"),
        zf_gains=any(split_method(m)[0] == "zf" for m in spec.methods),
        row_index=int(spec.options.get("row_index", settings.DEFAULT_ROW_INDEX)),
        refine=bool(spec.options.get("refine", settings.DEFAULT_REFINE_ANGLES)),
    )
    result = estimator.estimate(y, book, cfg)

    rows: List[Dict[str, Any]] = []
    for k in range(cfg.k):
        paths = result.user_paths(k)
        for index, (r, c) in enumerate(_match([p.angle for p in paths], scenario.data_angles[k])):
            est, true_gain = paths[r], scenario.data_gains[k, c]
            true_angle = scenario.data_angles[k, c]
            rows.append({
                "record": "data", "user": k, "index": index, "angle": est.angle,
                "gain_re": est.gain.real, "gain_im": est.gain.imag, "true_angle": true_angle,
                "true_gain_re": true_gain.real, "true_gain_im": true_gain.imag,
                "angle_error": float(circular_distance(est.angle, true_angle)),
                "gain_error": abs(est.gain - true_gain),
            })
    interference = list(result.interference_angles)
    for index, (r, c) in enumerate(_match(interference, scenario.interf_angles)):
        true_angle, true_gain = scenario.interf_angles[c], scenario.interf_gains[c]
        rows.append({
            "record": "interference", "user": -1, "index": index, "angle": interference[r],
            "gain_re": math.nan, "gain_im": math.nan, "true_angle": true_angle,
            "true_gain_re": true_gain.real, "true_gain_im": true_gain.imag,
            "angle_error": float(circular_distance(interference[r], true_angle)),
            "gain_error": math.nan,
        })
    store.write_rows(rows, ESTIMATE_COLUMNS, run.out)
    return 0


@commands.route("sweep")
def sweep_command(run: RunConfig, spec: ExperimentSpec, store: ResultStoreInterface) -> int:
    """Monte Carlo sweep of a preset or experiment file"""
    table = MonteCarloEngine(threads=run.threads).run(spec)
    store.write_frame(table.to_frame(), run.out)
    return 0


@commands.route("bench")
def bench_command(run: RunConfig, spec: ExperimentSpec, store: ResultStoreInterface) -> int:
    """Median construction time per array size and method"""
    methods = [m for m in spec.methods if m in CONSTRUCTIONS] or list(CONSTRUCTIONS)
    sizes = [int(round(v)) for v in spec.grid] if spec.param == "n" else [int(spec.system["n"])]
    rows = benchmark_construction(
        sizes, methods,
        repetitions=int(spec.options.get("repetitions", settings.DEFAULT_TIMING_REPETITIONS)),
        rng=np.random.default_rng(spec.seed),
        k=int(spec.system["k"]), l=int(spec.system["l"]), m=int(spec.system["m"]),
    )
    store.write_rows(rows, BENCH_COLUMNS, run.out)
    return 0
