import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from models.experiment import ExperimentSpec, ResultTable
from services.presets import TrialResult, evaluate_trial, system_at, system_config

logger = logging.getLogger(__name__)

Evaluator = Callable[..., TrialResult]


def trial_rng(seed: int, sweep_index: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, derived from (seed, sweep index, trial)"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sweep_index, trial)))


def summarize(values: List[float]) -> Tuple[float, float]:
    """Mean and standard error; compensated summation keeps the result order-free"""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


class MonteCarloEngine:
    """Runs every (sweep value, trial) pair and reduces per (method, metric)"""

    def __init__(self, threads: int = 1, evaluator: Optional[Evaluator] = None):
        self.logger = logging.getLogger(__name__)
        self.threads = max(int(threads), 1)
        self.evaluator = evaluator or evaluate_trial

    def run(self, spec: ExperimentSpec) -> ResultTable:
        start = time.time()
        table = ResultTable(metadata={"name": spec.name, "kind": spec.kind, "seed": str(spec.seed)})
        if spec.notes:
            table.metadata["notes"] = spec.notes
            self.logger.info(f"{spec.name}: {spec.notes}")

        for index, (value, label) in enumerate(zip(spec.grid, spec.labels)):
            point = system_at(spec.system, spec.param, value)
            config = system_config(point)
            min_separation = float(point.get("min_separation", 0.0))

            def trial(t: int, index=index, config=config, min_separation=min_separation) -> TrialResult:
                rng = trial_rng(spec.seed, index, t)
                return self.evaluator(spec.kind, config, spec.methods, spec.options, rng,
                                      min_separation)

            try:
                if self.threads > 1:
                    with ThreadPoolExecutor(max_workers=self.threads) as pool:
                        outcomes = list(pool.map(trial, range(spec.trials)))
                else:
                    outcomes = [trial(t) for t in range(spec.trials)]
            except Exception as e:
                self.logger.error(f"{spec.name}: trial failed at {spec.param}={label}: {str(e)}")
                raise

            cells: Dict[Tuple[str, str], List[float]] = {}
            for outcome in outcomes:
                for key, metric_value in outcome.items():
                    cells.setdefault(key, []).append(float(metric_value))
            for (method, metric), values in cells.items():
                mean, stderr = summarize(values)
                table.add(spec.param, label, method, metric, mean, stderr, len(values))
            self.logger.debug(f"{spec.name}: {spec.param}={label} done ({spec.trials} trials)")

        self.logger.info(f"Experiment {spec.name} took {time.time() - start:.2f} seconds")
        return table


def monte_carlo(spec: ExperimentSpec, threads: int = 1) -> ResultTable:
    return MonteCarloEngine(threads).run(spec)
