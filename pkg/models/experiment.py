from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from models.errors import ConfigurationError

RESULT_COLUMNS = ["param", "value", "method", "metric", "mean", "stderr", "trials"]


@dataclass(frozen=True)
class ExperimentSpec:
    """A Monte Carlo sweep: one swept parameter over a grid, fixed overrides"""

    name: str
    kind: str
    param: str
    grid: Tuple[float, ...]            # linear values handed to the library
    labels: Tuple[float, ...]          # values as written to the output
    system: Dict[str, Any] = field(default_factory=dict)
    methods: Tuple[str, ...] = ()
    trials: int = 100
    seed: int = 0
    options: Dict[str, Any] = field(default_factory=dict)
    scale: str = "lin"
    notes: str = ""

    def __post_init__(self):
        problems = []
        if self.trials < 1:
            problems.append(f"trials must be >= 1 (got {self.trials})")
        if not self.grid:
            problems.append("sweep grid is empty")
        if len(self.labels) != len(self.grid):
            problems.append("sweep labels and grid differ in length")
        if not self.methods:
            problems.append("no methods selected")
        if problems:
            raise ConfigurationError(problems)


@dataclass(frozen=True)
class RunConfig:
    """Parsed command line: what to run and where to put it"""

    subcommand: str
    config_path: Optional[str]
    seed: Optional[int]
    out: Optional[str]
    preset: Optional[str] = None
    overrides: Tuple[str, ...] = ()
    threads: int = 1


@dataclass
class ResultTable:
    """One row per (sweep value, method, metric)"""

    rows: List[Dict[str, Any]] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)

    def add(self, param: str, value: float, method: str, metric: str,
            mean: float, stderr: float, trials: int) -> None:
        self.rows.append({
            "param": param, "value": value, "method": method, "metric": metric,
            "mean": mean, "stderr": stderr, "trials": trials,
        })

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=RESULT_COLUMNS)

    def cell(self, value: float, method: str, metric: str) -> Dict[str, Any]:
        for row in self.rows:
            if row["value"] == value and row["method"] == method and row["metric"] == metric:
                return row
        raise KeyError((value, method, metric))
