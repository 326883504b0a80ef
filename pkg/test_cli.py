import io
import logging

import pandas as pd
import pytest

import config
from app import parse_run_config, run
from models.errors import ConfigurationError, InsufficientFactors
from models.experiment import RESULT_COLUMNS
from routes.commands import BENCH_COLUMNS, ESTIMATE_COLUMNS, SPECTRUM_COLUMNS
from services.config_parser import apply_overrides, parse_config, read_sections
from services.presets import get_preset
from storage.csv_impl import CsvResultStore
from storage.factory import StorageFactory

logger = logging.getLogger(__name__)

SMALL_SYSTEM = ["--set", "system.n=16", "--set", "system.k=1", "--set", "system.m=1",
                "--set", "system.l=1", "--set", "system.z=4"]

SWEEP_FILE = """
[system]
n = 16
k = 1
m = 1
l = 2

[sweep]
param = rho_u
values = 0, 10
scale = db

[run]
trials = 2
methods = kronecker, digital_mmse
"""


def _csv(text):
    return pd.read_csv(io.StringIO(text))


def _error_line(stderr):
    return next(line for line in stderr.splitlines() if line.startswith("error="))


def test_defaults_without_a_file():
    spec = parse_config("")
    assert spec.kind == "rate"
    assert spec.methods == ("kronecker",)
    assert spec.param == "rho_u" and spec.labels == (0.0,)
    assert spec.trials == config.DEFAULT_TRIALS
    assert spec.seed == config.SEED
    assert spec.system["n"] == config.DEFAULT_SYSTEM["n"]


def test_db_sweep_is_linear_inside():
    spec = parse_config("[sweep]\nparam = rho_u\nfrom = 0\nto = 20\npoints = 3\nscale = db\n")
    assert spec.labels == (0.0, 10.0, 20.0)
    assert spec.grid == pytest.approx((1.0, 10.0, 100.0))


def test_prime_array_cannot_null_two_interferers():
    with pytest.raises(InsufficientFactors):
        parse_config("[system]\nn = 97\nm = 2\n")


def test_every_violation_is_reported():
    with pytest.raises(ConfigurationError) as info:
        parse_config("[system]\nn = 1\nk = 0\nm = -1\n")
    assert len(info.value.violations) >= 3


def test_duplicate_and_unknown_keys():
    with pytest.raises(ConfigurationError, match="duplicate key 'n'"):
        read_sections("[system]\nn = 64\nn = 32\n")
    _, violations = read_sections("[system]\nspeed = 3\n[extras]\na = 1\n")
    assert violations == ["unknown key 'speed' in [system]", "unknown section [extras]"]
    _, violations = read_sections("[system]\nn = many\n")
    assert violations == ["[system] n='many' has the wrong type"]


def test_overrides_apply_to_presets():
    spec = apply_overrides(get_preset("fig6a"), ["run.trials=3", "analog.basis=hadamard"])
    assert spec.trials == 3
    assert spec.options["basis"] == "hadamard"
    with pytest.raises(ConfigurationError):
        apply_overrides(get_preset("fig6a"), ["sweep.param=n"])
    with pytest.raises(ConfigurationError):
        apply_overrides(get_preset("fig6a"), ["trials=3"])


def test_command_line_flags():
    run_config = parse_run_config(["sweep", "--preset", "fig4", "--seed", "9", "--set", "run.trials=1",
                                   "--threads", "0"])
    assert run_config.subcommand == "sweep"
    assert run_config.seed == 9
    assert run_config.overrides == ("run.trials=1",)
    assert run_config.threads == 1


def test_spectrum_has_one_row_per_scan_angle():
    out = io.StringIO()
    assert run(["spectrum", "--out", "-", "--seed", "3"] + SMALL_SYSTEM, stream=out) == 0
    frame = _csv(out.getvalue())
    assert list(frame.columns) == SPECTRUM_COLUMNS
    assert len(frame) == config.NSAM_FACTOR * 16
    assert (frame.magnitude >= 0).all()


def test_sweep_output_is_repeatable(tmp_path):
    experiment = tmp_path / "small.ini"
    experiment.write_text(SWEEP_FILE, encoding="utf-8")
    first, second = tmp_path / "a.csv", tmp_path / "out" / "b.csv"
    for target in (first, second):
        assert run(["sweep", "--config", str(experiment), "--out", str(target)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert b"\r\n" not in first.read_bytes()
    frame = pd.read_csv(first)
    assert list(frame.columns) == RESULT_COLUMNS
    assert list(frame.value.unique()) == [0.0, 10.0]

    reseeded = tmp_path / "c.csv"
    assert run(["sweep", "--config", str(experiment), "--out", str(reseeded), "--seed", "11"]) == 0
    assert reseeded.read_bytes() != first.read_bytes()


def test_estimate_rows():
    out = io.StringIO()
    argv = ["estimate", "--out", "-", "--set", "system.rho_u_db=20", "--set", "run.methods=cc,zf"]
    assert run(argv + SMALL_SYSTEM, stream=out) == 0
    frame = _csv(out.getvalue())
    assert list(frame.columns) == ESTIMATE_COLUMNS
    assert set(frame.record) <= {"data", "interference"}
    assert (frame.record == "data").sum() == 1


def test_bench_rows():
    out = io.StringIO()
    argv = ["bench", "--out", "-", "--set", "run.repetitions=1", "--set", "run.methods=kronecker"]
    assert run(argv + SMALL_SYSTEM, stream=out) == 0
    frame = _csv(out.getvalue())
    assert list(frame.columns) == BENCH_COLUMNS
    assert frame.method.tolist() == ["kronecker"]
    assert frame.n.tolist() == [16]


def test_prime_array_exit_status(capsys):
    assert run(["beamform", "--out", "-", "--set", "system.n=97"], stream=io.StringIO()) == 3
    line = _error_line(capsys.readouterr().err)
    assert line.startswith("error=InsufficientFactors message=")


def test_configuration_exit_status(capsys, tmp_path):
    assert run(["sweep", "--set", "system.k=zero"], stream=io.StringIO()) == 2
    assert _error_line(capsys.readouterr().err).startswith("error=ConfigurationError")
    assert run(["sweep", "--preset", "fig99"], stream=io.StringIO()) == 2
    assert _error_line(capsys.readouterr().err).startswith("error=UnknownPreset")
    assert run(["sweep", "--config", str(tmp_path / "missing.ini")], stream=io.StringIO()) == 5
    assert _error_line(capsys.readouterr().err).startswith("error=StorageError")


def test_result_stores(tmp_path):
    with pytest.raises(ValueError):
        StorageFactory.create_result_store("parquet")
    store = StorageFactory.create_result_store("csv", destination=str(tmp_path / "rows.csv"))
    assert isinstance(store, CsvResultStore)
    written = store.write_rows([{"n": 8, "method": "kronecker", "median_seconds": 0.1 + 0.2,
                                 "repetitions": 3}], BENCH_COLUMNS)
    assert written == str(tmp_path / "rows.csv")
    assert (tmp_path / "rows.csv").read_text(encoding="utf-8") == \
        "n,method,median_seconds,repetitions\n8,kronecker,0.3,3\n"


def test_fig4_spectrum_covers_both_pilot_lengths():
    out = io.StringIO()
    assert run(["spectrum", "--preset", "fig4", "--out", "-", "--set", "run.trials=1"], stream=out) == 0
    frame = _csv(out.getvalue())
    assert list(frame.columns) == ["z"] + SPECTRUM_COLUMNS
    assert sorted(frame.z.unique()) == [1, 10]
    assert len(frame) == 2 * config.NSAM_FACTOR * 128
