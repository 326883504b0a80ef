"""Experiment files: sectioned key=value text validated into an ExperimentSpec.

    [system]     n, k, m, l, z, rho_u_db, rho_i_db, noise_var, path_var, min_separation
    [sweep]      param, from, to, points, scale=lin|db  or  param, values, scale
    [run]        trials, seed, methods, kind, repetitions, known_aoa, user
    [analog]     row_index, basis, search_assignment, null_threshold
    [estimation] nsam_factor, peak_mode, refine

Every violated constraint is collected and reported together.
"""
import configparser
import logging
from dataclasses import replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import config as settings
from models.errors import ConfigurationError, InsufficientFactors, UnsupportedPilotLength
from models.experiment import ExperimentSpec
from services.analog_design import BASES
from services.estimation import PEAK_MODES
from services.kron_core import hadamard_matrix, prime_factorization
from services.presets import (
    INTEGER_PARAMS,
    SWEEP_PARAMS,
    infer_kind,
    method_violations,
    split_method,
    system_at,
    system_config,
)

logger = logging.getLogger(__name__)

_BOOLEANS = configparser.ConfigParser.BOOLEAN_STATES


def _boolean(raw: str) -> bool:
    try:
        return _BOOLEANS[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {raw!r}")


def _methods(raw: str) -> Tuple[str, ...]:
    return tuple(m.strip() for m in raw.split(",") if m.strip())


def _floats(raw: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in raw.replace(";", ",").split(",") if v.strip())


SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "system": {
        "n": int, "k": int, "m": int, "l": int, "z": int,
        "rho_u_db": float, "rho_i_db": float, "noise_var": float, "path_var": float,
        "min_separation": float,
    },
    "sweep": {
        "param": str.strip, "from": float, "to": float, "points": int, "scale": str.strip,
        "values": _floats,
    },
    "run": {
        "trials": int, "seed": int, "methods": _methods, "kind": str.strip,
        "repetitions": int, "known_aoa": _boolean, "user": int,
    },
    "analog": {
        "row_index": int, "basis": str.strip, "search_assignment": _boolean,
        "null_threshold": float,
    },
    "estimation": {"nsam_factor": int, "peak_mode": str.strip, "refine": _boolean},
}

# [analog] and [estimation] keys plus these [run] keys travel as evaluator options
_RUN_OPTIONS = ("repetitions", "known_aoa", "user")


def _split_override(item: str) -> Tuple[str, str, str]:
    target, sep, value = item.partition("=")
    section, dot, key = target.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigurationError(f"override {item!r} must look like section.key=value")
    return section.lower(), key.strip().lower(), value.strip()


def read_sections(text: str, overrides: Sequence[str] = ()) -> Tuple[Dict[str, Dict[str, Any]], List[str]]:
    """Parse and type-check every key; returns (typed sections, violations)"""
    parser = configparser.ConfigParser(strict=True, interpolation=None)
    try:
        parser.read_string(text or "")
    except configparser.DuplicateOptionError as e:
        raise ConfigurationError(f"duplicate key {e.option!r} in section [{e.section}]")
    except configparser.DuplicateSectionError as e:
        raise ConfigurationError(f"duplicate section [{e.section}]")
    except configparser.Error as e:
        logger.error(f"Could not parse experiment file: {str(e)}")
        raise ConfigurationError(f"malformed experiment file: {e.message}")

    raw: Dict[str, Dict[str, str]] = {s: dict(parser.items(s)) for s in parser.sections()}
    for item in overrides:
        section, key, value = _split_override(item)
        raw.setdefault(section, {})[key] = value

    typed: Dict[str, Dict[str, Any]] = {}
    violations: List[str] = []
    for section, items in raw.items():
        known = SCHEMA.get(section)
        if known is None:
            violations.append(f"unknown section [{section}]")
            continue
        typed[section] = {}
        for key, value in items.items():
            if key not in known:
                violations.append(f"unknown key {key!r} in [{section}]")
                continue
            try:
                typed[section][key] = known[key](value)
            except ValueError:
                violations.append(f"[{section}] {key}={value!r} has the wrong type")
    return typed, violations


def _system_from(section: Mapping[str, Any], base: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """[system] values (dB SNRs) merged into a linear system dictionary"""
    defaults = settings.DEFAULT_SYSTEM
    system = dict(base) if base is not None else {
        "n": defaults["n"], "k": defaults["k"], "m": defaults["m"], "l": defaults["l"],
        "z": defaults["z"], "noise_var": defaults["noise_var"], "path_var": defaults["path_var"],
        "min_separation": defaults["min_separation"],
        "user_power": settings.db_to_linear(defaults["rho_u_db"]) * defaults["noise_var"],
        "interferer_power": settings.db_to_linear(defaults["rho_i_db"]) * defaults["noise_var"],
    }
    for key in ("n", "k", "m", "l", "z", "path_var", "min_separation"):
        if key in section:
            system[key] = section[key]
    if "noise_var" in section:
        # keep the SNRs fixed when only the noise level changes
        scale = section["noise_var"] / system["noise_var"] if system["noise_var"] else 1.0
        system["user_power"] *= scale
        system["interferer_power"] *= scale
        system["noise_var"] = section["noise_var"]
    if "rho_u_db" in section:
        system["user_power"] = settings.db_to_linear(section["rho_u_db"]) * system["noise_var"]
    if "rho_i_db" in section:
        system["interferer_power"] = settings.db_to_linear(section["rho_i_db"]) * system["noise_var"]
    return system


def _sweep_from(section: Mapping[str, Any], system: Mapping[str, Any],
                violations: List[str]) -> Tuple[str, Tuple[float, ...], Tuple[float, ...], str]:
    if not section:
        rho_db = settings.linear_to_db(system["user_power"] / system["noise_var"]) \
            if system["noise_var"] > 0 else 0.0
        return "rho_u", (settings.db_to_linear(rho_db),), (rho_db,), "db"

    param = section.get("param")
    scale = section.get("scale", "lin")
    if param not in SWEEP_PARAMS:
        violations.append(f"sweep param must be one of {', '.join(SWEEP_PARAMS)} (got {param!r})")
    if scale not in ("lin", "db"):
        violations.append(f"sweep scale must be lin or db (got {scale!r})")
    elif scale == "db" and param not in ("rho_u", "rho_i"):
        violations.append(f"scale=db only applies to rho_u and rho_i (got {param!r})")

    if "values" in section:
        labels = tuple(section["values"])
        if any(k in section for k in ("from", "to", "points")):
            violations.append("[sweep] takes either values= or from/to/points, not both")
    else:
        missing = [k for k in ("from", "to", "points") if k not in section]
        if missing:
            violations.append(f"[sweep] is missing {', '.join(missing)}")
            return param or "rho_u", (), (), scale
        if section["points"] < 1:
            violations.append(f"sweep points must be >= 1 (got {section['points']})")
            return param, (), (), scale
        labels = tuple(float(v) for v in np.linspace(section["from"], section["to"], section["points"]))

    if param in INTEGER_PARAMS and any(v != int(v) for v in labels):
        violations.append(f"sweep values for {param} must be integers")
    grid = tuple(settings.db_to_linear(v) for v in labels) if scale == "db" else labels
    return param, grid, labels, scale


def _options_from(typed: Mapping[str, Mapping[str, Any]]) -> Dict[str, Any]:
    options: Dict[str, Any] = {}
    options.update(typed.get("analog", {}))
    options.update(typed.get("estimation", {}))
    options.update({k: v for k, v in typed.get("run", {}).items() if k in _RUN_OPTIONS})
    return options


def _option_violations(options: Mapping[str, Any]) -> List[str]:
    problems = []
    if options.get("row_index", settings.DEFAULT_ROW_INDEX) < 2:
        problems.append("row_index must be >= 2 (row 1 is the all-ones row)")
    if options.get("basis", "fourier") not in BASES:
        problems.append(f"basis must be one of {', '.join(BASES)}")
    if options.get("peak_mode", "count") not in PEAK_MODES:
        problems.append(f"peak_mode must be one of {', '.join(PEAK_MODES)}")
    if options.get("nsam_factor", settings.DEFAULT_NSAM_FACTOR) < 2:
        problems.append("nsam_factor must be >= 2")
    if options.get("null_threshold", 0.0) < 0:
        problems.append("null_threshold must be >= 0")
    if options.get("repetitions", 1) < 1:
        problems.append("repetitions must be >= 1")
    return problems


def validate(spec: ExperimentSpec) -> None:
    """Check every sweep point; raises ConfigurationError listing all problems

    A spec whose only problem is the Kronecker factor budget raises
    InsufficientFactors instead.
    """
    violations = method_violations(spec.kind, spec.methods) + _option_violations(spec.options)
    bases = {split_method(m)[0] for m in spec.methods}
    needs_pilots = spec.kind in ("estimation", "spectrum") or "kronecker_estimated" in bases
    budget: List[InsufficientFactors] = []

    for value in spec.grid:
        point = system_at(spec.system, spec.param, value)
        try:
            cfg = system_config(point)
        except ConfigurationError as e:
            violations.extend(e.violations)
            continue
        if needs_pilots:
            violations.extend(cfg.violations(orthogonal_pilots=True))
            if cfg.k > 1 and cfg.k <= cfg.z:
                try:
                    hadamard_matrix(cfg.z)
                except UnsupportedPilotLength as e:
                    violations.append(str(e))
        if "user" in spec.options and not 0 <= spec.options["user"] < cfg.k:
            violations.append(f"user must be in 0..{cfg.k - 1}")

        nulls = 0
        if spec.kind == "rate" and bases & {"kronecker", "kronecker_estimated"}:
            nulls = cfg.m
        elif "zf" in bases:
            nulls = cfg.l - 1 + cfg.m
        if nulls:
            d = prime_factorization(cfg.n).d
            if nulls > d:
                budget.append(InsufficientFactors(nulls, d, cfg.n))

    violations = list(dict.fromkeys(violations))
    if violations:
        violations.extend(str(b) for b in budget)
        raise ConfigurationError(violations)
    if budget:
        raise budget[0]


def parse_config(text: str, overrides: Sequence[str] = (), name: str = "custom") -> ExperimentSpec:
    """Parse experiment text (plus section.key=value overrides) into a validated spec"""
    typed, violations = read_sections(text, overrides)
    system = _system_from(typed.get("system", {}))
    param, grid, labels, scale = _sweep_from(typed.get("sweep", {}), system, violations)

    run = typed.get("run", {})
    methods = run.get("methods", ("kronecker",))
    kind = run.get("kind", infer_kind(methods))
    trials = run.get("trials", settings.DEFAULT_TRIALS)
    if trials < 1:
        violations.append(f"trials must be >= 1 (got {trials})")
    if not methods:
        violations.append("no methods selected")
    if violations:
        raise ConfigurationError(violations)

    spec = ExperimentSpec(
        name=name, kind=kind, param=param, grid=grid, labels=labels, system=system,
        methods=methods, trials=trials, seed=run.get("seed", settings.SEED),
        options=_options_from(typed), scale=scale,
    )
    validate(spec)
    logger.debug(f"Parsed experiment {name}: {kind} over {param} with {len(grid)} points")
    return spec


def apply_overrides(spec: ExperimentSpec, overrides: Sequence[str]) -> ExperimentSpec:
    """Apply --set overrides to an already built spec (used for presets)"""
    if not overrides:
        return spec
    typed, violations = read_sections("", overrides)
    if "sweep" in typed:
        violations.append("a preset's sweep cannot be overridden; write an experiment file instead")
    if violations:
        raise ConfigurationError(violations)

    run = typed.get("run", {})
    options = dict(spec.options)
    options.update(_options_from(typed))
    methods = run.get("methods", spec.methods)
    updated = replace(
        spec,
        system=_system_from(typed.get("system", {}), spec.system),
        methods=methods,
        kind=run.get("kind", spec.kind),
        trials=run.get("trials", spec.trials),
        seed=run.get("seed", spec.seed),
        options=options,
    )
    validate(updated)
    return updated
