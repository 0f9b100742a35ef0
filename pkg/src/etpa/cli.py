"""Command-line front end: ``tpa run | validate | qef | opa``.

Sweep CSV columns, in order::

    index, <one column per sweep axis>, p_dqc, p_nrp, p_rp, p_total,
    spectral_factor_re, spectral_factor_im, dominance_ratio, qef, method,
    warnings, error

Exit codes: 0 success, 1 malformed configuration (nothing written),
2 physics-guard violation in at least one row, 3 convergence failure,
4 failed validation checks. ``ETPA_WORKERS`` sets the sweep worker count.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConvergenceError, EtpaError, PhysicsGuardError
from .fieldstate import (
    AntiDiagonalSeparable,
    CoherentState,
    ExponentialOneSided,
    GaussianSpectral,
    Rectangular,
    SIContext,
    SinglePhotonState,
    SpectralAmplitude,
    TwoPhotonState,
    read_jsa_csv,
)
from .molecule import LevelSystem

CONFIG_VERSION = 1
REPORT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_CONVERGENCE, EXIT_VALIDATION = 0, 1, 2, 3, 4
RESULT_COLUMNS = (
    "p_dqc", "p_nrp", "p_rp", "p_total", "spectral_factor_re", "spectral_factor_im",
    "dominance_ratio", "qef", "method", "warnings", "error",
)
COLUMN_DOCS = {
    "index": "sweep point index, row-major over the sweep axes",
    "p_dqc": "double-quantum-coherence probability",
    "p_nrp": "non-rephasing probability",
    "p_rp": "rephasing probability",
    "p_total": "sum of the three pathway probabilities",
    "spectral_factor_re": "real part of the two-photon spectral factor",
    "spectral_factor_im": "imaginary part of the two-photon spectral factor",
    "dominance_ratio": "p_dqc / |p_nrp + p_rp| (inf when the step-wise pathways cancel)",
    "qef": "p_dqc relative to the reference coherent block (empty without one)",
    "method": "closed-form or grid evaluation path",
    "warnings": "semicolon-separated physics warnings raised for this row",
    "error": "guard or convergence error for this row (probabilities are nan)",
}


class ConfigError(EtpaError, ValueError):
    """Malformed scenario configuration."""


# ---------------------------------------------------------------------------
# Configuration parsing


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"missing '{key}' in {where}")
    return mapping[key]


def _number(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number")
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(f"{where} must be {'positive' if positive else 'finite'}")
    return value


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg.get('version')!r}")
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def build_level(cfg: dict) -> LevelSystem:
    mol = _require(cfg, "molecule", "config")
    try:
        if isinstance(mol, str):
            return LevelSystem.load(Path(cfg.get("_base", ".")) / mol)
        return LevelSystem.from_dict(mol)
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad molecule: {exc}") from exc


def build_shape(spec: dict, where: str):
    kind = _require(spec, "type", where)
    if kind == "exponential":
        return ExponentialOneSided(_number(_require(spec, "rate", where), f"{where}.rate", True))
    if kind == "gaussian":
        return GaussianSpectral(_number(_require(spec, "sigma", where), f"{where}.sigma", True))
    if kind == "rectangular":
        return Rectangular(_number(_require(spec, "duration", where), f"{where}.duration", True))
    raise ConfigError(f"unknown shape type {kind!r} in {where}")


def build_state(light: dict, base: str = "."):
    kind = _require(light, "kind", "light")
    try:
        if kind in ("coherent", "single_photon"):
            phi = SpectralAmplitude(build_shape(_require(light, "shape", "light"), "light.shape"),
                                    _number(_require(light, "omega0", "light"), "light.omega0", True))
            if kind == "single_photon":
                return SinglePhotonState(phi)
            n = _number(_require(light, "N", "light"), "light.N")
            if n < 0:
                raise ConfigError("light.N must be non-negative")
            return CoherentState(math.sqrt(n), phi)
        if kind == "pair":
            jsa = AntiDiagonalSeparable(
                build_shape(_require(light, "narrow", "light"), "light.narrow"),
                build_shape(_require(light, "broad", "light"), "light.broad"),
                _number(_require(light, "pump", "light"), "light.pump", True),
            )
            return TwoPhotonState(_number(_require(light, "epsilon", "light"), "light.epsilon"), jsa)
        if kind == "sampled_pair":
            jsa = read_jsa_csv(Path(base) / _require(light, "csv", "light"))
            return TwoPhotonState(_number(_require(light, "epsilon", "light"), "light.epsilon"), jsa)
    except ConfigError:
        raise
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad light block: {exc}") from exc
    raise ConfigError(f"unknown light kind {kind!r}")


def build_si(cfg: dict) -> SIContext | None:
    units = cfg.get("units", {"mode": "reduced"})
    mode = _require(units, "mode", "units")
    if mode == "reduced":
        return None
    if mode != "SI":
        raise ConfigError(f"unknown units mode {mode!r}")
    area = _number(_require(units, "area", "units"), "units.area", True)
    n = _number(units.get("n", 1.0), "units.n", True)
    if "wavelength" in units:
        return SIContext.from_wavelength(_number(units["wavelength"], "units.wavelength", True), area, n)
    return SIContext(_number(_require(units, "omega0", "units"), "units.omega0", True), area, n)


def _get_path(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown sweep parameter {dotted!r}")
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"sweep parameter {dotted!r} is not numeric")
    return node


def _set_path(cfg: dict, dotted: str, value: float) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value


def sweep_axes(cfg: dict) -> list[tuple[str, list[float]]]:
    axes = []
    for i, axis in enumerate(cfg.get("sweep", [])):
        where = f"sweep[{i}]"
        name = _require(axis, "parameter", where)
        if not isinstance(name, str):
            raise ConfigError(f"{where}.parameter must be a string")
        _get_path(cfg, name)
        if "values" in axis:
            values = [_number(v, f"{where}.values") for v in axis["values"]]
            if not values:
                raise ConfigError(f"{where}.values is empty")
        else:
            start = _number(_require(axis, "start", where), f"{where}.start")
            stop = _number(_require(axis, "stop", where), f"{where}.stop")
            count = _require(axis, "count", where)
            if isinstance(count, bool) or not isinstance(count, int) or count < 1:
                raise ConfigError(f"{where}.count must be an integer ≥ 1")
            scale = axis.get("scale", "linear")
            if scale == "log":
                if start <= 0 or stop <= 0:
                    raise ConfigError(f"{where}: log sweeps need positive bounds")
                values = np.geomspace(start, stop, count).tolist()
            elif scale == "linear":
                values = np.linspace(start, stop, count).tolist()
            else:
                raise ConfigError(f"{where}.scale must be 'linear' or 'log'")
        axes.append((name, values))
    return axes


def _sweep_points(cfg: dict):
    axes = sweep_axes(cfg)
    names = [name for name, _ in axes]
    combos = list(itertools.product(*(values for _, values in axes)))
    return names, combos


# ---------------------------------------------------------------------------
# Sweep execution


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _evaluate(task):
    """Evaluate one sweep point; returns an ordered row and its status."""
    from .tpa import compute_pathways, p_dqc

    index, names, values, cfg = task
    point = copy.deepcopy(cfg)
    for name, value in zip(names, values):
        _set_path(point, name, value)
    row = {"index": index, **dict(zip(names, values))}
    status = "ok"
    options = point.get("options", {})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            level = build_level(point)
            state = build_state(point["light"], point.get("_base", "."))
            si = build_si(point)
            result = compute_pathways(
                level, si, state,
                detuning=options.get("detuning"),
                guard=options.get("guard"),
                step_pathways=options.get("step_pathways", True),
            )
            sf = result.spectral_factor if result.spectral_factor is not None else complex("nan")
            step = result.p_step
            dom = math.inf if step == 0 else result.p_dqc / abs(step)
            qef = ""
            if "reference" in point:
                ref = build_state(point["reference"], point.get("_base", "."))
                ref_p = p_dqc(level, si, ref, options.get("detuning"), options.get("guard")).p_dqc
                qef = result.p_dqc / ref_p if ref_p else math.inf
            row.update(p_dqc=result.p_dqc, p_nrp=result.p_nrp, p_rp=result.p_rp, p_total=result.p_total,
                       spectral_factor_re=sf.real, spectral_factor_im=sf.imag, dominance_ratio=dom,
                       qef=qef, method=result.method, error="")
        except PhysicsGuardError as exc:
            status = "guard"
            row.update(_nan_row(), error=f"{type(exc).__name__}: {exc}")
        except ConvergenceError as exc:
            status = "convergence"
            row.update(_nan_row(), error=f"{type(exc).__name__}: {exc}")
    messages = [f"{w.category.__name__}: {w.message}" for w in caught]
    row["warnings"] = ";".join(dict.fromkeys(messages))
    return row, status


def _nan_row():
    nan = float("nan")
    return dict(p_dqc=nan, p_nrp=nan, p_rp=nan, p_total=nan, spectral_factor_re=nan,
                spectral_factor_im=nan, dominance_ratio=nan, qef="", method="")


def _workers() -> int:
    raw = os.environ.get("ETPA_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"ETPA_WORKERS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("ETPA_WORKERS must be at least 1")
    return n


def _output_paths(cfg: dict, config_path) -> tuple[Path, Path]:
    outputs = cfg.get("outputs", {})
    stem = Path(config_path).with_suffix("")
    base = Path(cfg["_base"])
    csv_path = base / outputs["csv"] if "csv" in outputs else stem.with_name(stem.name + "_results.csv")
    json_path = base / outputs["json"] if "json" in outputs else csv_path.with_suffix(".json")
    return csv_path, json_path


def run_scenario(config_path) -> int:
    try:
        cfg = load_config(config_path)
        build_level(cfg)
        build_state(_require(cfg, "light", "config"), cfg["_base"])
        if "reference" in cfg:
            build_state(cfg["reference"], cfg["_base"])
        build_si(cfg)
        names, combos = _sweep_points(cfg)
        csv_path, json_path = _output_paths(cfg, config_path)
        workers = _workers()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tasks = [(i, names, values, cfg) for i, values in enumerate(combos)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_evaluate, tasks))
    else:
        outcomes = [_evaluate(t) for t in tasks]
    columns = ["index", *names, *RESULT_COLUMNS]
    rows = [row for row, _ in outcomes]
    statuses = [status for _, status in outcomes]
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    schema = {"columns": [{"name": c, "description": COLUMN_DOCS.get(c, "swept parameter")} for c in columns]}
    _write_json(csv_path.with_name(csv_path.stem + ".schema.json"), schema)
    code = EXIT_OK
    if "guard" in statuses:
        code = EXIT_GUARD
    elif "convergence" in statuses:
        code = EXIT_CONVERGENCE
    doc = {
        "version": REPORT_VERSION,
        "tool_version": __version__,
        "seed": cfg.get("seed"),
        "columns": columns,
        "rows": [{c: _jsonable(row[c]) for c in columns} for row in rows],
        "exit_code": code,
    }
    _write_json(json_path, doc)
    return code


def _jsonable(value):
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, complex):
        return {"re": _jsonable(value.real), "im": _jsonable(value.imag)}
    return value


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# qef and opa commands


def cmd_qef(config_path) -> int:
    from .tpa import dqc_spectral_factor, pathway_dominance_ratio, qef

    try:
        cfg = load_config(config_path)
        level = build_level(cfg)
        si = build_si(cfg)
        coh = build_state(_require(cfg, "coherent", "config"), cfg["_base"])
        epp = build_state(_require(cfg, "epp", "config"), cfg["_base"])
        if not isinstance(coh, CoherentState) or not isinstance(epp, TwoPhotonState):
            raise ConfigError("'coherent' must be a coherent block and 'epp' a pair block")
        guard = cfg.get("options", {}).get("guard")
        result = qef(level, si, coh, epp, guard=guard)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsGuardError as exc:
        print(f"guard error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, ZeroDivisionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        dominance = pathway_dominance_ratio(level, si, epp, guard=guard)
    spectral, _ = dqc_spectral_factor(epp, level.gamma("f", "g"), level.omega_f - 2 * epp.jsa.center)
    doc = {
        "version": REPORT_VERSION,
        "analytic_qef": result.analytic,
        "computed_qef": result.computed,
        "ratio": result.ratio,
        "photon_factor": result.photon_factor,
        "bandwidth_factor": result.bandwidth_factor,
        "spectral_factor": {"re": spectral.real, "im": spectral.imag},
        "dominance_ratio": _jsonable(dominance),
        "warnings": [f"{w.category.__name__}: {w.message}" for w in caught],
    }
    out = cfg.get("outputs", {}).get("json")
    if out:
        _write_json(Path(cfg["_base"]) / out, doc)
    width = max(len(k) for k in doc)
    for key in ("analytic_qef", "computed_qef", "ratio", "photon_factor", "bandwidth_factor", "dominance_ratio"):
        print(f"{key:<{width}}  {doc[key]}")
    return EXIT_OK


def cmd_opa(config_path) -> int:
    from .fieldstate import mean_photon_number
    from .opa import p_opa_coherent, p_opa_single_photon

    try:
        cfg = load_config(config_path)
        level = build_level(cfg)
        si = build_si(cfg)
        state = build_state(_require(cfg, "light", "config"), cfg["_base"])
        target = cfg.get("target")
        if target is not None and target not in level.labels:
            raise ConfigError(f"unknown target level {target!r}")
        if isinstance(state, TwoPhotonState):
            raise ConfigError("one-photon absorption needs a coherent or single-photon light block")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            if isinstance(state, CoherentState):
                prob = p_opa_coherent(level, si, state, target)
            else:
                prob = p_opa_single_photon(level, si, state, target)
        except PhysicsGuardError as exc:
            print(f"guard error: {exc}", file=sys.stderr)
            return EXIT_GUARD
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    doc = {
        "version": REPORT_VERSION,
        "kind": cfg["light"]["kind"],
        "mean_photon_number": mean_photon_number(state),
        "p_opa": prob,
        "warnings": [f"{w.category.__name__}: {w.message}" for w in caught],
    }
    out = cfg.get("outputs", {}).get("json")
    if out:
        _write_json(Path(cfg["_base"]) / out, doc)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate


def cmd_validate(tol: float | None = None, seed: int = 20240101, output=None) -> int:
    from .validation import run_checks

    report = run_checks(tol_override=tol, seed=seed)
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpa",
        description="Two-photon absorption with classical and entangled light.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="evaluate a scenario sweep and write CSV + JSON")
    run.add_argument("config")
    val = sub.add_parser("validate", help="compare closed forms against the independent oracles")
    val.add_argument("--tol", type=float, default=None, help="override every check tolerance")
    val.add_argument("--seed", type=int, default=20240101, help="Monte-Carlo seed")
    val.add_argument("--output", default=None, help="write the JSON report here instead of stdout")
    q = sub.add_parser("qef", help="entangled versus coherent enhancement report")
    q.add_argument("config")
    o = sub.add_parser("opa", help="one-photon absorption probability")
    o.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return run_scenario(args.config)
    if args.command == "validate":
        return cmd_validate(args.tol, args.seed, args.output)
    if args.command == "qef":
        return cmd_qef(args.config)
    return cmd_opa(args.config)


if __name__ == "__main__":
    sys.exit(main())
