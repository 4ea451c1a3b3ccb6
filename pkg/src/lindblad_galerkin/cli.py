"""Command-line driver: ``lindblad-galerkin <command> --config run.toml --out DIR``.

Configs are TOML.  Every section and key is checked; unknown keys are
errors with a nearest-match hint, and all problems are reported at once.
See README.md for the full grammar.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import difflib
import json
import math
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, apriori, checks, convergence, evolve, reports
from .fock_ops import NCPolyParseError, parse_ncpoly
from .models import MODEL_PARAMS, ModelSpec, model_from_params

COMMANDS = ("evolve", "steady", "converge", "apriori", "check")

DEFAULT_LEVEL = 40
DEFAULT_REL_TOL = evolve.DEFAULT_REL_TOL

# section -> {key: (type check, default or REQUIRED)}
REQUIRED = object()
_num = (int, float)
_SECTIONS = {
    "evolve": {
        "truncation": (int, DEFAULT_LEVEL),
        "times": (list, REQUIRED),
        "rel_tol": (_num, DEFAULT_REL_TOL),
        "observables": (list, ["number"]),
        "method": (str, "dopri5"),
    },
    "steady": {
        "truncation": (int, DEFAULT_LEVEL),
        "method": (str, "auto"),
        "threshold": (_num, evolve.NULL_THRESHOLD),
    },
    "converge": {
        "n_list": (list, REQUIRED),
        "n_ref": (int, REQUIRED),
        "times": (list, REQUIRED),
        "k_list": (list, [0.0]),
        "rel_tol": (_num, convergence.STUDY_REL_TOL),
    },
    "apriori": {
        "truncation": (int, DEFAULT_LEVEL),
        "k_list": (list, [1.0, 2.0, 4.0]),
        "edge_margin": (_num, None),
    },
    "check": {},
}
_TOP_KEYS = ("command", "seed", "threads", "model", "initial") + tuple(_SECTIONS)
_INITIAL_KEYS = ("kind", "alpha", "nbar", "k", "eps", "n", "path")
_NEEDS_INITIAL = ("evolve", "converge")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    command: str
    model: ModelSpec | None
    params: dict
    initial: object = None
    seed: int = 0
    threads: int = 1
    raw: dict = field(default_factory=dict)


def _unknown(key, valid, where):
    hint = difflib.get_close_matches(key, valid, n=1, cutoff=0.5)
    msg = f"unknown key {key!r} in {where}"
    return msg + (f" (did you mean {hint[0]!r}?)" if hint else "")


def _check_keys(table, valid, where, errors):
    for key in table:
        if key not in valid:
            errors.append(_unknown(key, list(valid), where))


def _parse_initial(table, where, errors):
    if not isinstance(table, dict):
        errors.append(f"{where} must be a table")
        return None
    _check_keys(table, _INITIAL_KEYS, where, errors)
    kind = table.get("kind")
    if kind is None:
        errors.append(f"missing required key 'kind' in {where}")
        return None
    if kind not in convergence.KINDS:
        errors.append(f"{where}.kind={kind!r} is not one of {list(convergence.KINDS)}")
        return None
    if kind == "custom":
        path = table.get("path")
        if path is None:
            errors.append(f"{where}: custom initial state needs 'path' to a .npy matrix")
            return None
        try:
            return convergence.InitialState("custom", matrix=np.load(path))
        except OSError as exc:
            errors.append(f"{where}: cannot read {path}: {exc}")
            return None
    kw = {}
    for key in ("alpha", "nbar", "k", "eps"):
        if key in table:
            if not isinstance(table[key], _num):
                errors.append(f"{where}.{key} must be a number")
            else:
                kw[key] = float(table[key])
    if "n" in table:
        if not isinstance(table["n"], int):
            errors.append(f"{where}.n must be an integer")
        else:
            kw["n"] = table["n"]
    return convergence.InitialState(kind, **kw)


def _parse_model(table, errors):
    if not isinstance(table, dict):
        errors.append("[model] must be a table")
        return None
    name = table.get("name")
    if name is None:
        errors.append("missing required key 'name' in [model]")
        return None
    if name not in MODEL_PARAMS:
        hint = difflib.get_close_matches(str(name), list(MODEL_PARAMS), n=1)
        errors.append(f"unknown model {name!r}" + (f" (did you mean {hint[0]!r}?)" if hint else ""))
        return None
    valid = ("name",) + MODEL_PARAMS[name]
    _check_keys(table, valid, "[model]", errors)
    params = {k: v for k, v in table.items() if k != "name"}
    for key in ("hamiltonian",):
        if key in params:
            try:
                parse_ncpoly(params[key])
            except NCPolyParseError as exc:
                errors.append(f"[model].{key}: {exc}")
                return None
    for j, text in enumerate(params.get("jumps", []) if name == "custom" else []):
        try:
            parse_ncpoly(text)
        except NCPolyParseError as exc:
            errors.append(f"[model].jumps[{j}]: {exc}")
            return None
    try:
        return model_from_params(name, params)
    except KeyError as exc:
        errors.append(f"missing required key {exc.args[0]!r} in [model] for {name}")
    except (ValueError, TypeError) as exc:
        errors.append(f"[model]: {exc}")
    return None


def _parse_section(command, table, errors):
    schema = _SECTIONS[command]
    if not isinstance(table, dict):
        errors.append(f"[{command}] must be a table")
        return {}
    _check_keys(table, schema, f"[{command}]", errors)
    out = {}
    for key, (kind, default) in schema.items():
        if key in table:
            val = table[key]
            if isinstance(val, bool) or not isinstance(val, kind):
                errors.append(f"[{command}].{key} has the wrong type ({type(val).__name__})")
            out[key] = val
        elif default is REQUIRED:
            errors.append(f"missing required key {key!r} in [{command}]")
        else:
            out[key] = default
    return out


def parse_config(path, command: str | None = None) -> RunConfig:
    """Read and validate a TOML run config; raises :class:`ConfigError` listing every problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {str(path)!r} does not exist"])
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(raw, command)


def config_from_dict(raw: dict, command: str | None = None) -> RunConfig:
    errors: list[str] = []
    _check_keys(raw, _TOP_KEYS, "the top level", errors)
    file_cmd = raw.get("command")
    if command is None:
        command = file_cmd
    elif file_cmd is not None and file_cmd != command:
        errors.append(f"config says command={file_cmd!r} but {command!r} was requested")
    if command not in COMMANDS:
        errors.append(f"command must be one of {list(COMMANDS)}, got {command!r}")
        raise ConfigError(errors)

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        errors.append("seed must be an integer")
    threads = raw.get("threads", 1)
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        errors.append("threads must be a positive integer")

    model = None
    if command != "check":
        if "model" not in raw:
            errors.append("missing required section [model]")
        else:
            model = _parse_model(raw["model"], errors)

    initial = None
    if command in _NEEDS_INITIAL:
        if "initial" not in raw:
            errors.append("missing required section [initial]")
        elif isinstance(raw["initial"], list):
            parts = [_parse_initial(t, f"[[initial]] #{i}", errors) for i, t in enumerate(raw["initial"])]
            initial = tuple(parts) if None not in parts else None
        else:
            initial = _parse_initial(raw["initial"], "[initial]", errors)

    params = _parse_section(command, raw.get(command, {}), errors)
    for other, schema in _SECTIONS.items():
        if other != command and isinstance(raw.get(other), dict):
            _check_keys(raw[other], schema, f"[{other}]", errors)
    if command == "converge" and not errors:
        try:
            convergence.StudyConfig(model, initial, params["n_list"], params["n_ref"], params["times"],
                                    params["k_list"], params["rel_tol"])
        except (ValueError, TypeError) as exc:
            errors.append(f"[converge]: {exc}")
    if command == "evolve" and "observables" in params:
        for name in params["observables"]:
            try:
                reports.parse_observable(str(name))
            except ValueError as exc:
                errors.append(f"[evolve].observables: {exc}")
        if params.get("method") not in ("dopri5", "expm"):
            errors.append("[evolve].method must be 'dopri5' or 'expm'")
    if errors:
        raise ConfigError(errors)
    return RunConfig(command, model, params, initial, seed, threads, raw)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _versions():
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_manifest(out: Path, data: dict):
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


class RunError(RuntimeError):
    """Module failure with the run context attached."""

    def __init__(self, message, context):
        super().__init__(message)
        self.context = context


def _run_evolve(cfg: RunConfig, out: Path):
    p = cfg.params
    space = cfg.model.model.scheme(p["truncation"])
    ctx = {"model": cfg.model.name, "N": p["truncation"]}
    try:
        rho0 = convergence.make_initial_state(cfg.initial, space)
        prop = evolve.propagate if p["method"] == "dopri5" else evolve.propagate_expm
        res = prop(cfg.model.model, space, rho0, [float(t) for t in p["times"]], float(p["rel_tol"]))
    except Exception as exc:
        raise RunError(str(exc), ctx) from exc
    cols, rows = reports.trajectory_rows(res, [str(o) for o in p["observables"]])
    reports.write_csv(out / "trajectory.csv", cols, rows)
    return ["trajectory.csv"], {"trace_drift": res.trace_drift, "positivity_floor": res.positivity_floor}


def _run_steady(cfg: RunConfig, out: Path):
    import warnings

    p = cfg.params
    space = cfg.model.model.scheme(p["truncation"])
    ctx = {"model": cfg.model.name, "N": p["truncation"]}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", evolve.SteadyStateMultiplicityWarning)
            ss = evolve.steady_state(cfg.model.model, space, p["method"], float(p["threshold"]))
    except Exception as exc:
        raise RunError(str(exc), ctx) from exc
    n_tot = space.occupations.sum(axis=1)
    rows = []
    for i, m in enumerate(ss.states):
        m = m / np.trace(m) if abs(np.trace(m)) > 1e-12 else m
        rows.append([i, float(np.trace(m).real), float(np.sum(n_tot * np.diag(m).real))])
    reports.write_csv(out / "steady.csv", ["state", "trace", "number"], rows)
    reports.write_csv(out / "singular_values.csv", ["index", "singular_value"],
                      [[i, float(s)] for i, s in enumerate(ss.singular_values)])
    return ["steady.csv", "singular_values.csv"], {"multiplicity": ss.multiplicity, "residual": ss.residual}


def _run_converge(cfg: RunConfig, out: Path):
    p = cfg.params
    study = convergence.StudyConfig(cfg.model, cfg.initial, p["n_list"], p["n_ref"], p["times"],
                                    p["k_list"], float(p["rel_tol"]), cfg.threads)
    try:
        rep = convergence.run_study(study)
    except Exception as exc:
        raise RunError(str(exc), {"model": cfg.model.name, "n_list": study.n_list, "n_ref": study.n_ref}) from exc
    reports.write_csv(out / "report.csv", convergence.CSV_COLUMNS, rep.rows())
    reports.write_csv(out / "plot_data.csv", reports.PLOT_COLUMNS, reports.plot_rows(rep))
    norm_rows = []
    seen = set()
    for r in rep.records:
        if r.t not in seen:
            seen.add(r.t)
            norm_rows.extend([r.t, k, v] for k, v in sorted(r.sobolev_norms.items()))
    reports.write_csv(out / "reference_norms.csv", ["t", "k", "sobolev_norm"], norm_rows)
    return ["report.csv", "plot_data.csv", "reference_norms.csv"], {
        "reliable": rep.reliable,
        "warnings": rep.warnings,
    }


def _run_apriori(cfg: RunConfig, out: Path):
    p = cfg.params
    space = cfg.model.model.scheme(p["truncation"])
    ests = []
    for k in p["k_list"]:
        try:
            ests.append(apriori.estimate(cfg.model.model, space, float(k), p["edge_margin"]))
        except Exception as exc:
            raise RunError(str(exc), {"model": cfg.model.name, "N": p["truncation"], "k": k}) from exc
    reports.write_csv(out / "apriori.csv", reports.APRIORI_COLUMNS, reports.apriori_rows(cfg.model.name, ests))
    return ["apriori.csv"], {}


def _run_check(cfg: RunConfig, out: Path):
    results = checks.run_all(cfg.seed)
    for r in results:
        print(r.line())
    reports.write_csv(out / "check.csv", ["check", "passed", "detail"],
                      [[r.name, r.passed, r.detail] for r in results])
    failed = [r.name for r in results if not r.passed]
    return ["check.csv"], {"failed": failed}


_RUNNERS = {
    "evolve": _run_evolve,
    "steady": _run_steady,
    "converge": _run_converge,
    "apriori": _run_apriori,
    "check": _run_check,
}


def execute(cfg: RunConfig, out) -> int:
    """Run ``cfg`` into directory ``out``; returns the process exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "status": "running",
        "command": cfg.command,
        "config": cfg.raw,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "versions": _versions(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    _write_manifest(out, manifest)
    start = time.perf_counter()
    np.random.seed(cfg.seed)
    try:
        files, info = _RUNNERS[cfg.command](cfg, out)
    except Exception as exc:
        report = {
            "error": type(exc.__cause__ or exc).__name__,
            "message": str(exc),
            "context": getattr(exc, "context", None) or {"model": cfg.model.name if cfg.model else None},
            "traceback": traceback.format_exc(),
        }
        (out / "error.json").write_text(json.dumps(report, indent=2, default=str) + "\n")
        manifest.update(status="failed", wall_time=time.perf_counter() - start)
        _write_manifest(out, manifest)
        print(json.dumps({k: report[k] for k in ("error", "message", "context")}, default=str), file=sys.stderr)
        return 1
    manifest.update(status="complete", wall_time=time.perf_counter() - start, outputs=files,
                    results=_jsonable(info))
    _write_manifest(out, manifest)
    if cfg.command == "check" and info["failed"]:
        return 1
    return 0


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lindblad-galerkin", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML run config (optional for 'check')")
    ap.add_argument("--out", help="output directory (default: runs/<command>)")
    ap.add_argument("--threads", type=int, help="parallel propagations in 'converge'")
    ap.add_argument("--seed", type=int, help="seed for randomized checks")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            if args.command != "check":
                raise ConfigError([f"--config is required for '{args.command}'"])
            cfg = config_from_dict({}, "check")
        else:
            cfg = parse_config(args.config, args.command)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(["--threads must be positive"])
            cfg.threads = args.threads
        if args.seed is not None:
            cfg.seed = args.seed
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "errors": exc.errors}), file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path("runs") / args.command
    return execute(cfg, out)


if __name__ == "__main__":
    sys.exit(main())
