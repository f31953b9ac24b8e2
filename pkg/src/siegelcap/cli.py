"""Batch driver: one subcommand per verification or experiment.

Each run writes a JSON report and one CSV per table into ``--out``. Settings
are resolved in increasing precedence: driver defaults, the config file,
``SIEGELCAP_*`` environment variables, command-line flags.

Environment variables: ``SIEGELCAP_CONFIG``, ``SIEGELCAP_SEED``,
``SIEGELCAP_OUT``, ``SIEGELCAP_THREADS``.

Exit codes: 0 all checks pass, 1 a numerical check failed, 2 usage or config
error, 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import inspect
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from . import experiments as X
from . import geometry as geo
from ._validation import (InfeasibleDiscretizationError, SiegelcapError, SolverError,
                          check_alpha)

SCHEMA_VERSION = 1
ENV_PREFIX = "SIEGELCAP_"

# subcommand -> (driver, alpha range: None, "riesz" or "main")
SUBCOMMANDS = {
    "verify-geometry": (X.verify_geometry, None),
    "verify-kernels": (X.verify_kernels, None),
    "norm-identity": (X.norm_identity, "riesz"),
    "inner-product": (X.inner_product, "riesz"),
    "conv-identity": (X.conv_identity, "main"),
    "a1": (X.a1_experiment, "riesz"),
    "maximal": (X.maximal_experiment, None),
    "capacity": (X.capacity_experiment, "main"),
    "strong-cap": (X.strong_cap_experiment, "main"),
    "subcap": (X.subcap_experiment, "main"),
    "carleson": (X.carleson_experiment, "riesz"),
    "main-theorem": (X.main_theorem, "main"),
}
HELP = {
    "verify-geometry": "group law, gauge invariances and the ball-volume law",
    "verify-kernels": "kernel-Riesz identity, admissible regions and the Poisson constant",
    "norm-identity": "volume norms for m = 1, 2 against the Gram norm",
    "inner-product": "boundary quadrature of H^2 kernel inner products",
    "conv-identity": "Riesz convolution ratio across distances",
    "a1": "A_1 ratio of Riesz potentials over pairs and radii",
    "maximal": "admissible maxima of Poisson extensions against Mf",
    "capacity": "primal/dual capacity, invariances and the triple identity",
    "strong-cap": "strong capacitary functional on bump profiles",
    "subcap": "subcapacitary ratios over ball schedules",
    "carleson": "Gram positivity and nested Carleson quotients",
    "main-theorem": "Carleson vs subcapacitary constants and tent positivity",
}
EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def load_schema(name):
    return json.loads(resources.files("siegelcap").joinpath("schemas", name).read_text())


def default_config_path(name="default.json"):
    return resources.files("siegelcap").joinpath("configs", name)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


# ------------------------------------------------------------ configuration

def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", "config") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}", "config") from e
    try:
        jsonschema.validate(cfg, load_schema("config.schema.json"))
    except jsonschema.ValidationError as e:
        raise ConfigError(e.message, _field_of(e)) from e
    return cfg


def _field_of(err: jsonschema.ValidationError):
    path = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        path += extra[:1]
    elif err.validator == "required":
        missing = [r for r in err.validator_value if r not in err.instance]
        path += missing[:1]
    return ".".join(path) or None


def _convert(name, value, default, field):
    """Map a JSON parameter onto the driver's expected type."""
    if name == "families" and not isinstance(default, (int, float)):
        if not isinstance(value, dict):
            raise ConfigError("families must map names to ball families", field)
        schema = load_schema("ball_family.schema.json")
        out = {}
        for key, fam in value.items():
            try:
                jsonschema.validate(fam, schema)
            except jsonschema.ValidationError as e:
                raise ConfigError(e.message, f"{field}.{key}") from e
            out[key] = geo.BallFamily.from_dict(fam)
        return out
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, tuple):
        ok = isinstance(value, list) and len(value) > 0
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{name} has the wrong type ({type(value).__name__})", field)
    if isinstance(value, list):
        return tuple(value)
    if isinstance(default, float):
        return float(value)
    return value


def _plain(v):
    """JSON-ready copy of a resolved parameter."""
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, geo.BallFamily):
        return v.to_dict()
    return v


def resolve(subcommand, cfg, seed=None, threads=None):
    """Driver keyword arguments and the effective config recorded in the report."""
    driver, arange = SUBCOMMANDS[subcommand]
    params = inspect.signature(driver).parameters
    kwargs = {k: p.default for k, p in params.items()}
    for key in ("n", "alpha", "seed", "threads"):
        if key in cfg and key in kwargs:
            kwargs[key] = cfg[key]
    section = cfg.get("subcommands", {}).get(subcommand, {})
    for key, value in section.items():
        field = f"subcommands.{subcommand}.{key}"
        if key not in kwargs or key in ("n", "seed", "threads"):
            raise ConfigError(f"unknown parameter {key!r} for {subcommand}", field)
        kwargs[key] = _convert(key, value, params[key].default, field)
    if seed is not None and "seed" in kwargs:
        kwargs["seed"] = seed
    if threads is not None and "threads" in kwargs:
        kwargs["threads"] = threads
    if arange is not None:
        try:
            check_alpha(kwargs["alpha"], kwargs["n"], main_theorem=arange == "main")
        except SiegelcapError as e:
            raise ConfigError(str(e), "alpha") from e
    effective = {k: _plain(v) for k, v in kwargs.items() if k not in ("seed", "threads")}
    return kwargs, effective


# ----------------------------------------------------------------- outputs

def build_report(subcommand, seed, effective, checks, tables):
    report = {
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "seed": int(seed),
        "config": effective,
        "config_hash": config_hash(effective),
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "tables": tables,
    }
    jsonschema.validate(report, load_schema("report.schema.json"))
    return report


def _stem(report):
    return f"seed{report['seed']}_{report['config_hash'][:8]}"


def report_path(out, report):
    return Path(out) / f"{report['subcommand']}_{_stem(report)}.json"


def write_report(report, out):
    path = report_path(out, report)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return canonical_json(v)
    return str(v)


def emit_csv(report, out):
    """One CSV per table, named ``{subcommand}_{table}_seed{seed}_{hash8}.csv``."""
    paths = []
    for name in sorted(report["tables"]):
        tab = report["tables"][name]
        path = Path(out) / f"{report['subcommand']}_{name}_{_stem(report)}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(tab["columns"])
            for row in tab["rows"]:
                w.writerow([_cell(v) for v in row])
        paths.append(path)
    return paths


def read_csv(path):
    """Parse an emitted CSV back into ``{"columns", "rows"}`` with numbers restored."""
    def parse(s):
        if s == "":
            return None
        if s in ("True", "False"):
            return s == "True"
        for conv in (int, float):
            try:
                return conv(s)
            except ValueError:
                pass
        if s[:1] in "[{":
            return json.loads(s)
        return s

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return {"columns": rows[0], "rows": [[parse(c) for c in r] for r in rows[1:]]}


def _error(kind, message, field, code, out, subcommand):
    rec = {"error": kind, "message": message, "field": field, "exit_code": code,
           "subcommand": subcommand}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
    return code


# --------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(prog="siegelcap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("config_file", nargs="?", help="config path (same as --config)")
        sp.add_argument("--config", help="JSON config; defaults to the packaged default.json")
        sp.add_argument("--seed", type=int, help="RNG seed (u64)")
        sp.add_argument("--out", help="output directory (default: current directory)")
        sp.add_argument("--threads", type=int, help="worker threads")
    return p


def _env_int(name):
    v = os.environ.get(ENV_PREFIX + name)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError as e:
        raise ConfigError(f"{ENV_PREFIX}{name} must be an integer", ENV_PREFIX + name) from e


def run(subcommand, config=None, seed=None, out=None, threads=None):
    """Run one subcommand and write its artifacts; returns ``(exit_code, report)``."""
    out = Path(out if out is not None else os.environ.get(ENV_PREFIX + "OUT", "."))
    try:
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}", "subcommand")
        path = config or os.environ.get(ENV_PREFIX + "CONFIG") or default_config_path()
        cfg = load_config(path)
        seed = seed if seed is not None else _env_int("SEED")
        threads = threads if threads is not None else _env_int("THREADS")
        if seed is not None and not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        if threads is not None and threads < 1:
            raise ConfigError("threads must be positive", "threads")
        kwargs, effective = resolve(subcommand, cfg, seed, threads)
    except ConfigError as e:
        return _error("config", str(e), e.field, EXIT_USAGE, out, subcommand), None
    driver = SUBCOMMANDS[subcommand][0]
    try:
        checks, tables = driver(**kwargs)
    except (SolverError, InfeasibleDiscretizationError) as e:
        return _error("solver", str(e), None, EXIT_SOLVER, out, subcommand), None
    except (SiegelcapError, ValueError) as e:
        return _error("validation", str(e), None, EXIT_USAGE, out, subcommand), None
    report = build_report(subcommand, kwargs.get("seed", 0), effective, checks, tables)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    emit_csv(report, out)
    return (EXIT_PASS if report["passed"] else EXIT_FAIL), report


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_PASS
    if args.config and args.config_file and args.config != args.config_file:
        return _error("usage", "config given twice with different paths", "config", EXIT_USAGE,
                      None, args.subcommand)
    code, report = run(args.subcommand, args.config or args.config_file, args.seed, args.out,
                       args.threads)
    if report is not None:
        for c in report["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
        print(f"{report['subcommand']}: {'passed' if report['passed'] else 'failed'} "
              f"-> {report_path(args.out or os.environ.get(ENV_PREFIX + 'OUT', '.'), report)}")
    return code


if __name__ == "__main__":
    sys.exit(main())
