"""Command-line front end: ``tiltpump <run|list|describe>``."""
from __future__ import annotations

import argparse
import difflib
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__, io
from .experiments import REGISTRY, Check, Context, _is_reference
from .experiments import REFERENCE
from .model import ModelParams

SCHEMA_VERSION = 1
THREADS_ENV = "TILTPUMP_THREADS"
CONFIG_KEYS = {"schema_version", "experiment", "params", "controls", "out", "emit"}
EMIT_KEYS = {"csv", "json", "svg"}

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


def _suggest(name: str) -> str:
    close = difflib.get_close_matches(name, list(REGISTRY), n=1, cutoff=0.0)
    return f"unknown experiment {name!r}; did you mean {close[0]!r}?" if close else f"unknown experiment {name!r}"


def load_config(path: str | None, experiment: str | None) -> dict:
    """Read and validate a JSON config; returns the fully resolved config."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    exp_id = experiment or raw.get("experiment")
    if exp_id is None:
        raise ConfigError("no experiment given")
    if raw.get("experiment") not in (None, exp_id):
        raise ConfigError(f"config is for {raw['experiment']!r}, not {exp_id!r}")
    if exp_id not in REGISTRY:
        raise ConfigError(_suggest(exp_id))
    exp = REGISTRY[exp_id]

    params = REFERENCE.replace(**exp.params).to_dict()
    overrides = raw.get("params", {})
    bad = set(overrides) - set(params)
    if bad:
        raise ConfigError(f"unknown parameter(s): {sorted(bad)}")
    params.update(overrides)
    try:
        ModelParams(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc

    controls = dict(exp.controls)
    bad = set(raw.get("controls", {})) - set(controls)
    if bad:
        raise ConfigError(f"unknown control(s) for {exp_id}: {sorted(bad)}")
    controls.update(raw.get("controls", {}))

    emit = {k: True for k in EMIT_KEYS}
    bad = set(raw.get("emit", {})) - EMIT_KEYS
    if bad:
        raise ConfigError(f"unknown emit flag(s): {sorted(bad)}")
    emit.update(raw.get("emit", {}))
    return {"schema_version": SCHEMA_VERSION, "experiment": exp_id, "params": params,
            "controls": controls, "out": raw.get("out"), "emit": emit}


def run(config: dict, out: Path, threads: int = 1, strict: bool = False) -> tuple[int, dict]:
    """Execute a resolved config and write the manifest; returns ``(exit code, manifest)``."""
    exp = REGISTRY[config["experiment"]]
    params = ModelParams(**config["params"])
    reference = _is_reference(params, exp.params)
    ctx = Context(out=out, emit=config["emit"], threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        checks, _ = exp.func(params, config["controls"], ctx, reference)
    wall = time.perf_counter() - start
    ctx.warnings += [f"{w.category.__name__}: {w.message}" for w in caught]
    ctx.warnings = sorted(set(ctx.warnings))
    failed = [c for c in checks if c.passed is False]
    status = EXIT_FAIL if failed or (strict and (ctx.warnings or ctx.errors)) else EXIT_OK
    manifest = {
        "tiltpump_version": __version__,
        "config": config,
        "reference_parameters": reference,
        "threads": threads,
        "wall_time_s": wall,
        "checks": [c.to_dict() for c in checks],
        "artifacts": [{"path": str(p.relative_to(out)), "sha256": io.sha256(p)} for p in ctx.artifacts],
        "warnings": ctx.warnings,
        "errors": ctx.errors,
        "status": "pass" if status == EXIT_OK else "fail",
    }
    io.write_json(out / "manifest.json", manifest)
    return status, manifest


def _format_check(c: Check) -> str:
    mark = {True: "PASS", False: "FAIL", None: "SKIP" if c.measured is None else "INFO"}[c.passed]
    tol = f" +- {c.tol:g}" if c.tol is not None else ""
    exp = "" if c.expected is None else f" (expected {c.expected}{tol})"
    meas = io._jsonable(c.measured)
    if isinstance(meas, float):
        meas = io.FLOAT_FMT.format(meas)
    return f"[{mark}] {c.name}: {meas}{exp}  [{c.kind}]"


def _groups():
    groups: dict[str, list[str]] = {}
    for e in REGISTRY.values():
        groups.setdefault(e.anchor, []).append(e.id)
    return groups


def cmd_list() -> int:
    for anchor, ids in _groups().items():
        runtime = ", ".join(REGISTRY[i].runtime for i in ids)
        print(f"{' / '.join(ids):34s} {runtime:14s} {anchor}")
    return EXIT_OK


def cmd_describe(exp_id: str) -> int:
    if exp_id not in REGISTRY:
        print(_suggest(exp_id), file=sys.stderr)
        return EXIT_CONFIG
    print(REGISTRY[exp_id].describe())
    return EXIT_OK


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tiltpump", description="Correlated pumping of two bosons in a tilted superlattice.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=["run", "list", "describe"])
    p.add_argument("experiment", nargs="?")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (default: runs/<experiment>)")
    p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--strict", action="store_true", help="treat numerical warnings as failures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list":
        return cmd_list()
    if args.experiment is None and args.command == "describe":
        print("describe needs an experiment id", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "describe":
        return cmd_describe(args.experiment)
    try:
        config = load_config(args.config, args.experiment)
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or config["out"] or Path("runs") / config["experiment"])
    config["out"] = str(out)
    status, manifest = run(config, out, threads, args.strict)
    for c in manifest["checks"]:
        print(_format_check(Check(**c)))
    for w in manifest["warnings"]:
        print(f"warning: {w}")
    for e in manifest["errors"]:
        print(f"error: {e}")
    print(f"{config['experiment']}: {manifest['status']} in {manifest['wall_time_s']:.1f} s -> {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
