"""Command line entry point: ``randkrylov run --config <file> [overrides]``."""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import jsonschema

from ..errors import ConfigError, RandKrylovError
from .config import ExperimentConfig, TASK_DEFAULTS, TASKS, parse_matrix_flag, parse_sketch_flag
from .report import dumps, write_csv, write_report
from .runner import run

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # bad flags are config errors and get the same JSON error as a bad file
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="randkrylov", description="Randomized Krylov experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("--config", help="JSON config file; flags below override its fields")
    r.add_argument("--task", choices=TASKS)
    r.add_argument("--seed", type=int)
    r.add_argument("--m", type=int)
    r.add_argument("--k", type=int)
    r.add_argument("--tol", type=float)
    r.add_argument("--sketch", help="kind:l:s, e.g. gaussian:600 or s_hashing:auto:8")
    r.add_argument("--matrix", help="mm:<path> or gen:<name>:key=value,...")
    r.add_argument("--out", help="report path; stdout when omitted")
    r.add_argument("--csv", help="also write metric arrays as CSV")
    return p


def _merge(args) -> dict:
    d: dict = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {args.config}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    if args.task:
        if d.get("task") not in (None, args.task):
            d.pop("params", None)  # parameters of another task do not carry over
        d["task"] = args.task
    if args.seed is not None:
        d["seed"] = args.seed
    params = dict(d.get("params") or {})
    allowed = TASK_DEFAULTS.get(d.get("task"), {})
    for flag in ("m", "k", "tol"):
        val = getattr(args, flag)
        if val is not None:
            if flag not in allowed:
                raise ConfigError(f"--{flag} does not apply to task {d.get('task')!r}")
            params[flag] = val
    if params:
        d["params"] = params
    if args.sketch:
        d["sketch"] = {**(d.get("sketch") or {}), **parse_sketch_flag(args.sketch)}
    if args.matrix:
        d["matrix"] = parse_matrix_flag(args.matrix)
    if args.out:
        d["output"] = args.out
    return d


def _provenance(exc: BaseException) -> dict:
    """Innermost package frame of the traceback: module and function."""
    module, operation = None, None
    for fr in traceback.extract_tb(exc.__traceback__):
        parts = Path(fr.filename).parts
        if "randkrylov" in parts:
            i = len(parts) - 1 - parts[::-1].index("randkrylov")
            module = ".".join(("randkrylov",) + parts[i + 1 :])[: -len(".py")]
            operation = fr.name
    return {"module": module, "operation": operation}


def _error(exc: BaseException, code: int) -> int:
    err = {"status": "error", "exit_code": code, "error": {"type": type(exc).__name__, "message": str(exc), **_provenance(exc)}}
    print(json.dumps(err, sort_keys=True), file=sys.stdout)
    return code


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        cfg = ExperimentConfig.from_dict(_merge(args))
    except ConfigError as exc:
        return _error(exc, EXIT_CONFIG)
    try:
        report = run(cfg)
    except (ConfigError, jsonschema.ValidationError) as exc:
        return _error(exc, EXIT_CONFIG)
    except (RandKrylovError, ValueError, ArithmeticError, OSError) as exc:
        return _error(exc, EXIT_RUNTIME)
    if cfg.output:
        write_report(report, cfg.output)
    else:
        sys.stdout.write(dumps(report))
    if args.csv:
        write_csv(report, args.csv)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
