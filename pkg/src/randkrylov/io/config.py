"""Experiment configuration.

A config is a JSON object::

    {"task": "qr_bench", "seed": 0,
     "matrix": {"source": "gen", "generator": "svd", "params": {...}},
     "sketch": {"kind": "gaussian", "l": 600, "s": null, "seed": 0},
     "params": {...}, "output": "report.json"}

:func:`ExperimentConfig.from_dict` fills every omitted field with its
default, so ``to_dict`` always returns the complete, explicit form.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from ..errors import ConfigError
from ..sketching import KINDS
from .generators import GENERATORS

TASKS = ("qr_bench", "linsolve", "eig", "matfun", "sylvester")
CONFIG_VERSION = "1.0"

# per-task parameter defaults; every key listed here is accepted and echoed
TASK_DEFAULTS: dict = {
    "qr_bench": {"algorithm": "rgs", "lstsq": "pivoted", "block_size": 1, "precision": "double"},
    "linsolve": {"solver": "rgmres", "m": 50, "basis_mode": "rgs_arnoldi", "k": None, "tol": 1e-10, "rhs": "ones"},
    "eig": {"engine": "rks", "target": "LM", "k": 4, "m": None, "tol": 1e-10, "max_restarts": 200, "eta": None},
    "matfun": {
        "f": {"name": "exp", "shift": 0.0, "coeffs": None},
        "method": "sfom_explicit",
        "m": 30,
        "m_grid": None,
        "k": None,
        "rhs": "ones",
        "reference": True,
    },
    "sylvester": {"r": 2, "m": 20, "m_grid": None, "k": 2, "residual": "factored"},
}

_CHOICES = {
    ("qr_bench", "algorithm"): ("rgs", "rhqr", "rand_cholesky_qr", "block_rgs", "cgs", "whiten"),
    ("qr_bench", "lstsq"): ("pivoted", "transpose"),
    ("qr_bench", "precision"): ("double",),
    ("linsolve", "solver"): ("rgmres", "rfom", "gmres", "fom"),
    ("linsolve", "basis_mode"): ("rgs_arnoldi", "whitened"),
    ("linsolve", "rhs"): ("ones", "random"),
    ("eig", "engine"): ("rks", "rira"),
    ("eig", "target"): ("LM", "SM", "LR", "SR"),
    ("matfun", "method"): ("arnoldi", "sfom_explicit", "sfom_whitened", "corrected"),
    ("matfun", "rhs"): ("ones", "random"),
    ("sylvester", "residual"): ("factored", "explicit"),
}

_SKETCH_KEYS = ("kind", "l", "s", "seed")


def _check_keys(d: dict, allowed, where: str):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def normalize_sketch(d: Optional[dict], default_seed: int, where: str = "sketch") -> dict:
    d = {} if d is None else d
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    _check_keys(d, _SKETCH_KEYS, where)
    out = {"kind": d.get("kind", "gaussian"), "l": d.get("l", "auto"), "s": d.get("s"), "seed": d.get("seed", default_seed)}
    if out["kind"] not in KINDS or out["kind"] == "psi_wrapped":
        raise ConfigError(f"{where}.kind must be one of gaussian, s_hashing, srht, identity")
    if out["l"] != "auto" and (not isinstance(out["l"], int) or out["l"] < 1):
        raise ConfigError(f"{where}.l must be a positive integer or 'auto'")
    if out["s"] is not None and (not isinstance(out["s"], int) or out["s"] < 1):
        raise ConfigError(f"{where}.s must be a positive integer or null")
    if not isinstance(out["seed"], int) or out["seed"] < 0:
        raise ConfigError(f"{where}.seed must be a nonnegative integer")
    return out


def normalize_matrix(d, where: str = "matrix") -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    src = d.get("source")
    if src == "mm":
        _check_keys(d, ("source", "path"), where)
        if not isinstance(d.get("path"), str):
            raise ConfigError(f"{where}.path must be a string")
        return {"source": "mm", "path": d["path"]}
    if src == "gen":
        _check_keys(d, ("source", "generator", "params"), where)
        if d.get("generator") not in GENERATORS:
            raise ConfigError(f"{where}.generator must be one of {', '.join(GENERATORS)}")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{where}.params must be an object")
        return {"source": "gen", "generator": d["generator"], "params": dict(params)}
    raise ConfigError(f"{where}.source must be 'mm' or 'gen'")


def _normalize_params(task: str, p: Optional[dict]) -> dict:
    p = {} if p is None else p
    if not isinstance(p, dict):
        raise ConfigError("params must be an object")
    defaults = TASK_DEFAULTS[task]
    _check_keys(p, defaults, f"params for {task}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(p))
    for (t, key), choices in _CHOICES.items():
        if t == task and out[key] not in choices:
            raise ConfigError(f"params.{key} must be one of {', '.join(map(str, choices))}, got {out[key]!r}")
    for key in ("m", "k", "r", "block_size", "max_restarts"):
        v = out.get(key)
        if key in out and v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
            raise ConfigError(f"params.{key} must be a positive integer")
    for key in ("tol", "eta"):
        v = out.get(key)
        if v is not None and (not isinstance(v, (int, float)) or v <= 0):
            raise ConfigError(f"params.{key} must be a positive number")
    if task == "matfun":
        f = out["f"]
        if isinstance(f, str):
            f = {"name": f}
        if not isinstance(f, dict):
            raise ConfigError("params.f must be an object or a function name")
        _check_keys(f, ("name", "shift", "coeffs"), "params.f")
        out["f"] = {"name": f.get("name"), "shift": float(f.get("shift", 0.0)), "coeffs": f.get("coeffs")}
    if "m_grid" in out:
        g = out["m_grid"]
        if g is None:
            out["m_grid"] = [out["m"]]
        elif not isinstance(g, list) or not g or any(not isinstance(v, int) or v < 1 for v in g):
            raise ConfigError("params.m_grid must be a nonempty list of positive integers")
    if task == "eig" and out["eta"] is None:
        out["eta"] = out["tol"]
    if task == "eig" and out["m"] is None:
        out["m"] = 2 * out["k"]
    return out


@dataclass
class ExperimentConfig:
    task: str
    matrix: dict
    sketch: dict
    params: dict
    seed: int = 0
    output: Optional[str] = None
    matrix_B: Optional[dict] = None
    sketch_B: Optional[dict] = None
    version: str = CONFIG_VERSION

    @classmethod
    def from_dict(cls, d: Any) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(d, ("task", "seed", "matrix", "matrix_B", "sketch", "sketch_B", "params", "output", "version"), "config")
        task = d.get("task")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {', '.join(TASKS)}, got {task!r}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if "matrix" not in d:
            raise ConfigError("config needs a matrix source")
        version = d.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r}")
        out = d.get("output")
        if out is not None and not isinstance(out, str):
            raise ConfigError("output must be a path string or null")
        matrix_B = sketch_B = None
        if task == "sylvester":
            matrix_B = normalize_matrix(d["matrix_B"], "matrix_B") if d.get("matrix_B") is not None else None
            sketch_B = normalize_sketch(d.get("sketch_B"), seed + 1, "sketch_B")
        elif d.get("matrix_B") is not None or d.get("sketch_B") is not None:
            raise ConfigError("matrix_B and sketch_B are only valid for the sylvester task")
        return cls(
            task=task,
            matrix=normalize_matrix(d["matrix"]),
            sketch=normalize_sketch(d.get("sketch"), seed),
            params=_normalize_params(task, d.get("params")),
            seed=seed,
            output=out,
            matrix_B=matrix_B,
            sketch_B=sketch_B,
            version=version,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = {
            "version": self.version,
            "task": self.task,
            "seed": self.seed,
            "matrix": copy.deepcopy(self.matrix),
            "sketch": dict(self.sketch),
            "params": copy.deepcopy(self.params),
            "output": self.output,
        }
        if self.task == "sylvester":
            d["matrix_B"] = copy.deepcopy(self.matrix_B)
            d["sketch_B"] = dict(self.sketch_B)
        return d


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    return text


def parse_sketch_flag(text: str) -> dict:
    """``kind:l:s`` with ``l`` an integer or ``auto`` and ``s`` optional."""
    parts = text.split(":")
    if not 1 <= len(parts) <= 3 or not parts[0]:
        raise ConfigError(f"--sketch expects kind:l:s, got {text!r}")
    d: dict = {"kind": parts[0]}
    if len(parts) > 1 and parts[1]:
        d["l"] = "auto" if parts[1] == "auto" else _scalar(parts[1])
    if len(parts) > 2 and parts[2]:
        d["s"] = _scalar(parts[2])
    return d


def parse_matrix_flag(text: str) -> dict:
    """``mm:<path>`` or ``gen:<name>[:key=value,...]``."""
    head, _, rest = text.partition(":")
    if head == "mm" and rest:
        return {"source": "mm", "path": rest}
    if head == "gen" and rest:
        name, _, args = rest.partition(":")
        params = {}
        for item in filter(None, args.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"generator argument {item!r} is not key=value")
            params[key] = _scalar(val)
        return {"source": "gen", "generator": name, "params": params}
    raise ConfigError(f"--matrix expects mm:<path> or gen:<name>[:key=value,...], got {text!r}")
