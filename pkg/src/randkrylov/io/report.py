"""Report schema validation and serialization."""
from __future__ import annotations

import csv
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

SCHEMA_VERSION = "1.0"

# keys whose values vary between identical runs
VOLATILE_KEYS = ("timing",)


@lru_cache(maxsize=1)
def report_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("report_schema.json").read_text())


def validate_report(report: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if the report does not match the schema.

    Metric arrays are also checked for equal lengths where a shared ``m``
    axis is present.
    """
    jsonschema.validate(report, report_schema())
    metrics = report["metrics"]
    if "m" in metrics:
        n = len(metrics["m"])
        bad = [k for k, v in metrics.items() if len(v) != n]
        if bad:
            raise jsonschema.ValidationError(f"metric arrays {bad} do not match the m axis length {n}")
    elif report["task"] == "qr_bench":
        lens = {len(v) for v in metrics.values()}
        if len(lens) != 1:
            raise jsonschema.ValidationError("qr_bench metric arrays have different lengths")


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps(report))


def stable_part(report: dict) -> dict:
    """The report without wall-time fields, for determinism comparisons."""
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}


def write_csv(report: dict, path) -> None:
    """Write metric arrays as columns; shorter arrays are padded with blanks."""
    metrics = report["metrics"]
    names = sorted(metrics)
    rows = max((len(v) for v in metrics.values()), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + names)
        for i in range(rows):
            w.writerow([i + 1] + [("" if i >= len(metrics[k]) or metrics[k][i] is None else repr(metrics[k][i])) for k in names])
