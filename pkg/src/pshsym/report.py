"""Report and table emitters: JSON (schema 1, sorted keys) and CSV."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np
import scipy

from . import __version__

SCHEMA = 1


def clean(obj):
    """Plain JSON types; NaN and infinities become ``None``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return clean(obj.to_dict())
    return repr(obj)


def versions() -> dict:
    return {"pshsym": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def make_report(kind: str, config: dict, body: dict) -> dict:
    rep = {"schema": SCHEMA, "kind": kind, "config": config, "versions": versions()}
    rep.update(body)
    return clean(rep)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(report: dict, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))


def write_csv(path: str, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def inequality_rows(results):
    for r in results:
        yield (r.name, r.extra.get("l", ""), r.extra.get("n", ""), r.lhs, r.rhs, r.margin, r.passed)


INEQUALITY_HEADER = ("name", "l", "n", "lhs", "rhs", "margin", "pass")
