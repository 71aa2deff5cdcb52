"""CSV / JSON output for comparison runs."""
from __future__ import annotations

import csv
import json
import math
import os

RESULTS_HEADER = ["lambda", "N", "N_err_domain", "N_err_mesh", "weyl_main", "weyl_lo", "weyl_hi", "ratio"]
EXIT_OK = 0
EXIT_FAILURE = 2


def fmt(v) -> str:
    """12 significant digits for floats, plain integers, empty for missing."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.12g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def emit_report(results, out_dir, config: dict | None = None) -> int:
    """Write ``results.csv`` and ``summary.json``; return the process exit code.

    Each result is a mapping with the CSV columns (missing values allowed) and
    optionally ``error``.  Any row with an error gives exit code 2.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    os.makedirs(out_dir, exist_ok=True)
    results = sorted(results, key=lambda r: r["lambda"])
    with open(os.path.join(out_dir, "results.csv"), "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            w.writerow([fmt(r.get(k)) for k in RESULTS_HEADER])
    failed = [r for r in results if r.get("error")]
    summary = {"config": config or {}, "results": results, "failures": len(failed),
               "ok": not failed}
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return EXIT_FAILURE if failed else EXIT_OK
