"""Byte-stable JSON and CSV emission of experiment reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, is_dataclass

import numpy as np

from .weaktype import ExperimentReport, SanityReport, format_trend_table

__all__ = ["dumps", "report_document", "report_csv", "emit_report"]

LEDGER_KEYS = ("k", "lhs_k", "layer_bound", "C_k", "n_cubes", "n_layers", "layer_sum",
               "bottom_sum", "split_sum", "psi_inv", "layer_ok", "split_ok", "cover_ok",
               "bottom_avg_ok", "bottom_avg_margin")


def _num(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with keys in insertion order and reals at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if is_dataclass(obj):
        return dumps(asdict(obj), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _ledger(entry) -> dict:
    d = asdict(entry)
    d["C_k"] = d.pop("c_k")
    return {k: d[k] for k in LEDGER_KEYS}


def report_document(report) -> dict:
    if isinstance(report, SanityReport):
        return {
            "config": report.config,
            "fefferman_stein": {"max_ratio": report.fs_max, "ratios": report.fs_ratios},
            "monotonicity": {"checked": report.monotone_checked,
                             "violations": report.monotone_violations},
            "adversarial_trend": report.trend,
        }
    per_trial = []
    for t in report.trials:
        per_trial.append({
            "trial": t.trial, "seed": t.seed, "lhs": t.lhs, "rhs": t.rhs, "ratio": t.ratio,
            "band_lhs": t.band_lhs, "n_cubes": t.n_cubes,
            "band_consistent": t.band_consistent,
            "lemma_w_eps": t.lemma_w_eps, "lemma_assembled": t.lemma_assembled,
            "lemma_assembly_ok": t.lemma_assembly_ok,
            "lemma_ledger": [_ledger(e) for e in t.lemma_ledger],
        })
    return {"config": report.config, "per_trial": per_trial, "aggregate": report.aggregate}


def report_csv(report) -> str:
    if isinstance(report, SanityReport):
        return format_trend_table(report.trend)
    lines = ["trial,seed,lhs,rhs,ratio"]
    for t in report.trials:
        lines.append(f"{t.trial},{t.seed},{_num(t.lhs)},{_num(t.rhs)},{_num(t.ratio)}")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport | SanityReport, fmt: str, path) -> None:
    """Write ``report`` as ``json`` or ``csv`` to ``path``."""
    if fmt == "json":
        text = dumps(report_document(report)) + "\n"
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
