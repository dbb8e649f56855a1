"""Deterministic result files: CSV tables, JSON summary and manifest.

Floats are written with 17 significant digits so a replay can be compared
byte for byte; missing values (no bid, no price) are empty fields. No
timestamps or host data are recorded.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .config import format_config
from .simulation import RunMetrics, ScenarioResult

SLOT_COLUMNS = ("slot", "user", "role", "trade", "bid", "price", "occupied", "empty",
                "loss", "wastage", "willingness", "arrival", "efficiency")
ROUND_COLUMNS = ("slot", "round", "price", "total_demand", "total_supply",
                 "social_welfare", "buyer_bids", "seller_bids")
COMPARE_COLUMNS = ("scheme", "loss_events", "loss_amount_gb", "wastage_events",
                   "wastage_amount_gb", "welfare_delta", "nonconverged", "markets_closed")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if value == 0.0:
            return "0"  # folds -0.0
        return format(value, ".17g")
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])


def write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def metrics_doc(m: RunMetrics) -> dict:
    return asdict(m)


def manifest_doc(config, command: str, extra=None) -> dict:
    doc = {"package": "prb-resale", "version": __version__, "command": command,
           "seed": config.seed, "config": format_config(config)}
    if extra:
        doc.update(extra)
    return doc


@dataclass
class OutputBundle:
    summary: Path
    slots: Path | None
    rounds: Path | None
    manifest: Path


def write_outputs(result: ScenarioResult, out_dir, command: str = "run") -> OutputBundle:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    slots = out / "slots.csv"
    rounds = out / "rounds.csv"
    write_csv(slots, SLOT_COLUMNS, (asdict(r) for r in result.slots))
    write_csv(rounds, ROUND_COLUMNS, (asdict(r) for r in result.rounds))
    summary = out / "summary.json"
    write_json(summary, {"metrics": metrics_doc(result.metrics),
                         "units": {"loss_amount": "bits", "wastage_amount": "bits",
                                   "welfare": "utility"}})
    manifest = out / "manifest.json"
    write_json(manifest, manifest_doc(result.config, command))
    return OutputBundle(summary, slots, rounds, manifest)


def comparison_rows(metrics_by_scheme: dict) -> list:
    """Seed-averaged totals per scheme, in the order given."""
    rows = []
    for scheme, runs in metrics_by_scheme.items():
        n = len(runs)
        mean = lambda attr: sum(getattr(m, attr) for m in runs) / n
        rows.append({
            "scheme": scheme,
            "loss_events": mean("loss_events"),
            "loss_amount_gb": mean("loss_amount") / 1e9,
            "wastage_events": mean("wastage_events"),
            "wastage_amount_gb": mean("wastage_amount") / 1e9,
            "welfare_delta": mean("welfare_delta"),
            "nonconverged": sum(m.nonconverged for m in runs),
            "markets_closed": sum(m.markets_closed for m in runs),
        })
    return rows


def write_comparison(metrics_by_scheme: dict, config, seeds, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = comparison_rows(metrics_by_scheme)
    write_csv(out / "comparison.csv", COMPARE_COLUMNS, rows)
    ranking = sorted((r for r in rows), key=lambda r: r["welfare_delta"], reverse=True)
    doc = {
        "seeds": list(seeds),
        "slots": config.slots,
        "table": rows,
        "welfare_ranking": [r["scheme"] for r in ranking],
        "runs": {s: [metrics_doc(m) for m in runs] for s, runs in metrics_by_scheme.items()},
    }
    write_json(out / "summary.json", doc)
    write_json(out / "manifest.json", manifest_doc(config, "compare", {"seeds": list(seeds)}))
    return doc
