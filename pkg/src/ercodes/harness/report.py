"""CSV/JSON result files and their re-ingestion."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .montecarlo import BerFerEstimate, SplitPoint

COLUMNS = ("scheme", "P", "EsN0_dB", "EbN0_dB", "trials", "bit_errors", "bits", "ber",
           "ber_ci_lo", "ber_ci_hi", "frame_errors", "fer", "seed")
SPLIT_COLUMNS = ("k1", "alpha") + COLUMNS + ("ber1", "ber2")
FIT_NOTE = "thresholds are fitted to raw bit-error counts (binomial likelihood)"


def _rows(results):
    return [r.row() for r in results]


def _columns(results):
    return SPLIT_COLUMNS if results and isinstance(results[0], SplitPoint) else COLUMNS


def _estimate(r) -> BerFerEstimate:
    return r.estimate if isinstance(r, SplitPoint) else r


def emit_report(results, fmt: str, path, config: ExperimentConfig | None = None,
                thresholds: dict | None = None) -> Path:
    """Write sweep (or power-split) results as ``csv`` or ``json``.

    JSON holds the same rows plus the full configuration, its hash and, per point,
    the seed provenance and the per-frame error counts needed for bootstrapping.
    """
    results = list(results)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_columns(results), extrasaction="ignore")
            writer.writeheader()
            writer.writerows(_rows(results))
    elif fmt == "json":
        doc = {
            "columns": list(_columns(results)),
            "rows": _rows(results),
            "config": config.to_dict() if config is not None else None,
            "config_hash": config.config_hash() if config is not None else None,
            "points": [{**_estimate(r).seed_provenance, "P": _estimate(r).P,
                        "extras": _estimate(r).extras,
                        "frame_bit_errors": _estimate(r).frame_bit_errors.tolist()}
                       for r in results],
            "notes": [FIT_NOTE],
        }
        if thresholds:
            doc["thresholds"] = thresholds
        path.write_text(json.dumps(doc, indent=1, default=_jsonable))
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or json")
    return path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def load_report(path) -> dict:
    """Read a report back: ``{"rows": [...], "config": ExperimentConfig|None, ...}``."""
    path = Path(path)
    if path.suffix == ".csv":
        with path.open(newline="") as fh:
            rows = [_typed(r) for r in csv.DictReader(fh)]
        return {"rows": rows, "config": None, "config_hash": None, "points": []}
    doc = json.loads(path.read_text())
    cfg = ExperimentConfig.from_dict(doc["config"]) if doc.get("config") else None
    return {**doc, "config": cfg}


def _typed(row: dict) -> dict:
    out = {}
    for key, v in row.items():
        if key == "scheme":
            out[key] = v
        elif key in ("trials", "bit_errors", "bits", "frame_errors", "seed", "k1"):
            out[key] = int(v)
        else:
            out[key] = float(v)
    return out


def estimates_from_report(doc: dict) -> list[BerFerEstimate]:
    """Rebuild estimates (with per-frame counts) from a loaded JSON report."""
    cfg = doc["config"]
    if cfg is None:
        raise ValueError("per-frame data needs a JSON report with its configuration")
    out = []
    for row, pt in zip(doc["rows"], doc["points"]):
        out.append(BerFerEstimate(row["scheme"], row["P"], cfg.n, cfg.k, row["seed"],
                                  np.array(pt["frame_bit_errors"]), pt["trials"][0],
                                  pt.get("extras", {})))
    return out
