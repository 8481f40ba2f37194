"""Command-line entry point: ``ercodes {sweep,power-split,fit-threshold,report}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .channel import SnrConvention, snr_convert
from .harness.config import (SCHEMES, TARGET_BER, ExperimentConfig, list_presets,
                             load_config, parse_grid, preset_path)
from .harness.montecarlo import run_sweep, sweep_power_split
from .harness.report import COLUMNS, emit_report, estimates_from_report, load_report
from .harness.threshold import fit_estimates, fit_threshold, threshold_ci

# preset used when only --scheme is given
DEFAULT_PRESETS = {
    "uncoded_bpsk": "uncoded_bpsk",
    "bpsk_ldpc": "table3_bpsk_ldpc_desk",
    "pam4_ldpc": "table3_pam4_ldpc_desk",
    "superposition_2ldpc": "table3_2xldpc_regular_desk",
    "sparc": "table3_sparc_m256_desk",
}


def parse_snr_grid(text: str, n: int, k: int) -> list[float]:
    """``"2,4,6"`` (powers P) or ``"EbN0_dB:3.0,3.5"`` or ``"EbN0_dB:3.0:4.0:0.25"``."""
    if ":" not in text:
        return [float(v) for v in text.split(",")]
    conv, rest = text.split(":", 1)
    parts = rest.split(":")
    if len(parts) == 3:
        spec = {"convention": conv, "start": parts[0], "stop": parts[1], "step": parts[2]}
    else:
        spec = {"convention": conv, "values": rest.split(",")}
    return parse_grid(spec, n, k)


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_config(preset_path(args.preset))
    elif args.scheme:
        cfg = load_config(preset_path(DEFAULT_PRESETS[args.scheme]))
    else:
        raise SystemExit("one of --config, --preset or --scheme is required")
    if args.scheme and args.scheme != cfg.scheme:
        raise SystemExit(f"--scheme {args.scheme} does not match the configured scheme {cfg.scheme}")
    if args.snr_grid:
        cfg = cfg.with_grid(parse_snr_grid(args.snr_grid, cfg.n, cfg.k))
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "master_seed": args.seed})
    if args.max_trials is not None:
        rule = cfg.stopping
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "stopping": {
            "min_bit_errors": rule.min_bit_errors, "min_frame_errors": rule.min_frame_errors,
            "max_trials": args.max_trials}})
    return cfg


def _default_out(args, stem: str) -> Path:
    return Path(args.out) if args.out else Path(f"{stem}.{args.format}")


def _progress(est):
    lo, hi = est.ber_ci
    print(f"{est.scheme:>20} P={est.P:<8.4g} EbN0={est.EbN0_dB:6.3f} dB  frames={est.frames_counted:<6d} "
          f"ber={est.ber:.3e} [{lo:.2e}, {hi:.2e}]  fer={est.fer:.3f}", file=sys.stderr, flush=True)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    results = run_sweep(cfg, workers=args.workers, progress=_progress)
    thresholds = None
    if len(results) >= args.degree + 2:
        fit = fit_estimates(results, args.target, args.degree)
        thresholds = {cfg.scheme: fit.to_dict()}
    out = emit_report(results, args.format, _default_out(args, f"sweep_{cfg.scheme}"), cfg, thresholds)
    print(out)
    return 0


def cmd_power_split(args) -> int:
    cfg = _config(args)
    k1_list = ([int(v) for v in args.k1_list.split(",")] if args.k1_list
               else cfg.params.get("k1_list", [cfg.params["k1"]]))
    alphas = ([float(v) for v in args.alpha_grid.split(",")] if args.alpha_grid
              else cfg.params.get("alpha_grid", [cfg.params["alpha"]]))

    def progress(sp):
        print(f"k1={sp.k1:<5d} alpha={sp.alpha:.3f}", end=" ", file=sys.stderr)
        _progress(sp.estimate)

    surface = sweep_power_split(cfg, k1_list, alphas, workers=args.workers, progress=progress)
    out = emit_report(surface, args.format, _default_out(args, "power_split"), cfg)
    print(out)
    return 0


def _fit_groups(doc: dict) -> dict:
    groups: dict = {}
    for row in doc["rows"]:
        groups.setdefault(row["scheme"], []).append((row["P"], row["bit_errors"], row["bits"]))
    return groups


def cmd_fit_threshold(args) -> int:
    doc = load_report(args.input)
    fits = {}
    for scheme, pts in _fit_groups(doc).items():
        fit = fit_threshold(pts, args.target, args.degree)
        d = fit.to_dict()
        cfg = doc.get("config")
        if cfg is not None and fit.P is not None:
            d["EbN0_dB"] = snr_convert(fit.P, cfg.n, cfg.k, SnrConvention.EBN0_DB)
            d["EsN0_dB"] = snr_convert(fit.P, cfg.n, cfg.k, SnrConvention.ESN0_DB)
        if args.bootstrap and cfg is not None and fit.P is not None:
            lo, hi = threshold_ci(estimates_from_report(doc), args.target, args.degree,
                                  n_boot=args.bootstrap, seed=args.seed or 0)
            d["snr_db_ci"] = [lo, hi]
        fits[scheme] = d
    text = json.dumps(fits, indent=1)
    if args.out:
        Path(args.out).write_text(text)
        print(args.out)
    else:
        print(text)
    return 0


def cmd_report(args) -> int:
    if args.list_presets:
        print("\n".join(list_presets()))
        return 0
    if not args.input:
        raise SystemExit("report needs --input (or --list-presets)")
    doc = load_report(args.input)
    cfg = doc.get("config")
    if cfg is not None and doc.get("config_hash") and cfg.config_hash() != doc["config_hash"]:
        raise SystemExit("config hash mismatch: the report's configuration was modified")
    if args.out:
        if args.format == "csv":
            cols = doc.get("columns") or list(COLUMNS)
            with open(args.out, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
                w.writeheader()
                w.writerows(doc["rows"])
        else:
            payload = {k: v for k, v in doc.items() if k != "config"}
            payload["config"] = cfg.to_dict() if cfg is not None else None
            Path(args.out).write_text(json.dumps(payload, indent=1))
        print(args.out)
        return 0
    cols = ("scheme", "P", "EbN0_dB", "trials", "bit_errors", "ber", "ber_ci_lo", "ber_ci_hi", "fer")
    print("  ".join(f"{c:>11}" for c in cols))
    for row in doc["rows"]:
        print("  ".join(f"{row[c]:>11.4g}" if isinstance(row[c], float) else f"{row[c]!s:>11}"
                        for c in cols))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ercodes", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML experiment file")
        sp.add_argument("--preset", help="name of a bundled preset (see `report --list-presets`)")
        sp.add_argument("--scheme", choices=SCHEMES)
        sp.add_argument("--snr-grid", help='"2,4,6" powers, or "EbN0_dB:3,3.5" / "EbN0_dB:3:4:0.25"')
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--out", help="output file")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--max-trials", type=int)
        sp.add_argument("--degree", type=int, default=3)
        sp.add_argument("--target", type=float, default=TARGET_BER)

    s = sub.add_parser("sweep", help="BER/FER over the SNR grid")
    common(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("power-split", help="BER surface over rate split k1 and power fraction")
    common(s)
    s.add_argument("--k1-list", help="comma-separated k1 values")
    s.add_argument("--alpha-grid", help="comma-separated P1/P values")
    s.set_defaults(func=cmd_power_split)

    s = sub.add_parser("fit-threshold", help="fit SNR* at the target BER from a report")
    s.add_argument("--input", required=True)
    s.add_argument("--target", type=float, default=TARGET_BER)
    s.add_argument("--degree", type=int, default=3)
    s.add_argument("--bootstrap", type=int, default=0, help="frame-level bootstrap resamples")
    s.add_argument("--seed", type=int)
    s.add_argument("--format", choices=("json",), default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit_threshold)

    s = sub.add_parser("report", help="print or convert an existing report")
    s.add_argument("--input")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out")
    s.add_argument("--list-presets", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
