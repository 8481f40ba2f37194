"""Monte Carlo BER/FER estimation with reproducible per-trial random streams.

Trial ``t`` at power ``P`` always uses the generator seeded from
``(master_seed, bits of P, t)``, so any subset of trials can be run anywhere, in any
order, and merged with exact integer counters.
"""
from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from ..channel import SnrConvention, snr_convert
from .config import ExperimentConfig
from .schemes import Scheme, build_scheme

log = logging.getLogger(__name__)


def power_key(P: float) -> int:
    """The IEEE-754 bit pattern of ``P``: distinct powers never share random streams."""
    return struct.unpack("<Q", struct.pack("<d", float(P)))[0]


def trial_rng(master_seed: int, P: float, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), power_key(P), int(trial)]))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class BerFerEstimate:
    scheme: str
    P: float
    n: int
    k: int
    seed: int
    frame_bit_errors: np.ndarray                  # information-bit errors of each frame, trial order
    first_trial: int = 0
    extras: dict = field(default_factory=dict)    # integer diagnostics summed over frames

    def __post_init__(self):
        self.frame_bit_errors = np.asarray(self.frame_bit_errors, dtype=np.int64)
        if np.any(self.frame_bit_errors < 0):
            raise ValueError("error counts must be non-negative")

    @property
    def frames_counted(self) -> int:
        return int(self.frame_bit_errors.size)

    trials = frames_counted

    @property
    def bits_counted(self) -> int:
        return self.frames_counted * self.k

    @property
    def bit_errors(self) -> int:
        return int(self.frame_bit_errors.sum())

    @property
    def frame_errors(self) -> int:
        return int(np.count_nonzero(self.frame_bit_errors))

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_counted if self.bits_counted else float("nan")

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames_counted if self.frames_counted else float("nan")

    @property
    def ber_ci(self) -> tuple[float, float]:
        return wilson_interval(self.bit_errors, self.bits_counted)

    @property
    def fer_ci(self) -> tuple[float, float]:
        return wilson_interval(self.frame_errors, self.frames_counted)

    @property
    def EsN0_dB(self) -> float:
        return snr_convert(self.P, self.n, self.k, SnrConvention.ESN0_DB)

    @property
    def EbN0_dB(self) -> float:
        return snr_convert(self.P, self.n, self.k, SnrConvention.EBN0_DB)

    @property
    def seed_provenance(self) -> dict:
        return {"master_seed": self.seed, "power_key": power_key(self.P),
                "trials": [self.first_trial, self.first_trial + self.frames_counted]}

    def row(self) -> dict:
        lo, hi = self.ber_ci
        return {"scheme": self.scheme, "P": self.P, "EsN0_dB": self.EsN0_dB,
                "EbN0_dB": self.EbN0_dB, "trials": self.frames_counted,
                "bit_errors": self.bit_errors, "bits": self.bits_counted, "ber": self.ber,
                "ber_ci_lo": lo, "ber_ci_hi": hi, "frame_errors": self.frame_errors,
                "fer": self.fer, "seed": self.seed}


def merge(parts) -> BerFerEstimate:
    """Combine estimates of disjoint, contiguous trial ranges of one point.

    The result depends only on the set of parts, not on their order.
    """
    parts = sorted(parts, key=lambda e: e.first_trial)
    if not parts:
        raise ValueError("nothing to merge")
    head = parts[0]
    for a, b in zip(parts, parts[1:]):
        if (a.scheme, a.P, a.n, a.k, a.seed) != (b.scheme, b.P, b.n, b.k, b.seed):
            raise ValueError("can only merge estimates of the same point")
        if a.first_trial + a.frames_counted != b.first_trial:
            raise ValueError("trial ranges must be contiguous and disjoint")
    extras: dict = {}
    for p in parts:
        for key, v in p.extras.items():
            extras[key] = extras.get(key, 0) + v
    return replace(head, frame_bit_errors=np.concatenate([p.frame_bit_errors for p in parts]),
                   extras=extras)


def run_trials(cfg: ExperimentConfig, P: float, start: int, stop: int,
               scheme: Scheme | None = None) -> BerFerEstimate:
    """Run trials ``start .. stop-1`` at power ``P`` as one batch."""
    scheme = scheme or build_scheme(cfg)
    rngs = [trial_rng(cfg.master_seed, P, t) for t in range(start, stop)]
    out = scheme.simulate(P, rngs)
    extras = {key: int(np.sum(v)) for key, v in out.items() if key not in ("bit_errors", "frame_errors")}
    return BerFerEstimate(cfg.scheme, float(P), cfg.n, cfg.k, cfg.master_seed,
                          out["bit_errors"], start, extras)


def run_point(cfg: ExperimentConfig, P: float, workers: int = 1,
              scheme: Scheme | None = None) -> BerFerEstimate:
    """Run chunks of ``batch_size`` trials until the stopping rule fires.

    The rule is evaluated after each chunk in trial order, so the set of trials (and
    hence every count) is the same for any number of workers; parallel runs may
    simulate a few chunks past the stopping point, which are discarded.
    """
    scheme = scheme or build_scheme(cfg)
    rule, bs = cfg.stopping, cfg.batch_size
    parts: list[BerFerEstimate] = []
    bit_err = frame_err = frames = 0
    next_trial = 0
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while True:
            starts = []
            for _ in range(max(workers, 1)):
                if next_trial >= rule.max_trials:
                    break
                starts.append(next_trial)
                next_trial = min(next_trial + bs, rule.max_trials)
            if not starts:
                break
            bounds = [(s, min(s + bs, rule.max_trials)) for s in starts]
            if pool is None:
                results = [run_trials(cfg, P, a, b, scheme) for a, b in bounds]
            else:
                results = list(pool.map(lambda ab: run_trials(cfg, P, ab[0], ab[1], scheme), bounds))
            stop = False
            for res in results:
                parts.append(res)
                bit_err += res.bit_errors
                frame_err += res.frame_errors
                frames += res.frames_counted
                if rule.done(bit_err, frame_err, frames):
                    stop = True
                    break
            if stop:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    est = merge(parts)
    log.info("%s P=%.4g: %d/%d bit errors, %d/%d frames", cfg.scheme, P, est.bit_errors,
             est.bits_counted, est.frame_errors, est.frames_counted)
    return est


def run_sweep(cfg: ExperimentConfig, workers: int = 1, progress=None) -> list[BerFerEstimate]:
    scheme = build_scheme(cfg)
    out = []
    for P in cfg.snr_grid:
        out.append(run_point(cfg, P, workers, scheme))
        if progress is not None:
            progress(out[-1])
    return out


@dataclass
class SplitPoint:
    k1: int
    alpha: float
    estimate: BerFerEstimate

    def row(self) -> dict:
        extras = self.estimate.extras
        k2 = self.estimate.k - self.k1
        frames = self.estimate.frames_counted
        layer = {f"ber{i}": (extras.get(f"layer{i}_bit_errors", 0) / (kk * frames)
                             if kk and frames else float("nan"))
                 for i, kk in ((1, self.k1), (2, k2))}
        return {"k1": self.k1, "alpha": self.alpha, **self.estimate.row(), **layer}


def sweep_power_split(cfg: ExperimentConfig, k1_list, alpha_grid, P: float | None = None,
                      workers: int = 1, progress=None) -> list[SplitPoint]:
    """BER surface over rate split ``k1`` and power fraction ``alpha = P1/P`` at one power."""
    if cfg.scheme != "superposition_2ldpc":
        raise ValueError("power/rate split sweeps need the superposition_2ldpc scheme")
    alphas = [float(a) for a in alpha_grid]
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("power fractions must lie in [0, 1]")
    P = cfg.snr_grid[0] if P is None else float(P)
    out = []
    for k1 in k1_list:
        for a in alphas:
            sub = cfg.with_params(k1=int(k1), alpha=a).with_grid([P])
            out.append(SplitPoint(int(k1), a, run_point(sub, P, workers)))
            if progress is not None:
                progress(out[-1])
    return out
