"""Per-scheme transmit/receive chains used by the Monte Carlo engine.

Every scheme draws, for each trial, the message bits first and then the channel noise
from that trial's own generator, and decodes the whole batch at once.
"""
from __future__ import annotations

import functools
import json
import numpy as np

from ..channel import (bpsk_demap, bpsk_modulate, hard_decision, pam4_demap, pam4_modulate)
from ..ldpc import (ParityCheckMatrix, Protograph, build_regular_ldpc, encoder_for, lift_protograph,
                    read_alist, read_protograph, sum_product_decode)
from ..sparc import DesignMatrix, SparcParams, amp_decode, sparc_encode, sparc_hard_decision
from ..superpose import SuperpositionConfig, merge_message, soft_sic_decode, superpose_encode
from .config import ExperimentConfig

# stands in for a zero noise variance inside demappers (noiseless test hook)
_NOISE_FLOOR = 1e-12


def build_code(spec: dict | None, n: int, k: int) -> ParityCheckMatrix:
    """Parity-check matrix from a config block: ``peg`` (default), ``alist`` or ``protograph``."""
    key = json.dumps(spec or {}, sort_keys=True)
    return _build_code(key, n, k)


@functools.lru_cache(maxsize=32)
def _build_code(key: str, n: int, k: int) -> ParityCheckMatrix:
    spec = json.loads(key)
    kind = spec.get("type", "peg")
    if kind == "peg":
        pcm = build_regular_ldpc(n, k, int(spec.get("col_weight", 3)), int(spec.get("seed", 0)))
    elif kind == "alist":
        pcm = read_alist(spec["path"])
    elif kind == "protograph":
        proto = read_protograph(spec["path"])
        if "f" in spec:  # re-lift the same base graph at another block length
            proto = Protograph(proto.base, int(spec["f"]))
        pcm = lift_protograph(proto, int(spec.get("seed", 0)))
    else:
        raise ValueError(f"unknown code type {kind!r}")
    if pcm.n_v != n:
        raise ValueError(f"code length {pcm.n_v} does not match n={n}")
    if pcm.dimension < k:
        raise ValueError(f"code dimension {pcm.dimension} < k={k}")
    return pcm


def _draw(rngs, k: int, n: int):
    bits = np.empty((len(rngs), k), dtype=np.uint8)
    noise = np.empty((len(rngs), n))
    for i, rng in enumerate(rngs):
        bits[i] = rng.integers(0, 2, k, dtype=np.uint8)
        noise[i] = rng.standard_normal(n)
    return bits, noise


def _counts(decoded, sent, **extra) -> dict:
    errs = np.count_nonzero(decoded != sent, axis=-1)
    return {"bit_errors": errs, "frame_errors": errs > 0, **extra}


class Scheme:
    name = ""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.n, self.k = cfg.n, cfg.k
        self.sigma2 = cfg.noise_variance

    @property
    def demap_variance(self) -> float:
        return max(self.sigma2, _NOISE_FLOOR)

    def channel(self, c, noise):
        return c + np.sqrt(self.sigma2) * noise

    def simulate(self, P: float, rngs) -> dict:
        raise NotImplementedError


class UncodedBpsk(Scheme):
    name = "uncoded_bpsk"

    def simulate(self, P, rngs):
        bits, noise = _draw(rngs, self.k, self.n)
        y = self.channel(bpsk_modulate(bits, P), noise)
        return _counts(hard_decision(y), bits)


class BpskLdpc(Scheme):
    name = "bpsk_ldpc"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.pcm = build_code(cfg.params.get("code"), self.n, self.k)
        self.enc = encoder_for(self.pcm)
        self.max_iters = int(cfg.params.get("max_iters", 50))

    def simulate(self, P, rngs):
        bits, noise = _draw(rngs, self.k, self.n)
        u = np.zeros((len(rngs), self.enc.k), dtype=np.uint8)
        u[:, : self.k] = bits
        y = self.channel(bpsk_modulate(self.enc.encode(u), P), noise)
        llr = bpsk_demap(y, P, self.demap_variance)
        res = sum_product_decode(llr, self.pcm, self.max_iters)
        decoded = hard_decision(self.enc.extract(res.llrs))[:, : self.k]
        if self.cfg.fallback_on_failure:
            raw = hard_decision(self.enc.extract(llr))[:, : self.k]
            decoded = np.where(res.converged[:, None], decoded, raw)
        return _counts(decoded, bits, decoder_failures=~res.converged)


class Pam4Ldpc(Scheme):
    """One LDPC code of length ``2n`` over ``n`` PAM-4 symbols, bit-interleaved."""
    name = "pam4_ldpc"

    def __init__(self, cfg):
        super().__init__(cfg)
        p = cfg.params
        self.pcm = build_code(p.get("code"), 2 * self.n, self.k)
        self.enc = encoder_for(self.pcm)
        self.split = tuple(p.get("split", (0.2, 0.8)))
        self.mapping = p.get("mapping", "natural")
        self.max_iters = int(p.get("max_iters", 50))
        self.perm = np.random.default_rng(int(p.get("interleaver_seed", 7))).permutation(2 * self.n)

    def simulate(self, P, rngs):
        bits, noise = _draw(rngs, self.k, self.n)
        u = np.zeros((len(rngs), self.enc.k), dtype=np.uint8)
        u[:, : self.k] = bits
        coded = self.enc.encode(u)[:, self.perm]
        y = self.channel(pam4_modulate(coded, P, self.split, self.mapping), noise)
        llr_ch = pam4_demap(y, P, self.split, self.demap_variance, self.mapping)
        llr = np.empty_like(llr_ch)
        llr[:, self.perm] = llr_ch
        res = sum_product_decode(llr, self.pcm, self.max_iters)
        decoded = hard_decision(self.enc.extract(res.llrs))[:, : self.k]
        return _counts(decoded, bits, decoder_failures=~res.converged)


class Sparc(Scheme):
    name = "sparc"

    def __init__(self, cfg):
        super().__init__(cfg)
        p = cfg.params
        self.base = SparcParams.uniform(self.k, int(p["M"]), self.n, 1.0, int(p.get("design_seed", 0)))
        self.design = DesignMatrix(self.base.design(p.get("storage", "materialized")))
        self.T = int(p.get("T", 50))
        self.early_stop = bool(p.get("early_stop", False))

    def simulate(self, P, rngs):
        params = self.base.with_power(P)
        bits, noise = _draw(rngs, self.k, self.n)
        _, c = sparc_encode(bits, params, self.design)
        y = self.channel(c, noise)
        state = amp_decode(y, self.design, params, self.T, self.early_stop)
        return _counts(sparc_hard_decision(state, params), bits, amp_iterations=state.t)


class Superposition2Ldpc(Scheme):
    name = "superposition_2ldpc"

    def __init__(self, cfg):
        super().__init__(cfg)
        p = cfg.params
        self.k1 = int(p["k1"])
        self.k2 = self.k - self.k1
        self.alpha = float(p["alpha"])
        pcm1 = build_code(p.get("code1"), self.n, self.k1) if self.k1 else None
        pcm2 = build_code(p.get("code2"), self.n, self.k2) if self.k2 else None
        seeds = tuple(p.get("interleaver_seeds", (101, 202)))
        self.template = SuperpositionConfig.from_split(
            pcm1, pcm2, self.k1, self.k2, 1.0, self.alpha, seeds=seeds,
            outer_iters=int(p.get("outer_iters", 20)), inner_iters=int(p.get("inner_iters", 20)),
            immediate_commit=bool(p.get("immediate_commit", False)))

    def simulate(self, P, rngs):
        sc = self.template.with_power(P)
        bits, noise = _draw(rngs, self.k, self.n)
        y = self.channel(superpose_encode(bits, sc), noise)
        m1, m2, _, conv = soft_sic_decode(y, sc, self.demap_variance)
        e1 = np.count_nonzero(m1 != bits[:, : self.k1], axis=-1)
        e2 = np.count_nonzero(m2 != bits[:, self.k1:], axis=-1)
        return _counts(merge_message(m1, m2), bits, layer1_bit_errors=e1, layer2_bit_errors=e2,
                       layer1_frame_errors=e1 > 0, layer2_frame_errors=e2 > 0)


SCHEME_TYPES = {cls.name: cls for cls in (UncodedBpsk, BpskLdpc, Pam4Ldpc, Sparc, Superposition2Ldpc)}


def build_scheme(cfg: ExperimentConfig) -> Scheme:
    if cfg.fallback_on_failure and cfg.scheme != "bpsk_ldpc":
        raise ValueError("fallback_on_failure only applies to bpsk_ldpc")
    return SCHEME_TYPES[cfg.scheme](cfg)
