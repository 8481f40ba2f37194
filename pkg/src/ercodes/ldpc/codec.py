"""Systematic encoding and LLR-domain sum-product decoding."""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

from ..channel import LLR_CLIP
from .matrix import ParityCheckMatrix

log = logging.getLogger(__name__)

# keeps atanh finite; 1 - 2**-52 maps to |LLR| ~ 36.7
_TANH_LIMIT = 1.0 - 2.0**-52


class SystematicEncoder:
    """Encoder built once from the reduced echelon form of H.

    Non-pivot columns carry the information bits; each pivot (parity) bit is the GF(2)
    sum of the information bits selected by its echelon row.
    """

    def __init__(self, pcm: ParityCheckMatrix):
        ech = pcm.echelon
        self.n = pcm.n_v
        self.parity_positions = ech.pivots
        mask = np.ones(self.n, dtype=bool)
        mask[ech.pivots] = False
        self.info_positions = np.flatnonzero(mask)
        if ech.rank < pcm.m_c:
            log.info("H has rank %d < %d checks; code dimension is %d", ech.rank, pcm.m_c, self.k)
        # float32 matmul is exact here: sums stay far below 2**24
        self._parity_map = ech.rows[:, self.info_positions].T.astype(np.float32)

    @property
    def k(self) -> int:
        return len(self.info_positions)

    def encode(self, info_bits) -> np.ndarray:
        u = np.asarray(info_bits, dtype=np.uint8)
        if u.shape[-1] != self.k:
            raise ValueError(f"expected {self.k} information bits, got {u.shape[-1]}")
        out = np.empty(u.shape[:-1] + (self.n,), dtype=np.uint8)
        out[..., self.info_positions] = u
        parity = (u.astype(np.float32) @ self._parity_map).astype(np.int64) & 1
        out[..., self.parity_positions] = parity
        return out

    def extract(self, codeword_or_llrs) -> np.ndarray:
        return np.asarray(codeword_or_llrs)[..., self.info_positions]


@functools.lru_cache(maxsize=16)
def encoder_for(pcm: ParityCheckMatrix) -> SystematicEncoder:
    return SystematicEncoder(pcm)


def ldpc_encode(pcm: ParityCheckMatrix, info_bits) -> np.ndarray:
    return encoder_for(pcm).encode(info_bits)


class TannerGraph:
    """Padded check-major and variable-major edge layouts for vectorized BP."""

    def __init__(self, pcm: ParityCheckMatrix):
        H = pcm.H
        self.m, self.n = H.shape
        deg = np.diff(H.indptr)
        self.dmax = int(deg.max()) if self.m else 0
        slot = np.arange(self.dmax)
        self.valid = slot[None, :] < deg[:, None]           # (m, dmax)
        self.slot_var = np.zeros((self.m, self.dmax), dtype=np.int64)
        self.slot_var[self.valid] = H.indices
        # variable-major view: flat slot ids per variable, padded with a dummy slot
        flat_var = self.slot_var.ravel()
        flat_ok = self.valid.ravel()
        n_slots = self.m * self.dmax
        order = np.argsort(np.where(flat_ok, flat_var, self.n), kind="stable")
        order = order[: flat_ok.sum()]
        vdeg = np.bincount(flat_var[order], minlength=self.n)
        self.vmax = int(vdeg.max()) if self.n else 0
        self.var_slots = np.full((self.n, self.vmax), n_slots, dtype=np.int64)
        starts = np.concatenate(([0], np.cumsum(vdeg)[:-1]))
        within = np.arange(order.size) - np.repeat(starts, vdeg)
        self.var_slots[flat_var[order], within] = order


@functools.lru_cache(maxsize=16)
def tanner_graph(pcm: ParityCheckMatrix) -> TannerGraph:
    return TannerGraph(pcm)


@dataclass
class DecodeResult:
    llrs: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def _excl_product(t: np.ndarray) -> np.ndarray:
    """Product over each row's other entries, without division."""
    pre = np.ones_like(t)
    suf = np.ones_like(t)
    np.cumprod(t[..., :-1], axis=-1, out=pre[..., 1:])
    np.cumprod(t[..., :0:-1], axis=-1, out=suf[..., -2::-1])
    return pre * suf


def _check_update(v2c: np.ndarray, valid: np.ndarray) -> np.ndarray:
    t = np.tanh(0.5 * np.clip(v2c, -LLR_CLIP, LLR_CLIP))
    t = np.where(valid, t, 1.0)
    ext = np.clip(_excl_product(t), -_TANH_LIMIT, _TANH_LIMIT)
    return np.where(valid, 2.0 * np.arctanh(ext), 0.0)


def sum_product_decode(llrs_in, pcm: ParityCheckMatrix, max_iters: int = 20) -> DecodeResult:
    """Flooding belief propagation with the exact tanh rule.

    Accepts ``(n_v,)`` or a ``(B, n_v)`` batch. Each frame stops as soon as its hard
    decision satisfies every check; its output is then frozen, so a frame decodes
    identically whatever else is in the batch. Returned LLRs are posteriors (channel
    plus all incoming check messages).
    """
    llrs_in = np.asarray(llrs_in, dtype=float)
    single = llrs_in.ndim == 1
    chan = np.atleast_2d(llrs_in)
    g = tanner_graph(pcm)
    if chan.shape[1] != g.n:
        raise ValueError(f"expected {g.n} LLRs, got {chan.shape[1]}")
    B = chan.shape[0]
    out = chan.copy()
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)
    active = np.arange(B)
    c2v = np.zeros((B, g.m, g.dmax))
    total = chan.copy()

    for _ in range(max_iters):
        if active.size == 0:
            break
        tot = total[active]
        v2c = tot[:, g.slot_var] - c2v[active]
        msg = _check_update(v2c, g.valid)
        c2v[active] = msg
        flat = np.concatenate([msg.reshape(len(active), -1), np.zeros((len(active), 1))], axis=1)
        tot = chan[active] + flat[:, g.var_slots].sum(axis=-1)
        total[active] = tot
        iters[active] += 1
        hard = (tot[:, g.slot_var] < 0) & g.valid
        ok = ~np.any(hard.sum(axis=-1) % 2 == 1, axis=-1)
        out[active] = tot
        converged[active[ok]] = True
        active = active[~ok]

    if single:
        return DecodeResult(out[0], converged[0], iters[0])
    return DecodeResult(out, converged, iters)
