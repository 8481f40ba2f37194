"""Two-code power-domain superposition and the iterative soft-SIC receiver."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LLR_CLIP, bpsk_demap, hard_decision
from .ldpc import ParityCheckMatrix, SystematicEncoder, encoder_for, sum_product_decode


@dataclass(frozen=True)
class ComponentCode:
    """One superposition layer: an LDPC code carrying ``k`` bits behind interleaver ``pi``.

    ``pcm=None`` is only valid with ``k == 0``; the layer then sends the all-zero word.
    If the code dimension exceeds ``k`` the spare information positions are fixed to 0.
    """
    k: int
    pcm: ParityCheckMatrix | None
    interleaver_seed: int
    n: int

    def __post_init__(self):
        if self.pcm is None:
            if self.k:
                raise ValueError("a layer with information bits needs a code")
            return
        if self.pcm.n_v != self.n:
            raise ValueError(f"code length {self.pcm.n_v} != n={self.n}")
        if self.encoder.k < self.k:
            raise ValueError(f"code dimension {self.encoder.k} < {self.k} information bits")

    @property
    def encoder(self) -> SystematicEncoder:
        return encoder_for(self.pcm)

    @property
    def perm(self) -> np.ndarray:
        """Channel position ``i`` carries code bit ``perm[i]``."""
        return _permutation(self.interleaver_seed, self.n)

    def interleave(self, x: np.ndarray) -> np.ndarray:
        return x[..., self.perm]

    def deinterleave(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        out[..., self.perm] = x
        return out

    def encode(self, bits: np.ndarray) -> np.ndarray:
        """Codeword in code order."""
        lead = bits.shape[:-1]
        if self.pcm is None:
            return np.zeros(lead + (self.n,), dtype=np.uint8)
        enc = self.encoder
        u = np.zeros(lead + (enc.k,), dtype=np.uint8)
        u[..., : self.k] = bits
        return enc.encode(u)

    def message(self, llrs_code_order: np.ndarray) -> np.ndarray:
        if self.pcm is None:
            return np.zeros(llrs_code_order.shape[:-1] + (0,), dtype=np.uint8)
        return hard_decision(self.encoder.extract(llrs_code_order)[..., : self.k])


_PERM_CACHE: dict = {}


def _permutation(seed: int, n: int) -> np.ndarray:
    key = (seed, n)
    if key not in _PERM_CACHE:
        _PERM_CACHE[key] = np.random.default_rng(seed).permutation(n)
    return _PERM_CACHE[key]


@dataclass(frozen=True)
class SuperpositionConfig:
    codes: tuple[ComponentCode, ComponentCode]
    P1: float
    P2: float
    outer_iters: int = 20
    inner_iters: int = 20
    immediate_commit: bool = False  # Gauss-Seidel update instead of committing after both decodes

    def __post_init__(self):
        if self.P1 < 0 or self.P2 < 0 or self.P1 + self.P2 <= 0:
            raise ValueError("layer powers must be non-negative with a positive sum")
        if self.codes[0].n != self.codes[1].n:
            raise ValueError("both layers need the same block length")

    @classmethod
    def from_split(cls, pcm1, pcm2, k1: int, k2: int, P: float, alpha: float,
                   seeds=(1, 2), **kw) -> "SuperpositionConfig":
        """Layer 1 gets ``alpha * P``, layer 2 the rest."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("power fraction must lie in [0, 1]")
        n = (pcm1 or pcm2).n_v
        codes = (ComponentCode(k1, pcm1, seeds[0], n), ComponentCode(k2, pcm2, seeds[1], n))
        return cls(codes, alpha * P, (1.0 - alpha) * P, **kw)

    def with_power(self, P: float) -> "SuperpositionConfig":
        scale = P / self.P
        return SuperpositionConfig(self.codes, self.P1 * scale, self.P2 * scale,
                                   self.outer_iters, self.inner_iters, self.immediate_commit)

    @property
    def n(self) -> int:
        return self.codes[0].n

    @property
    def k1(self) -> int:
        return self.codes[0].k

    @property
    def k2(self) -> int:
        return self.codes[1].k

    @property
    def k(self) -> int:
        return self.k1 + self.k2

    @property
    def P(self) -> float:
        return self.P1 + self.P2

    @property
    def powers(self) -> tuple[float, float]:
        return self.P1, self.P2


def split_message(m, cfg: SuperpositionConfig) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(m, dtype=np.uint8)
    if m.shape[-1] != cfg.k:
        raise ValueError(f"expected {cfg.k} bits, got {m.shape[-1]}")
    return m[..., : cfg.k1], m[..., cfg.k1:]


def merge_message(m1, m2) -> np.ndarray:
    return np.concatenate([np.asarray(m1, dtype=np.uint8), np.asarray(m2, dtype=np.uint8)], axis=-1)


def layer_symbols(m, cfg: SuperpositionConfig) -> list[np.ndarray]:
    """Interleaved +-1 sequences of both layers, before power scaling."""
    parts = split_message(m, cfg)
    return [1.0 - 2.0 * code.interleave(code.encode(part)) for code, part in zip(cfg.codes, parts)]


def superpose_encode(m, cfg: SuperpositionConfig) -> np.ndarray:
    s1, s2 = layer_symbols(m, cfg)
    return np.sqrt(cfg.P1) * s1 + np.sqrt(cfg.P2) * s2


def interference_estimate(gamma: np.ndarray, power: float) -> tuple[np.ndarray, np.ndarray]:
    """Soft interference ``sqrt(P) tanh(gamma/2)`` and its residual power.

    The residual power is averaged over channel uses, one scalar per frame.
    """
    th = np.tanh(0.5 * np.clip(gamma, -LLR_CLIP, LLR_CLIP))
    rho = np.sqrt(power) * th
    resid = power * _row_mean(1.0 - th * th)
    return rho, resid


def _row_mean(x: np.ndarray) -> np.ndarray:
    """Mean over the last axis, one row at a time.

    A single reduction over a ``(B, n)`` array may sum in a different order than over
    one row; going row by row keeps a frame's result independent of its batch.
    """
    if x.ndim == 1:
        return x.mean()
    flat = x.reshape(-1, x.shape[-1])
    return np.array([row.mean() for row in flat]).reshape(x.shape[:-1])


def sic_input_llrs(y, rho, interference_power, power: float, noise_variance: float) -> np.ndarray:
    """``2 (y - rho) SINR / sqrt(P)`` with ``SINR = P / (noise + interference)``."""
    var = noise_variance + np.asarray(interference_power, dtype=float)
    return bpsk_demap(np.asarray(y) - rho, power, var[..., None] if var.ndim else var)


@dataclass
class SicState:
    gamma: list  # posterior LLRs per layer, channel order
    interference_power: list  # last interference power estimate per layer, (B,) each
    outer_iterations: int = 0
    history: list = field(default_factory=list, repr=False)


def soft_sic_decode(y, cfg: SuperpositionConfig, noise_variance: float = 1.0):
    """Iterative soft interference cancellation over the two layers.

    Returns ``(m1_hat, m2_hat, state, converged)`` where ``converged`` holds the
    per-layer flags of the final LDPC decodes. Works on one frame or a ``(B, n)`` batch.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[1] != cfg.n:
        raise ValueError(f"expected {cfg.n} samples, got {y.shape[1]}")
    B = y.shape[0]
    powers = cfg.powers
    gamma = []
    for code in cfg.codes:
        # a layer without information bits is the known all-zero word
        val = LLR_CLIP if code.pcm is None else 0.0
        gamma.append(np.full((B, cfg.n), val))
    interference = [np.zeros(B), np.zeros(B)]
    converged = [np.zeros(B, dtype=bool), np.zeros(B, dtype=bool)]
    history = []

    for _ in range(cfg.outer_iters):
        updated = list(gamma)
        record = {}
        for ell, code in enumerate(cfg.codes):
            j = 1 - ell
            source = updated if cfg.immediate_commit else gamma
            rho, p_int = interference_estimate(source[j], powers[j])
            interference[ell] = p_int
            if code.pcm is None:
                converged[ell][:] = True
                continue
            if powers[ell] == 0:
                updated[ell] = np.zeros((B, cfg.n))
                continue
            llr_in = sic_input_llrs(y, rho, p_int, powers[ell], noise_variance)
            res = sum_product_decode(code.deinterleave(llr_in), code.pcm, cfg.inner_iters)
            converged[ell] = res.converged
            updated[ell] = code.interleave(res.llrs)
            record[f"interference_{ell + 1}"] = p_int.copy()
        gamma = updated
        for ell in range(2):
            record[f"mean_abs_gamma_{ell + 1}"] = _row_mean(np.abs(gamma[ell]))
        history.append(record)

    msgs = [code.message(code.deinterleave(g)) for code, g in zip(cfg.codes, gamma)]
    state = SicState(gamma, interference, cfg.outer_iters, history)
    if single:
        state = SicState([g[0] for g in gamma], [float(p[0]) for p in interference],
                         cfg.outer_iters, history)
        return msgs[0][0], msgs[1][0], state, (bool(converged[0][0]), bool(converged[1][0]))
    return msgs[0], msgs[1], state, (converged[0], converged[1])
