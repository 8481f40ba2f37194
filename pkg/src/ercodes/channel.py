"""Real AWGN channel, SNR bookkeeping, BPSK / PAM-4 mapping and exact LLR demapping.

Conventions used across the package:

* noise is real, zero-mean, per-dimension variance ``noise_variance`` (1 by default);
* ``E_s/N_0 = P/2`` and ``E_b/N_0 = nP/(2k)`` with ``N_0 = 2 * noise_variance``;
* bit 0 maps to the positive symbol, and an LLR is ``log P[bit=0] / P[bit=1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erfc, erfcinv

# Magnitude at which LLRs are clipped before any tanh/atanh evaluation.
LLR_CLIP = 60.0


class SnrConvention(str, Enum):
    P_LINEAR = "P_linear"
    ESN0_DB = "EsN0_dB"
    EBN0_DB = "EbN0_dB"
    P_DB = "P_dB"


def _check_nk(n: int, k: int) -> None:
    if k < 1 or n < k:
        raise ValueError(f"need n >= k >= 1, got n={n}, k={k}")


def snr_convert(P: float, n: int, k: int, convention: SnrConvention | str) -> float:
    """Express transmit power ``P`` (unit noise variance) in the requested convention."""
    if P <= 0:
        raise ValueError(f"power must be positive, got {P}")
    _check_nk(n, k)
    convention = SnrConvention(convention)
    if convention is SnrConvention.P_LINEAR:
        return float(P)
    if convention is SnrConvention.P_DB:
        return float(10.0 * np.log10(P))
    if convention is SnrConvention.ESN0_DB:
        return float(10.0 * np.log10(P / 2.0))
    return float(10.0 * np.log10(n * P / (2.0 * k)))


def power_from_snr(value: float, n: int, k: int, convention: SnrConvention | str) -> float:
    """Inverse of :func:`snr_convert`: recover ``P`` from a value in ``convention``."""
    _check_nk(n, k)
    convention = SnrConvention(convention)
    if convention is SnrConvention.P_LINEAR:
        if value <= 0:
            raise ValueError(f"power must be positive, got {value}")
        return float(value)
    lin = 10.0 ** (value / 10.0)
    if convention is SnrConvention.P_DB:
        return float(lin)
    if convention is SnrConvention.ESN0_DB:
        return float(2.0 * lin)
    return float(2.0 * k * lin / n)


@dataclass(frozen=True)
class ChannelParams:
    power_P: float
    n: int
    k: int
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if self.power_P <= 0:
            raise ValueError("power_P must be > 0")
        _check_nk(self.n, self.k)

    @property
    def N0(self) -> float:
        return 2.0 * self.noise_variance

    @property
    def esn0_db(self) -> float:
        return snr_convert(self.power_P, self.n, self.k, SnrConvention.ESN0_DB)

    @property
    def ebn0_db(self) -> float:
        return snr_convert(self.power_P, self.n, self.k, SnrConvention.EBN0_DB)


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def awgn_transmit(c, params: ChannelParams, seed) -> np.ndarray:
    """Return ``y = c + w`` with ``w`` i.i.d. N(0, noise_variance).

    ``c`` may be a single block of length ``n`` or a 2-D batch ``(frames, n)``.
    """
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != params.n:
        raise ValueError(f"signal length {c.shape[-1]} != n={params.n}")
    rng = as_generator(seed)
    if params.noise_variance == 0:
        return c.copy()
    return c + np.sqrt(params.noise_variance) * rng.standard_normal(c.shape)


def bpsk_modulate(bits, symbol_power: float = 1.0) -> np.ndarray:
    if symbol_power <= 0:
        raise ValueError("symbol_power must be > 0")
    bits = np.asarray(bits)
    return np.sqrt(symbol_power) * (1.0 - 2.0 * bits)


def bpsk_demap(y, symbol_power: float, effective_noise_variance) -> np.ndarray:
    """Channel LLRs ``2 sqrt(P) y / var``; ``var`` may broadcast per frame."""
    if np.any(np.asarray(effective_noise_variance) <= 0):
        raise ValueError("effective_noise_variance must be > 0")
    y = np.asarray(y, dtype=float)
    return 2.0 * np.sqrt(symbol_power) * y / effective_noise_variance


def _pam4_amplitudes(P: float, split) -> tuple[float, float]:
    p1_frac, p2_frac = split
    if p1_frac < 0 or p2_frac < 0 or not np.isclose(p1_frac + p2_frac, 1.0, rtol=0, atol=1e-12):
        raise ValueError(f"power split must be non-negative and sum to 1, got {split}")
    return np.sqrt(P * p2_frac), np.sqrt(P * p1_frac)


def pam4_levels(P: float, split=(0.2, 0.8), mapping: str = "natural") -> np.ndarray:
    """Constellation points indexed by ``2*b_a + b_b``.

    ``natural`` is the plain superposition ``(-1)^b_a sqrt(P*P2) + (-1)^b_b sqrt(P*P1)``;
    ``gray`` flips the low-power sign on the negative half so neighbours differ in one bit.
    """
    hi, lo = _pam4_amplitudes(P, split)
    if mapping == "natural":
        return np.array([hi + lo, hi - lo, -hi + lo, -hi - lo])
    if mapping == "gray":
        return np.array([hi + lo, hi - lo, -hi - lo, -hi + lo])
    raise ValueError(f"unknown PAM-4 mapping {mapping!r}")


def pam4_modulate(bits, P: float, split=(0.2, 0.8), mapping: str = "natural") -> np.ndarray:
    """Map bit pairs ``(b_a, b_b)`` to PAM-4 levels.

    ``b_a`` rides on the high-power component and ``b_b`` on the low-power one, so with
    the natural mapping this is exactly the sum of two BPSK streams with powers
    ``P*P2`` and ``P*P1``.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("PAM-4 needs an even number of bits")
    levels = pam4_levels(P, split, mapping)
    pairs = bits.reshape(bits.shape[:-1] + (-1, 2)).astype(np.int64)
    return levels[2 * pairs[..., 0] + pairs[..., 1]]


def pam4_demap(y, P: float, split=(0.2, 0.8), noise_variance: float = 1.0,
               mapping: str = "natural") -> np.ndarray:
    """Exact bitwise LLRs, two per symbol, interleaved as ``(b_a, b_b)`` pairs."""
    if noise_variance <= 0:
        raise ValueError("noise_variance must be > 0")
    y = np.asarray(y, dtype=float)
    levels = pam4_levels(P, split, mapping)
    # log-likelihood of each of the four points, up to a common constant
    ll = -((y[..., None] - levels) ** 2) / (2.0 * noise_variance)
    llr_a = np.logaddexp(ll[..., 0], ll[..., 1]) - np.logaddexp(ll[..., 2], ll[..., 3])
    llr_b = np.logaddexp(ll[..., 0], ll[..., 2]) - np.logaddexp(ll[..., 1], ll[..., 3])
    out = np.stack([llr_a, llr_b], axis=-1)
    return out.reshape(y.shape[:-1] + (-1,)) if y.ndim else out


def hard_decision(llrs) -> np.ndarray:
    """Bit 1 where the LLR is negative; zero LLRs resolve to bit 0."""
    return (np.asarray(llrs) < 0).astype(np.uint8)


def qfunc(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def qfunc_inv(p):
    return np.sqrt(2.0) * erfcinv(2.0 * np.asarray(p, dtype=float))


def uncoded_bpsk_ber(P, noise_variance: float = 1.0):
    return qfunc(np.sqrt(np.asarray(P, dtype=float) / noise_variance))
