"""Sparse regression codes: Gaussian design matrix, encoder, AMP decoder and an
exhaustive maximum-likelihood decoder for tiny instances.

A message of ``k`` bits is cut into sections of ``log2(M)`` bits; each section selects
one column of its block of ``M`` design-matrix columns, and the codeword is the sum of
the selected columns scaled by ``sqrt(n * P_l)``. When ``k`` is not a multiple of
``log2(M)`` the final section carries the ``k mod log2(M)`` leftover bits and has a
reduced alphabet of ``2**r`` columns.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MAX_ML_CANDIDATES = 2**20
# Floor on the residual variance, only reachable on a noiseless channel after exact recovery.
_TAU_SQ_FLOOR = 1e-12
# Smallest section probability the denoiser reports (smallest normal double).
_PROB_FLOOR = np.finfo(float).tiny


def _is_power_of_2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class SparcParams:
    M: int
    L: int
    n: int
    power_alloc: tuple[float, ...]
    seed: int = 0
    last_section_size: int | None = None  # None: every section has M columns

    def __post_init__(self):
        if self.M < 2 or not _is_power_of_2(self.M):
            raise ValueError(f"section size M must be a power of 2 >= 2, got {self.M}")
        if self.L < 1 or self.n < 1:
            raise ValueError("L and n must be positive")
        if len(self.power_alloc) != self.L:
            raise ValueError(f"need {self.L} section powers, got {len(self.power_alloc)}")
        if any(p <= 0 for p in self.power_alloc):
            raise ValueError("section powers must be positive")
        last = self.last_section_size
        if last is not None and not (2 <= last < self.M and _is_power_of_2(last)):
            raise ValueError(f"reduced last section must be a power of 2 in [2, M), got {last}")

    @classmethod
    def uniform(cls, k: int, M: int, n: int, P: float, seed: int = 0) -> "SparcParams":
        """Uniform allocation ``P_l = P / L`` for a ``k``-bit message."""
        if not _is_power_of_2(M) or M < 2:
            raise ValueError(f"section size M must be a power of 2 >= 2, got {M}")
        bps = M.bit_length() - 1
        full, rem = divmod(k, bps)
        L = full + (1 if rem else 0)
        if L == 0:
            raise ValueError("need at least one information bit")
        last = 2**rem if rem else None
        return cls(M=M, L=L, n=n, power_alloc=(P / L,) * L, seed=seed, last_section_size=last)

    def with_power(self, P: float) -> "SparcParams":
        """Same code, allocation rescaled to total power ``P``."""
        scale = P / self.P
        return SparcParams(self.M, self.L, self.n, tuple(p * scale for p in self.power_alloc),
                           self.seed, self.last_section_size)

    @property
    def P(self) -> float:
        return float(sum(self.power_alloc))

    @functools.cached_property
    def section_sizes(self) -> np.ndarray:
        sizes = np.full(self.L, self.M, dtype=np.int64)
        if self.last_section_size is not None:
            sizes[-1] = self.last_section_size
        return sizes

    @functools.cached_property
    def bits_per_section(self) -> np.ndarray:
        return np.log2(self.section_sizes).astype(np.int64)

    @functools.cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.section_sizes)))

    @property
    def n_columns(self) -> int:
        return int(self.offsets[-1])

    @property
    def k(self) -> int:
        return int(self.bits_per_section.sum())

    @property
    def rate(self) -> float:
        return self.k / self.n

    @functools.cached_property
    def amplitudes(self) -> np.ndarray:
        return np.sqrt(self.n * np.asarray(self.power_alloc, dtype=float))

    @functools.cached_property
    def column_amplitudes(self) -> np.ndarray:
        return np.repeat(self.amplitudes, self.section_sizes)

    @property
    def n_full_sections(self) -> int:
        return self.L - (1 if self.last_section_size is not None else 0)

    def design(self, storage: str = "materialized") -> "DesignMatrixSpec":
        return DesignMatrixSpec(n=self.n, M=self.M, L=self.L, seed=self.seed,
                                storage=storage, last_section_size=self.last_section_size)


@dataclass(frozen=True)
class DesignMatrixSpec:
    """Virtual ``n x N`` matrix with i.i.d. N(0, 1/n) entries.

    Column ``j`` is drawn from a Philox stream keyed by ``seed`` whose counter block is
    ``j``, so any column can be regenerated alone and both storage modes agree exactly.
    """
    n: int
    M: int
    L: int
    seed: int
    storage: str = "materialized"
    last_section_size: int | None = None

    def __post_init__(self):
        if self.storage not in ("materialized", "on_demand"):
            raise ValueError(f"unknown storage mode {self.storage!r}")

    @property
    def n_columns(self) -> int:
        last = self.M if self.last_section_size is None else self.last_section_size
        return (self.L - 1) * self.M + last


def design_column(spec: DesignMatrixSpec, j: int) -> np.ndarray:
    if not 0 <= j < spec.n_columns:
        raise IndexError(f"column {j} out of range [0, {spec.n_columns})")
    return _generate_column(spec.seed, spec.n, int(j))


def _generate_column(seed: int, n: int, j: int) -> np.ndarray:
    bitgen = np.random.Philox(key=seed, counter=[0, j, 0, 0])
    return np.random.Generator(bitgen).standard_normal(n) / np.sqrt(n)


def _generate_block(seed: int, n: int, cols) -> np.ndarray:
    """Rows of the returned array are the requested columns."""
    out = np.empty((len(cols), n))
    for r, j in enumerate(cols):
        out[r] = _generate_column(seed, n, int(j))
    return out


@functools.lru_cache(maxsize=2)
def _materialized_transpose(seed: int, n: int, n_columns: int) -> np.ndarray:
    log.debug("materializing %d x %d design matrix", n, n_columns)
    at = _generate_block(seed, n, range(n_columns))
    at.setflags(write=False)
    return at


class DesignMatrix:
    """Products with the design matrix in either storage mode.

    Batched inputs carry frames along the first axis.
    """

    def __init__(self, spec: DesignMatrixSpec, block: int = 2048):
        self.spec = spec
        self.block = block

    @property
    def shape(self) -> tuple[int, int]:
        return self.spec.n, self.spec.n_columns

    @property
    def transpose_array(self) -> np.ndarray:
        """``A^T`` as a dense ``N x n`` array (materialized mode only)."""
        return _materialized_transpose(self.spec.seed, self.spec.n, self.spec.n_columns)

    def columns(self, idx) -> np.ndarray:
        """Rows of the result are the columns ``idx`` of A."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.spec.storage == "materialized":
            return self.transpose_array[idx]
        return _generate_block(self.spec.seed, self.spec.n, idx)

    def _blocks(self):
        N = self.spec.n_columns
        for start in range(0, N, self.block):
            stop = min(start + self.block, N)
            yield start, stop, _generate_block(self.spec.seed, self.spec.n, range(start, stop))

    def matvec(self, b: np.ndarray) -> np.ndarray:
        """``A b`` for ``b`` of shape ``(..., N)``."""
        if self.spec.storage == "materialized":
            return b @ self.transpose_array
        out = np.zeros(b.shape[:-1] + (self.spec.n,))
        for start, stop, at in self._blocks():
            out += b[..., start:stop] @ at
        return out

    def rmatvec(self, z: np.ndarray) -> np.ndarray:
        """``A^T z`` for ``z`` of shape ``(..., n)``."""
        if self.spec.storage == "materialized":
            return z @ self.transpose_array.T
        out = np.empty(z.shape[:-1] + (self.spec.n_columns,))
        for start, stop, at in self._blocks():
            out[..., start:stop] = z @ at.T
        return out


@dataclass
class SectionVector:
    """Sparse message vector: one active column and amplitude per section."""
    indices: np.ndarray
    amplitudes: np.ndarray
    section_sizes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if np.any(self.indices < 0) or np.any(self.indices >= self.section_sizes):
            raise ValueError("active index outside its section")

    @property
    def positions(self) -> np.ndarray:
        offsets = np.concatenate(([0], np.cumsum(self.section_sizes)[:-1]))
        return offsets + self.indices

    def dense(self) -> np.ndarray:
        b = np.zeros(int(np.sum(self.section_sizes)))
        b[self.positions] = self.amplitudes
        return b


def bits_to_indices(bits, params: SparcParams) -> np.ndarray:
    """Big-endian bits-to-index map per section; works on ``(k,)`` or ``(B, k)``."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] != params.k:
        raise ValueError(f"expected {params.k} bits, got {bits.shape[-1]}")
    bps = params.M.bit_length() - 1
    nf = params.n_full_sections
    weights = 1 << np.arange(bps - 1, -1, -1)
    main = bits[..., : nf * bps].reshape(bits.shape[:-1] + (nf, bps)) @ weights
    if params.last_section_size is None:
        return main
    r = params.last_section_size.bit_length() - 1
    tail = bits[..., nf * bps:] @ (1 << np.arange(r - 1, -1, -1))
    return np.concatenate([main, tail[..., None]], axis=-1)


def indices_to_bits(indices, params: SparcParams) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    bps = params.M.bit_length() - 1
    nf = params.n_full_sections
    shifts = np.arange(bps - 1, -1, -1)
    main = (indices[..., :nf, None] >> shifts) & 1
    out = main.reshape(indices.shape[:-1] + (nf * bps,))
    if params.last_section_size is not None:
        r = params.last_section_size.bit_length() - 1
        tail = (indices[..., nf:, None] >> np.arange(r - 1, -1, -1)) & 1
        out = np.concatenate([out, tail.reshape(indices.shape[:-1] + (r,))], axis=-1)
    return out.astype(np.uint8)


def sparc_encode(bits, params: SparcParams, design: DesignMatrix | None = None):
    """Return ``(SectionVector, c)`` for one message, or ``(indices, c)`` for a batch.

    For a ``(B, k)`` batch the first element is the ``(B, L)`` array of active indices.
    """
    design = design or DesignMatrix(params.design())
    idx = bits_to_indices(bits, params)
    pos = idx + params.offsets[:-1]
    cols = design.columns(pos.reshape(-1)).reshape(pos.shape + (params.n,))
    c = np.einsum("...l,...ln->...n", np.broadcast_to(params.amplitudes, idx.shape), cols)
    if idx.ndim == 1:
        return SectionVector(idx, params.amplitudes.copy(), params.section_sizes), c
    return idx, c


def amp_denoise(s: np.ndarray, tau_sq, params: SparcParams) -> np.ndarray:
    """Section-wise softmax denoiser scaled so each section sums to ``sqrt(n P_l)``.

    ``s`` is ``(N,)`` or ``(B, N)``; ``tau_sq`` is a scalar or ``(B,)``.
    """
    s = np.asarray(s, dtype=float)
    tau_sq = np.asarray(tau_sq, dtype=float)[..., None]
    logits = s * params.column_amplitudes / tau_sq
    out = np.empty_like(logits)
    nf = params.n_full_sections
    split = nf * params.M
    head = logits[..., :split].reshape(logits.shape[:-1] + (nf, params.M))
    out[..., :split] = _softmax(head).reshape(logits.shape[:-1] + (split,))
    if params.last_section_size is not None:
        out[..., split:] = _softmax(logits[..., split:])
    amps = params.column_amplitudes
    # The posterior mean lies strictly inside (0, amplitude). When a section is decided
    # beyond double precision the softmax rounds to exactly 0 or 1; nudging such entries
    # back inside moves them by at most one ulp of the amplitude.
    return np.clip(out * amps, amps * _PROB_FLOOR, np.nextafter(amps, 0.0))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class AmpState:
    b_est: np.ndarray
    z: np.ndarray
    tau_sq: np.ndarray
    t: np.ndarray  # iterations executed, per frame
    tau_history: list = field(default_factory=list, repr=False)


def amp_decode(y, design: DesignMatrix, params: SparcParams, T: int = 50,
               early_stop: bool = False, patience: int = 3) -> AmpState:
    """Approximate message passing with residual-based variance estimate.

    With ``early_stop`` a frame halts once its section-wise argmax has not changed for
    ``patience`` consecutive iterations; otherwise exactly ``T`` iterations run.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    n, N = params.n, params.n_columns
    if y.shape[1] != n or design.shape != (n, N):
        raise ValueError(f"dimension mismatch: y {y.shape}, design {design.shape}, params n={n}, N={N}")
    B = y.shape[0]
    P = params.P

    b = np.zeros((B, N))
    z = np.zeros((B, n))
    tau_sq = np.ones(B)
    iters = np.zeros(B, dtype=np.int64)
    active = np.arange(B)
    last_hard = np.full((B, params.L), -1)
    stable = np.zeros(B, dtype=np.int64)
    history = []

    for t in range(T):
        ba, za = b[active], z[active]
        resid = y[active] - design.matvec(ba)
        if t > 0:
            onsager = (P - np.sum(ba * ba, axis=1) / n) / tau_sq[active]
            resid += za * onsager[:, None]
        tau = np.maximum(np.sum(resid * resid, axis=1) / n, _TAU_SQ_FLOOR)
        s = design.rmatvec(resid) + ba
        b_new = amp_denoise(s, tau, params)
        z[active] = resid
        tau_sq[active] = tau
        b[active] = b_new
        iters[active] += 1
        history.append(tau_sq.copy())
        if early_stop:
            hard = section_argmax(b_new, params)
            same = np.all(hard == last_hard[active], axis=1)
            stable[active] = np.where(same, stable[active] + 1, 0)
            last_hard[active] = hard
            active = active[stable[active] < patience]
            if active.size == 0:
                break

    if single:
        return AmpState(b[0], z[0], tau_sq[0], iters[0], [h[0] for h in history])
    return AmpState(b, z, tau_sq, iters, history)


def section_argmax(b_est: np.ndarray, params: SparcParams) -> np.ndarray:
    """Per-section index of the largest entry; ties go to the lowest index."""
    nf = params.n_full_sections
    split = nf * params.M
    head = b_est[..., :split].reshape(b_est.shape[:-1] + (nf, params.M)).argmax(axis=-1)
    if params.last_section_size is None:
        return head
    tail = b_est[..., split:].argmax(axis=-1)
    return np.concatenate([head, tail[..., None]], axis=-1)


def sparc_hard_decision(state: AmpState | np.ndarray, params: SparcParams) -> np.ndarray:
    b_est = state.b_est if isinstance(state, AmpState) else np.asarray(state)
    if b_est.shape[-1] != params.n_columns:
        raise ValueError("estimate length does not match the code")
    return indices_to_bits(section_argmax(b_est, params), params)


def ml_objective(y, design: DesignMatrix, params: SparcParams, indices) -> float:
    pos = np.asarray(indices) + params.offsets[:-1]
    c = params.amplitudes @ design.columns(pos)
    r = np.asarray(y, dtype=float) - c
    return float(r @ r)


def ml_oracle_decode(y, design: DesignMatrix, params: SparcParams, chunk: int = 4096) -> SectionVector:
    """Exhaustive minimisation of ``||y - A b||^2`` over every valid section vector."""
    sizes = params.section_sizes
    total = int(np.prod(sizes.astype(float)))
    if total > MAX_ML_CANDIDATES:
        raise ValueError(f"{total} candidates exceeds the exhaustive-search limit {MAX_ML_CANDIDATES}")
    y = np.asarray(y, dtype=float)
    # scaled[l] is (M_l, n): amplitude-weighted columns of section l
    scaled = [params.amplitudes[l] * design.columns(np.arange(params.offsets[l], params.offsets[l + 1]))
              for l in range(params.L)]
    best_val, best_idx = np.inf, None
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.stack(np.unravel_index(flat, tuple(sizes)), axis=1)
        cw = sum(scaled[l][idx[:, l]] for l in range(params.L))
        obj = np.sum((y - cw) ** 2, axis=1)
        i = int(np.argmin(obj))
        if obj[i] < best_val:
            best_val, best_idx = obj[i], idx[i]
    return SectionVector(best_idx, params.amplitudes.copy(), sizes)
