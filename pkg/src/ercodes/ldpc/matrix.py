"""Sparse parity-check matrices, GF(2) elimination and alist I/O."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class GF2Echelon:
    """Reduced row echelon form of H over GF(2).

    ``rows`` holds the ``rank`` nonzero rows as a dense uint8 array; row ``i`` has its
    leading one in column ``pivots[i]`` and zeros in every other pivot column.
    """
    rows: np.ndarray
    pivots: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.pivots)


def gf2_rref(dense) -> GF2Echelon:
    """Gauss-Jordan elimination over GF(2) on a bit-packed copy of ``dense``."""
    dense = np.asarray(dense, dtype=np.uint8) & 1
    m, n = dense.shape
    words = -(-n // 64)
    packed = np.zeros((m, words * 8), dtype=np.uint8)
    packed[:, : -(-n // 8)] = np.packbits(dense, axis=1, bitorder="little")
    A = packed.view("<u8").copy()
    pivots = []
    r = 0
    for col in range(n):
        if r == m:
            break
        w, bit = divmod(col, 64)
        colbits = (A[r:, w] >> np.uint64(bit)) & np.uint64(1)
        nz = np.flatnonzero(colbits)
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        mask = ((A[:, w] >> np.uint64(bit)) & np.uint64(1)).astype(bool)
        mask[r] = False
        A[mask] ^= A[r]
        pivots.append(col)
        r += 1
    rows = np.unpackbits(A[:r].view(np.uint8), axis=1, bitorder="little")[:, :n]
    return GF2Echelon(rows=rows, pivots=np.asarray(pivots, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ParityCheckMatrix:
    """Binary parity-check matrix stored as CSR; immutable after construction."""
    H: sp.csr_matrix
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        H = sp.csr_matrix(self.H, dtype=np.uint8)
        H.sum_duplicates()
        if H.nnz and H.data.max() > 1:
            raise ValueError("duplicate edges in parity-check matrix")
        H.eliminate_zeros()
        H.sort_indices()
        object.__setattr__(self, "H", H)
        if self.n_v and np.any(self.col_weights == 0):
            raise ValueError("every variable node must take part in at least one check")

    @classmethod
    def from_dense(cls, dense, provenance: dict | None = None) -> "ParityCheckMatrix":
        return cls(sp.csr_matrix(np.asarray(dense, dtype=np.uint8)), provenance or {})

    @property
    def m_c(self) -> int:
        return self.H.shape[0]

    @property
    def n_v(self) -> int:
        return self.H.shape[1]

    @functools.cached_property
    def col_weights(self) -> np.ndarray:
        return np.asarray(self.H.sum(axis=0)).ravel().astype(np.int64)

    @functools.cached_property
    def row_weights(self) -> np.ndarray:
        return np.asarray(self.H.sum(axis=1)).ravel().astype(np.int64)

    def dense(self) -> np.ndarray:
        return self.H.toarray()

    @functools.cached_property
    def echelon(self) -> GF2Echelon:
        return gf2_rref(self.dense())

    @property
    def rank(self) -> int:
        return self.echelon.rank

    @property
    def dimension(self) -> int:
        return self.n_v - self.rank

    def syndrome(self, bits) -> np.ndarray:
        """``H c mod 2`` for ``(n_v,)`` or ``(B, n_v)`` inputs."""
        bits = np.asarray(bits, dtype=np.int64)
        return (np.asarray(self.H @ bits.T).T % 2).astype(np.uint8)

    def count_4cycles(self) -> int:
        """Number of variable pairs sharing two or more checks."""
        H = self.H.astype(np.int32)
        overlap = sp.triu(H.T @ H, k=1)
        return int(np.count_nonzero(overlap.data >= 2))

    def check_degree_histogram(self) -> dict[int, int]:
        deg, cnt = np.unique(self.row_weights, return_counts=True)
        return {int(d): int(c) for d, c in zip(deg, cnt)}

    def variable_degree_histogram(self) -> dict[int, int]:
        deg, cnt = np.unique(self.col_weights, return_counts=True)
        return {int(d): int(c) for d, c in zip(deg, cnt)}

    def __eq__(self, other):
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return self.H.shape == other.H.shape and (self.H != other.H).nnz == 0

    __hash__ = object.__hash__


def write_alist(pcm: ParityCheckMatrix, path) -> None:
    H = pcm.H
    Hc = H.tocsc()
    cols = [Hc.indices[Hc.indptr[j]:Hc.indptr[j + 1]] for j in range(pcm.n_v)]
    rows = [H.indices[H.indptr[i]:H.indptr[i + 1]] for i in range(pcm.m_c)]
    max_c = max((len(c) for c in cols), default=0)
    max_r = max((len(r) for r in rows), default=0)

    def padded(idx, width):
        vals = [str(i + 1) for i in idx] + ["0"] * (width - len(idx))
        return " ".join(vals)

    lines = [f"{pcm.n_v} {pcm.m_c}", f"{max_c} {max_r}",
             " ".join(str(len(c)) for c in cols), " ".join(str(len(r)) for r in rows)]
    lines += [padded(c, max_c) for c in cols]
    lines += [padded(r, max_r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_alist(path) -> ParityCheckMatrix:
    tokens = Path(path).read_text().split()
    it = iter(int(t) for t in tokens)
    try:
        n, m = next(it), next(it)
        max_c, _ = next(it), next(it)
        col_deg = [next(it) for _ in range(n)]
        for _ in range(m):
            next(it)
        r_idx, c_idx = [], []
        for j in range(n):
            entries = [next(it) for _ in range(max_c)]
            nz = [e for e in entries if e > 0]
            if len(nz) != col_deg[j]:
                raise ValueError(f"column {j}: degree {col_deg[j]} but {len(nz)} entries")
            r_idx += [e - 1 for e in nz]
            c_idx += [j] * len(nz)
    except StopIteration:
        raise ValueError(f"truncated alist file {path}") from None
    # the row section is redundant; the column section defines H
    H = sp.csr_matrix((np.ones(len(r_idx), dtype=np.uint8), (r_idx, c_idx)), shape=(m, n))
    return ParityCheckMatrix(H, {"source": str(path)})
