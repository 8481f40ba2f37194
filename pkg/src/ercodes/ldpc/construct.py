"""Parity-check matrix construction: progressive edge growth and protograph lifting."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numba import njit

from .matrix import ParityCheckMatrix

log = logging.getLogger(__name__)


@njit(cache=True)
def _peg(n, m, dv, cap, u):
    var_adj = np.full((n, dv), -1, np.int64)
    chk_adj = np.full((m, cap), -1, np.int64)
    chk_deg = np.zeros(m, np.int64)
    chk_stamp = np.zeros(m, np.int64)
    var_stamp = np.zeros(n, np.int64)
    frontier = np.empty(m, np.int64)
    nxt = np.empty(m, np.int64)
    cand = np.empty(m, np.int64)
    stamp = 0
    for j in range(n):
        for e in range(dv):
            stamp += 1
            n_cand = 0
            if e == 0:
                for c in range(m):
                    cand[n_cand] = c
                    n_cand += 1
            else:
                # breadth-first expansion of the check neighbourhood of j
                n_front = 0
                n_reached = 0
                var_stamp[j] = stamp
                for q in range(e):
                    c = var_adj[j, q]
                    if chk_stamp[c] != stamp:
                        chk_stamp[c] = stamp
                        frontier[n_front] = c
                        n_front += 1
                        n_reached += 1
                while True:
                    n_next = 0
                    for a in range(n_front):
                        c = frontier[a]
                        for b in range(chk_deg[c]):
                            v = chk_adj[c, b]
                            if var_stamp[v] == stamp:
                                continue
                            var_stamp[v] = stamp
                            for q in range(dv):
                                c2 = var_adj[v, q]
                                if c2 < 0:
                                    break
                                if chk_stamp[c2] != stamp:
                                    chk_stamp[c2] = stamp
                                    nxt[n_next] = c2
                                    n_next += 1
                    if n_next == 0:
                        # neighbourhood stopped growing: any unreached check
                        for c in range(m):
                            if chk_stamp[c] != stamp:
                                cand[n_cand] = c
                                n_cand += 1
                        break
                    if n_reached + n_next == m:
                        # this level completes the graph: take the most distant checks
                        for a in range(n_next):
                            cand[n_cand] = nxt[a]
                            n_cand += 1
                        break
                    n_reached += n_next
                    for a in range(n_next):
                        frontier[a] = nxt[a]
                    n_front = n_next
                if n_cand == 0:
                    # all checks already adjacent to j
                    return var_adj, chk_adj, chk_deg, False
            best = 1 << 62
            n_best = 0
            for a in range(n_cand):
                d = chk_deg[cand[a]]
                if d < best:
                    best = d
                    n_best = 0
                if d == best:
                    cand[n_best] = cand[a]
                    n_best += 1
            c = cand[min(int(u[j * dv + e] * n_best), n_best - 1)]
            if chk_deg[c] >= cap:
                # distant checks are all full: fall back to the least-loaded non-adjacent check
                best = 1 << 62
                c = -1
                for c2 in range(m):
                    taken = False
                    for q in range(e):
                        if var_adj[j, q] == c2:
                            taken = True
                    if not taken and chk_deg[c2] < best:
                        best = chk_deg[c2]
                        c = c2
                if c < 0 or chk_deg[c] >= cap:
                    return var_adj, chk_adj, chk_deg, False
            var_adj[j, e] = c
            chk_adj[c, chk_deg[c]] = j
            chk_deg[c] += 1
    return var_adj, chk_adj, chk_deg, True


def build_regular_ldpc(n_v: int, k_v: int, col_weight: int = 3, seed: int = 0) -> ParityCheckMatrix:
    """Column-regular PEG code with ``n_v - k_v`` checks.

    Check degrees come out within one of each other. The true dimension may exceed
    ``k_v`` if H is rank deficient; it is available as ``.dimension``.
    """
    m = n_v - k_v
    if col_weight < 2:
        raise ValueError("column weight must be >= 2")
    if m < col_weight or k_v < 0:
        raise ValueError(f"cannot place {col_weight} distinct checks per column with {m} checks")
    cap = -(-n_v * col_weight // m) + 1
    u = np.random.default_rng(seed).random(n_v * col_weight)
    var_adj, _, chk_deg, ok = _peg(n_v, m, col_weight, cap, u)
    if not ok:
        raise ValueError("progressive edge growth failed to place all edges")
    rows = var_adj.ravel()
    cols = np.repeat(np.arange(n_v), col_weight)
    H = sp.csr_matrix((np.ones(rows.size, dtype=np.uint8), (rows, cols)), shape=(m, n_v))
    pcm = ParityCheckMatrix(H, {"construction": "peg", "col_weight": col_weight, "seed": seed,
                                "n_v": n_v, "k_v": k_v})
    if pcm.row_weights.min() == 0:
        raise ValueError("degree combination leaves a check with no edges")
    return pcm


@dataclass(frozen=True)
class Protograph:
    base: np.ndarray  # (m_b, n_b) non-negative edge multiplicities
    f: int

    def __post_init__(self):
        base = np.asarray(self.base, dtype=np.int64)
        if base.ndim != 2 or np.any(base < 0):
            raise ValueError("base matrix must be a 2-D array of non-negative integers")
        if self.f < 1:
            raise ValueError("lifting factor must be >= 1")
        if np.any(base > self.f):
            raise ValueError("more parallel edges than circulant shifts")
        object.__setattr__(self, "base", base)

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape

    def check_degrees(self) -> np.ndarray:
        return self.base.sum(axis=1)

    def variable_degrees(self) -> np.ndarray:
        return self.base.sum(axis=0)


def read_protograph(path) -> Protograph:
    """Text format: header ``m_b n_b f`` followed by ``m_b`` rows of ``n_b`` integers."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    m_b, n_b, f = (int(t) for t in lines[0].split())
    rows = [[int(t) for t in ln.split()] for ln in lines[1:]]
    base = np.array(rows, dtype=np.int64)
    if base.shape != (m_b, n_b):
        raise ValueError(f"header says {m_b}x{n_b}, grid is {base.shape}")
    return Protograph(base, f)


def write_protograph(p: Protograph, path) -> None:
    m_b, n_b = p.shape
    body = "\n".join(" ".join(str(int(v)) for v in row) for row in p.base)
    Path(path).write_text(f"{m_b} {n_b} {p.f}\n{body}\n")


def _cycles_with(edge, shift, shifts, index, f):
    """4-cycles in the lift closed by giving ``edge`` the circulant ``shift``."""
    i, j, me = edge
    edge_row, edge_col, by_row, by_col, by_pos = index
    count = 0
    for a in by_row[i]:
        if a == me or shifts[a] < 0:
            continue
        ja = edge_col[a]
        for b in by_col[j]:
            if b in (me, a) or shifts[b] < 0:
                continue
            ib = edge_row[b]
            for d in by_pos.get((ib, ja), ()):
                if d in (me, a, b) or shifts[d] < 0:
                    continue
                if (shift - shifts[a] + shifts[d] - shifts[b]) % f == 0:
                    count += 1
    return count


def lift_protograph(p: Protograph, seed: int = 0, attempts: int = 64) -> ParityCheckMatrix:
    """Replace each base edge by an ``f x f`` circulant permutation.

    Shifts are drawn greedily from a seeded generator, rejecting values that would
    close a 4-cycle; when no candidate avoids one, the least-bad shift is kept and the
    number of such edges is recorded in the provenance.
    """
    rng = np.random.default_rng(seed)
    f = p.f
    # (row, col, own index) for each parallel copy of each base edge
    edges = []
    for i, j in zip(*np.nonzero(p.base)):
        for _ in range(p.base[i, j]):
            edges.append((int(i), int(j), len(edges)))
    shifts = np.full(len(edges), -1, dtype=np.int64)
    by_row, by_col = {}, {}
    by_pos = {}
    for i, j, idx in edges:
        by_row.setdefault(i, []).append(idx)
        by_col.setdefault(j, []).append(idx)
        by_pos.setdefault((i, j), []).append(idx)
    index = ([e[0] for e in edges], [e[1] for e in edges], by_row, by_col, by_pos)
    unresolved = 0
    for e in edges:
        i, j, idx = e
        taken = {int(shifts[o]) for o in by_pos[(i, j)] if shifts[o] >= 0}
        best_s, best_c = None, None
        for _ in range(attempts):
            s = int(rng.integers(f))
            if s in taken:
                continue
            c = _cycles_with(e, s, shifts, index, f)
            if best_c is None or c < best_c:
                best_s, best_c = s, c
            if c == 0:
                break
        if best_s is None:
            best_s = next(s for s in range(f) if s not in taken)
            best_c = _cycles_with(e, best_s, shifts, index, f)
        unresolved += best_c > 0
        shifts[idx] = best_s
    r = np.arange(f)
    rows = np.concatenate([e[0] * f + r for e in edges]) if edges else np.zeros(0, np.int64)
    cols = np.concatenate([e[1] * f + (r + shifts[e[2]]) % f for e in edges]) if edges else rows
    m_b, n_b = p.shape
    H = sp.csr_matrix((np.ones(rows.size, dtype=np.uint8), (rows, cols)), shape=(m_b * f, n_b * f))
    shift_map = [(e[0], e[1], int(shifts[e[2]])) for e in edges]
    if unresolved:
        log.info("lift kept %d base edges that close 4-cycles", unresolved)
    return ParityCheckMatrix(H, {"construction": "protograph", "base": p.base.tolist(), "f": f,
                                 "seed": seed, "shifts": shift_map, "edges_in_4cycles": unresolved})
