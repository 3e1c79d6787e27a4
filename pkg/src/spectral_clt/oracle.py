"""Exact finite-n moments of trace powers of block-Wigner-type matrices.

``E Tr H^k`` is a sum over closed index walks ``i_1 -> ... -> i_k -> i_1``.
Walks are grouped by their coincidence pattern (which positions carry the
same index); for each pattern the expectation factorises over the distinct
undirected edges, and the number of index assignments realising a pattern
with prescribed communities is a product of falling factorials.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .blockmodel import BlockModelParams
from .errors import ValidationError

__all__ = [
    "EntryMoments",
    "entry_moments",
    "exact_trace_moment",
    "exact_var_tr_h2",
    "scaled_sizes",
    "set_partitions",
    "var_tr_h2_limit",
]

MAX_POWER = 4


@dataclass(frozen=True)
class EntryMoments:
    """Raw moments of ``sqrt(n) H_ij`` by block, orders 1 to 4."""

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    def order(self, a: int) -> np.ndarray:
        return (self.m1, self.m2, self.m3, self.m4)[a - 1]


def entry_moments(params: BlockModelParams) -> EntryMoments:
    K = params.K
    return EntryMoments(m1=np.zeros((K, K)), m2=params.Q2.copy(), m3=params.Q3.copy(),
                        m4=params.Q4 + 3.0 * params.Q2**2)


def scaled_sizes(params: BlockModelParams, n: int) -> np.ndarray:
    """Community sizes ``alpha * n``; they must come out integral."""
    raw = params.alpha * n
    sizes = np.rint(raw).astype(int)
    if np.max(np.abs(raw - sizes)) > 1e-9 or np.any(sizes < 1):
        raise ValidationError(f"n={n} is incompatible with proportions {params.alpha.tolist()}")
    return sizes


def set_partitions(k: int):
    """Restricted growth strings of length ``k`` (one per set partition)."""
    def grow(prefix, top):
        if len(prefix) == k:
            yield tuple(prefix)
            return
        for c in range(top + 2):
            yield from grow(prefix + [c], max(top, c))
    yield from grow([0], 0) if k else iter([()])


def _falling(m, r):
    out = 1
    for t in range(r):
        out *= (m - t)
    return out


def _pattern_edges(pattern):
    """Edge multiplicities of the closed walk, or None if it cannot contribute."""
    k = len(pattern)
    edges = Counter()
    for t in range(k):
        u, v = pattern[t], pattern[(t + 1) % k]
        if u == v:
            return None        # diagonal entry, identically zero
        edges[(min(u, v), max(u, v))] += 1
    if any(c == 1 for c in edges.values()):
        return None            # a lone centred entry
    return edges


def exact_trace_moment(params: BlockModelParams, n: int, k: int) -> float:
    """``E Tr H^k`` for ``k <= 4`` at size ``n`` (sizes scaled from ``alpha``)."""
    if not 1 <= k <= MAX_POWER:
        raise ValidationError(f"trace power k must be in 1..{MAX_POWER}, got {k}")
    sizes = scaled_sizes(params, n)
    mom = entry_moments(params)
    K = params.K
    total = 0.0
    for pattern in set_partitions(k):
        edges = _pattern_edges(pattern)
        if edges is None:
            continue
        c = max(pattern) + 1
        for blocks in itertools.product(range(K), repeat=c):
            counts = np.bincount(blocks, minlength=K)
            ways = 1
            for kk in range(K):
                ways *= _falling(int(sizes[kk]), int(counts[kk]))
            if ways == 0:
                continue
            val = 1.0
            for (u, v), mult in edges.items():
                val *= mom.order(mult)[blocks[u], blocks[v]]
            total += ways * val
    return float(total / n ** (k / 2))


def _pair_counts(params, n):
    sizes = scaled_sizes(params, n)
    N = np.outer(sizes, sizes).astype(float)
    N[np.diag_indices_from(N)] -= sizes
    return N


def exact_var_tr_h2(params: BlockModelParams, n: int) -> float:
    """``Var Tr H^2 = 2 sum_{i != j} (k4_ij + 2 k2_ij^2) / n^2``."""
    N = _pair_counts(params, n)
    return float(2.0 * np.sum(N * (params.Q4 + 2.0 * params.Q2**2)) / n**2)


def var_tr_h2_limit(params: BlockModelParams) -> float:
    """``lim_n Var Tr H^2`` by two-point Richardson extrapolation in ``1/n``.

    The finite-n value is affine in ``1/n``, so the extrapolation is exact.
    """
    n = params.n
    return 2.0 * exact_var_tr_h2(params, 2 * n) - exact_var_tr_h2(params, n)
