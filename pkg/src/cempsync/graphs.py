"""Measurement graphs, Erdos-Renyi sampling and the 3-cycle index.

The triangle index is stored in CSR form: entries for edge ``e`` live in
``slice(offsets[e], offsets[e+1])``; entry ``r`` names the third vertex
``k[r]`` and the ids of the two other edges of that triangle (``e_ik[r]``
for the edge touching the smaller endpoint of ``e``, ``e_jk[r]`` for the
other).  Each triangle appears once per edge, so the entry count is three
times the triangle count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .groups import Group

__all__ = [
    "MeasurementGraph", "TriangleIndex", "LambdaStats",
    "sample_er", "complete_edges", "build_triangle_index", "lambda_stats",
    "lambda_from_adjacency", "check_connectivity", "edge_lookup", "bad_mask_from_pairs",
]


def _as_edges(edges) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return e.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class MeasurementGraph:
    """n nodes, undirected edges (i < j) and one group ratio g_ij per edge.

    ``ratios`` is a batch array aligned with ``edges``; the ratio of the
    reversed orientation is its inverse.
    """

    n: int
    edges: np.ndarray
    ratios: np.ndarray
    group: Group

    def __post_init__(self):
        e = _as_edges(self.edges)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "ratios", np.asarray(self.ratios))
        if e.size and (np.any(e[:, 0] >= e[:, 1]) or e.min() < 0 or e.max() >= self.n):
            raise ValueError("edges must satisfy 0 <= i < j < n")
        keys = e[:, 0] * self.n + e[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate edges")
        if len(self.ratios) != len(e):
            raise ValueError("one ratio per edge required")

    @property
    def m(self) -> int:
        return len(self.edges)


def complete_edges(n: int) -> np.ndarray:
    i, j = np.triu_indices(n, k=1)
    return np.stack([i, j], axis=1).astype(np.int64)


def sample_er(n: int, p: float, seed=None) -> np.ndarray:
    """Edges of G(n, p) in lexicographic order."""
    if n < 3:
        raise ValueError("need n >= 3 for 3-cycles to exist")
    if not 0 < p <= 1:
        raise ValueError(f"connection probability must lie in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    pairs = complete_edges(n)
    if p == 1:
        return pairs
    return pairs[rng.random(len(pairs)) < p]


def edge_lookup(n: int, edges: np.ndarray, a, b) -> np.ndarray:
    """Edge ids of the unordered pairs (a, b); -1 where the pair is not an edge."""
    edges = _as_edges(edges)
    keys = edges[:, 0] * n + edges[:, 1]
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    a, b = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    q = np.minimum(a, b) * n + np.maximum(a, b)
    if len(sk) == 0:
        return np.full(q.shape, -1, dtype=np.int64)
    pos = np.minimum(np.searchsorted(sk, q), len(sk) - 1)
    return np.where(sk[pos] == q, order[pos], -1)


@dataclass(frozen=True, eq=False)
class TriangleIndex:
    n: int
    edges: np.ndarray
    offsets: np.ndarray
    k: np.ndarray
    e_ik: np.ndarray
    e_jk: np.ndarray
    entry_edge: np.ndarray
    triangles: np.ndarray      # (T, 3) vertices i < j < k
    tri_edges: np.ndarray      # (T, 3) ids of edges ij, jk, ik
    entry_tri: np.ndarray

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def sizes(self) -> np.ndarray:
        """|N_ij| per edge."""
        return np.diff(self.offsets)

    def neighbors(self, e: int) -> np.ndarray:
        return self.k[self.offsets[e]:self.offsets[e + 1]]

    def triangle_free(self) -> np.ndarray:
        return self.sizes == 0


def _enumerate_triangles(n, edges):
    """All triangles i < j < k by scanning wedges i - j - k centred at the middle vertex."""
    m = len(edges)
    if m == 0:
        return np.zeros((0, 3), np.int64), np.zeros((0, 3), np.int64)
    eid = np.arange(m)
    # lower neighbours (i < j) and upper neighbours (k > j) of each vertex j
    lo_order = np.lexsort((edges[:, 0], edges[:, 1]))
    lo_ptr = np.searchsorted(edges[lo_order, 1], np.arange(n + 1))
    up_order = np.lexsort((edges[:, 1], edges[:, 0]))
    up_ptr = np.searchsorted(edges[up_order, 0], np.arange(n + 1))
    keys = edges[:, 0] * n + edges[:, 1]
    korder = np.argsort(keys, kind="stable")
    skeys = keys[korder]

    tris, tedges = [], []
    for j in range(n):
        lo = lo_order[lo_ptr[j]:lo_ptr[j + 1]]
        up = up_order[up_ptr[j]:up_ptr[j + 1]]
        if lo.size == 0 or up.size == 0:
            continue
        e_ij = np.repeat(lo, up.size)
        e_jk = np.tile(up, lo.size)
        i = edges[e_ij, 0]
        k = edges[e_jk, 1]
        q = i * n + k
        pos = np.minimum(np.searchsorted(skeys, q), m - 1)
        hit = skeys[pos] == q
        if not hit.any():
            continue
        tris.append(np.stack([i[hit], np.full(hit.sum(), j), k[hit]], axis=1))
        tedges.append(np.stack([e_ij[hit], e_jk[hit], eid[korder[pos[hit]]]], axis=1))
    if not tris:
        return np.zeros((0, 3), np.int64), np.zeros((0, 3), np.int64)
    return np.concatenate(tris), np.concatenate(tedges)


def build_triangle_index(graph_or_edges, n: int | None = None) -> TriangleIndex:
    """N_ij for every edge, via wedge scanning and sorted edge-key lookups."""
    if isinstance(graph_or_edges, MeasurementGraph):
        n, edges = graph_or_edges.n, graph_or_edges.edges
    else:
        edges = _as_edges(graph_or_edges)
        if n is None:
            raise ValueError("n is required when passing a bare edge list")
    m = len(edges)
    tris, tedges = _enumerate_triangles(n, edges)
    T = len(tris)
    e_ij, e_jk, e_ik = tedges[:, 0], tedges[:, 1], tedges[:, 2]
    i, j, k = tris[:, 0], tris[:, 1], tris[:, 2]
    # base ij (third k): ik, jk | base ik (third j): ij, jk | base jk (third i): ij, ik
    base = np.concatenate([e_ij, e_ik, e_jk])
    third = np.concatenate([k, j, i])
    other_lo = np.concatenate([e_ik, e_ij, e_ij])
    other_hi = np.concatenate([e_jk, e_jk, e_ik])
    tri_id = np.tile(np.arange(T), 3)
    order = np.lexsort((third, base))
    counts = np.bincount(base, minlength=m)
    offsets = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return TriangleIndex(
        n=n, edges=edges, offsets=offsets, k=third[order], e_ik=other_lo[order],
        e_jk=other_hi[order], entry_edge=base[order], triangles=tris,
        tri_edges=tedges, entry_tri=tri_id[order],
    )


@dataclass(frozen=True)
class LambdaStats:
    lambda_ij: np.ndarray
    lam: float
    min_N: int
    good_cycle_ok: bool

    def as_dict(self):
        return {"lambda": self.lam, "min_N": self.min_N, "good_cycle_ok": self.good_cycle_ok}


def bad_mask_from_pairs(n: int, edges: np.ndarray, pairs: Iterable) -> np.ndarray:
    edges = _as_edges(edges)
    mask = np.zeros(len(edges), dtype=bool)
    pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        ids = edge_lookup(n, edges, pairs[:, 0], pairs[:, 1])
        if np.any(ids < 0):
            missing = pairs[ids < 0].tolist()
            raise ValueError(f"labelled pairs are not edges of the graph: {missing}")
        mask[ids] = True
    return mask


def _labels(index_m, bad):
    bad = np.asarray(bad)
    if bad.dtype != bool or bad.shape != (index_m,):
        raise ValueError(f"need one boolean bad/good label per edge ({index_m}), got shape {bad.shape}")
    return bad


def _finish(G, N):
    with np.errstate(divide="ignore", invalid="ignore"):
        # |B_ij| / |N_ij| on integer counts, exact for rational lambda
        lam_ij = np.where(N > 0, (N - G) / np.where(N > 0, N, 1), 1.0)
    lam = float(lam_ij.max()) if lam_ij.size else 0.0
    min_N = int(N.min()) if N.size else 0
    return LambdaStats(lam_ij, lam, min_N, bool(np.all(G >= 1)))


def lambda_stats(index: TriangleIndex, bad) -> LambdaStats:
    """Per-edge fraction of corrupted 3-cycles, lambda_ij = 1 - |G_ij| / |N_ij|."""
    bad = _labels(index.m, bad)
    good_entry = ~bad[index.e_ik] & ~bad[index.e_jk]
    G = np.bincount(index.entry_edge[good_entry], minlength=index.m)
    return _finish(G, index.sizes)


def _adjacency(n, edges, mask=None):
    e = edges if mask is None else edges[mask]
    data = np.ones(2 * len(e))
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def lambda_from_adjacency(n: int, edges: np.ndarray, bad) -> LambdaStats:
    """Same statistics from squared adjacency matrices, 1 - A_g^2(i,j) / A^2(i,j).

    Needs no triangle index, so it is the cheap route for repeated
    concentration experiments.
    """
    edges = _as_edges(edges)
    bad = _labels(len(edges), bad)
    A = _adjacency(n, edges)
    Ag = _adjacency(n, edges, ~bad)
    i, j = edges[:, 0], edges[:, 1]
    N = np.rint(np.asarray((A @ A)[i, j]).ravel()).astype(np.int64)
    G = np.rint(np.asarray((Ag @ Ag)[i, j]).ravel()).astype(np.int64)
    return _finish(G, N)


def check_connectivity(edges, n: int) -> tuple[int, np.ndarray]:
    """Number of connected components and a component label per node."""
    edges = _as_edges(edges)
    count, labels = connected_components(_adjacency(n, edges), directed=False)
    return int(count), labels
