"""Edge cleaning, spanning-tree recovery and alignment scoring."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import MeasurementGraph, check_connectivity
from .groups import Group

__all__ = [
    "CleaningResult", "Alignment", "DisconnectedError",
    "clean_edges", "gap_threshold", "solve_tree", "align_and_score", "ratios_from_elements",
]

log = logging.getLogger(__name__)


class DisconnectedError(ValueError):
    def __init__(self, components):
        self.components = components
        sizes = sorted((len(c) for c in components), reverse=True)
        super().__init__(f"kept edges leave {len(components)} components (sizes {sizes}): {components}")


@dataclass(frozen=True, eq=False)
class CleaningResult:
    kept: np.ndarray            # boolean mask over edges
    threshold: float
    n_components: int
    labels: np.ndarray          # component id per node
    confusion: dict | None = None

    @property
    def kept_count(self) -> int:
        return int(self.kept.sum())

    def components(self) -> list[list[int]]:
        return [np.flatnonzero(self.labels == c).tolist() for c in range(self.n_components)]

    @property
    def precision(self):
        return None if self.confusion is None else self.confusion["precision"]

    @property
    def recall(self):
        return None if self.confusion is None else self.confusion["recall"]


def _confusion(flagged, bad):
    """Bad-edge detection scores: an edge is flagged when it is removed."""
    tp = int(np.sum(flagged & bad))
    fp = int(np.sum(flagged & ~bad))
    fn = int(np.sum(~flagged & bad))
    tn = int(np.sum(~flagged & ~bad))
    # empty denominators: nothing to find / nothing flagged counts as perfect
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "precision": precision, "recall": recall}


def clean_edges(s_final, tau: float, graph: MeasurementGraph | None = None, n: int | None = None,
                edges=None, stalled=None, bad=None) -> CleaningResult:
    """Keep edges with s_ij <= tau, minus edges flagged ``stalled`` as triangle-free.

    ``graph`` (or ``n`` and ``edges``) is needed for the component partition;
    ``bad`` labels add a confusion matrix on detecting corrupted edges.
    """
    if not 0 <= tau <= 1:
        raise ValueError(f"threshold must lie in [0, 1], got {tau}")
    s = np.asarray(s_final, dtype=float)
    kept = s <= tau
    if stalled is not None:
        kept &= ~np.asarray(stalled, dtype=bool)
    if graph is not None:
        n, edges = graph.n, graph.edges
    if n is not None and edges is not None:
        count, labels = check_connectivity(np.asarray(edges)[kept], n)
    else:
        count, labels = 0, np.zeros(0, dtype=np.int64)
    conf = _confusion(~kept, np.asarray(bad, dtype=bool)) if bad is not None else None
    return CleaningResult(kept, float(tau), count, labels, conf)


# values below this are rounding residue of exact zeros
GAP_FLOOR = 1e-13


def gap_threshold(s, scale: str = "log") -> float:
    """Midpoint of the largest gap between consecutive sorted values.

    On the default log scale (values floored at GAP_FLOOR) the midpoint is a
    geometric mean.  Converged good edges sit at rounding level while
    corruption levels of bad edges can be anywhere in (0, 1], so linear gaps
    between neighbouring bad edges would otherwise win.
    """
    if scale not in ("log", "linear"):
        raise ValueError("scale must be 'log' or 'linear'")
    v = np.asarray(s, dtype=float)
    if scale == "log":
        v = np.log10(np.maximum(v, GAP_FLOOR))
    v = np.unique(v)
    if v.size < 2:
        tau = float(v[0]) if v.size else 0.5
    else:
        k = int(np.argmax(np.diff(v)))
        tau = float(0.5 * (v[k] + v[k + 1]))
    if scale == "log":
        tau = float(10.0 ** tau) if v.size else 0.5
    log.info("gap threshold %.6g (%s scale)", tau, scale)
    return min(max(tau, 0.0), 1.0)


def solve_tree(graph: MeasurementGraph, kept=None, root: int = 0) -> np.ndarray:
    """Absolute elements from a BFS spanning tree of the kept edges.

    g_root = e and g_i = g_ij g_j for a tree edge from parent j to child i,
    so every tree edge satisfies g_ij = g_i g_j^-1 exactly.
    """
    g = graph.group
    mask = np.ones(graph.m, dtype=bool) if kept is None else np.asarray(kept, dtype=bool)
    edges = graph.edges[mask]
    ids = np.flatnonzero(mask)
    count, labels = check_connectivity(edges, graph.n)
    if count != 1:
        comps = [np.flatnonzero(labels == c).tolist() for c in range(count)]
        raise DisconnectedError(comps)

    adj = [[] for _ in range(graph.n)]
    for e, (i, j) in zip(ids, edges):
        adj[i].append((j, e))
        adj[j].append((i, e))
    est = g.identity(graph.n)
    est = np.array(est)
    seen = np.zeros(graph.n, dtype=bool)
    seen[root] = True
    queue = deque([root])
    ratios = graph.ratios
    while queue:
        j = queue.popleft()
        for i, e in adj[j]:
            if seen[i]:
                continue
            seen[i] = True
            # ratio stored for (a, b) with a < b; g_ij = r_e if i < j else r_e^-1
            r = ratios[e] if i < j else g.inverse(ratios[e])
            est[i] = g.compose(r, est[j])
            queue.append(i)
    return g.canonical(est)


@dataclass(frozen=True, eq=False)
class Alignment:
    estimates: np.ndarray
    errors: np.ndarray
    max_error: float
    mean_error: float


def align_and_score(group: Group, estimates, truth) -> Alignment:
    """Remove the global right action using node 0 as anchor, then score per node."""
    est = np.asarray(estimates)
    truth = np.asarray(truth)
    if len(est) != len(truth):
        raise ValueError("estimates and truth differ in length")
    if len(est) == 0:
        return Alignment(est, np.zeros(0), 0.0, 0.0)
    h = group.compose(group.inverse(truth[:1]), est[:1])
    aligned = group.compose(est, group.inverse(np.repeat(h, len(est), axis=0)))
    err = np.asarray(group.distance(aligned, truth), dtype=float)
    return Alignment(aligned, err, float(err.max()), float(err.mean()))


def ratios_from_elements(group: Group, elements, edges) -> np.ndarray:
    """g_i g_j^-1 for each edge (the forward map of synchronization)."""
    edges = np.asarray(edges)
    return group.compose(elements[edges[:, 0]], group.inverse(elements[edges[:, 1]]))
