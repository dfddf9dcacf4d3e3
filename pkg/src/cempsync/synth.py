"""Ground-truth instance generation.

Good edges carry g*_i g*_j^{-1} (optionally right-multiplied by a noise
element), bad edges carry a replacement.  An edge counts as bad only when
its corruption level s*_ij = d(g_ij, g*_i g*_j^{-1}) is positive, so a
Haar replacement that happens to hit the true ratio (possible in Z2 and
S_N) is good.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .graphs import (MeasurementGraph, bad_mask_from_pairs, check_connectivity,
                     lambda_from_adjacency, sample_er)
from .groups import Group, GroupElement

__all__ = [
    "SyntheticInstance", "true_ratios", "corruption_levels",
    "make_adversarial", "make_random_adversarial", "make_ucm", "inject_noise",
    "HALF_NORMAL_MEAN",
]

log = logging.getLogger(__name__)

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


def true_ratios(group: Group, truth, edges) -> np.ndarray:
    edges = np.asarray(edges)
    return group.compose(truth[edges[:, 0]], group.inverse(truth[edges[:, 1]]))


def corruption_levels(graph: MeasurementGraph, truth) -> np.ndarray:
    """s*_ij for every edge, recomputed from the ratios and the ground truth."""
    g = graph.group
    return np.asarray(g.distance(graph.ratios, true_ratios(g, truth, graph.edges)), dtype=float)


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    graph: MeasurementGraph
    truth: np.ndarray
    bad: np.ndarray
    s_star: np.ndarray
    noise: dict = field(default_factory=lambda: {"kind": "none"})
    meta: dict = field(default_factory=dict)

    @property
    def group(self) -> Group:
        return self.graph.group

    @property
    def good(self) -> np.ndarray:
        return ~self.bad

    def lambda_stats(self):
        return lambda_from_adjacency(self.graph.n, self.graph.edges, self.bad)

    def bad_pairs(self) -> list[list[int]]:
        return self.graph.edges[self.bad].tolist()

    def sidecar(self) -> dict:
        lam = self.lambda_stats()
        return {
            "q": self.meta.get("q"),
            "q_star": self.meta.get("q_star"),
            "q_g": self.meta.get("q_g"),
            "lambda": lam.lam,
            "min_N": lam.min_N,
            "good_cycle_ok": lam.good_cycle_ok,
            "good_connected": check_connectivity(self.graph.edges[self.good], self.graph.n)[0] == 1,
            "noise": dict(self.noise),
            "seed": self.meta.get("seed"),
            "model": self.meta.get("model"),
        }


def _seed_value(seed):
    # a Generator passed through from a caller is not serializable; the caller records its own seed
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def _finish(graph, truth, candidates, noise=None, meta=None):
    s_star = corruption_levels(graph, truth)
    bad = candidates & (s_star > 0)
    return SyntheticInstance(graph, truth, bad, s_star,
                             noise=noise or {"kind": "none"}, meta=meta or {})


def make_adversarial(n: int, edges, group: Group, truth=None, bad_set=(),
                     bad_sampler="worst", seed=None) -> SyntheticInstance:
    """Exact ratios on good edges, replacements on ``bad_set``.

    ``bad_set`` is a boolean mask over edges or an iterable of (i, j) pairs.
    ``bad_sampler`` is ``"haar"``, ``"worst"`` (distance exactly 1 from the
    true ratio) or a fixed :class:`GroupElement` used as the replacement.
    """
    rng = np.random.default_rng(seed)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if truth is None:
        truth = group.sample(rng, n)
    truth = group.canonical(truth)
    if isinstance(bad_set, np.ndarray) and bad_set.dtype == bool:
        if bad_set.shape != (len(edges),):
            raise ValueError("bad mask must have one entry per edge")
        cand = bad_set.copy()
    else:
        cand = bad_mask_from_pairs(n, edges, bad_set)

    ratios = np.array(true_ratios(group, truth, edges))
    nb = int(cand.sum())
    if nb:
        if isinstance(bad_sampler, GroupElement):
            if bad_sampler.group != group:
                raise TypeError(f"fixed replacement lives in {bad_sampler.group!r}, instance group is {group!r}")
            ratios[cand] = bad_sampler.value
        elif bad_sampler == "haar":
            ratios[cand] = group.sample(rng, nb)
        elif bad_sampler == "worst":
            ratios[cand] = group.compose(ratios[cand], group.worst(rng, nb))
        else:
            raise ValueError(f"unknown bad_sampler {bad_sampler!r}")
    graph = MeasurementGraph(n, edges, ratios, group)
    meta = {"model": "adversarial", "seed": _seed_value(seed), "bad_sampler": bad_sampler if isinstance(bad_sampler, str) else "fixed"}
    return _finish(graph, truth, cand, meta=meta)


def make_random_adversarial(n: int, p: float, group: Group, bad_fraction: float,
                            bad_sampler="haar", seed=None) -> SyntheticInstance:
    """ER(n, p) graph with a uniformly random subset of edges replaced."""
    rng = np.random.default_rng(seed)
    edges = sample_er(n, p, rng)
    cand = rng.random(len(edges)) < bad_fraction
    inst = make_adversarial(n, edges, group, truth=group.sample(rng, n), bad_set=cand,
                            bad_sampler=bad_sampler, seed=rng)
    return replace(inst, meta={**inst.meta, "seed": _seed_value(seed), "p": p, "bad_fraction": bad_fraction})


def make_ucm(n: int, p: float, q: float, group: Group, seed=None) -> SyntheticInstance:
    """Uniform corruption model UCM(n, p, q): each ratio replaced by a Haar draw with probability q."""
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    rng = np.random.default_rng(seed)
    edges = sample_er(n, p, rng)
    truth = group.sample(rng, n)
    ratios = np.array(true_ratios(group, truth, edges))
    replaced = rng.random(len(edges)) < q
    if replaced.any():
        ratios[replaced] = group.sample(rng, int(replaced.sum()))
    graph = MeasurementGraph(n, edges, ratios, group)
    p0 = group.stats(0.0).p0
    meta = {"model": "ucm", "n": n, "p": p, "q": q, "q_star": 1 - q + q * p0, "q_g": 1 - q, "seed": _seed_value(seed)}
    return _finish(graph, truth, replaced, meta=meta)


def inject_noise(inst: SyntheticInstance, kind: str = "bounded", *, delta=None, sigma=None,
                 seed=None) -> SyntheticInstance:
    """Right-multiply every good ratio by a perturbation g_eps with d(g_eps, e) = s.

    bounded:     s ~ Uniform[0, delta]
    subgaussian: s = sigma * |Z|, truncated at 1 (half-normal, mean sigma * sqrt(2/pi))
    """
    g = inst.group
    if not g.is_continuous:
        raise ValueError(
            f"noise of prescribed size needs a continuous group; {g.tag} corruption levels are "
            "discrete, so the bounded-noise guarantee does not apply")
    rng = np.random.default_rng(seed)
    good = inst.good
    ng = int(good.sum())
    if kind == "bounded":
        if delta is None or not 0 <= delta <= 0.5:
            raise ValueError("bounded noise needs 0 <= delta <= 1/2")
        noise = {"kind": "bounded", "delta": float(delta), "seed": _seed_value(seed)}
        if delta == 0:
            return replace(inst, noise=noise)
        s = rng.uniform(0.0, delta, size=ng)
    elif kind == "subgaussian":
        if sigma is None or sigma < 0:
            raise ValueError("subgaussian noise needs sigma >= 0")
        noise = {"kind": "subgaussian", "sigma": float(sigma), "mu": HALF_NORMAL_MEAN,
                 "family": "half-normal", "seed": _seed_value(seed)}
        if sigma == 0:
            return replace(inst, noise=noise)
        s = sigma * np.abs(rng.standard_normal(ng))
        over = s > 1.0
        if over.any():
            log.warning("truncated %d noise distances at the group diameter", int(over.sum()))
            noise["truncated"] = int(over.sum())
            s = np.minimum(s, 1.0)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")

    ratios = np.array(inst.graph.ratios)
    ratios[good] = g.compose(ratios[good], g.at_distance(rng, s))
    graph = MeasurementGraph(inst.graph.n, inst.graph.edges, ratios, g)
    s_star = corruption_levels(graph, inst.truth)
    return replace(inst, graph=graph, s_star=s_star, noise=noise)
