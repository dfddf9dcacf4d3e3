"""Cycle-edge message passing on 3-cycles.

Every edge ij keeps a corruption estimate s_ij(t).  Each iteration
re-estimates s_ij as a weighted average of the cycle inconsistencies
d_{ij,k} over the triangles ijk, where the weight of triangle k depends on
the current estimates of its two other edges ik and jk:

    rule A:  1{s_ik(t) <= 1/beta_t and s_jk(t) <= 1/beta_t}
    rule B:  exp(-beta_t (s_ik(t) + s_jk(t)))

All edges are updated simultaneously from the previous state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .graphs import MeasurementGraph, TriangleIndex, build_triangle_index

__all__ = [
    "InconsistencyTable", "CempState", "TraceRow",
    "BetaSchedule", "ExpGrowth", "RecursionA", "RecursionB", "Explicit",
    "compute_inconsistencies", "init_state", "step", "step_weights", "run", "cemp",
]


# -- schedules ---------------------------------------------------------------

class BetaSchedule:
    """beta_t for t = 0, 1, ...; ``length`` is None for unbounded schedules."""

    length: int | None = None

    def beta(self, t: int) -> float:
        raise NotImplementedError

    def values(self, T: int) -> list[float]:
        if self.length is not None and T > self.length:
            raise ValueError(f"schedule has {self.length} values, {T} requested")
        return [self.beta(t) for t in range(T)]

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExpGrowth(BetaSchedule):
    """beta_t = beta0 * r**t."""

    beta0: float
    r: float

    def __post_init__(self):
        if self.beta0 < 0 or self.r < 1:
            raise ValueError("ExpGrowth needs beta0 >= 0 and r >= 1")

    def beta(self, t):
        # tiny lambda gives huge defaults; past the float range beta is +inf
        try:
            return self.beta0 * self.r ** t
        except OverflowError:
            return math.inf

    def describe(self):
        return {"kind": "exp", "beta0": self.beta0, "r": self.r}


@dataclass(frozen=True)
class _Recursion(BetaSchedule):
    beta0: float
    lam: float
    delta: float

    def __post_init__(self):
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        object.__setattr__(self, "_inv", [1.0 / self.beta0])

    def _next_inv(self, inv):
        raise NotImplementedError

    def inverse_beta(self, t):
        inv = self._inv
        while len(inv) <= t:
            inv.append(self._next_inv(inv[-1]))
        return inv[t]

    def beta(self, t):
        inv = self.inverse_beta(t)
        return 1.0 / inv if inv > 0 else math.inf


class RecursionA(_Recursion):
    """1/beta_{t+1} = 4 lam / beta_t + (3 - 4 lam) delta."""

    def _next_inv(self, inv):
        return 4 * self.lam * inv + (3 - 4 * self.lam) * self.delta

    def fixed_point(self):
        return (3 - 4 * self.lam) * self.delta / (1 - 4 * self.lam)

    def describe(self):
        return {"kind": "recursion_a", "beta0": self.beta0, "lambda": self.lam, "delta": self.delta}


class RecursionB(_Recursion):
    """1/beta_{t+1} = 10 delta + 4 lam / ((1 - lam) beta_t)."""

    def _next_inv(self, inv):
        return 10 * self.delta + 4 * self.lam / (1 - self.lam) * inv

    def fixed_point(self):
        return 10 * (1 - self.lam) * self.delta / (1 - 5 * self.lam)

    def describe(self):
        return {"kind": "recursion_b", "beta0": self.beta0, "lambda": self.lam, "delta": self.delta}


@dataclass(frozen=True)
class Explicit(BetaSchedule):
    """A finite list of betas.

    Positivity is enforced.  Monotonicity is not: the uniform-corruption
    schedule for rule B starts with beta_0 > beta_1.
    """

    betas: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.betas)
        if not b or any(not v >= 0 for v in b):
            raise ValueError("explicit schedule needs a nonempty list of nonnegative betas")
        object.__setattr__(self, "betas", b)

    @property
    def length(self):
        return len(self.betas)

    @property
    def monotone(self):
        return all(a <= b for a, b in zip(self.betas, self.betas[1:]))

    def beta(self, t):
        if t >= len(self.betas):
            raise ValueError(f"schedule has {len(self.betas)} values, beta_{t} requested")
        return self.betas[t]

    def describe(self):
        return {"kind": "explicit", "betas": list(self.betas)}


def schedule_from_dict(d: dict) -> BetaSchedule:
    kind = d["kind"]
    if kind == "exp":
        return ExpGrowth(d["beta0"], d["r"])
    if kind == "recursion_a":
        return RecursionA(d["beta0"], d["lambda"], d["delta"])
    if kind == "recursion_b":
        return RecursionB(d["beta0"], d["lambda"], d["delta"])
    if kind == "explicit":
        return Explicit(tuple(d["betas"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


# -- inconsistencies -----------------------------------------------------------

# rounding floor for continuous groups: three compositions leave ~1e-16 on a
# consistent cycle, which would otherwise read as a tiny positive inconsistency
ZERO_FLOOR = 1e-13

@dataclass(frozen=True, eq=False)
class InconsistencyTable:
    """d_{ij,k} for every edge ij and k in N_ij, aligned with the index entries."""

    graph: MeasurementGraph
    index: TriangleIndex
    d: np.ndarray
    d_tri: np.ndarray

    @property
    def m(self):
        return self.index.m

    def segment(self, e):
        return self.d[self.index.offsets[e]:self.index.offsets[e + 1]]


def compute_inconsistencies(graph: MeasurementGraph, index: TriangleIndex | None = None) -> InconsistencyTable:
    """d = distance(g_ij g_jk g_ki, e) once per triangle, scattered to its three edges.

    The value does not depend on which edge is the base or on orientation,
    because the metric is bi-invariant and d(g, e) = d(g^-1, e).
    """
    if index is None:
        index = build_triangle_index(graph)
    g = graph.group
    r = graph.ratios
    # triangle i < j < k: g_ij g_jk g_ki with g_ki = g_ik^-1
    e_ij, e_jk, e_ik = index.tri_edges.T
    if len(e_ij):
        loop = g.compose(g.compose(r[e_ij], r[e_jk]), g.inverse(r[e_ik]))
        d_tri = np.clip(np.asarray(g.norm(loop), dtype=float), 0.0, 1.0)
        d_tri[d_tri < ZERO_FLOOR] = 0.0
    else:
        d_tri = np.zeros(0)
    return InconsistencyTable(graph, index, d_tri[index.entry_tri], d_tri)


# -- state and updates ---------------------------------------------------------

@dataclass(frozen=True)
class TraceRow:
    t: int
    beta_t: float | None
    eps_max: float | None
    eps_mean: float | None
    stalled_count: int


@dataclass(frozen=True, eq=False)
class CempState:
    s: np.ndarray
    t: int
    rule: str
    schedule: BetaSchedule
    stalled: np.ndarray
    trace: tuple = ()

    @property
    def stalled_edges(self) -> np.ndarray:
        return np.flatnonzero(self.stalled)


def _rule(rule: str) -> str:
    r = rule.upper()
    if r not in ("A", "B"):
        raise ValueError(f"rule must be A or B, got {rule!r}")
    return r


def _segment_sum(table, w):
    return np.bincount(table.index.entry_edge, weights=w, minlength=table.m)


def init_state(table: InconsistencyTable, rule: str, schedule: BetaSchedule) -> CempState:
    """s_ij(0) is the plain average of d_{ij,k}; triangle-free edges start at 1."""
    sizes = table.index.sizes
    total = _segment_sum(table, table.d)
    empty = sizes == 0
    s = np.where(empty, 1.0, total / np.where(empty, 1, sizes))
    return CempState(s=s, t=0, rule=_rule(rule), schedule=schedule, stalled=empty)


def _weights(state: CempState, table: InconsistencyTable, beta: float) -> np.ndarray:
    idx = table.index
    s_ik, s_jk = state.s[idx.e_ik], state.s[idx.e_jk]
    if state.rule == "A":
        thr = math.inf if beta == 0 else 1.0 / beta
        return ((s_ik <= thr) & (s_jk <= thr)).astype(float)
    if s_ik.size == 0:
        return np.zeros(0)
    if math.isinf(beta):
        # limit beta -> inf: all weight on the triangles with the smallest s_ik + s_jk
        tot = s_ik + s_jk
        low = np.full(table.m, np.inf)
        np.minimum.at(low, idx.entry_edge, tot)
        return (tot == low[idx.entry_edge]).astype(float)
    expo = beta * (s_ik + s_jk)
    # subtract each edge's smallest exponent: same normalized weights, no underflow to 0/0
    starts = idx.offsets[:-1][idx.sizes > 0]
    shift = np.zeros(table.m)
    shift[idx.sizes > 0] = np.minimum.reduceat(expo, starts)
    return np.exp(-(expo - shift[idx.entry_edge]))


def step_weights(state: CempState, table: InconsistencyTable) -> np.ndarray:
    """Normalized per-entry weights w_{ij,k}(t) used by the next step (instrumentation)."""
    w = _weights(state, table, state.schedule.beta(state.t))
    z = _segment_sum(table, w)
    return w / np.where(z > 0, z, 1.0)[table.index.entry_edge]


def step(state: CempState, table: InconsistencyTable) -> CempState:
    beta = state.schedule.beta(state.t)
    w = _weights(state, table, beta)
    num = _segment_sum(table, w * table.d)
    den = _segment_sum(table, w)
    stalled = den <= 0
    s = np.where(stalled, state.s, num / np.where(stalled, 1.0, den))
    # convex combination of values in [0, 1]; clip rounding excursions
    s = np.clip(s, 0.0, 1.0)
    return replace(state, s=s, t=state.t + 1, stalled=stalled)


def _trace_row(state, s_star):
    try:
        beta = state.schedule.beta(state.t)
    except ValueError:
        beta = None
    if s_star is None:
        return TraceRow(state.t, beta, None, None, int(state.stalled.sum()))
    err = np.abs(state.s - s_star)
    return TraceRow(state.t, beta, float(err.max()) if err.size else 0.0,
                    float(err.mean()) if err.size else 0.0, int(state.stalled.sum()))


def run(table: InconsistencyTable, rule: str, schedule: BetaSchedule, T: int,
        s_star: Sequence[float] | None = None) -> CempState:
    """Initialize and apply T simultaneous updates.

    With ``s_star`` the trace records eps(t) = max_ij |s_ij(t) - s*_ij| for
    t = 0..T.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if schedule.length is not None and schedule.length < T:
        raise ValueError(f"schedule has {schedule.length} betas but T = {T} steps were requested")
    if s_star is not None:
        s_star = np.asarray(s_star, dtype=float)
        if s_star.shape != (table.m,):
            raise ValueError("s_star must have one value per edge")
    state = init_state(table, rule, schedule)
    trace = [_trace_row(state, s_star)]
    for _ in range(T):
        state = step(state, table)
        trace.append(_trace_row(state, s_star))
    return replace(state, trace=tuple(trace))


def cemp(graph: MeasurementGraph, rule: str, schedule: BetaSchedule, T: int, s_star=None) -> CempState:
    """Convenience wrapper: index, inconsistencies and run in one call."""
    return run(compute_inconsistencies(graph), rule, schedule, T, s_star)
