"""Glue shared by the CLI and the experiments: schedule resolution and scoring."""

from __future__ import annotations

import logging

from .cemp import CempState, ExpGrowth, Explicit, run, compute_inconsistencies
from .groups import Group
from .recovery import align_and_score, clean_edges, gap_threshold, solve_tree
from .synth import SyntheticInstance
from .theory import FeasibilityReport, ScheduleRequest, build_schedule, build_ucm_schedule

__all__ = ["resolve_schedule", "default_threshold", "evaluate", "run_instance"]

log = logging.getLogger(__name__)


def resolve_schedule(mode: str, rule: str, T: int, *, group: Group | None = None, lam=None,
                     noise: dict | None = None, q=None, beta0=None, r=None, betas=None) -> FeasibilityReport:
    """Turn a schedule spec into a report.

    auto      guaranteed schedule for the instance's noise regime (needs lambda)
    explicit  beta_t = beta0 r^t, or a literal list ``betas``; no hypothesis check
    ucm       uniform-corruption schedule (needs q and the group)
    """
    if mode == "explicit":
        if betas:
            sched = Explicit(tuple(betas))
        elif beta0 is not None and r is not None:
            sched = ExpGrowth(beta0, r)
        else:
            raise ValueError("explicit schedule needs --beta0 and --r, or --betas")
        return FeasibilityReport(True, (), sched, None, None,
                                 {"regime": "explicit", "rule": rule.upper(), "T": T})
    if mode == "ucm":
        if q is None or group is None:
            raise ValueError("ucm schedule needs q (from --q or the instance meta) and the group")
        return build_ucm_schedule(q, group, rule, 0.5 if r is None else r, T)
    if mode != "auto":
        raise ValueError(f"unknown schedule mode {mode!r}")
    if lam is None:
        raise ValueError("auto schedule needs lambda: give --lam or an instance with ground truth")
    noise = noise or {"kind": "none"}
    kind = noise.get("kind", "none")
    if kind == "none":
        req = ScheduleRequest("noiseless", rule, lam, r, T, beta0)
    elif kind == "bounded":
        req = ScheduleRequest("bounded", rule, lam, r, T, beta0, delta=noise["delta"])
    elif kind == "subgaussian":
        req = ScheduleRequest("subgaussian", rule, lam, r, T, beta0, sigma=noise["sigma"])
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return build_schedule(req)


def default_threshold(report: FeasibilityReport, state: CempState, T: int) -> tuple[float, str]:
    """1/beta_T after a guaranteed schedule, otherwise the gap heuristic."""
    regime = report.info.get("regime")
    if regime in ("noiseless", "bounded", "subgaussian", "explicit"):
        try:
            beta_T = report.schedule.beta(T)
        except ValueError:
            beta_T = None
        if beta_T and beta_T > 0:
            return min(1.0, 1.0 / beta_T), "1/beta_T"
    return gap_threshold(state.s), "gap"


def evaluate(inst: SyntheticInstance, state: CempState, tau: float) -> dict:
    """Cleaning scores against the labels and alignment errors after tree recovery."""
    cl = clean_edges(state.s, tau, inst.graph, stalled=state.stalled, bad=inst.bad)
    out = {"precision": cl.precision, "recall": cl.recall, "kept": cl.kept_count,
           "threshold": cl.threshold, "max_align_error": None, "mean_align_error": None,
           "connected": cl.n_components == 1}
    if cl.n_components == 1:
        est = solve_tree(inst.graph, cl.kept)
        al = align_and_score(inst.group, est, inst.truth)
        out["max_align_error"] = al.max_error
        out["mean_align_error"] = al.mean_error
    else:
        log.info("kept edges are disconnected (%d components); skipping recovery", cl.n_components)
    return out


def run_instance(inst: SyntheticInstance, rule: str, report: FeasibilityReport, T: int, tau=None):
    """Run CEMP on a synthetic instance and score it; returns (state, metrics)."""
    table = compute_inconsistencies(inst.graph)
    state = run(table, rule, report.schedule, T, inst.s_star)
    if tau is None:
        tau, how = default_threshold(report, state, T)
    else:
        how = "given"
    metrics = evaluate(inst, state, tau)
    metrics["threshold_rule"] = how
    metrics["eps_max"] = state.trace[-1].eps_max
    metrics["eps_mean"] = state.trace[-1].eps_mean
    metrics["stalled"] = int(state.stalled.sum())
    return state, metrics
