"""Parameter schedules with checked hypotheses.

Every builder returns a :class:`FeasibilityReport`.  When the hypotheses of
the matching convergence guarantee hold, the report carries a schedule and
the guaranteed bound on eps(t) = max_ij |s_ij(t) - s*_ij|; otherwise it
names each violated inequality together with both of its sides.

Regimes
-------
noiseless    adversarial corruption, exact good ratios
bounded      adversarial corruption plus noise with d(g_eps, e) <= delta
subgaussian  noise distance sigma-sub-Gaussian with mean sigma*mu; reduced to
             bounded noise with inflated (lambda, delta)
ucm          uniform corruption model, schedule built from group statistics
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cemp import BetaSchedule, Explicit, ExpGrowth, RecursionA, RecursionB
from .groups import Group
from .synth import HALF_NORMAL_MEAN

__all__ = [
    "ScheduleRequest", "FeasibilityReport", "Violation",
    "build_schedule", "build_ucm_schedule", "subgaussian_substitution", "audit",
    "LAMBDA_FALLBACK", "NOISY_MARGIN",
]

# defaults are built from 1/lambda; with no corrupted cycles at all any
# beta0 > 1 works, so a nominal lambda stands in for the construction only
LAMBDA_FALLBACK = 0.05
# noisy regimes: 1/beta0 is set this factor above the largest lower bound
NOISY_MARGIN = 1.05
BISECT_RTOL = 1e-9


@dataclass(frozen=True)
class Violation:
    name: str       # the condition that should hold, e.g. "λ < 1/4"
    lhs: float
    rhs: float

    def __str__(self):
        return f"{self.name} violated (lhs={self.lhs:.6g}, rhs={self.rhs:.6g})"


@dataclass(frozen=True)
class ScheduleRequest:
    regime: str = "noiseless"
    rule: str = "A"
    lam: float | None = None
    r: float | None = None
    T: int = 10
    beta0: float | None = None
    delta: float = 0.0
    sigma: float = 0.0
    x: float | None = None
    q: float | None = None
    group: Group | None = None

    def __post_init__(self):
        object.__setattr__(self, "rule", self.rule.upper())
        if self.rule not in ("A", "B"):
            raise ValueError(f"rule must be A or B, got {self.rule!r}")
        if self.regime not in ("noiseless", "bounded", "subgaussian", "ucm"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime != "ucm":
            if self.lam is None or not 0 <= self.lam <= 1:
                raise ValueError("lambda must be given and lie in [0, 1]")
        if not 0 <= self.delta <= 0.5:
            raise ValueError("delta must lie in [0, 1/2]")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.beta0 is not None and not self.beta0 > 0:
            raise ValueError("beta0 must be positive")


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violated: tuple = ()
    schedule: BetaSchedule | None = None
    bound: Callable[[int], float] | None = None
    asymptotic: float | None = None
    info: dict = field(default_factory=dict)

    def predicted_bound(self, t: int) -> float | None:
        return None if self.bound is None else float(self.bound(t))

    @property
    def message(self) -> str:
        if self.feasible:
            return "feasible"
        return "; ".join(str(v) for v in self.violated)

    def betas(self, T: int | None = None) -> list[float]:
        T = self.info.get("T") if T is None else T
        return self.schedule.values(T) if self.schedule is not None else []


def _infeasible(violated, **info):
    return FeasibilityReport(False, tuple(violated), info=info)


def _geom_mid(lo, hi):
    return math.sqrt(lo * hi)


# -- noiseless ---------------------------------------------------------------

def _noiseless(req: ScheduleRequest) -> FeasibilityReport:
    lam = req.lam
    if req.rule == "A":
        if not lam < 0.25:
            return _infeasible([Violation("λ < 1/4", lam, 0.25)], lam=lam)
        lam_d = lam if lam > 0 else LAMBDA_FALLBACK
        beta0 = req.beta0 if req.beta0 is not None else 1.0 / lam_d
        r_hi = 1.0 / (4 * lam) if lam > 0 else math.inf
        r = req.r if req.r is not None else _geom_mid(1.0, 1.0 / (4 * lam_d))
        checks = [Violation("β0 > 1", beta0, 1.0), Violation("r > 1", r, 1.0),
                  Violation("r < 1/(4λ)", r, r_hi)]
        if lam > 0:
            checks.insert(1, Violation("β0 ≤ 1/λ", beta0, 1.0 / lam))
        bound = lambda t: 1.0 / (beta0 * r ** t)
    else:
        if not lam < 0.2:
            return _infeasible([Violation("λ < 1/5", lam, 0.2)], lam=lam)
        lam_d = lam if lam > 0 else LAMBDA_FALLBACK
        beta0 = req.beta0 if req.beta0 is not None else 1.0 / (4 * lam_d)
        r_hi = (1 - lam) / (4 * lam) if lam > 0 else math.inf
        r = req.r if req.r is not None else _geom_mid(1.0, (1 - lam_d) / (4 * lam_d))
        checks = [Violation("r > 1", r, 1.0), Violation("r < (1-λ)/(4λ)", r, r_hi)]
        if lam > 0:
            checks.insert(0, Violation("β0 ≤ 1/(4λ)", beta0, 1.0 / (4 * lam)))
        bound = lambda t: 1.0 / (4 * beta0 * r ** t)
    bad = [v for v in checks if not _holds(v)]
    info = {"regime": "noiseless", "rule": req.rule, "lam": lam, "beta0": beta0, "r": r, "T": req.T}
    if bad:
        return _infeasible(bad, **info)
    return FeasibilityReport(True, (), ExpGrowth(beta0, r), bound, 0.0, info)


def _holds(v: Violation) -> bool:
    """Evaluate a named inequality from its operator."""
    name = v.name
    if " ≤ " in name:
        return v.lhs <= v.rhs
    if " ≥ " in name:
        return v.lhs >= v.rhs
    if " < " in name:
        return v.lhs < v.rhs
    if " > " in name:
        return v.lhs > v.rhs
    raise ValueError(f"cannot parse condition {name!r}")


# -- bounded noise ---------------------------------------------------------------

def _bounded(req: ScheduleRequest, lam: float, delta: float, regime="bounded", extra=None) -> FeasibilityReport:
    info = {"regime": regime, "rule": req.rule, "lam": lam, "delta": delta, "T": req.T, **(extra or {})}
    if req.rule == "A":
        if not lam < 0.25:
            return _infeasible([Violation("λ < 1/4", lam, 0.25)], **info)
        if not delta <= 0.5:
            return _infeasible([Violation("δ ≤ 1/2", delta, 0.5)], **info)
        lower = max((3 - 4 * lam) * delta / (1 - 4 * lam), lam + 3 * delta)
        if lower == 0:
            return _noiseless(ScheduleRequest("noiseless", "A", lam, req.r, req.T, req.beta0))
        beta0 = req.beta0 if req.beta0 is not None else 1.0 / (NOISY_MARGIN * lower)
        checks = [Violation("1/β0 > max{(3-4λ)δ/(1-4λ), λ+3δ}", 1.0 / beta0, lower)]
        sched = RecursionA(beta0, lam, delta)
        bound = lambda t: sched.inverse_beta(t) - delta
        asym = ((3 - 4 * lam) / (1 - 4 * lam) - 1) * delta
    else:
        if not lam < 0.2:
            return _infeasible([Violation("λ < 1/5", lam, 0.2)], **info)
        if not delta <= 0.5:
            return _infeasible([Violation("δ ≤ 1/2", delta, 0.5)], **info)
        lower = max(5 * (1 - lam) * delta / (2 * (1 - 5 * lam)), lam + 2.5 * delta)
        if lower == 0:
            return _noiseless(ScheduleRequest("noiseless", "B", lam, req.r, req.T, req.beta0))
        beta0 = req.beta0 if req.beta0 is not None else 1.0 / (4 * NOISY_MARGIN * lower)
        checks = [Violation("1/(4β0) > max{5(1-λ)δ/(2(1-5λ)), λ+5δ/2}", 1.0 / (4 * beta0), lower)]
        sched = RecursionB(beta0, lam, delta)
        bound = lambda t: sched.inverse_beta(t) / 4 - delta / 2
        asym = (2.5 * (1 - lam) / (1 - 5 * lam) - 0.5) * delta
    info.update(beta0=beta0, fixed_point=sched.fixed_point())
    bad = [v for v in checks if not _holds(v)]
    if bad:
        return _infeasible(bad, **info)
    return FeasibilityReport(True, (), sched, bound, asym, info)


def subgaussian_substitution(lam: float, sigma: float, x: float, mu: float = HALF_NORMAL_MEAN):
    """(lambda', delta') = (lambda + 2 exp(-x^2/2), sigma*mu + sigma*x)."""
    return lam + 2 * math.exp(-x * x / 2), sigma * mu + sigma * x


def _subgaussian(req: ScheduleRequest) -> FeasibilityReport:
    if req.x is not None:
        xs = [req.x]
    else:
        # no preferred x: scan and keep the feasible one with the smallest asymptotic bound
        xs = [float(v) for v in np.round(np.arange(0.5, 8.0001, 0.05), 10)]
    best = None
    for x in xs:
        lam2, delta2 = subgaussian_substitution(req.lam, req.sigma, x)
        extra = {"x": x, "sigma": req.sigma, "mu": HALF_NORMAL_MEAN, "lam_raw": req.lam}
        rep = _bounded(req, lam2, delta2, regime="subgaussian", extra=extra)
        if best is None or (rep.feasible and (not best.feasible or rep.asymptotic < best.asymptotic)):
            best = rep
    return best


# -- uniform corruption model ------------------------------------------------------

def _bisect(pred, lo, hi):
    """Largest value in [lo, hi] with pred true, given pred(lo) and not pred(hi) (monotone)."""
    while hi - lo > BISECT_RTOL * max(abs(lo), 1e-300):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_ucm_schedule(q: float, group: Group, rule: str = "A", r: float = 0.5, T: int = 10) -> FeasibilityReport:
    """Explicit schedule for UCM(n, p, q) from the group's Haar statistics.

    Both rules shrink 1/beta_t geometrically with ratio r in (0, 1) after t = 1.
    rule A: beta_1 is the smallest value with P_max(2/beta_1) < thr and
            1/beta_0 = (1 - q_g^2) z + q_g^2 / (4 beta_1)
    rule B: beta_1 is the smallest value with V(beta_1) < thr and
            1/beta_0 = q_g^2 q*^2 / (16 (1 - q*^2)) / beta_1
    where thr = (r/32) q*^2 / (1 - q*^2).
    """
    rule = rule.upper()
    if rule not in ("A", "B"):
        raise ValueError(f"rule must be A or B, got {rule!r}")
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1) for the uniform corruption schedule")
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    info = {"regime": "ucm", "rule": rule, "q": q, "group": group.tag, "r": r, "T": T}
    if q >= 1:
        return _infeasible([Violation("q < 1 (exact recovery is ill-posed at q = 1)", q, 1.0)], **info)
    stats = group.stats(0.0)
    q_star = 1 - q + q * stats.p0
    q_g = 1 - q
    st = group.stats(q_star)
    info.update(q_star=q_star, q_g=q_g, z=st.z)
    if st.degenerate:
        # nothing is corrupted: every cycle is good from the start
        return _noiseless(ScheduleRequest("noiseless", rule, 0.0, None, T))
    thr = (r / 32) * q_star ** 2 / (1 - q_star ** 2)
    info["threshold"] = thr

    if rule == "A":
        f = lambda x: st.p_max(x) < thr
        if f(2.0):
            x = 2.0            # P_max never reaches thr on [0, 1]
        elif not f(1e-300):
            return _infeasible([Violation("P_max(2/β1) < r q*^2/(32 (1-q*^2))", st.p_max(0.0), thr)], **info)
        else:
            x = _bisect(f, 0.0, 2.0)
        beta1 = 2.0 / x
        base = (1 - q_g ** 2) * st.z
        inv0 = base + q_g ** 2 / (4 * beta1) * (1 - 1e-9)
        bound = lambda t: 1.0 / beta1 * r ** (t - 1) if t >= 1 else 1.0
    else:
        f = lambda b: st.V(b) < thr
        hi = 1.0
        while not f(hi):
            hi *= 2
            if hi > 1e300:
                return _infeasible([Violation("V(β1) < r q*^2/(32 (1-q*^2))", st.V(hi), thr)], **info)
        lo = hi / 2 if hi > 1.0 else 0.0
        # smallest beta_1 with V(beta_1) < thr: bisect on the complementary predicate
        beta1 = hi if lo == 0.0 else _smallest(f, lo, hi)
        inv0 = q_g ** 2 * q_star ** 2 / (16 * (1 - q_star ** 2)) / beta1
        bound = lambda t: 1.0 / (4 * beta1) * r ** (t - 1) if t >= 1 else 1.0
    betas = [1.0 / inv0] + [beta1 / r ** (t - 1) for t in range(1, T)]
    info.update(beta0=betas[0], beta1=beta1)
    rep = FeasibilityReport(True, (), Explicit(tuple(betas)), bound, 0.0, info)
    problems = audit(rep, group=group)
    if problems:
        raise AssertionError("schedule failed its own audit: " + "; ".join(map(str, problems)))
    return rep


def _smallest(pred, lo, hi):
    """Smallest value in [lo, hi] with pred true, given not pred(lo) and pred(hi)."""
    while hi - lo > BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


# -- dispatch and audit ---------------------------------------------------------------

def build_schedule(req: ScheduleRequest) -> FeasibilityReport:
    if req.regime == "noiseless":
        rep = _noiseless(req)
    elif req.regime == "bounded":
        rep = _bounded(req, req.lam, req.delta)
    elif req.regime == "subgaussian":
        rep = _subgaussian(req)
    else:
        if req.q is None or req.group is None:
            raise ValueError("ucm regime needs q and group")
        return build_ucm_schedule(req.q, req.group, req.rule, 0.5 if req.r is None else req.r, req.T)
    if rep.feasible:
        problems = audit(rep)
        if problems:
            raise AssertionError("schedule failed its own audit: " + "; ".join(map(str, problems)))
    return rep


def audit(rep: FeasibilityReport, group: Group | None = None, T: int | None = None) -> list[Violation]:
    """Re-derive the hypotheses from the schedule itself and return any that fail."""
    if not rep.feasible:
        return []
    info = rep.info
    T = T or info.get("T", 10)
    betas = rep.schedule.values(T)
    out = []
    regime, rule = info["regime"], info["rule"]
    if regime == "noiseless":
        lam, b0 = info["lam"], betas[0]
        ratios = [b / a for a, b in zip(betas, betas[1:]) if math.isfinite(b)]
        if rule == "A":
            out += [Violation("λ < 1/4", lam, 0.25), Violation("β0 > 1", b0, 1.0)]
            if lam > 0:
                out += [Violation("β0 ≤ 1/λ", b0, 1 / lam)]
                out += [Violation("r < 1/(4λ)", r, 1 / (4 * lam)) for r in ratios]
        else:
            out += [Violation("λ < 1/5", lam, 0.2)]
            if lam > 0:
                out += [Violation("β0 ≤ 1/(4λ)", b0, 1 / (4 * lam))]
                out += [Violation("r < (1-λ)/(4λ)", r, (1 - lam) / (4 * lam)) for r in ratios]
        out += [Violation("r > 1", r, 1.0) for r in ratios]
    elif regime in ("bounded", "subgaussian"):
        lam, delta = info["lam"], info["delta"]
        inv = [1 / b for b in betas]
        if rule == "A":
            lower = max((3 - 4 * lam) * delta / (1 - 4 * lam), lam + 3 * delta)
            out += [Violation("λ < 1/4", lam, 0.25), Violation("1/β0 > max{(3-4λ)δ/(1-4λ), λ+3δ}", inv[0], lower)]
            nxt = [4 * lam * a + (3 - 4 * lam) * delta for a in inv[:-1]]
        else:
            lower = max(5 * (1 - lam) * delta / (2 * (1 - 5 * lam)), lam + 2.5 * delta)
            out += [Violation("λ < 1/5", lam, 0.2), Violation("1/(4β0) > max{5(1-λ)δ/(2(1-5λ)), λ+5δ/2}", inv[0] / 4, lower)]
            nxt = [10 * delta + 4 * lam / (1 - lam) * a for a in inv[:-1]]
        out += [Violation("1/β_t+1 ≤ recursion(1/β_t) (1e-12 rel)", b, a * (1 + 1e-12)) for a, b in zip(nxt, inv[1:])]
        out += [Violation("1/β_t+1 ≤ 1/β_t", b, a) for a, b in zip(inv, inv[1:])]
    elif regime == "ucm":
        if group is None:
            raise ValueError("auditing a ucm schedule needs the group")
        q_star, q_g, z, r, thr = info["q_star"], info["q_g"], info["z"], info["r"], info["threshold"]
        st = group.stats(q_star)
        b1 = betas[1] if len(betas) > 1 else info["beta1"]
        if rule == "A":
            out += [Violation("P_max(2/β1) < r q*^2/(32 (1-q*^2))", st.p_max(2 / b1), thr)]
            gap = 1 / betas[0] - (1 - q_g ** 2) * z
            out += [Violation("1/β0 - (1-q_g^2) z > 0", gap, 0.0),
                    Violation("1/β0 - (1-q_g^2) z ≤ q_g^2/(4β1)", gap, q_g ** 2 / (4 * b1))]
        else:
            out += [Violation("V(β1) < r q*^2/(32 (1-q*^2))", st.V(b1), thr),
                    Violation("1/β0 ≤ q_g^2 q*^2/(16(1-q*^2)) / β1", 1 / betas[0],
                              q_g ** 2 * q_star ** 2 / (16 * (1 - q_star ** 2)) / b1 * (1 + 1e-12))]
        out += [Violation("|β_t/β_t+1 - r| ≤ 1e-12 r", abs(betas[t] / betas[t + 1] - r), 1e-12 * r)
                for t in range(1, len(betas) - 1)]
    return [v for v in out if not _holds(v)]
