"""Command-line driver: gen, run, eval, sweep, stats.

Exit codes: 0 success, 1 error (including usage errors), 2 infeasible schedule.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .cemp import CempState, compute_inconsistencies, run, schedule_from_dict
from .graphs import complete_edges
from .groups import make_group
from .pipeline import default_threshold, evaluate, resolve_schedule, run_instance
from .synth import inject_noise, make_adversarial, make_random_adversarial, make_ucm
from .theory import FeasibilityReport, build_ucm_schedule

log = logging.getLogger("cempsync")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


class Infeasible(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for infeasible schedules here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- argument helpers ------------------------------------------------------------

def _pair(text):
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j but got {text!r}")
    if i == j:
        raise argparse.ArgumentTypeError(f"self-loop {text!r}")
    return (min(i, j), max(i, j))


def parse_grid(text: str) -> list[float]:
    """'0.1,0.2' or 'start:stop:step' (stop inclusive)."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        k = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(max(k, 0))]
    return [float(v) for v in text.split(",") if v.strip()]


def _group(args):
    if args.group == "perm" and args.N is None:
        raise UsageError("--group perm needs --N")
    return make_group(args.group, args.N)


def _add_group(p):
    p.add_argument("--group", required=True, choices=["z2", "perm", "so2", "so3"])
    p.add_argument("--N", type=int, default=None, help="permutation size for --group perm")


def _add_model(p):
    p.add_argument("--model", required=True, choices=["adversarial", "ucm"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=None, help="edge probability")
    p.add_argument("--complete", action="store_true", help="complete graph (same as --p 1)")
    p.add_argument("--noise", choices=["none", "bounded", "subgaussian"], default="none")


def _add_schedule(p):
    p.add_argument("--rule", type=str.upper, choices=["A", "B"], default="A")
    p.add_argument("--schedule", choices=["auto", "explicit", "ucm"], default="auto")
    p.add_argument("--beta0", type=float, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--betas", type=str, default=None, help="comma-separated explicit schedule")
    p.add_argument("--T", type=int, default=10)


def _edge_prob(args):
    if args.complete:
        if args.p not in (None, 1.0):
            raise UsageError("--complete conflicts with --p")
        return 1.0
    if args.p is None:
        raise UsageError("give --p or --complete")
    return args.p


def _make_instance(group, model, n, p, seed, *, q=None, bad_edges=None, bad_fraction=None,
                   bad_sampler="worst", noise="none", delta=None, sigma=None):
    rng = np.random.default_rng(seed)
    if model == "ucm":
        if q is None:
            raise UsageError("--model ucm needs --q")
        inst = make_ucm(n, p, q, group, seed=rng)
    else:
        if bad_edges and bad_fraction is not None:
            raise UsageError("--bad-edges and --bad-fraction are exclusive")
        if bad_fraction is not None:
            inst = make_random_adversarial(n, p, group, bad_fraction, bad_sampler, seed=rng)
        else:
            if p != 1.0:
                raise UsageError("--bad-edges needs a fixed edge set; use --complete")
            inst = make_adversarial(n, complete_edges(n), group, bad_set=bad_edges or [],
                                    bad_sampler=bad_sampler, seed=rng)
    if noise != "none":
        inst = inject_noise(inst, noise, delta=delta, sigma=sigma, seed=rng)
    return replace(inst, meta={**inst.meta, "seed": seed})


def _betas(text):
    return [float(v) for v in text.split(",")] if text else None


# -- commands ---------------------------------------------------------------------

def cmd_gen(args):
    group = _group(args)
    p = _edge_prob(args)
    inst = _make_instance(group, args.model, args.n, p, args.seed, q=args.q, bad_edges=args.bad_edges,
                          bad_fraction=args.bad_fraction, bad_sampler=args.bad_sampler,
                          noise=args.noise, delta=args.delta, sigma=args.sigma)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_instance(out, inst)
    side = inst.sidecar()
    print(f"wrote {out} ({inst.graph.m} edges, {int(inst.bad.sum())} bad, lambda={side['lambda']:.6g})")
    return EXIT_OK


def _load(path):
    inst_file, meta = io.read_instance(path)
    return inst_file, meta or {}


def cmd_run(args):
    inst_file, meta = _load(args.instance)
    group = inst_file.group
    if args.group is not None:
        want = _group(args)
        if want != group:
            raise ValueError(f"group mismatch: instance is {group!r}, --group asks for {want!r}")
    lam = args.lam
    synth = inst_file.to_synthetic(meta) if inst_file.truth is not None else None
    if lam is None and synth is not None:
        lam = synth.lambda_stats().lam
    q = args.q if args.q is not None else meta.get("q")
    report = resolve_schedule(args.schedule, args.rule, args.T, group=group, lam=lam,
                              noise=meta.get("noise"), q=q, beta0=args.beta0, r=args.r,
                              betas=_betas(args.betas))
    if not report.feasible:
        raise Infeasible(report.message)
    table = compute_inconsistencies(inst_file.graph)
    s_star = synth.s_star if synth is not None else None
    state = run(table, args.rule, report.schedule, args.T, s_star)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trace(out / "trace.csv", state.trace)
    io.write_estimates(out / "estimates.csv", inst_file.graph.edges, state.s, s_star,
                       synth.bad if synth is not None else None)
    config = {
        "command": "run", "instance": str(args.instance), "group": group.tag,
        "N": getattr(group, "N", None), "rule": args.rule, "T": args.T,
        "schedule_mode": args.schedule, "schedule": report.schedule.describe(),
        "betas": report.schedule.values(args.T), "lambda": lam, "q": q,
        "theory": _jsonable(report.info),
        "predicted_bound_T": report.predicted_bound(args.T),
        "stalled_final": int(state.stalled.sum()),
    }
    io.write_json(out / "config.json", config)
    last = state.trace[-1]
    print(f"schedule {report.schedule.describe()['kind']}: " + ", ".join(f"{b:.6g}" for b in config["betas"]))
    if last.eps_max is not None:
        print(f"t={last.t} eps_max={last.eps_max:.6g} eps_mean={last.eps_mean:.6g} stalled={last.stalled_count}")
    return EXIT_OK


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out


def cmd_eval(args):
    inst_file, meta = _load(args.instance)
    if inst_file.truth is None:
        raise ValueError("eval needs an instance with ground truth")
    synth = inst_file.to_synthetic(meta)
    rundir = Path(args.run)
    config = io.read_json(rundir / "config.json")
    s_hat = []
    with open(rundir / "estimates.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            s_hat.append(float(row["s_hat"]))
    s_hat = np.asarray(s_hat)
    if len(s_hat) != synth.graph.m:
        raise ValueError("estimates do not match the instance's edge count")
    sched = schedule_from_dict(config["schedule"])
    state = CempState(s_hat, config["T"], config["rule"], sched,
                      np.zeros(len(s_hat), dtype=bool))
    if args.tau is not None:
        tau, how = args.tau, "given"
    else:
        rep = FeasibilityReport(True, (), sched, info={"regime": config["theory"].get("regime", "explicit")})
        tau, how = default_threshold(rep, state, config["T"])
    res = evaluate(synth, state, tau)
    res["threshold_rule"] = how
    text = json.dumps(res, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


SWEEP_COLUMNS = ("point", "seed", "q", "delta", "sigma", "bad_fraction", "lambda", "feasible",
                 "eps_max", "eps_mean", "precision", "recall", "kept", "threshold",
                 "max_align_error", "mean_align_error", "connected", "stalled")


def cmd_sweep(args):
    group = _group(args)
    p = _edge_prob(args)
    axes = {}
    for name in ("q", "delta", "sigma", "bad_fraction"):
        raw = getattr(args, name)
        if raw is None:
            axes[name] = [None]
            continue
        vals = parse_grid(raw)
        if not vals:
            raise UsageError(f"--{name.replace('_', '-')} grid is empty")
        axes[name] = vals
    for name, kind in (("delta", "bounded"), ("sigma", "subgaussian")):
        if args.__dict__[name] is not None and args.noise != kind:
            raise UsageError(f"--{name} grid needs --noise {kind}")
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    points = list(itertools.product(*axes.values()))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, timing = [], []
    for pi, vals in enumerate(points):
        pt = dict(zip(axes, vals))
        for rep_i in range(args.seeds):
            seed = int(np.random.SeedSequence([args.seed, pi, rep_i]).generate_state(1)[0])
            t0 = time.perf_counter()
            inst = _make_instance(group, args.model, args.n, p, seed, q=pt["q"],
                                  bad_fraction=pt["bad_fraction"], bad_sampler=args.bad_sampler,
                                  noise=args.noise, delta=pt["delta"], sigma=pt["sigma"])
            lam = inst.lambda_stats().lam
            report = resolve_schedule(args.schedule, args.rule, args.T, group=group, lam=lam,
                                      noise=inst.noise, q=pt["q"], beta0=args.beta0, r=args.r,
                                      betas=_betas(args.betas))
            row = {"point": pi, "seed": seed, **pt, "lambda": lam, "feasible": int(report.feasible)}
            if report.feasible:
                state, m = run_instance(inst, args.rule, report, args.T)
                row.update({k: m[k] for k in ("eps_max", "eps_mean", "precision", "recall", "kept",
                                              "threshold", "max_align_error", "mean_align_error",
                                              "connected", "stalled")})
            rows.append(row)
            timing.append({"point": pi, "seed": seed, "runtime_ms": (time.perf_counter() - t0) * 1e3})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([io._fmt(row.get(c)) for c in SWEEP_COLUMNS])
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("point", "seed", "runtime_ms"))
        for t in timing:
            w.writerow([t["point"], t["seed"], f"{t['runtime_ms']:.3f}"])
    io.write_json(out / "config.json", {"command": "sweep", **{k: v for k, v in vars(args).items()
                                                               if k != "func"}})
    print(f"wrote {len(rows)} rows to {out / 'summary.csv'}")
    return EXIT_OK


def cmd_stats(args):
    group = _group(args)
    qs = parse_grid(args.q)
    if not qs:
        raise UsageError("--q grid is empty")
    head = f"{'group':6} {'q':>5} {'q*':>7} {'z_G':>7} {'1-q*^2':>7}  {'rule':4} {'beta0':>11} {'beta1':>11} {'r':>5} {'bound(T)':>10}"
    print(head)
    for q in qs:
        for rule in ("A", "B"):
            rep = build_ucm_schedule(q, group, rule, args.r, args.T)
            qs_ = rep.info.get("q_star", 1 - q)
            z = rep.info.get("z", float("nan"))
            lead = f"{group.tag:6} {q:5.2f} {qs_:7.4f} {z:7.4f} {1 - qs_ ** 2:7.4f}  {rule:4}"
            if rep.feasible:
                b = rep.schedule.values(min(args.T, 2))
                b1 = b[1] if len(b) > 1 else float("nan")
                print(f"{lead} {b[0]:11.5g} {b1:11.5g} {args.r:5.2f} {rep.predicted_bound(args.T):10.3g}")
            else:
                print(f"{lead} infeasible: {rep.message}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cempsync", description="Cycle-edge message passing for group synchronization")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    _add_group(g)
    _add_model(g)
    g.add_argument("--q", type=float, default=None, help="UCM corruption probability")
    g.add_argument("--bad-edges", type=_pair, action="append", default=None, metavar="I,J")
    g.add_argument("--bad-fraction", type=float, default=None)
    g.add_argument("--bad-sampler", choices=["worst", "haar"], default="worst")
    g.add_argument("--delta", type=float, default=None)
    g.add_argument("--sigma", type=float, default=None)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", default="instance.json")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run CEMP on an instance")
    r.add_argument("--instance", required=True)
    r.add_argument("--group", choices=["z2", "perm", "so2", "so3"], default=None)
    r.add_argument("--N", type=int, default=None)
    _add_schedule(r)
    r.add_argument("--lam", type=float, default=None, help="lambda for --schedule auto (default: measured)")
    r.add_argument("--q", type=float, default=None, help="q for --schedule ucm (default: from meta)")
    r.add_argument("--out", default="run")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="clean, recover and score a run")
    e.add_argument("--instance", required=True)
    e.add_argument("--run", required=True, help="output directory of `run`")
    e.add_argument("--tau", type=float, default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="grid of instances x seeds")
    _add_group(s)
    _add_model(s)
    _add_schedule(s)
    s.add_argument("--q", type=str, default=None, help="grid, e.g. 0.1:0.9:0.1 or 0.2,0.4")
    s.add_argument("--delta", type=str, default=None)
    s.add_argument("--sigma", type=str, default=None)
    s.add_argument("--bad-fraction", type=str, default=None)
    s.add_argument("--bad-sampler", choices=["worst", "haar"], default="haar")
    s.add_argument("--seeds", type=int, default=10, help="replicates per grid point")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default="sweep")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("stats", help="uniform-corruption schedules per q")
    _add_group(t)
    t.add_argument("--q", type=str, default="0.1:0.9:0.1")
    t.add_argument("--r", type=float, default=0.5)
    t.add_argument("--T", type=int, default=10)
    t.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"infeasible schedule: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, TypeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
