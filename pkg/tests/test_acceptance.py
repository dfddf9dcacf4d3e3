"""End-to-end acceptance experiments.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.  Seeded throughout, so results are repeatable.
"""

import itertools
import time

import numpy as np
import pytest

from cempsync.cemp import ExpGrowth, compute_inconsistencies, init_state, run
from cempsync.cli import main
from cempsync.graphs import MeasurementGraph, check_connectivity, complete_edges, sample_er
from cempsync.groups import SO2, SO3, Z2, Perm
from cempsync.recovery import align_and_score, clean_edges, gap_threshold, ratios_from_elements, solve_tree
from cempsync.synth import inject_noise, make_adversarial, make_random_adversarial, make_ucm
from cempsync.theory import ScheduleRequest, build_schedule, build_ucm_schedule

SEEDS = range(10)


def resample_until(n, group, frac, lam_max, rng):
    while True:
        inst = make_random_adversarial(n, 1.0, group, frac, "haar", seed=rng)
        lam = inst.lambda_stats().lam
        if lam < lam_max:
            return inst, lam


# -- 1, 2: noiseless bounds on K20 ------------------------------------------------

@pytest.mark.criterion(1, "rule A bound on K20 single corrupted edge")
@pytest.mark.parametrize("g", [Z2(), SO2()], ids=["z2", "so2"])
def test_c1_rule_a_k20(g):
    t0 = time.perf_counter()
    inst = make_adversarial(20, complete_edges(20), g, bad_set=[(0, 1)], seed=0)
    assert inst.sidecar()["lambda"] == 1 / 18
    sched = ExpGrowth(18.0, 4.0)
    state = run(compute_inconsistencies(inst.graph), "A", sched, 8, inst.s_star)
    for row in state.trace:
        assert row.eps_max <= 1 / (18 * 4.0 ** row.t)
    cl = clean_edges(state.s, 1 / sched.beta(8), inst.graph, bad=inst.bad)
    np.testing.assert_array_equal(cl.kept, inst.good)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(2, "rule B bound on K20 single corrupted edge")
@pytest.mark.parametrize("g", [Z2(), SO2()], ids=["z2", "so2"])
def test_c2_rule_b_k20(g):
    t0 = time.perf_counter()
    inst = make_adversarial(20, complete_edges(20), g, bad_set=[(0, 1)], seed=0)
    state = run(compute_inconsistencies(inst.graph), "B", ExpGrowth(4.5, 4.0), 8, inst.s_star)
    for row in state.trace:
        assert row.eps_max <= 1 / (4 * 4.5 * 4.0 ** row.t)
    assert time.perf_counter() - t0 < 1.0


# -- 3: bounded noise ----------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(3, "bounded-noise stability, SO(2) n=100")
def test_c3_bounded_noise():
    delta, hits = 0.02, 0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        inst, lam = resample_until(100, SO2(), 0.02, 0.1, rng)
        inst = inject_noise(inst, "bounded", delta=delta, seed=rng)
        rep = build_schedule(ScheduleRequest("bounded", "A", lam, delta=delta, T=30))
        assert rep.feasible, rep.message
        state = run(compute_inconsistencies(inst.graph), "A", rep.schedule, 30, inst.s_star)
        bound = ((3 - 4 * lam) / (1 - 4 * lam) - 1) * delta
        eps = state.trace[-1].eps_max
        print(f"seed {seed}: lambda={lam:.4f} eps={eps:.4g} bound={bound:.4g}")
        hits += eps <= bound + 1e-6
    assert hits >= 9


# -- 4: UCM exact separation -----------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(4, "UCM separation, SO(2) n=200 q=0.5")
def test_c4_ucm_separation():
    T = 10
    rep = build_ucm_schedule(0.5, SO2(), "A", r=0.5, T=T)
    assert rep.feasible, rep.message
    hits = 0
    for seed in SEEDS:
        t0 = time.perf_counter()
        inst = make_ucm(200, 1.0, 0.5, SO2(), seed=seed)
        state = run(compute_inconsistencies(inst.graph), "A", rep.schedule, T, inst.s_star)
        cl = clean_edges(state.s, gap_threshold(state.s), inst.graph, bad=inst.bad)
        elapsed = time.perf_counter() - t0
        print(f"seed {seed}: precision={cl.precision:.4f} recall={cl.recall:.4f} time={elapsed:.2f}s")
        assert elapsed < 30
        hits += cl.precision == 1.0 and cl.recall == 1.0
    assert hits >= 8


# -- 5: initialization law ----------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(5, "mean initialization law, Z2 UCM n=200 q=0.5")
def test_c5_initialization_law():
    g = Z2()
    q = 0.5
    inst = make_ucm(200, 1.0, q, g, seed=0)
    q_g, z = 1 - q, g.stats(0.0).z
    s0 = init_state(compute_inconsistencies(inst.graph), "A", ExpGrowth(1.0, 1.0)).s
    good_mean = s0[inst.good].mean()
    predicted = q_g ** 2 * inst.s_star + (1 - q_g ** 2) * z
    bad_gap = abs(s0[inst.bad].mean() - predicted[inst.bad].mean())
    mad = np.abs(s0 - predicted).mean()
    print(f"good mean={good_mean:.4f} bad mean gap={bad_gap:.4f} edgewise MAD={mad:.4f}")
    assert abs(good_mean - 0.375) <= 0.01
    assert bad_gap <= 0.01
    assert mad <= 0.02


# -- 6: lambda concentration ----------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(6, "lambda concentration, Z2 UCM n=300 q=0.5")
def test_c6_lambda_concentration():
    q = 0.5
    q_star = 1 - q + q * Z2().stats(0.0).p0
    target = 1 - q_star ** 2
    hits, lams, means = 0, [], []
    for seed in range(100):
        inst = make_ucm(300, 1.0, q, Z2(), seed=seed)
        st = inst.lambda_stats()
        lams.append(st.lam)
        means.append(st.lambda_ij.mean())
        hits += abs(st.lam - target) <= 0.05
    print(f"target={target:.4f} max-lambda range=[{min(lams):.4f}, {max(lams):.4f}] "
          f"mean per-edge lambda={np.mean(means):.4f} hits={hits}/100")
    assert hits >= 95


# -- 7: property suites -------------------------------------------------------------------

GROUPS = [Z2(), Perm(3), Perm(5), SO2(), SO3()]


@pytest.mark.criterion(7, "property suites")
@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.tag + (str(g.N) if isinstance(g, Perm) else ""))
def test_c7_metric_and_bi_invariance(g):
    rng = np.random.default_rng(0)
    a, b, c = (g.sample(rng, 1000) for _ in range(3))
    d = g.distance(a, b)
    assert np.all((d >= 0) & (d <= 1))
    assert np.all(g.distance(a, a) == 0)
    np.testing.assert_allclose(d, g.distance(b, a), atol=1e-12)
    assert np.all(g.distance(a, c) <= d + g.distance(b, c) + 1e-12)
    assert np.max(np.abs(d - g.distance(g.compose(c, a), g.compose(c, b)))) <= 1e-9
    assert np.max(np.abs(d - g.distance(g.compose(a, c), g.compose(b, c)))) <= 1e-9


@pytest.mark.criterion(7, "property suites")
@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.tag + (str(g.N) if isinstance(g, Perm) else ""))
def test_c7_good_cycle_exactness(g):
    inst = make_random_adversarial(30, 0.7, g, 0.2, "haar", seed=1)
    table = compute_inconsistencies(inst.graph)
    idx = table.index
    good = ~inst.bad[idx.e_ik] & ~inst.bad[idx.e_jk]
    err = np.abs(table.d - inst.s_star[idx.entry_edge])[good]
    assert err.max(initial=0) <= (1e-12 if g.is_continuous else 0)


@pytest.mark.criterion(7, "property suites")
def test_c7_cycle_bound_noisy():
    for s in range(100):
        g = SO2() if s % 2 else SO3()
        inst = make_random_adversarial(15, 0.7, g, 0.2, "haar", seed=s)
        if s % 4 < 2:
            inst = inject_noise(inst, "bounded", delta=0.1, seed=s)
        else:
            inst = inject_noise(inst, "subgaussian", sigma=0.05, seed=s)
        table = compute_inconsistencies(inst.graph)
        idx, st = table.index, inst.s_star
        assert np.all(np.abs(table.d - st[idx.entry_edge]) <= st[idx.e_ik] + st[idx.e_jk] + 1e-12)


@pytest.mark.criterion(7, "property suites")
@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.tag + (str(g.N) if isinstance(g, Perm) else ""))
def test_c7_round_trip(g):
    rng = np.random.default_rng(2)
    n = 40
    seed = 0
    while True:
        e = sample_er(n, 0.2, seed)
        if check_connectivity(e, n)[0] == 1:
            break
        seed += 1
    truth = g.sample(rng, n)
    graph = MeasurementGraph(n, e, ratios_from_elements(g, truth, e), g)
    assert align_and_score(g, solve_tree(graph), truth).max_error <= 1e-10


@pytest.mark.criterion(7, "property suites")
def test_c7_determinism(tmp_path):
    base = ["--group", "so3", "--model", "ucm", "--n", "30", "--p", "1", "--seed", "5"]
    for d in ("a", "b"):
        assert main(["gen", *base, "--q", "0.3", "--out", str(tmp_path / d / "i.json")]) == 0
        assert main(["run", "--instance", str(tmp_path / d / "i.json"), "--schedule", "ucm",
                     "--T", "6", "--out", str(tmp_path / d / "run")]) == 0
        assert main(["sweep", *base, "--q", "0.2,0.4", "--seeds", "2", "--schedule", "ucm",
                     "--T", "6", "--out", str(tmp_path / d / "sweep")]) == 0
    for f in ("i.json", "i.meta.json", "run/trace.csv", "run/estimates.csv", "sweep/summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# -- 8: Haar means ---------------------------------------------------------------------------

@pytest.mark.criterion(8, "Haar mean distance")
@pytest.mark.parametrize("g,z", [(Z2(), 0.5), (SO2(), 0.5), (SO3(), 0.5 + 2 / np.pi ** 2),
                                 (Perm(3), 2 / 3), (Perm(5), 0.8)],
                         ids=["z2", "so2", "so3", "perm3", "perm5"])
def test_c8_haar_mean(g, z):
    d = g.norm(g.sample(np.random.default_rng(8), 100_000))
    se = d.std(ddof=1) / np.sqrt(d.size)
    assert abs(d.mean() - z) <= 3 * se
    if isinstance(g, Perm) and g.N == 3:
        perms = np.array(list(itertools.permutations(range(3))))
        assert g.norm(perms).mean() == pytest.approx(z)


# -- 9: sub-Gaussian ---------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(9, "sub-Gaussian spot check, SO(3) n=150")
def test_c9_subgaussian():
    sigma, hits = 0.02, 0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        inst, lam = resample_until(150, SO3(), 0.008, 0.05, rng)
        inst = inject_noise(inst, "subgaussian", sigma=sigma, seed=rng)
        rep = build_schedule(ScheduleRequest("subgaussian", "A", lam, sigma=sigma, T=30))
        assert rep.feasible, rep.message
        state = run(compute_inconsistencies(inst.graph), "A", rep.schedule, 30, inst.s_star)
        eps = state.trace[-1].eps_max
        print(f"seed {seed}: lambda={lam:.4f} x={rep.info['x']} eps={eps:.4g} bound={rep.asymptotic:.4g}")
        hits += eps < rep.asymptotic
    assert hits >= 8
