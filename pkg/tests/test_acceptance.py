"""Acceptance criteria, each at its stated tolerance.

Every test appends one PASS/FAIL line to ``ACCEPTANCE_LINES`` (echoed in the
pytest terminal summary) and prints it, then asserts.
"""
import json
import time

import numpy as np
import pytest

from kroncov.cli import main
from kroncov.diagnostics import (
    MU_GRID,
    boundary_probe_2x2,
    collinearity_oracle,
    discriminant_2x2,
    is_degenerate_2x2,
)
from kroncov.experiment import ExperimentConfig, generate_trial_data, run_phase, run_trial, trial_seeds
from kroncov.gaussian import KroneckerPair, gff_estimate
from kroncov.linalg import geodesic, inverse, kron, logdet, random_spd
from kroncov.robust import rff_step, robust_nll, tyler_unconstrained
from kroncov.sampling import MatrixNormalParams, SampleSet, center_reduce, sample_matrix_normal, sample_mean

from .conftest import ACCEPTANCE_LINES

BASE_SEED = 20240611


def report(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def outcome_counts(outcomes):
    keys = ("unique", "non_unique", "rank_fail", "inconclusive")
    return {k: sum(o.outcome == k for o in outcomes) for k in keys}


# -- shared Monte Carlo runs ---------------------------------------------------------

@pytest.fixture(scope="module")
def run_c1():
    cfg = ExperimentConfig(p=2, q=3, n_values=[6], trials=200, base_seed=BASE_SEED)
    t0 = time.perf_counter()
    _, outcomes = run_phase(cfg)
    return outcomes, time.perf_counter() - t0


@pytest.fixture(scope="module")
def run_c2():
    cfg = ExperimentConfig(p=2, q=3, n_values=[2], trials=200, base_seed=BASE_SEED)
    return run_phase(cfg)[1]


@pytest.fixture(scope="module")
def run_c3():
    cfg = ExperimentConfig(p=2, q=2, n_values=[1], trials=100, mean_mode="known_zero", base_seed=BASE_SEED)
    return run_phase(cfg)[1]


@pytest.fixture(scope="module")
def run_c4():
    cfg = ExperimentConfig(p=2, q=2, n_values=[2], trials=1, mean_mode="known_zero", base_seed=BASE_SEED)
    kept, skipped, trial = [], 0, 0
    while len(kept) < 200:
        x = generate_trial_data(cfg, 2, trial_seeds(cfg.base_seed, 2, trial)[0])
        if is_degenerate_2x2(x[0], x[1]):
            skipped += 1
        else:
            kept.append((discriminant_2x2(x[0], x[1]), run_trial(cfg, 2, trial)))
        trial += 1
    return kept, skipped


@pytest.fixture(scope="module")
def run_c5():
    rng = np.random.default_rng(BASE_SEED)
    P0 = tuple(map(tuple, random_spd(2, rng)))
    Q0 = tuple(map(tuple, random_spd(2, rng)))
    common = dict(estimator="rff", mean_mode="known_zero", data_model="race", base_seed=BASE_SEED)
    a = run_phase(ExperimentConfig(p=2, q=2, n_values=[5], trials=200, row_cov=P0, col_cov=Q0, **common))[1]
    b = run_phase(ExperimentConfig(p=4, q=2, n_values=[1], trials=200, **common))[1]
    return a, b


# -- criteria --------------------------------------------------------------------------

def test_criterion_1_sufficient_regime_unique(run_c1):
    outcomes, elapsed = run_c1
    good = 0
    for o in outcomes:
        r = o.report
        good += o.outcome == "unique" and r.diameter <= 1e-5 and r.max_objective_spread <= 1e-8
    frac = good / len(outcomes)
    ok = frac >= 0.99 and elapsed < 120
    report(1, ok, f"p=2 q=3 n=6 unknown mean: unique {good}/{len(outcomes)} ({frac:.3f} >= 0.99), runtime {elapsed:.1f}s < 120s")
    assert ok


def test_criterion_2_necessary_regime_fails(run_c2):
    c = outcome_counts(run_c2)
    bad = c["rank_fail"] + c["non_unique"]
    ok = bad == len(run_c2)
    report(2, ok, f"p=2 q=3 n=2 unknown mean: rank_fail {c['rank_fail']} + non_unique {c['non_unique']} = {bad}/{len(run_c2)}")
    assert ok


def test_criterion_3_single_sample_non_unique(run_c3):
    good = 0
    for o in run_c3:
        r = o.report
        good += r.cluster_count >= 2 and r.max_objective_spread <= 1e-8
    ok = good == len(run_c3)
    report(3, ok, f"2x2 known mean n=1: >=2 limits with equal objective (1e-8) in {good}/{len(run_c3)}")
    assert ok


def test_criterion_4_discriminant_predicts_verdict(run_c4):
    kept, skipped = run_c4
    agree = sum(o.outcome == ("unique" if d < 0 else "non_unique") for d, o in kept)
    neg = sum(d < 0 for d, _ in kept)
    pos = len(kept) - neg
    ok = agree >= 0.95 * len(kept) and neg >= 0.1 * len(kept) and pos >= 0.1 * len(kept)
    report(
        4,
        ok,
        f"2x2 known mean n=2: agreement {agree}/{len(kept)} (>= 95%), D<0 {neg}, D>=0 {pos} (each >= 10%), "
        f"{skipped} degenerate skipped",
    )
    assert ok


def test_criterion_5_robust_thresholds(run_c5):
    a, b = run_c5
    ca, cb = outcome_counts(a), outcome_counts(b)
    ok = ca["unique"] >= 0.99 * len(a) and cb["rank_fail"] == len(b)
    report(5, ok, f"RFF 2x2 n=5 RACE unique {ca['unique']}/{len(a)} (>= 99%); p=4 q=2 n=1 rank_fail {cb['rank_fail']}/{len(b)}")
    assert ok


def test_criterion_6_descent_and_residual(run_c1, run_c2, run_c3, run_c4, run_c5):
    outcomes = list(run_c1[0]) + list(run_c2) + list(run_c3) + [o for _, o in run_c4[0]] + list(run_c5[0]) + list(run_c5[1])
    runs = bad = 0
    worst_step = worst_res = 0.0
    for o in outcomes:
        for s in o.report.starts:
            if s.status != "converged":
                continue
            runs += 1
            steps = np.diff(s.objective_trace)
            up = float(steps.max()) if steps.size else 0.0
            worst_step = max(worst_step, up)
            worst_res = max(worst_res, s.residual)
            bad += up > 1e-10 or s.residual > 1e-9
    ok = runs > 0 and bad == 0
    report(6, ok, f"{runs} convergent runs: max objective increase {worst_step:.2e} (<= 1e-10), max residual {worst_res:.2e} (<= 1e-9), violations {bad}")
    assert ok


def spd_instance(d, rng, cond_max=100.0):
    """Random SPD matrix with eigenvalues log-uniform in [1/sqrt(cond_max), sqrt(cond_max)]."""
    u, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.exp(rng.uniform(-0.5, 0.5, size=d) * np.log(cond_max))
    return 0.5 * ((u * w) @ u.T + ((u * w) @ u.T).T)


def _identity_checks(rng, make_spd, t_range, check):
    p, q = (int(v) for v in rng.integers(1, 5, size=2))
    P, Q = make_spd(p, rng), make_spd(q, rng)
    check("logdet", abs(logdet(kron(P, Q)) - (q * logdet(P) + p * logdet(Q))) <= 1e-10)

    d = int(rng.integers(2, 5))
    A, B = make_spd(d, rng), make_spd(d, rng)
    scale = max(np.abs(A).max(), np.abs(B).max())
    g0, g1 = geodesic(A, B, 0.0).entries, geodesic(A, B, 1.0).entries
    check("geodesic endpoints", max(np.abs(g0 - A).max(), np.abs(g1 - B).max()) <= 1e-8 * scale)
    mid_ab, mid_ba = geodesic(A, B, 0.5).entries, geodesic(B, A, 0.5).entries
    check("geodesic midpoint", np.abs(mid_ab - mid_ba).max() <= 1e-8 * scale)
    t = float(rng.uniform(*t_range))
    lhs = inverse(geodesic(A, B, t)).entries
    rhs = geodesic(inverse(A), inverse(B), t).entries
    check("geodesic inversion", np.abs(lhs - rhs).max() <= 1e-8 * max(1.0, np.abs(lhs).max()))

    p, q, n = (int(v) for v in rng.integers(1, 4, size=3))
    xs = rng.standard_normal((n, p, q))
    P, Q = make_spd(p, rng), make_spd(q, rng)
    lam, mu = np.exp(rng.uniform(-3, 3, size=2))
    check("robust scale invariance", abs(robust_nll((lam * P, mu * Q), xs) - robust_nll((P, Q), xs)) <= 1e-12)

    p, q, n = 2, int(rng.integers(2, 4)), int(rng.integers(4, 8))
    xs = rng.standard_normal((n, p, q))
    c = np.exp(rng.uniform(-3, 3, size=n))
    pair = KroneckerPair(make_spd(p, rng), make_spd(q, rng)).normalized("spectral_both")
    a = rff_step(pair, xs)
    b = rff_step(pair, xs * c[:, None, None])
    check("RFF sample-scale equivariance", max(np.abs(a.P - b.P).max(), np.abs(a.Q - b.Q).max()) <= 1e-12)

    n = int(rng.integers(2, 8))
    x = SampleSet(rng.standard_normal((n, 2, 3)) + rng.standard_normal((2, 3)))
    z = center_reduce(x)
    K = np.kron(make_spd(2, rng), make_spd(3, rng))
    dv = (x.samples - sample_mean(x)).reshape(n, -1)
    zv = z.vectors()
    lhs = np.einsum("ia,ab,ib->", dv, K, dv) / n
    rhs = np.einsum("ia,ab,ib->", zv, K, zv) / z.n
    check("centering quadratic form", abs(lhs - rhs) <= 1e-9 * abs(lhs))


def _run_identities(seed, make_spd, t_range, N=1000):
    rng = np.random.default_rng(seed)
    fails = {}

    def check(name, cond):
        fails[name] = fails.get(name, 0) + (not cond)

    for _ in range(N):
        _identity_checks(rng, make_spd, t_range, check)
    return fails


def test_criterion_7_analytic_identities():
    N = 1000
    fails = _run_identities(BASE_SEED + 7, spd_instance, (0.0, 1.0), N)
    # not asserted: A^T A + 1e-3 I factors (condition up to ~1e4) and extrapolated t
    stress = _run_identities(BASE_SEED + 7, random_spd, (-1.0, 2.0), N)
    ok = all(v == 0 for v in fails.values())
    detail = ", ".join(f"{k} {N - v}/{N}" for k, v in fails.items())
    stress_detail = ", ".join(f"{k} {N - v}/{N}" for k, v in stress.items() if v)
    report(7, ok, f"{detail} [stress family, not asserted: {stress_detail or 'all pass'}]")
    assert ok


def _probe_datasets(want_nonneg, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        x = sample_matrix_normal(MatrixNormalParams.centered(np.eye(2), np.eye(2)), 2, seed=rng.integers(2**63))
        if is_degenerate_2x2(x[0], x[1]):
            continue
        if (discriminant_2x2(x[0], x[1]) >= 0) == want_nonneg:
            out.append(x)
    return out


def test_criterion_8a_probe_bounded_with_witness():
    datasets = _probe_datasets(True, 50, BASE_SEED + 8)
    good = witnessed = 0
    worst = 0.0
    for x in datasets:
        witnessed += collinearity_oracle(x) is not None
        vals = np.array([v for _, v in boundary_probe_2x2(x, MU_GRID)])
        rel = (vals.max() - vals[-1]) / abs(vals[-1])
        worst = max(worst, rel)
        good += rel <= 0.01
    ok = good == len(datasets)
    report("8a", ok, f"D>=0 witness found {witnessed}/50; max within 1% of large-mu value in {good}/50 (worst {100 * worst:.1f}%)")
    assert ok


def test_criterion_8b_probe_diverges_without_witness():
    datasets = _probe_datasets(False, 50, BASE_SEED + 9)
    rng = np.random.default_rng(BASE_SEED + 10)
    good = 0
    for x in datasets:
        th = rng.uniform(0, np.pi)
        vals = [v for _, v in boundary_probe_2x2(x, MU_GRID, t=np.array([np.cos(th), np.sin(th)]))]
        good += vals[-1] >= 10 * vals[0]
    ok = good == len(datasets)
    report("8b", ok, f"D<0 probe objective grows >= 10x across the mu grid in {good}/50")
    assert ok


def _shape_error(pair, truth):
    est = np.kron(pair.P, pair.Q)
    return np.linalg.norm(est / np.linalg.norm(est) - truth / np.linalg.norm(truth))


def test_criterion_9_consistency():
    rng = np.random.default_rng(BASE_SEED + 9)
    wins = 0
    for k in range(50):
        P0, Q0 = random_spd(2, rng), random_spd(3, rng)
        truth = np.kron(P0, Q0)
        params = MatrixNormalParams(rng.standard_normal((2, 3)), P0, Q0)
        small = gff_estimate(sample_matrix_normal(params, 50, seed=(BASE_SEED, k, 0)))
        large = gff_estimate(sample_matrix_normal(params, 1000, seed=(BASE_SEED, k, 1)))
        wins += _shape_error(large.pair, truth) < _shape_error(small.pair, truth)

    P0, Q0 = random_spd(2, rng), random_spd(2, rng)
    theta = np.kron(P0, Q0)
    x = sample_matrix_normal(MatrixNormalParams.centered(P0, Q0), 5000, seed=BASE_SEED + 99)
    T = tyler_unconstrained(x).entries
    ref = theta * 4.0 / np.trace(theta)
    tyler_err = np.linalg.norm(T - ref) / np.linalg.norm(ref)

    ok = wins >= 45 and tyler_err <= 0.10
    report(9, ok, f"GFF n=1000 beats n=50 in {wins}/50 (>= 45); Tyler n=5000 pq=4 relative error {tyler_err:.3f} (<= 0.10)")
    assert ok


def test_criterion_10_phase_determinism(tmp_path):
    cfg = {"p": 2, "q": 3, "n_values": [2, 3, 4, 6], "trials": 12, "base_seed": BASE_SEED, "k_starts": 6}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for i, extra in enumerate([[], [], ["--workers", "4"]]):
        out = tmp_path / f"phase{i}.csv"
        assert main(["phase", str(path), "--out", str(out)] + extra) == 0
        outs.append(out.read_bytes())
    rerun_same = outs[0] == outs[1]
    parallel_same = outs[0] == outs[2]
    ok = rerun_same and parallel_same
    report(10, ok, f"phase CSV serial rerun identical={rerun_same}, serial vs 4 workers identical={parallel_same}")
    assert ok
