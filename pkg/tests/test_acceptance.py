"""Acceptance criteria 1-12, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line (shown in the terminal
summary by conftest.py).  Run as a script for the same lines without pytest:

    python3 tests/test_acceptance.py
"""

import math
import time

import mpmath
import numpy as np
import pytest

from fractal_chebyshev import polybounds as pb
from fractal_chebyshev.checks import TREE_EXCHANGE_GRID, check_factorization, check_tree_exchange
from fractal_chebyshev.optimize import extract_cg_schedule, run_cg, run_gd
from fractal_chebyshev.problems import (
    CombinationLockProblem,
    LogCoshProblem,
    NoiseModel,
    diagonal_quadratic,
    path_laplacian_instance,
    random_spd,
)
from fractal_chebyshev.schedule import build_schedule, cheb_nodes, fractal_perm

RESULTS = {}


def report(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {title} | {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def best_time(fn, repeat=5):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_01_golden_values():
    def work():
        return 1 / cheb_nodes(0.1, 1, 8), fractal_perm(8)

    steps, perm = work()
    elapsed = best_time(work)
    permuted = steps[perm - 1]
    ok = (abs(steps[0] - 9.20) <= 0.005 and abs(steps[-1] - 1.01) <= 0.005
          and perm.tolist() == [1, 8, 4, 5, 2, 7, 3, 6]
          and abs(permuted[0] - 9.20) <= 0.005 and abs(permuted[1] - 1.01) <= 0.005
          and abs(permuted[-1] - 1.25) <= 0.005 and elapsed < 1e-3)
    report(1, "golden steps and sigma_8", ok,
           f"steps[0]={steps[0]:.4f} steps[-1]={steps[-1]:.4f} perm={perm.tolist()} "
           f"permuted=({permuted[0]:.3f},{permuted[1]:.3f},..,{permuted[-1]:.3f}) time={elapsed * 1e3:.3f}ms")


def test_criterion_02_chebyshev_rate():
    t0 = time.perf_counter()
    m, M, T = 0.05, 1.0, 32
    prob = diagonal_quadratic(np.linspace(m, M, 200), seed=2)
    x1 = np.zeros(200)
    spec = build_schedule(m, M, T)
    tr = run_gd(prob, spec, x1)
    env = pb.convergence_envelope(m, M, T)["final_bound"]
    rate_ok = tr.final_residual <= env * tr.residual_norm[0]
    full = pb.infix_norm_oracle(spec, 1, T)
    ref = 1 / float(mpmath.chebyt(T, (M + m) / (M - m)))
    rel = abs(full - ref) / ref
    elapsed = time.perf_counter() - t0
    report(2, "final residual within 2rho^T/(1+rho^2T), full norm = 1/T_T(theta)",
           rate_ok and rel <= 1e-6 and elapsed < 1.0,
           f"ratio={tr.final_residual / tr.residual_norm[0]:.3e} env={env:.3e} norm_rel_err={rel:.1e} "
           f"time={elapsed:.2f}s")


def test_criterion_03_prefix_suffix_infix_sweeps():
    t0 = time.perf_counter()
    rows = 0
    worst = 0.0
    fails = 0
    for m, M in [(0.05, 1.0), (0.2, 2.2)]:
        for T in (8, 16, 32, 64):
            spec = build_schedule(m, M, T)
            table = pb.infix_norm_table(spec)
            for rep in (pb.prefix_suffix_report(spec, table), pb.infix_report(spec, table)):
                rows += len(rep)
                worst = max(worst, rep.max_ratio)
                fails += sum(not r["pass"] for r in rep.rows)
    elapsed = time.perf_counter() - t0
    report(3, "every prefix/suffix/infix oracle norm <= closed-form bound x(1+1e-9)",
           fails == 0 and elapsed < 120, f"rows={rows} failures={fails} max_ratio={worst:.9f} time={elapsed:.1f}s")


def test_criterion_04_series_T_independence():
    t0 = time.perf_counter()
    lines = []
    ok = True
    for m, M in [(0.05, 1.0), (0.2, 2.2)]:
        bound = pb.series_bound(m, M)
        maxima = []
        for k in range(3, 9):
            spec = build_schedule(m, M, 2 ** k)
            table = pb.infix_norm_table(spec)
            sums = np.nansum(table, axis=0)
            ok &= bool(np.all(sums <= bound))
            maxima.append(float(sums.max()))
        growth = [b / a - 1 for a, b in zip(maxima, maxima[1:])]
        ok &= all(g <= 0.01 for g in growth)
        lines.append(f"({m},{M}) bound={bound:.1f} max_sums={[round(v, 3) for v in maxima]} "
                     f"growth={[f'{g:.2%}' for g in growth]}")
    elapsed = time.perf_counter() - t0
    report(4, "series sums below series_bound and max grows <=1% per doubling, T=8..256",
           ok and elapsed < 300, "; ".join(lines) + f" time={elapsed:.1f}s")


def test_criterion_05_tree_exchange_and_factorization():
    te = check_tree_exchange()
    n_grid = len(TREE_EXCHANGE_GRID["alpha"]) * 27
    fac = check_factorization(T=8, samples=1000, seed=5)
    random_row = fac.rows[0]
    ok = te.all_pass and len(te.rows) >= 500 and len(te.rows) == n_grid and random_row["pass"]
    report(5, "tree exchange on the default grid, factorization identity at 1000 samples", ok,
           f"grid_points={len(te.rows)} exchange_failures={sum(not r['pass'] for r in te.rows)} "
           f"identity_max_err={random_row['max_abs_err']:.1e}")


def test_criterion_06_permutation_stability():
    prob = path_laplacian_instance(100, 0.1, seed=0)
    x1 = np.zeros(100)
    orders = ["fractal", "reverse_fractal", "increasing", "decreasing"]
    runs = {o: run_gd(prob, build_schedule(0.2, 2.2, 32, o, dtype=np.longdouble), x1, precision="extended")
            for o in orders}
    ref = runs["fractal"].x_out
    agree = max(float(np.linalg.norm(r.x_out - ref) / np.linalg.norm(ref)) for r in runs.values())
    peak_ratio = runs["increasing"].peak_residual / runs["fractal"].peak_residual
    noise = NoiseModel.gaussian(0.0005, seed=0)
    noisy = run_gd(prob, build_schedule(0.2, 2.2, 32), x1, noise)
    ok = agree <= 1e-6 and peak_ratio >= 10 and math.isfinite(noisy.final_residual)
    report(6, "orderings agree at the end, increasing peaks >=10x fractal, noisy run finite", ok,
           f"max_rel_diff={agree:.1e} peak_ratio={peak_ratio:.1f} noisy_final={noisy.final_residual:.4f}")


def test_criterion_07_logcosh_counterexample():
    m, M, T = 0.01, 5.0, 32
    tr = run_gd(LogCoshProblem(), build_schedule(m, M, T), [2.0])
    bound = pb.convergence_envelope(m, M, T)["final_bound"] * 2.0
    final = abs(float(tr.x_out[0]))
    report(7, "logcosh final |x| exceeds the quadratic rate bound (expected violation)", final > bound,
           f"final|x|={final:.4f} bound={bound:.4f}")


def test_criterion_08_combination_lock():
    t0 = time.perf_counter()
    eta, delta = [0.5, 1.2, 0.8], 0.1
    prob = CombinationLockProblem(eta, delta)
    x1 = np.zeros(3)
    passcode = prob.value(run_gd(prob, eta, x1).x_out)
    perturbed = []
    for t in range(3):
        for sign in (1, -1):
            steps = list(eta)
            steps[t] += sign * delta
            perturbed.append(prob.value(run_gd(prob, steps, x1).x_out))
    elapsed = time.perf_counter() - t0
    ok = passcode == -1 and all(v >= 0 for v in perturbed) and elapsed < 1
    report(8, "passcode reaches -1, every +-delta perturbation ends at f >= 0", ok,
           f"passcode_f={passcode} perturbed_f={[round(v, 3) for v in perturbed]} time={elapsed * 1e3:.1f}ms")


def test_criterion_09_spiky_no_acceleration():
    checked = 0
    worst_norm = math.inf
    worst_match = 0.0
    ok = True
    for ratio in (10, 20, 50, 100, 1000):
        for eta_minus in (0.01, 1.0, 3.0):
            eta_plus = ratio * eta_minus
            for n in sorted({1, max(1, ratio // 20), ratio // 10}):
                r = pb.spiky_no_accel_check(eta_plus, eta_minus, n)
                if not r["applicable"]:
                    ok = False
                    continue
                checked += 1
                worst_norm = min(worst_norm, r["norm_per_cycle"])
                err = abs(r["p_at_lambda_star"] - r["p_at_lambda_star_closed_form"]) / r["p_at_lambda_star"]
                worst_match = max(worst_match, err)
                ok &= r["exceeds_1_34"] and err <= 1e-9
    report(9, "per-cycle norm > 1.34 in the regime, closed form at lambda* to 1e-9", ok,
           f"triples={checked} min_norm={worst_norm:.3f} max_rel_err={worst_match:.1e}")


def test_criterion_10_cg_schedule():
    worst = 0.0
    for seed in range(20):
        prob = random_spd(10, 0.1, 10.0, seed=1000 + seed)
        x1 = np.zeros(10)
        cg = run_cg(prob, x1, 6)
        gd = run_gd(prob, extract_cg_schedule(prob, x1, 6), x1)
        rel = float(np.linalg.norm(gd.x_out - cg.trajectory.x_out) / np.linalg.norm(cg.trajectory.x_out))
        worst = max(worst, rel)
    report(10, "GD under the extracted schedule reproduces CG (20 instances, d=10, T=6)", worst <= 1e-6,
           f"max_rel_diff={worst:.1e}")


def test_criterion_11_partial_acceleration():
    lam_min, lam_max, M, T = 0.01, 1.0, 1.0, 32
    prob = diagonal_quadratic(np.linspace(lam_min, lam_max, 50), seed=3)
    x1 = np.zeros(50)
    ratios = {}
    for m in (0.02, 0.05, 0.1, 0.5, 1.0):
        pa = pb.partial_accel(lam_min, m, M, T, lambda_max=lam_max)
        tr = run_gd(prob, build_schedule(m, M, T), x1)
        ratios[m] = (tr.final_residual / tr.residual_norm[0]) / pa["final_bound"]
    rho = pb.convergence_envelope(lam_min, M, T)["rho"]
    ident = abs(pb.partial_accel(lam_min, lam_min, M, T)["rate"] - rho)
    ok = all(r <= 1 for r in ratios.values()) and ident <= 1e-12
    report(11, "simulated residuals within 2(1-phi^-1)^T, rate = rho at m = lambda_min", ok,
           f"residual/bound={ {k: round(float(v), 3) for k, v in ratios.items()} } identity_err={ident:.1e}")


def test_criterion_12_noisy_stability():
    prob = path_laplacian_instance(100, 0.1, seed=0)
    # the corollary needs [lambda_min, lambda_max] inside [m, M]
    m, M, T, eps = prob.lambda_min, prob.lambda_max, 32, 1e-4
    spec = build_schedule(m, M, T)
    tr = run_gd(prob, spec, np.zeros(100), NoiseModel("bounded_adversarial", epsilon=eps))
    r1 = tr.residual_norm[0]
    S = pb.series_bound(m, M)
    worst = max(tr.residual_norm[t] / (pb.prefix_bound(t, spec.theta, spec.kappa_hat) * r1 + S * eps)
                for t in range(1, T + 1))
    report(12, "every noisy iterate within V'(t)|x1-x*| + series_bound*eps", worst <= 1,
           f"m={m:g} M={M:g} eps={eps:g} max_ratio={worst:.4f}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
