"""Named verification sweeps returning row tables with a per-row ``pass`` column."""

import math
from dataclasses import dataclass

import numpy as np

from . import polybounds as pb
from .schedule import build_schedule, cheb_nodes, reciprocal_sum_closed_form, schedule_stats

CHECKS = ("prefix_suffix", "infix", "series", "tree_exchange", "factorization",
          "reciprocal_sum", "stats", "spiky")

TREE_EXCHANGE_GRID = {
    "alpha": np.linspace(0.01, math.pi / 2 - 0.01, 20),
    "n": (2, 4, 8),
    "r": (1, 2, 4),
    "theta": (1.05, 1.2, 2.0),
}

SPIKY_GRID = {"eta_plus": (10.0, 20.0, 50.0, 100.0), "eta_minus": (1.0,), "n": (1, 2, 5, 10)}


@dataclass
class CheckResult:
    name: str
    columns: list
    rows: list

    @property
    def all_pass(self):
        return all(r["pass"] for r in self.rows)

    def to_csv(self):
        return pb.rows_to_csv(self.rows, self.columns)


def _report(name, rep: pb.BoundReport):
    return CheckResult(name, ["s", "t", "oracle_norm", "bound", "ratio", "pass"], rep.rows)


def check_tree_exchange(grid=None):
    grid = grid or TREE_EXCHANGE_GRID
    rows = []
    for theta in grid["theta"]:
        for n in grid["n"]:
            for r in grid["r"]:
                for a in grid["alpha"]:
                    res = pb.tree_exchange_check(n, r, float(a), theta)
                    rows.append({"n": n, "r": r, "alpha": float(a), "theta": float(theta),
                                 "lhs": res.lhs, "rhs": res.rhs, "pass": bool(res.holds)})
    return CheckResult("tree_exchange", ["n", "r", "alpha", "theta", "lhs", "rhs", "pass"], rows)


def check_factorization(T=8, theta=1.5, samples=1000, seed=0, tol=1e-12):
    """Lemma-level identity at random (n, alpha, theta, z) plus every tree node on a z-grid."""
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for _ in range(samples):
        n = int(2 ** rng.integers(1, 6))
        a = float(rng.uniform(0.01, math.pi - 0.01))
        th = float(rng.uniform(1.01, 3.0))
        z = float(rng.uniform(-1, 1))
        lhs = pb.skewed_eval(n, a, th, z)
        rhs = pb.skewed_eval(n // 2, a / 2, th, z) * pb.skewed_eval(n // 2, math.pi - a / 2, th, z)
        worst = max(worst, abs(lhs - rhs))
    rows.append({"item": "random_samples", "count": samples, "max_abs_err": worst,
                 "pass": worst <= tol})
    z = np.linspace(-1, 1, 257)
    tree = pb.build_factorization_tree(T, theta)
    err = 0.0
    count = 0
    for node in tree.internal_nodes():
        diff = node.poly(z) - node.left.poly(z) * node.right.poly(z)
        err = max(err, float(np.max(np.abs(diff))))
        count += 1
    rows.append({"item": f"tree_T{T}_nodes", "count": count, "max_abs_err": err, "pass": err <= 1e-10})
    root = abs(float(tree.poly(theta)) - 1.0)
    rows.append({"item": "root_at_theta", "count": 1, "max_abs_err": root, "pass": root <= 1e-12})
    match = pb.fractal_preorder_matches(T, theta)
    rows.append({"item": "preorder_equals_fractal_perm", "count": T, "max_abs_err": 0.0 if match else 1.0,
                 "pass": match})
    return CheckResult("factorization", ["item", "count", "max_abs_err", "pass"], rows)


def check_reciprocal_sum(m, M, T, tol=1e-9):
    rows = []
    Ts = sorted({1, 2, 4, 8, 16, 32, 64, 128, T})
    for n in Ts:
        direct = math.fsum(1 / g for g in cheb_nodes(m, M, n))
        closed = reciprocal_sum_closed_form(m, M, n)
        rel = abs(direct - closed) / closed
        rows.append({"m": m, "M": M, "T": n, "direct": direct, "closed_form": closed,
                     "rel_err": rel, "pass": rel <= tol})
    return CheckResult("reciprocal_sum", ["m", "M", "T", "direct", "closed_form", "rel_err", "pass"], rows)


def check_stats(m, M, T, tol=1e-9):
    spec = build_schedule(m, M, T)
    st = schedule_stats(spec)
    closed_mean = reciprocal_sum_closed_form(m, M, T) / T
    in_range = (1 / M < st["min_step"] and st["max_step"] < 1 / m) if m < M else True
    ok = in_range and abs(st["mean_step"] - closed_mean) <= tol * closed_mean
    row = {**st, "closed_form_mean": closed_mean, "pass": bool(ok)}
    cols = ["min_step", "max_step", "mean_step", "closed_form_mean", "count_above_2_over_M", "pass"]
    return CheckResult("stats", cols, [row])


def check_spiky(grid=None, m_cycles=4, tol=1e-9):
    grid = grid or SPIKY_GRID
    rows = []
    for ep in grid["eta_plus"]:
        for em in grid["eta_minus"]:
            for n in grid["n"]:
                r = pb.spiky_no_accel_check(ep, em, n, m_cycles)
                num, closed = r["p_at_lambda_star"], r["p_at_lambda_star_closed_form"]
                match = abs(num - closed) <= tol * max(1.0, abs(closed))
                ok = match and (r["exceeds_1_34"] or not r["applicable"])
                rows.append({"eta_plus": ep, "eta_minus": em, "n": n, "applicable": r["applicable"],
                             "norm_per_cycle": r["norm_per_cycle"],
                             "norm_m_cycles": r["norm_m_cycles"],
                             "p_at_lambda_star": num, "closed_form": closed, "pass": bool(ok)})
    cols = ["eta_plus", "eta_minus", "n", "applicable", "norm_per_cycle", "norm_m_cycles",
            "p_at_lambda_star", "closed_form", "pass"]
    return CheckResult("spiky", cols, rows)


def run_check(name, m=0.05, M=1.0, T=16, convention="smallest", seed=0):
    if name in ("prefix_suffix", "infix", "series"):
        spec = build_schedule(m, M, T)
        table = pb.infix_norm_table(spec)
        if name == "prefix_suffix":
            return _report(name, pb.prefix_suffix_report(spec, table, convention))
        if name == "infix":
            return _report(name, pb.infix_report(spec, table))
        return _report(name, pb.series_report(spec, table))
    if name == "tree_exchange":
        return check_tree_exchange()
    if name == "factorization":
        return check_factorization(T, seed=seed)
    if name == "reciprocal_sum":
        return check_reciprocal_sum(m, M, T)
    if name == "stats":
        return check_stats(m, M, T)
    if name == "spiky":
        return check_spiky()
    raise KeyError(name)
