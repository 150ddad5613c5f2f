"""Residual-polynomial norms and the closed-form bounds they are checked against.

Two routes are kept separate on purpose:

* the *oracle* side evaluates products prod(1 - eta_tau * lam) on a dense
  Chebyshev-spaced grid over [m, M].  A grid maximum never exceeds the true
  sup-norm, so it is the safe direction for checking upper bounds;
* the *bound* side is pure closed-form arithmetic in the parameters
  (theta, kappa_hat, binary expansions of range lengths) and never looks at
  the step sizes.

Terms of the form 2 / (1 + T_n(theta)) are computed as sech^2(n acosh(theta) / 2),
which does not overflow for large n.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import (
    InvalidArgumentError,
    check_power_of_two,
    check_spectrum_bounds,
)
from .schedule import ScheduleSpec, fractal_perm

RATIO_TOL = 1e-9


# --------------------------------------------------------------------------
# Chebyshev polynomials
# --------------------------------------------------------------------------

def cheb_poly(kind, n, z):
    """T_n(z) (``kind="first"``) or U_n(z) (``kind="second"``) by recurrence."""
    if n < 0:
        raise InvalidArgumentError("degree must be non-negative")
    z = np.asarray(z, dtype=np.result_type(z, np.float64))
    prev = np.ones_like(z)
    if n == 0:
        return prev if prev.ndim else prev[()]
    if kind == "first":
        cur = z.copy()
    elif kind == "second":
        cur = 2 * z
    else:
        raise InvalidArgumentError(f"kind must be 'first' or 'second', got {kind!r}")
    for _ in range(n - 1):
        prev, cur = cur, 2 * z * cur - prev
    return cur if cur.ndim else cur[()]


def log_cheb_at(n, theta) -> float:
    """log T_n(theta) for theta >= 1, stable for large n."""
    if theta < 1:
        raise InvalidArgumentError("theta must be >= 1")
    x = n * math.acosh(theta)
    return x + math.log1p(math.exp(-2 * x)) - math.log(2)


def cheb_at(n, theta) -> float:
    """T_n(theta) for theta >= 1 via cosh; may be +inf for huge arguments."""
    x = n * math.acosh(theta)
    return math.cosh(x) if x < 700 else math.inf


def good_factor(n, theta) -> float:
    """2 / (1 + T_n(theta)), evaluated as sech^2(n acosh(theta) / 2)."""
    if math.isinf(theta):
        return 0.0
    half = 0.5 * n * math.acosh(theta)
    e = math.exp(-2 * half)
    return 4 * e / (1 + e) ** 2


def theta_of(m, M) -> float:
    check_spectrum_bounds(m, M)
    return math.inf if M == m else (M + m) / (M - m)


# --------------------------------------------------------------------------
# Grid oracle
# --------------------------------------------------------------------------

def grid_size(T) -> int:
    return max(4096, 64 * int(T))


def chebyshev_grid(m, M, n_points) -> np.ndarray:
    """Chebyshev-Lobatto points on [m, M], both endpoints included, ascending."""
    k = np.arange(n_points)
    pts = (M + m) / 2 - (M - m) / 2 * np.cos(np.pi * k / (n_points - 1))
    pts[0], pts[-1] = m, M
    return pts


def _steps_of(schedule):
    if isinstance(schedule, ScheduleSpec):
        return np.asarray(schedule.steps, dtype=np.float64)
    return np.asarray(schedule, dtype=np.float64)


def _bounds_of(schedule, m, M):
    if m is None or M is None:
        if not isinstance(schedule, ScheduleSpec):
            raise InvalidArgumentError("m and M are required for a bare step array")
        m = schedule.m if m is None else m
        M = schedule.M if M is None else M
    return float(m), float(M)


def residual_poly(steps, lam):
    """Evaluate prod_t (1 - steps[t] * lam) at each point of ``lam``."""
    lam = np.asarray(lam)
    out = np.ones_like(lam, dtype=np.result_type(lam, np.asarray(steps)))
    for eta in steps:
        out = out * (1 - eta * lam)
    return out


def _polish(steps, lam, k, lo_s, hi_t, iters=8):
    """Newton-polish grid maxima of |p_{s:t}| toward the nearby critical point.

    Between consecutive roots, d/dlam log|p| = -sum eta/(1 - eta lam) is
    monotone, so the critical point is unique there.  Every returned value is
    an actual evaluation of |p|, so the result is still a lower bound.
    ``k`` are grid indices of the maxima; ``lo_s``/``hi_t`` are 0-based
    inclusive step ranges, one entry per pair.
    """
    n = lam.shape[0]
    lo = lam[np.maximum(k - 1, 0)]
    hi = lam[np.minimum(k + 1, n - 1)]
    x = lam[k].copy()
    j = np.arange(steps.shape[0])
    W = (j[None, :] >= lo_s[:, None]) & (j[None, :] <= hi_t[:, None])
    eta = np.where(W, steps[None, :], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(iters):
            d = 1 - eta * x[:, None]
            g = np.sum(eta / d, axis=1)
            gp = np.sum((eta / d) ** 2, axis=1)
            step = np.where(gp > 0, g / gp, 0.0)
            x = np.clip(np.where(np.isfinite(step), x - step, x), lo, hi)
    return np.abs(np.prod(1 - eta * x[:, None], axis=1))


def infix_norm_oracle(schedule, s, t, m=None, M=None, n_points=None) -> float:
    """Grid maximum of |p_{s:t}| over [m, M]; 1-based, inclusive; s = t+1 is empty.

    The grid maximum is polished locally (see ``_polish``), which can only
    raise it toward the true norm.
    """
    steps = _steps_of(schedule)
    T = steps.shape[0]
    if not (1 <= s <= t + 1 <= T + 1):
        raise InvalidArgumentError(f"invalid range s={s}, t={t} for T={T}")
    if s == t + 1:
        return 1.0
    m, M = _bounds_of(schedule, m, M)
    lam = chebyshev_grid(m, M, n_points or grid_size(T))
    vals = np.abs(residual_poly(steps[s - 1:t], lam))
    k = int(np.argmax(vals))
    pol = _polish(steps, lam, np.array([k]), np.array([s - 1]), np.array([t - 1]))[0]
    return float(max(vals[k], pol))


def infix_norm_table(schedule, m=None, M=None, n_points=None) -> np.ndarray:
    """All infix norms at once: ``table[s-1, t-1]`` for s <= t, NaN below.

    One cumulative product per start index, so the cost is O(T^2 * grid).
    """
    steps = _steps_of(schedule)
    T = steps.shape[0]
    m, M = _bounds_of(schedule, m, M)
    lam = chebyshev_grid(m, M, n_points or grid_size(T))
    factors = 1 - np.outer(steps, lam)
    table = np.full((T, T), np.nan)
    for s in range(T):
        prods = np.abs(np.cumprod(factors[s:], axis=0))
        k = np.argmax(prods, axis=1)
        grid_max = prods[np.arange(T - s), k]
        ts = np.arange(s, T)
        pol = _polish(steps, lam, k, np.full(T - s, s), ts)
        table[s, s:] = np.maximum(grid_max, pol)
    return table


# --------------------------------------------------------------------------
# Binary expansions and closed-form bounds
# --------------------------------------------------------------------------

class Bits(NamedTuple):
    bits: tuple
    bits_prime: tuple


def bits_decomp(n, convention="smallest") -> Bits:
    """Binary-expansion indices of ``n``, largest first.

    ``bits_prime`` drops the smallest index; ``convention="largest"`` drops
    the largest one instead (only used to compare the two readings).
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    n = int(n)
    bits = tuple(j for j in range(n.bit_length() - 1, -1, -1) if n >> j & 1)
    if convention == "smallest":
        prime = bits[:-1]
    elif convention == "largest":
        prime = bits[1:]
    else:
        raise InvalidArgumentError(f"unknown convention {convention!r}")
    return Bits(bits, prime)


def suffix_bound(length, theta) -> float:
    """V(length): product of 2/(1+T_{2^j}(theta)) over the bits of ``length``; V(0) = 1."""
    if length == 0:
        return 1.0
    out = 1.0
    for j in bits_decomp(length).bits:
        out *= good_factor(2 ** j, theta)
    return out


def prefix_bound(t, theta, kappa_hat, convention="smallest") -> float:
    """V'(t) = (kappa_hat - 1) / 4^{min bits(t)} * prod over bits'(t); V'(0) = 1."""
    if t == 0:
        return 1.0
    b = bits_decomp(t, convention)
    out = (kappa_hat - 1) / 4.0 ** b.bits[-1]
    for j in b.bits_prime:
        out *= good_factor(2 ** j, theta)
    return out


def _valuation(z):
    return (z & -z).bit_length() - 1


def split_index_zeta(s, t) -> int:
    """Index in [s-1, t] with the largest 2-adic valuation (0 counts as largest)."""
    if not (1 <= s <= t):
        raise InvalidArgumentError(f"need 1 <= s <= t, got s={s}, t={t}")
    if s == 1:
        return 0
    return max(range(s - 1, t + 1), key=_valuation)


def infix_bound(s, t, theta, kappa_hat) -> float:
    """V(zeta + 1 - s) * V'(t - zeta); empty pieces contribute 1."""
    zeta = split_index_zeta(s, t)
    return suffix_bound(zeta + 1 - s, theta) * prefix_bound(t - zeta, theta, kappa_hat)


def series_bound(m, M, T=None) -> float:
    """T-independent constant bounding sum_{t'<=t} ||p_{t':t}||.

    With m == M there is no such constant; the trivial value T is returned
    when ``T`` is given (each term has norm at most 1).
    """
    check_spectrum_bounds(m, M)
    if m == M:
        if T is None:
            raise InvalidArgumentError("series bound needs m < M, or T for the trivial bound")
        return float(T)
    r = (M + m) / (2 * m)
    return 18 * (M / m - 1) * r ** (1 / math.log(4)) * (1 + math.log(r))


def series_oracle(schedule, t, m=None, M=None, table=None) -> float:
    """Sum of grid-oracle norms of p_{t':t} for t' = 1..t."""
    if table is None:
        table = infix_norm_table(schedule, m, M)
    return float(np.sum(table[:t, t - 1]))


def lemma_series_sum(N, delta) -> float:
    """Direct sum over i = 1..N of prod_{j in bits(N+1-i)} 2/(1+T_{2^j}(1+delta))."""
    theta = 1 + delta
    return math.fsum(suffix_bound(n, theta) for n in range(1, N + 1))


def lemma_series_bound(delta) -> float:
    return math.exp(1 / (1 + delta)) * ((1 + delta) / delta) ** (1 / math.log(4))


# --------------------------------------------------------------------------
# Skewed Chebyshev polynomials and the factorization tree
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewedPoly:
    """(T_n(z) - cos alpha) / (T_n(theta) - cos alpha).

    Classified by the sign of cos(alpha): ``good`` when cos(alpha) <= 0
    (alpha >= pi/2), ``bad`` when cos(alpha) >= 0.  The right child in the
    factorization tree is always good, the left child bad.
    """

    n: int
    alpha: float
    theta: float

    @property
    def good(self) -> bool:
        return self.alpha >= math.pi / 2

    @property
    def bad(self) -> bool:
        return self.alpha <= math.pi / 2

    def __call__(self, z):
        return skewed_eval(self.n, self.alpha, self.theta, z)

    def children(self):
        if self.n % 2:
            raise InvalidArgumentError("odd degree does not split")
        h = self.n // 2
        return (SkewedPoly(h, self.alpha / 2, self.theta),
                SkewedPoly(h, math.pi - self.alpha / 2, self.theta))


def skewed_eval(n, alpha, theta, z):
    c = math.cos(alpha)
    return (cheb_poly("first", n, z) - c) / (cheb_at(n, theta) - c)


def skewed_exact_norm(n, alpha, theta) -> float:
    """max over [-1, 1] of |P_{n,alpha}|, reached where T_n(z) = -sign(cos alpha)."""
    c = math.cos(alpha)
    return (1 + abs(c)) / (cheb_at(n, theta) - c)


def skewed_norm_bound(n, alpha, theta) -> float:
    """2/(1+T_n(theta)) for good polynomials, 2/(n^2 (theta-1)) for bad ones."""
    if not (0 < alpha < math.pi) or theta <= 1:
        raise InvalidArgumentError("need 0 < alpha < pi and theta > 1")
    if alpha >= math.pi / 2:
        return good_factor(n, theta)
    return 2 / (n * n * (theta - 1))


class TreeExchange(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def tree_exchange_check(n, r, alpha, theta) -> TreeExchange:
    """B_{nr,alpha} * B_{r,(pi-alpha)/n} <= B_{nr,pi-alpha} * B_{r,alpha/n}."""
    if not (0 < alpha < math.pi / 2) or n < 2 or r < 1 or theta <= 1:
        raise InvalidArgumentError("need 0 < alpha < pi/2, n >= 2, r >= 1, theta > 1")
    lhs = skewed_exact_norm(n * r, alpha, theta) * skewed_exact_norm(r, (math.pi - alpha) / n, theta)
    rhs = skewed_exact_norm(n * r, math.pi - alpha, theta) * skewed_exact_norm(r, alpha / n, theta)
    return TreeExchange(lhs, rhs, lhs <= rhs * (1 + 1e-12))


@dataclass
class TreeNode:
    poly: SkewedPoly
    left: "TreeNode" = None
    right: "TreeNode" = None

    @property
    def is_leaf(self):
        return self.left is None

    def leaves(self):
        """Leaves in pre-order (left subtree first)."""
        if self.is_leaf:
            yield self
            return
        yield from self.left.leaves()
        yield from self.right.leaves()

    def internal_nodes(self):
        if self.is_leaf:
            return
        yield self
        yield from self.left.internal_nodes()
        yield from self.right.internal_nodes()


def build_factorization_tree(T, theta) -> TreeNode:
    """Complete binary tree rooted at P_{T, pi/2}; children split the angle."""
    T = check_power_of_two(T)

    def grow(poly):
        if poly.n == 1:
            return TreeNode(poly)
        lo, hi = poly.children()
        return TreeNode(poly, grow(lo), grow(hi))

    return grow(SkewedPoly(T, math.pi / 2, float(theta)))


def leaf_node_index(leaf: TreeNode, T) -> int:
    """Node index t whose gamma_t is the single root of a degree-1 leaf."""
    return int(round(leaf.poly.alpha * T / math.pi + 0.5))


def tree_preorder_perm(T, theta=2.0) -> np.ndarray:
    tree = build_factorization_tree(T, theta)
    return np.array([leaf_node_index(leaf, T) for leaf in tree.leaves()], dtype=np.int64)


# --------------------------------------------------------------------------
# Convergence envelopes
# --------------------------------------------------------------------------

def convergence_envelope(m, M, T) -> dict:
    """rho and the final-iterate factor 2 rho^T / (1 + rho^{2T})."""
    check_spectrum_bounds(m, M)
    sM, sm = math.sqrt(M), math.sqrt(m)
    rho = (sM - sm) / (sM + sm)
    if rho == 0:
        return {"rho": 0.0, "final_bound": 0.0}
    log_rt = T * math.log(rho)
    final = 2 * math.exp(log_rt) / (1 + math.exp(2 * log_rt))
    return {"rho": rho, "final_bound": final}


def phi_inverse(lambda_min, m, M) -> float:
    return 2 * (lambda_min + math.sqrt(M * m) - math.sqrt((M - lambda_min) * (m - lambda_min))) / (
        math.sqrt(M) + math.sqrt(m)) ** 2


def partial_accel(lambda_min, m, M, T, lambda_max=None) -> dict:
    """Rate 1 - phi^{-1} and final factor 2 (1 - phi^{-1})^T when m overshoots lambda_min."""
    lambda_max = M if lambda_max is None else lambda_max
    if not (0 < lambda_min <= m <= lambda_max <= M):
        raise InvalidArgumentError("need 0 < lambda_min <= m <= lambda_max <= M")
    phi_inv = phi_inverse(lambda_min, m, M)
    return {"phi_inv": phi_inv, "rate": 1 - phi_inv, "decay_time": 1 / phi_inv,
            "final_bound": 2 * (1 - phi_inv) ** T}


# --------------------------------------------------------------------------
# Spiky cyclic schedule
# --------------------------------------------------------------------------

def spiky_no_accel_check(eta_plus, eta_minus, n, m_cycles=1, n_points=None) -> dict:
    """Norm of one cycle (1 - eta+ lam)(1 - eta- lam)^n over [1/eta+, 1/eta-].

    Outside the regime eta+ >= 10 eta- and n <= 0.1 eta+/eta- the result is
    returned with ``applicable=False`` instead of raising.
    """
    ratio = eta_plus / eta_minus
    slack = 1 + 1e-12  # so that e.g. 0.1 / 0.01 counts as 10
    applicable = ratio * slack >= 10 and 1 <= n <= 0.1 * ratio * slack
    lo, hi = 1 / eta_plus, 1 / eta_minus
    lam_star = (eta_plus + n * eta_minus) / ((n + 1) * eta_plus * eta_minus)
    lam = chebyshev_grid(lo, hi, n_points or grid_size(n + 1))
    if lo <= lam_star <= hi:
        lam = np.sort(np.r_[lam, lam_star])

    def p(x):
        return (1 - eta_plus * x) * (1 - eta_minus * x) ** n

    norm = float(np.max(np.abs(p(lam))))
    closed = (ratio - 1) / (n + 1) * ((1 - 1 / ratio) * (1 - 1 / (n + 1))) ** n
    return {
        "applicable": applicable,
        "interval": (lo, hi),
        "norm_per_cycle": norm,
        "norm_m_cycles": norm ** m_cycles,
        "exceeds_1_34": bool(applicable and norm > 1.34),
        "lambda_star": lam_star,
        "p_at_lambda_star": float(abs(p(lam_star))),
        "p_at_lambda_star_closed_form": closed,
    }


# --------------------------------------------------------------------------
# Bound reports
# --------------------------------------------------------------------------

@dataclass
class BoundReport:
    rows: list = field(default_factory=list)

    def add(self, s, t, oracle_norm, bound):
        ratio = oracle_norm / bound if bound > 0 else (0.0 if oracle_norm == 0 else math.inf)
        self.rows.append({"s": int(s), "t": int(t), "oracle_norm": float(oracle_norm),
                          "bound": float(bound), "ratio": float(ratio),
                          "pass": bool(ratio <= 1 + RATIO_TOL)})

    @property
    def all_pass(self) -> bool:
        return all(r["pass"] for r in self.rows)

    @property
    def max_ratio(self) -> float:
        return max(r["ratio"] for r in self.rows)

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, ["s", "t", "oracle_norm", "bound", "ratio", "pass"])


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def _schedule_params(schedule):
    return schedule.theta, schedule.kappa_hat


def prefix_suffix_report(schedule: ScheduleSpec, table=None, convention="smallest") -> BoundReport:
    """Every prefix p_{1:t} against V'(t) and every suffix p_{s:T} against V(T+1-s)."""
    table = infix_norm_table(schedule) if table is None else table
    theta, kh = _schedule_params(schedule)
    T = schedule.T
    rep = BoundReport()
    for t in range(1, T + 1):
        rep.add(1, t, table[0, t - 1], prefix_bound(t, theta, kh, convention))
    for s in range(1, T + 1):
        rep.add(s, T, table[s - 1, T - 1], suffix_bound(T + 1 - s, theta))
    return rep


def infix_report(schedule: ScheduleSpec, table=None) -> BoundReport:
    table = infix_norm_table(schedule) if table is None else table
    theta, kh = _schedule_params(schedule)
    rep = BoundReport()
    for s in range(1, schedule.T + 1):
        for t in range(s, schedule.T + 1):
            rep.add(s, t, table[s - 1, t - 1], infix_bound(s, t, theta, kh))
    return rep


def series_report(schedule: ScheduleSpec, table=None) -> BoundReport:
    """Rows (1, t): suffix-anchored series sum at t against the series constant."""
    table = infix_norm_table(schedule) if table is None else table
    bound = series_bound(schedule.m, schedule.M)
    rep = BoundReport()
    for t in range(1, schedule.T + 1):
        rep.add(1, t, series_oracle(schedule, t, table=table), bound)
    return rep


def fractal_preorder_matches(T, theta=2.0) -> bool:
    return bool(np.array_equal(tree_preorder_perm(T, theta), fractal_perm(T)))
