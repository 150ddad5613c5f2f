"""First-order optimizers that record full trajectories.

Row ``k`` of a :class:`Trajectory` describes the iterate x_k (k = 1..T+1):
``eta`` is the step that produced it (NaN on the first row) and ``xi_norm``
the norm of the perturbation added on the way in (0 on the first row).
Divergent runs are data, so once an iterate or gradient stops being finite
the remaining rows are filled with +inf and ``diverged`` is set.
"""

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import InvalidArgumentError, as_vector
from .problems import NO_NOISE, NoiseModel, QuadraticProblem
from .schedule import ScheduleSpec

CSV_COLUMNS = ("t", "eta", "residual_norm", "obj_gap", "grad_norm", "xi_norm")

PRECISIONS = {"f64": np.float64, "extended": np.longdouble}


@dataclass
class Trajectory:
    eta: np.ndarray
    residual_norm: np.ndarray
    obj_gap: np.ndarray
    grad_norm: np.ndarray
    xi_norm: np.ndarray
    x_out: np.ndarray
    iterates: np.ndarray = None
    diverged: bool = False
    converged: bool = False
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.residual_norm.shape[0]

    @property
    def t(self):
        return np.arange(1, len(self) + 1)

    @property
    def final_residual(self) -> float:
        return float(self.residual_norm[-1])

    @property
    def peak_residual(self) -> float:
        return float(np.max(self.residual_norm))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k in range(len(self)):
            w.writerow([k + 1] + [f"{float(col[k]):.17g}" for col in
                                  (self.eta, self.residual_norm, self.obj_gap,
                                   self.grad_norm, self.xi_norm)])
        return buf.getvalue()


class _Recorder:
    def __init__(self, problem, n_rows, record_iterates, dtype):
        self.problem = problem
        self.n = n_rows
        self.k = 0
        self.eta = np.full(n_rows, np.nan)
        self.res = np.full(n_rows, np.inf)
        self.gap = np.full(n_rows, np.inf)
        self.gnorm = np.full(n_rows, np.inf)
        self.xi = np.zeros(n_rows)
        self.iterates = np.full((n_rows, problem.dim), np.nan, dtype=dtype) if record_iterates else None
        self.x_star = np.asarray(problem.x_star)

    def add(self, x, g, eta=np.nan, xi_norm=0.0):
        k = self.k
        self.eta[k] = eta
        self.xi[k] = xi_norm
        if np.all(np.isfinite(x)):
            self.res[k] = float(np.linalg.norm(x - self.x_star.astype(x.dtype)))
            with np.errstate(over="ignore", invalid="ignore"):
                gap = float(self.problem.objective_gap(np.asarray(x, dtype=np.float64)))
            self.gap[k] = gap if math.isfinite(gap) else math.inf
            gn = float(np.linalg.norm(g)) if g is not None else math.nan
            self.gnorm[k] = gn if math.isfinite(gn) or g is None else math.inf
        if self.iterates is not None:
            self.iterates[k] = x
        self.k += 1

    def pad(self, etas=()):
        etas = list(etas)
        i = 0
        while self.k < self.n:
            self.eta[self.k] = etas[i] if i < len(etas) else np.nan
            self.xi[self.k] = np.inf
            self.k += 1
            i += 1

    def finish(self, x_out, **meta):
        diverged = meta.pop("diverged", False)
        converged = meta.pop("converged", False)
        return Trajectory(self.eta, self.res, self.gap, self.gnorm, self.xi,
                          np.asarray(x_out), self.iterates, diverged, converged, meta)


def schedule_hash(steps) -> str:
    return hashlib.sha256(np.asarray(steps, dtype=np.float64).tobytes()).hexdigest()[:16]


def _finite(v):
    with np.errstate(over="ignore", invalid="ignore"):
        return bool(np.all(np.isfinite(v)))


def run_gd(problem, schedule, x1, noise: NoiseModel = NO_NOISE, record_iterates=False,
           precision="f64") -> Trajectory:
    """x_{t+1} = x_t - eta_t grad f(x_t) + xi_t for every step of ``schedule``.

    ``precision="extended"`` runs the recurrence in ``np.longdouble``; its
    width is platform dependent (80-bit on x86-64 Linux).
    """
    dtype = PRECISIONS[precision]
    steps = schedule.steps if isinstance(schedule, ScheduleSpec) else np.asarray(schedule)
    steps = np.asarray(steps, dtype=dtype)
    x = as_vector(x1, problem.dim, name="x1", dtype=dtype).copy()
    T = steps.shape[0]
    rec = _Recorder(problem, T + 1, record_iterates, dtype)
    g = problem.gradient(x)
    rec.add(x, g)
    diverged = not _finite(g)
    for t in range(1, T + 1):
        if diverged:
            break
        eta = steps[t - 1]
        xi = noise.sample(t, x, float(eta), getattr(problem, "x_star", None))
        with np.errstate(over="ignore", invalid="ignore"):
            x = x - eta * g + xi.astype(dtype)
            g = problem.gradient(x) if _finite(x) else np.full_like(x, np.inf)
        xi_norm = float(np.linalg.norm(xi))
        if not (_finite(x) and _finite(g)):
            diverged = True
            rec.add(x, None, float(eta), xi_norm)
            rec.pad(steps[t:])
            break
        rec.add(x, g, float(eta), xi_norm)
    return rec.finish(x, optimizer="gd", schedule_hash=schedule_hash(steps),
                      seed=noise.seed, noise=noise.kind, precision_mode=precision,
                      diverged=diverged)


def run_line_search_gd(problem: QuadraticProblem, x1, T, record_iterates=False) -> Trajectory:
    """Exact line search eta_t = g^T g / g^T A g on a quadratic."""
    if not isinstance(problem, QuadraticProblem):
        raise InvalidArgumentError("closed-form line search needs a quadratic")
    x = as_vector(x1, problem.dim, name="x1").copy()
    rec = _Recorder(problem, T + 1, record_iterates, np.float64)
    g = problem.gradient(x)
    rec.add(x, g)
    converged = False
    for _ in range(T):
        gg = g @ g
        if gg == 0:
            converged = True
            break
        eta = gg / (g @ (problem.A @ g))
        x = x - eta * g
        g = problem.gradient(x)
        rec.add(x, g, eta)
    while rec.k < rec.n:
        rec.add(x, g, 0.0)
    return rec.finish(x, optimizer="line_search", converged=converged)


def _momentum(problem, x1, T, eta, beta, nesterov, record_iterates):
    if eta < 0 or beta < 0:
        raise InvalidArgumentError("eta and beta must be non-negative")
    x = as_vector(x1, problem.dim, name="x1").copy()
    x_prev = x.copy()
    rec = _Recorder(problem, T + 1, record_iterates, np.float64)
    rec.add(x, problem.gradient(x))
    diverged = False
    for t in range(T):
        with np.errstate(over="ignore", invalid="ignore"):
            if nesterov:
                y = x + beta * (x - x_prev)
                x_new = y - eta * problem.gradient(y)
            else:
                x_new = x - eta * problem.gradient(x) + beta * (x - x_prev)
            x_prev, x = x, x_new
            g = problem.gradient(x) if _finite(x) else None
        if g is None or not _finite(g):
            diverged = True
            rec.add(x, None, eta)
            rec.pad([eta] * (T - t - 1))
            break
        rec.add(x, g, eta)
    return rec.finish(x, optimizer="nesterov" if nesterov else "heavy_ball",
                      eta=eta, beta=beta, diverged=diverged)


def run_heavy_ball(problem, x1, T, eta, beta, record_iterates=False) -> Trajectory:
    """x_{t+1} = x_t - eta grad f(x_t) + beta (x_t - x_{t-1})."""
    return _momentum(problem, x1, T, eta, beta, False, record_iterates)


def run_nesterov(problem, x1, T, eta, beta, record_iterates=False) -> Trajectory:
    """y_t = x_t + beta (x_t - x_{t-1});  x_{t+1} = y_t - eta grad f(y_t)."""
    return _momentum(problem, x1, T, eta, beta, True, record_iterates)


def tuned_heavy_ball(lambda_min, lambda_max):
    """Classical (eta, beta) for heavy ball on a quadratic with the given spectrum ends."""
    sM, sm = math.sqrt(lambda_max), math.sqrt(lambda_min)
    return 4 / (sM + sm) ** 2, ((sM - sm) / (sM + sm)) ** 2


@dataclass
class CGResult:
    trajectory: Trajectory
    ritz_values: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray

    @property
    def degree(self):
        return self.ritz_values.shape[0]


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix built from CG coefficients."""
    k = len(alphas)
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    for j in range(k):
        diag[j] = 1 / alphas[j] + (betas[j - 1] / alphas[j - 1] if j > 0 else 0.0)
        if j < k - 1:
            off[j] = math.sqrt(betas[j]) / alphas[j]
    return diag, off


def run_cg(problem: QuadraticProblem, x1, T, rtol=1e-14, record_iterates=False) -> CGResult:
    """Conjugate gradient for T steps; stops early once the residual vanishes."""
    if T > problem.dim:
        raise InvalidArgumentError(f"T={T} exceeds the Krylov dimension {problem.dim}")
    A = problem.A
    x = as_vector(x1, problem.dim, name="x1").copy()
    r = problem.b - A @ x
    p = r.copy()
    rr = r @ r
    r0 = math.sqrt(rr)
    rec = _Recorder(problem, T + 1, record_iterates, np.float64)
    rec.add(x, -r)
    alphas, betas = [], []
    converged = r0 == 0
    for _ in range(T):
        if converged:
            break
        Ap = A @ p
        alpha = rr / (p @ Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = r @ r
        alphas.append(alpha)
        rec.add(x, -r, alpha)
        if math.sqrt(rr_new) <= rtol * r0:
            converged = True
            break
        beta = rr_new / rr
        betas.append(beta)
        p = r + beta * p
        rr = rr_new
    while rec.k < rec.n:
        rec.add(x, -r, 0.0)
    if alphas:
        diag, off = lanczos_tridiagonal(alphas, betas)
        ritz = scipy.linalg.eigh_tridiagonal(diag, off, eigvals_only=True) if len(diag) > 1 else diag
    else:
        ritz = np.empty(0)
    traj = rec.finish(x, optimizer="cg", converged=converged)
    return CGResult(traj, np.sort(ritz), np.array(alphas), np.array(betas))


def extract_cg_schedule(problem: QuadraticProblem, x1, T) -> ScheduleSpec:
    """Steps 1/ritz for the realized CG roots, padded with zeros up to T.

    Steps are ordered by the fractal permutation of the sorted roots when
    their count is a power of two, and by decreasing root otherwise.
    """
    from .schedule import fractal_perm
    from ._validation import is_power_of_two

    res = run_cg(problem, x1, T)
    ritz = res.ritz_values
    k = ritz.shape[0]
    if k and is_power_of_two(k):
        ordered = ritz[fractal_perm(k) - 1]
    else:
        ordered = ritz[::-1]
    steps = np.zeros(T)
    steps[:k] = 1 / ordered
    return ScheduleSpec(m=problem.lambda_min, M=problem.lambda_max, T=T, ordering="cg",
                        steps=steps, certified=False,
                        metadata={"ritz_values": ritz.tolist(), "degree": int(k)})
