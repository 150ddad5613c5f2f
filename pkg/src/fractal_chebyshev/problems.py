"""Objectives and gradient oracles: quadratics, log-cosh, and the combination lock.

Every problem exposes ``value(x)``, ``gradient(x)``, ``x_star``, ``f_star`` and
``dim`` so the optimizers can treat them uniformly.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from ._validation import (
    DimensionMismatchError,
    InvalidArgumentError,
    NotPositiveDefiniteError,
    as_vector,
)


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """f(x) = 1/2 x^T A x - b^T x with A symmetric positive definite."""

    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    lambda_min: float
    lambda_max: float
    metadata: dict = field(default_factory=dict)

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min

    @property
    def dim(self):
        return self.b.shape[0]

    @property
    def f_star(self):
        return self.value(self.x_star)

    def value(self, x):
        x = np.asarray(x)
        return 0.5 * x @ (self.A @ x) - self.b @ x

    def gradient(self, x):
        x = np.asarray(x)
        x = as_vector(x, self.dim, dtype=np.result_type(x.dtype, np.float64))
        return self.A.astype(x.dtype, copy=False) @ x - self.b.astype(x.dtype, copy=False)

    def objective_gap(self, x):
        # 1/2 (x - x*)^T A (x - x*) avoids cancellation in f(x) - f(x*)
        e = np.asarray(x, dtype=np.float64) - self.x_star
        return 0.5 * e @ (self.A @ e)

    def to_dict(self):
        return {
            "kind": "quadratic",
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        prob = make_quadratic(np.asarray(d["A"], dtype=float), np.asarray(d["b"], dtype=float))
        prob.metadata.update(d.get("metadata", {}))
        return prob


def _extreme_eigs(A):
    d = A.shape[0]
    if d <= 64:
        w = scipy.linalg.eigvalsh(A)
        return float(w[0]), float(w[-1])
    lo = scipy.sparse.linalg.eigsh(A, k=1, which="SA", tol=1e-10, return_eigenvectors=False)
    hi = scipy.sparse.linalg.eigsh(A, k=1, which="LA", tol=1e-10, return_eigenvectors=False)
    return float(lo[0]), float(hi[0])


def make_quadratic(A, b, lambda_min=None, lambda_max=None, metadata=None) -> QuadraticProblem:
    """Validate A, solve A x* = b by Cholesky, and estimate the spectrum ends."""
    A = np.array(A, dtype=np.float64)
    b = as_vector(b, name="b").copy()
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"A must be square, got shape {A.shape}")
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatchError("A and b have different dimensions")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-12 * scale:
        raise NotPositiveDefiniteError("A is not symmetric")
    A = 0.5 * (A + A.T)
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    x_star = scipy.linalg.cho_solve(factor, b)
    if lambda_min is None or lambda_max is None:
        lo, hi = _extreme_eigs(A)
        lambda_min = lo if lambda_min is None else lambda_min
        lambda_max = hi if lambda_max is None else lambda_max
    if lambda_min <= 0:
        raise NotPositiveDefiniteError(f"smallest eigenvalue {lambda_min} is not positive")
    for arr in (A, b, x_star):
        arr.setflags(write=False)
    return QuadraticProblem(A, b, x_star, float(lambda_min), float(lambda_max),
                            dict(metadata or {}))


def path_laplacian(d) -> np.ndarray:
    if d < 2:
        raise InvalidArgumentError("path graph needs at least 2 vertices")
    L = 2 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1)
    L[0, 0] = L[-1, -1] = 1
    return L


def path_laplacian_spectrum(d) -> np.ndarray:
    """Eigenvalues 2 - 2 cos(k pi / d), k = 0..d-1, ascending."""
    k = np.arange(d)
    return 2 - 2 * np.cos(k * np.pi / d)


def path_laplacian_instance(d=100, shift=0.1, scale_to_unit_lmax=True, seed=0) -> QuadraticProblem:
    """A = L / lambda_max(L) + shift I with b ~ N(0, I) drawn from ``seed``.

    The spectrum is taken from the closed form, so lambda_min(A) = shift and
    lambda_max(A) = 1 + shift when scaled.
    """
    L = path_laplacian(d)
    spec = path_laplacian_spectrum(d)
    scale = spec[-1] if scale_to_unit_lmax else 1.0
    A = L / scale + shift * np.eye(d)
    b = np.random.default_rng(seed).standard_normal(d)
    eigs = spec / scale + shift
    return make_quadratic(A, b, lambda_min=float(eigs[0]), lambda_max=float(eigs[-1]),
                          metadata={"fixture": "path_laplacian", "d": d, "shift": shift,
                                    "scaled": scale_to_unit_lmax, "seed": seed})


def diagonal_quadratic(eigenvalues, b=None, seed=0) -> QuadraticProblem:
    """Quadratic with A = diag(eigenvalues); b defaults to N(0, I) from ``seed``."""
    eigs = np.asarray(eigenvalues, dtype=np.float64)
    if b is None:
        b = np.random.default_rng(seed).standard_normal(eigs.shape[0])
    return make_quadratic(np.diag(eigs), b, lambda_min=float(eigs.min()),
                          lambda_max=float(eigs.max()),
                          metadata={"fixture": "diagonal", "seed": seed})


def random_spd(d, lambda_min=0.1, lambda_max=10.0, seed=0) -> QuadraticProblem:
    """Random orthogonal conjugation of a spectrum spread over [lambda_min, lambda_max]."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = np.sort(rng.uniform(lambda_min, lambda_max, d))
    eigs[0], eigs[-1] = lambda_min, lambda_max
    A = (Q * eigs) @ Q.T
    b = rng.standard_normal(d)
    return make_quadratic(A, b, metadata={"fixture": "random_spd", "seed": seed})


# --------------------------------------------------------------------------
# Noise
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Additive perturbation xi_t applied after each gradient step.

    kinds: ``none``; ``iid_gaussian`` (std ``sigma`` per coordinate);
    ``bounded_adversarial`` (norm ``epsilon``, pointing from x_t toward x*);
    ``gradient_noise`` (eta_t * epsilon times a seeded random unit vector).
    xi_t depends only on (seed, t, x_t), so replays are bit-identical.
    """

    kind: str = "none"
    sigma: float = 0.0
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "iid_gaussian", "bounded_adversarial", "gradient_noise"):
            raise InvalidArgumentError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.epsilon < 0:
            raise InvalidArgumentError("noise scales must be non-negative")

    @classmethod
    def gaussian(cls, param, seed=0, param_is_variance=True):
        sigma = math.sqrt(param) if param_is_variance else param
        return cls("iid_gaussian", sigma=sigma, seed=seed)

    def _rng(self, t):
        return np.random.default_rng([int(self.seed), int(t)])

    def _unit(self, t, d):
        v = self._rng(t).standard_normal(d)
        return v / np.linalg.norm(v)

    def sample(self, t, x, eta, x_star=None):
        d = np.shape(x)[0]
        if self.kind == "none":
            return np.zeros(d)
        if self.kind == "iid_gaussian":
            return self.sigma * self._rng(t).standard_normal(d)
        if self.kind == "gradient_noise":
            return eta * self.epsilon * self._unit(t, d)
        direction = None
        if x_star is not None:
            direction = np.asarray(x_star, dtype=np.float64) - np.asarray(x, dtype=np.float64)
            nrm = np.linalg.norm(direction)
            direction = direction / nrm if nrm > 0 and np.isfinite(nrm) else None
        if direction is None:
            direction = self._unit(t, d)
        return self.epsilon * direction


NO_NOISE = NoiseModel()


def gradient(problem, x):
    return problem.gradient(x)


def perturbed_gradient(problem, x, noise: NoiseModel, t, eta_t):
    """Exact gradient plus the xi_t that the step will add, for logging."""
    g = problem.gradient(x)
    xi = noise.sample(t, x, eta_t, getattr(problem, "x_star", None))
    return g, xi


# --------------------------------------------------------------------------
# Scalar and non-convex examples
# --------------------------------------------------------------------------

class LogCoshProblem:
    """f(x) = log cosh(x) + c x^2 (c = 0.01); 1.02-smooth, 0.02-strongly convex."""

    def __init__(self, ridge=0.01):
        self.ridge = ridge
        self.x_star = np.zeros(1)
        self.f_star = 0.0
        self.dim = 1
        self.lambda_min = 2 * ridge
        self.lambda_max = 1 + 2 * ridge

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        # log cosh x = |x| + log1p(exp(-2|x|)) - log 2
        ax = np.abs(x)
        return float(np.sum(ax + np.log1p(np.exp(-2 * ax)) - math.log(2) + self.ridge * x * x))

    def gradient(self, x):
        x = as_vector(x, 1)
        return np.tanh(x) + 2 * self.ridge * x

    def hessian(self, x):
        return 1 / np.cosh(x) ** 2 + 2 * self.ridge

    def objective_gap(self, x):
        return self.value(x) - self.f_star

    def to_dict(self):
        return {"kind": "logcosh", "ridge": self.ridge}


def _check_lock_args(eta_star, delta):
    eta_star = np.asarray(eta_star, dtype=np.float64)
    if eta_star.ndim != 1 or eta_star.size == 0 or np.any(eta_star <= 0):
        raise InvalidArgumentError("passcode must be a non-empty list of positive steps")
    if not (0 < delta <= 0.5 * eta_star.min()):
        raise InvalidArgumentError("need 0 < delta <= min(eta_star) / 2")
    return eta_star


def combination_lock_eval(eta_star, delta, x) -> dict:
    """Value and gradient of the nested piecewise lock function.

    Coordinate t is read only while every earlier coordinate sits inside its
    window [eta*_s - delta/2, eta*_s + delta/2].  At breakpoints the gradient
    is the right-hand derivative.
    """
    eta_star = _check_lock_args(eta_star, delta)
    x = as_vector(x, eta_star.shape[0])
    grad = np.zeros_like(x)
    h = delta / 2
    for t, (z, target) in enumerate(zip(x, eta_star)):
        if z <= -h:
            value = 2.0
            if z == -h:
                grad[t] = -1.0
            return {"value": value, "gradient": grad}
        if z < target - h:
            grad[t] = -1.0
            return {"value": float(1.0 - z), "gradient": grad}
        if z > target + h:
            return {"value": 0.0, "gradient": grad}
        if z == target + h:
            # window is closed; d/dz_t from the right is 0, later coordinates keep theirs
            tail = combination_lock_eval(eta_star[t + 1:], delta, x[t + 1:]) if t + 1 < len(x) else None
            if tail is None:
                return {"value": -1.0, "gradient": grad}
            grad[t + 1:] = tail["gradient"]
            return {"value": tail["value"], "gradient": grad}
    return {"value": -1.0, "gradient": grad}


class CombinationLockProblem:
    """Non-convex objective that GD from 0 solves only with the passcode schedule."""

    def __init__(self, eta_star, delta):
        self.eta_star = _check_lock_args(eta_star, delta)
        self.delta = float(delta)
        self.dim = self.eta_star.shape[0]
        self.x_star = self.eta_star.copy()
        self.f_star = -1.0

    def value(self, x):
        return combination_lock_eval(self.eta_star, self.delta, x)["value"]

    def gradient(self, x):
        return combination_lock_eval(self.eta_star, self.delta, x)["gradient"]

    def objective_gap(self, x):
        return self.value(x) - self.f_star

    def to_dict(self):
        return {"kind": "combination_lock", "eta_star": self.eta_star.tolist(),
                "delta": self.delta}


def problem_from_dict(d):
    kind = d.get("kind", "quadratic")
    if kind == "quadratic":
        return QuadraticProblem.from_dict(d)
    if kind == "logcosh":
        return LogCoshProblem(d.get("ridge", 0.01))
    if kind == "combination_lock":
        return CombinationLockProblem(d["eta_star"], d["delta"])
    raise InvalidArgumentError(f"unknown problem kind {kind!r}")
