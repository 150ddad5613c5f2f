"""Chebyshev step sizes, the fractal permutation, and schedule transforms.

Node indices are 1-based everywhere in this module (``cheb_nodes(...)[t-1]``
is the node gamma_t, ``fractal_perm(T)`` contains the values 1..T).  The JSON
form written by :meth:`ScheduleSpec.to_json` stores the permutation 0-based,
like the short reference snippet ``steps[perm]`` in NumPy.

Orderings are named after the order in which the *nodes* are visited:

``fractal``
    eta_t = 1 / gamma_{sigma_T(t)}.
``reverse_fractal``
    the fractal schedule read backwards.
``increasing``
    nodes in increasing order, so the step sizes *decrease* (largest step first).
``decreasing``
    nodes in decreasing order, so the step sizes increase (largest step last).
``random``
    a seeded uniformly random permutation.
``explicit``
    a caller-supplied permutation of 1..T.
"""

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import (
    InvalidArgumentError,
    check_horizon,
    check_power_of_two,
    check_spectrum_bounds,
)

ORDERINGS = ("fractal", "reverse_fractal", "increasing", "decreasing", "random", "explicit")


@dataclass(frozen=True, eq=False)
class ScheduleSpec:
    """An ordered learning-rate schedule plus the parameters it came from.

    ``m`` and ``M`` are the spectral estimates used to build the nodes,
    ``ordering`` is a label (see module docstring), ``steps`` is a read-only
    array of length ``T``.  ``perm`` is the 1-based node permutation when the
    schedule is a reordering of Chebyshev nodes, else ``None``.
    """

    m: float
    M: float
    T: int
    ordering: str
    steps: np.ndarray
    certified: bool = True
    perm: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        steps = np.array(self.steps, dtype=np.result_type(self.steps, np.float64))
        if steps.ndim != 1:
            raise InvalidArgumentError("steps must be one-dimensional")
        if self.T != steps.shape[0]:
            raise InvalidArgumentError(f"T={self.T} does not match {steps.shape[0]} steps")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        if self.perm is not None:
            perm = np.array(self.perm, dtype=np.int64)
            perm.setflags(write=False)
            object.__setattr__(self, "perm", perm)

    def __len__(self):
        return self.T

    def __iter__(self):
        return iter(self.steps)

    @property
    def theta(self) -> float:
        """(M+m)/(M-m); infinite when m == M."""
        if self.M == self.m:
            return math.inf
        return (self.M + self.m) / (self.M - self.m)

    @property
    def rho(self) -> float:
        sM, sm = math.sqrt(self.M), math.sqrt(self.m)
        return (sM - sm) / (sM + sm)

    @property
    def kappa_hat(self) -> float:
        return self.M / self.m

    def to_dict(self) -> dict:
        out = {
            "m": float(self.m),
            "M": float(self.M),
            "T": int(self.T),
            "ordering": self.ordering,
            "steps": [float(s) for s in self.steps],
            "certified": bool(self.certified),
        }
        if self.perm is not None:
            out["perm"] = [int(p) - 1 for p in self.perm]
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    def to_json(self, indent=None) -> str:
        """Serialize; every step is written with 17 significant digits."""
        d = self.to_dict()
        steps_txt = "[" + ", ".join(f"{float(s):.17g}" for s in self.steps) + "]"
        d["steps"] = "__STEPS__"
        txt = json.dumps(d, indent=indent)
        return txt.replace('"__STEPS__"', steps_txt)

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpec":
        perm = d.get("perm")
        if perm is not None:
            perm = np.asarray(perm, dtype=np.int64) + 1
        steps = np.asarray(d["steps"], dtype=np.float64)
        return cls(
            m=float(d["m"]),
            M=float(d["M"]),
            T=int(d.get("T", len(steps))),
            ordering=d.get("ordering", "explicit"),
            steps=steps,
            certified=bool(d.get("certified", True)),
            perm=perm,
            metadata=dict(d.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, txt: str) -> "ScheduleSpec":
        return cls.from_dict(json.loads(txt))


def cheb_nodes(m, M, T, dtype=np.float64) -> np.ndarray:
    """Chebyshev nodes gamma_1 < ... < gamma_T on [m, M].

    ``dtype=np.longdouble`` evaluates in extended precision.
    """
    check_spectrum_bounds(m, M)
    T = check_horizon(T)
    m, M = dtype(m), dtype(M)
    t = np.arange(1, T + 1, dtype=dtype)
    pi = dtype(np.pi) if dtype is not np.longdouble else np.longdouble("3.14159265358979323846264338327950288")
    angles = (t - dtype(0.5)) * pi / dtype(T)
    nodes = (M + m) / 2 - (M - m) / 2 * np.cos(angles)
    if M == m:
        nodes[:] = m
    return nodes


def fractal_perm(T) -> np.ndarray:
    """The fractal permutation sigma_T as a 1-based integer array."""
    T = check_power_of_two(T)
    perm = np.array([1], dtype=np.int64)
    while perm.shape[0] < T:
        n = perm.shape[0]
        perm = np.column_stack([perm, 2 * n + 1 - perm]).ravel()
    return perm


def _ordering_perm(ordering, T, seed=None, permutation=None):
    if ordering == "fractal":
        return fractal_perm(T)
    if ordering == "reverse_fractal":
        return fractal_perm(T)[::-1].copy()
    if ordering == "increasing":
        return np.arange(1, T + 1, dtype=np.int64)
    if ordering == "decreasing":
        return np.arange(T, 0, -1, dtype=np.int64)
    if ordering == "random":
        rng = np.random.default_rng(seed)
        return rng.permutation(T).astype(np.int64) + 1
    if ordering == "explicit":
        if permutation is None:
            raise InvalidArgumentError("explicit ordering needs a permutation")
        perm = np.asarray(permutation, dtype=np.int64)
        if perm.shape != (T,) or not np.array_equal(np.sort(perm), np.arange(1, T + 1)):
            raise InvalidArgumentError("permutation must be a rearrangement of 1..T")
        return perm
    raise InvalidArgumentError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")


def build_schedule(m, M, T, ordering="fractal", *, seed=None, permutation=None,
                   dtype=np.float64) -> ScheduleSpec:
    """Reciprocal Chebyshev nodes arranged by ``ordering``.

    Examples
    --------
    >>> s = build_schedule(0.1, 1, 8)
    >>> [round(float(x), 2) for x in s.steps[:2]], round(float(s.steps[-1]), 2)
    ([9.2, 1.01], 1.25)
    """
    nodes = cheb_nodes(m, M, T, dtype=dtype)
    perm = _ordering_perm(ordering, int(T), seed=seed, permutation=permutation)
    steps = 1 / nodes[perm - 1]
    metadata = {"seed": seed} if ordering == "random" else {}
    return ScheduleSpec(m=float(m), M=float(M), T=int(T), ordering=ordering,
                        steps=steps, perm=perm, metadata=metadata)


def constant_schedule(eta, T, m=None, M=None) -> ScheduleSpec:
    """T copies of ``eta``; ``m``/``M`` default to 1/eta."""
    T = check_horizon(T)
    if eta <= 0:
        raise InvalidArgumentError("eta must be positive")
    m = 1 / eta if m is None else m
    M = 1 / eta if M is None else M
    return ScheduleSpec(m=float(m), M=float(M), T=T, ordering="constant",
                        steps=np.full(T, float(eta)), certified=bool(eta <= 2 / M))


def reverse(spec: ScheduleSpec) -> ScheduleSpec:
    name = {"fractal": "reverse_fractal", "reverse_fractal": "fractal",
            "increasing": "decreasing", "decreasing": "increasing"}.get(
        spec.ordering, f"reversed({spec.ordering})")
    perm = None if spec.perm is None else spec.perm[::-1]
    return replace(spec, ordering=name, steps=spec.steps[::-1], perm=perm)


def repeat(spec: ScheduleSpec, cycles: int) -> ScheduleSpec:
    if cycles < 1:
        raise InvalidArgumentError("cycles must be >= 1")
    if cycles == 1:
        return spec
    meta = dict(spec.metadata, base_T=spec.T, cycles=cycles)
    return replace(spec, T=spec.T * cycles, steps=np.tile(spec.steps, cycles),
                   perm=None, ordering=f"repeat({spec.ordering})", metadata=meta)


def concat(spec: ScheduleSpec, other: ScheduleSpec) -> ScheduleSpec:
    """Join two schedules; mismatched (m, M) clears ``certified``."""
    same = math.isclose(spec.m, other.m) and math.isclose(spec.M, other.M)
    meta = dict(spec.metadata, parts=[spec.T, other.T])
    if not same:
        meta["mismatched_bounds"] = [[spec.m, spec.M], [other.m, other.M]]
    return ScheduleSpec(
        m=min(spec.m, other.m), M=max(spec.M, other.M), T=spec.T + other.T,
        ordering=f"concat({spec.ordering},{other.ordering})",
        steps=np.concatenate([spec.steps, other.steps]),
        certified=spec.certified and other.certified and same, metadata=meta)


def insert_slow(spec: ScheduleSpec, count: int, value=None, positions="front") -> ScheduleSpec:
    """Insert ``count`` slow steps (default 1/M).

    ``positions`` is ``"front"``, ``"back"`` or a sequence of 0-based indices
    into the original schedule; each listed index receives ``count`` steps
    placed before it.  Values above 2/M are allowed with a warning and leave
    the result uncertified.
    """
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")
    value = 1 / spec.M if value is None else float(value)
    if value < 0:
        raise InvalidArgumentError("slow step must be non-negative")
    certified = spec.certified
    if value > 2 / spec.M:
        warnings.warn(f"slow step {value} exceeds 2/M={2 / spec.M}; stability guarantee lapses",
                      stacklevel=2)
        certified = False
    block = np.full(count, value, dtype=spec.steps.dtype)
    if positions == "front":
        steps = np.concatenate([block, spec.steps])
    elif positions == "back":
        steps = np.concatenate([spec.steps, block])
    else:
        idx = sorted(int(i) for i in positions)
        if any(i < 0 or i > spec.T for i in idx):
            raise InvalidArgumentError("insertion index out of range")
        pieces, prev = [], 0
        for i in idx:
            pieces += [spec.steps[prev:i], block]
            prev = i
        pieces.append(spec.steps[prev:])
        steps = np.concatenate(pieces)
    meta = dict(spec.metadata, inserted_slow=int(count * (1 if isinstance(positions, str) else len(positions))))
    return replace(spec, T=steps.shape[0], steps=steps, perm=None, certified=certified,
                   ordering=f"slow({spec.ordering})", metadata=meta)


def waltz(spec: ScheduleSpec, M_est=None) -> ScheduleSpec:
    """Triplets (eta_{2t-1}, eta_{2t}, 1/M_est)."""
    if spec.T % 2:
        raise InvalidArgumentError("waltz needs an even number of steps")
    M_est = spec.M if M_est is None else float(M_est)
    pairs = spec.steps.reshape(-1, 2)
    slow = np.full((pairs.shape[0], 1), 1 / M_est, dtype=spec.steps.dtype)
    steps = np.hstack([pairs, slow]).ravel()
    certified = spec.certified and 1 / M_est <= 2 / spec.M
    return replace(spec, T=steps.shape[0], steps=steps, perm=None, certified=certified,
                   ordering=f"waltz({spec.ordering})", metadata=dict(spec.metadata, M_est=M_est))


_TRANSFORMS = {"reverse": reverse, "repeat": repeat, "concat": concat,
               "insert_slow": insert_slow, "waltz": waltz}


def transform(spec: ScheduleSpec, op: str, *args, **kwargs) -> ScheduleSpec:
    """Dispatch to one of reverse, repeat, concat, insert_slow, waltz by name."""
    try:
        fn = _TRANSFORMS[op]
    except KeyError:
        raise InvalidArgumentError(f"unknown transform {op!r}") from None
    return fn(spec, *args, **kwargs)


def spiky_schedule(eta_plus, eta_minus, n, cycles=1) -> ScheduleSpec:
    """One large step followed by ``n`` small ones, repeated ``cycles`` times."""
    if eta_minus <= 0 or eta_plus < eta_minus:
        raise InvalidArgumentError("need eta_plus >= eta_minus > 0")
    if n < 1 or cycles < 1:
        raise InvalidArgumentError("n and cycles must be >= 1")
    cycle = np.r_[float(eta_plus), np.full(int(n), float(eta_minus))]
    steps = np.tile(cycle, int(cycles))
    return ScheduleSpec(m=1 / eta_plus, M=1 / eta_minus, T=steps.shape[0], ordering="spiky",
                        steps=steps, certified=False,
                        metadata={"eta_plus": eta_plus, "eta_minus": eta_minus, "n": int(n),
                                  "cycles": int(cycles)})


def schedule_stats(spec: ScheduleSpec) -> dict:
    # fsum over steps in ascending node order (descending step size) for reproducibility
    ordered = sorted((float(s) for s in spec.steps), reverse=True)
    mean = math.fsum(ordered) / len(ordered)
    return {
        "min_step": ordered[-1],
        "max_step": ordered[0],
        "mean_step": mean,
        "count_above_2_over_M": sum(1 for s in ordered if s > 2 / spec.M),
    }


def reciprocal_sum_closed_form(m, M, T) -> float:
    """Sum of 1/gamma_t in closed form, T*tanh(T*acosh(theta))/sqrt(Mm)."""
    check_spectrum_bounds(m, M)
    if M == m:
        return T / m
    theta = (M + m) / (M - m)
    return T * math.tanh(T * math.acosh(theta)) / math.sqrt(M * m)
