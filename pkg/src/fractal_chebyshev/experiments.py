"""Named desk-scale experiments.  Each returns CSV tables plus a summary dict."""

import json
import math
import os
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import polybounds as pb
from .optimize import run_cg, run_gd, extract_cg_schedule
from .problems import (
    CombinationLockProblem,
    LogCoshProblem,
    NoiseModel,
    diagonal_quadratic,
    path_laplacian_instance,
    random_spd,
)
from .schedule import build_schedule, constant_schedule

DEFAULT_SEED = 20240601

DEFAULTS = {
    "perm_stability": {"d": 100, "shift": 0.1, "m": 0.2, "M": 2.2, "T": 32,
                       "noise": 0.0005, "noise_param_is_variance": True, "baseline_lr": 0.9,
                       "orderings": ["fractal", "reverse_fractal", "increasing", "decreasing"]},
    "logcosh": {"m": 0.01, "M": 5.0, "T": 32, "x1": 2.0},
    "lock": {"eta_star": [0.5, 1.2, 0.8], "delta": 0.1},
    "spiky": {"eta_plus": [10.0, 20.0, 50.0, 100.0], "eta_minus": [1.0], "n": [1, 2, 5, 10],
              "m_cycles": 4},
    "partial_accel": {"lambda_min": 0.01, "lambda_max": 1.0, "M": 1.0, "T": 32, "d": 50,
                      "m_grid": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]},
    "cg_schedule": {"instances": 20, "d": 10, "T": 6, "lambda_min": 0.1, "lambda_max": 10.0},
}

DEFAULT_PRECISION = {"perm_stability": "extended"}


class UnknownExperimentError(KeyError):
    pass


@dataclass
class ExperimentResult:
    name: str
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return self.summary["all_pass"]


def thread_count():
    raw = os.environ.get("CHEB_FRACTAL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else min(8, os.cpu_count() or 1)


def pmap(fn, items):
    """Order-preserving map over a thread pool capped by CHEB_FRACTAL_THREADS."""
    items = list(items)
    with ThreadPoolExecutor(max_workers=thread_count()) as ex:
        return list(ex.map(fn, items))


def version_string():
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _csv(rows, columns):
    return pb.rows_to_csv(rows, columns)


def _rel(a, b):
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
                 / np.linalg.norm(np.asarray(b, dtype=np.float64)))


def perm_stability(p, seed, precision):
    prob = path_laplacian_instance(p["d"], p["shift"], seed=seed)
    x1 = np.zeros(prob.dim)
    dtype = np.longdouble if precision == "extended" else np.float64
    noise = NoiseModel.gaussian(p["noise"], seed=seed, param_is_variance=p["noise_param_is_variance"])
    specs = {o: build_schedule(p["m"], p["M"], p["T"], o, dtype=dtype) for o in p["orderings"]}

    def clean(o):
        return run_gd(prob, specs[o], x1, precision=precision)

    def noisy(o):
        return run_gd(prob, specs[o], x1, noise=noise, precision=precision)

    files = {}
    clean_runs = dict(zip(p["orderings"], pmap(clean, p["orderings"])))
    noisy_runs = dict(zip(p["orderings"], pmap(noisy, p["orderings"])))
    base = constant_schedule(p["baseline_lr"], p["T"])
    baseline = {"noiseless": run_gd(prob, base, x1, precision=precision),
                "noisy": run_gd(prob, base, x1, noise=noise, precision=precision)}
    for o in p["orderings"]:
        files[f"trajectory_{o}_noiseless.csv"] = clean_runs[o].to_csv()
        files[f"trajectory_{o}_noisy.csv"] = noisy_runs[o].to_csv()
    for k, tr in baseline.items():
        files[f"trajectory_constant_{k}.csv"] = tr.to_csv()

    ref = clean_runs[p["orderings"][0]].x_out
    agree = max(_rel(tr.x_out, ref) for tr in clean_runs.values())
    metrics = {
        "final_residual": {o: tr.final_residual for o, tr in clean_runs.items()},
        "peak_residual": {o: tr.peak_residual for o, tr in clean_runs.items()},
        "noisy_final_residual": {o: tr.final_residual for o, tr in noisy_runs.items()},
        "baseline_final_residual": {k: tr.final_residual for k, tr in baseline.items()},
        "final_iterate_max_rel_diff": agree,
        "lambda_min": prob.lambda_min,
        "lambda_max": prob.lambda_max,
    }
    passes = {"noiseless_finals_agree": agree <= 1e-6}
    if "fractal" in clean_runs and "increasing" in clean_runs:
        ratio = clean_runs["increasing"].peak_residual / clean_runs["fractal"].peak_residual
        metrics["peak_ratio_increasing_over_fractal"] = ratio
        passes["increasing_peak_10x"] = ratio >= 10
    if "fractal" in noisy_runs:
        passes["noisy_fractal_finite"] = math.isfinite(noisy_runs["fractal"].final_residual)
    return files, metrics, passes


def logcosh(p, seed, precision):
    prob = LogCoshProblem()
    spec = build_schedule(p["m"], p["M"], p["T"])
    tr = run_gd(prob, spec, [p["x1"]], precision=precision)
    bound = pb.convergence_envelope(p["m"], p["M"], p["T"])["final_bound"] * abs(p["x1"])
    final = abs(float(tr.x_out[0]))
    metrics = {"final_abs_x": final, "envelope_value": bound, "diverged": tr.diverged}
    # success means the quadratic guarantee is visibly violated
    return {"trajectory.csv": tr.to_csv()}, metrics, {"bound_violated": final > bound}


def lock(p, seed, precision):
    eta = list(map(float, p["eta_star"]))
    delta = float(p["delta"])
    prob = CombinationLockProblem(eta, delta)
    x1 = np.zeros(len(eta))
    runs = [("passcode", 0, 0.0, eta)]
    for t in range(len(eta)):
        for sign in (1.0, -1.0):
            steps = list(eta)
            steps[t] += sign * delta
            runs.append(("perturbed", t + 1, sign * delta, steps))
    rows = []
    for kind, coord, shift, steps in runs:
        tr = run_gd(prob, steps, x1, precision=precision)
        rows.append({"run": kind, "coordinate": coord, "shift": shift,
                     "final_value": float(prob.value(tr.x_out))})
    files = {"lock_runs.csv": _csv(rows, ["run", "coordinate", "shift", "final_value"]),
             "trajectory_passcode.csv": run_gd(prob, eta, x1).to_csv()}
    passes = {"passcode_reaches_minus_1": rows[0]["final_value"] == -1.0,
              "perturbed_all_nonnegative": all(r["final_value"] >= 0 for r in rows[1:])}
    return files, {"final_values": [r["final_value"] for r in rows]}, passes


def spiky(p, seed, precision):
    from .checks import check_spiky
    res = check_spiky({"eta_plus": p["eta_plus"], "eta_minus": p["eta_minus"], "n": p["n"]},
                      m_cycles=p["m_cycles"])
    applicable = [r for r in res.rows if r["applicable"]]
    metrics = {"applicable_rows": len(applicable),
               "min_applicable_norm": min((r["norm_per_cycle"] for r in applicable), default=None)}
    passes = {"applicable_exceed_1_34": all(r["norm_per_cycle"] > 1.34 for r in applicable),
              "closed_form_matches": res.all_pass}
    return {"spiky.csv": res.to_csv()}, metrics, passes


def partial_accel(p, seed, precision):
    lmin, lmax, M, T = p["lambda_min"], p["lambda_max"], p["M"], p["T"]
    prob = diagonal_quadratic(np.linspace(lmin, lmax, p["d"]), seed=seed)
    x1 = np.zeros(prob.dim)
    rows, files = [], {}
    for m in p["m_grid"]:
        pa = pb.partial_accel(lmin, m, M, T, lambda_max=lmax)
        tr = run_gd(prob, build_schedule(m, M, T), x1, precision=precision)
        rel = tr.final_residual / tr.residual_norm[0]
        rows.append({"m": float(m), "phi_inv": pa["phi_inv"], "rate": pa["rate"],
                     "decay_time": pa["decay_time"], "final_bound": pa["final_bound"],
                     "simulated_rel_residual": rel, "pass": bool(rel <= pa["final_bound"])})
        files[f"trajectory_m{m:g}.csv"] = tr.to_csv()
    files["partial_accel.csv"] = _csv(rows, ["m", "phi_inv", "rate", "decay_time", "final_bound",
                                             "simulated_rel_residual", "pass"])
    rho = pb.convergence_envelope(lmin, M, T)["rho"]
    identity_err = abs(pb.partial_accel(lmin, lmin, M, T, lambda_max=lmax)["rate"] - rho)
    passes = {"simulated_within_bound": all(r["pass"] for r in rows),
              "identity_at_lambda_min": identity_err <= 1e-12}
    return files, {"identity_abs_err": identity_err, "rho": rho}, passes


def cg_schedule(p, seed, precision):
    T = p["T"]

    def one(i):
        prob = random_spd(p["d"], p["lambda_min"], p["lambda_max"], seed=seed + i)
        x1 = np.zeros(prob.dim)
        cg = run_cg(prob, x1, T)
        spec = extract_cg_schedule(prob, x1, T)
        gd = run_gd(prob, spec, x1)
        return i, cg, gd, _rel(gd.x_out, cg.trajectory.x_out)

    results = pmap(one, range(p["instances"]))
    rows = [{"instance": i, "cg_final_residual": cg.trajectory.final_residual,
             "gd_final_residual": gd.final_residual, "rel_diff": rel, "pass": rel <= 1e-6}
            for i, cg, gd, rel in results]
    files = {"cg_vs_gd.csv": _csv(rows, ["instance", "cg_final_residual", "gd_final_residual",
                                          "rel_diff", "pass"]),
             "trajectory_cg_0.csv": results[0][1].trajectory.to_csv(),
             "trajectory_gd_0.csv": results[0][2].to_csv()}
    return files, {"max_rel_diff": max(r["rel_diff"] for r in rows)}, {
        "gd_reproduces_cg": all(r["pass"] for r in rows)}


_RUNNERS = {"perm_stability": perm_stability, "logcosh": logcosh, "lock": lock, "spiky": spiky,
            "partial_accel": partial_accel, "cg_schedule": cg_schedule}


def run_experiment(name, params=None, seed=DEFAULT_SEED, precision=None) -> ExperimentResult:
    if name not in _RUNNERS:
        raise UnknownExperimentError(name)
    config = dict(DEFAULTS[name])
    config.update(params or {})
    precision = precision or DEFAULT_PRECISION.get(name, "f64")
    files, metrics, passes = _RUNNERS[name](config, int(seed), precision)
    summary = {"experiment": name, "config": config, "seed": int(seed), "precision": precision,
               "version": version_string(), "metrics": metrics,
               "passes": {k: bool(v) for k, v in passes.items()},
               "all_pass": bool(all(passes.values()))}
    return ExperimentResult(name, files, summary)


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_result(result: ExperimentResult, out_dir):
    out_dir = Path(out_dir)
    for fname, text in result.files.items():
        atomic_write(out_dir / fname, text)
    atomic_write(out_dir / "summary.json", json.dumps(result.summary, indent=2, default=float) + "\n")
    return out_dir
