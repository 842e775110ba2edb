"""Seeded Monte-Carlo benchmark of the rotation solvers.

Protocol per trial: a ground-truth quaternion uniform on the 3-sphere,
n reference directions uniform on the sphere, targets rotated by the
ground truth plus per-component Gaussian noise and renormalized, weights
uniform in [0, 1) or all ones. Accuracy is the angular distance between
the estimate and the ground truth, in degrees.

Reproducibility contract: every trial owns a counter-based Philox stream
keyed by (seed, trial index), Gaussians come from the polar method with a
fixed rejection order, and trials are batched in fixed-size chunks, so a
rerun with any worker count emits byte-identical CSV.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import time
from dataclasses import dataclass

import numpy as np

from .closedform import (
    degenerate_two_point,
    one_point_align,
    two_point_unweighted,
    two_point_unweighted_batch,
    two_point_weighted,
    two_point_weighted_batch,
)
from .errors import ConfigError, DegenerateFrame
from .projective import stereo_project
from .quat import Array, ObservationSet, quat_angular_error, rotate_vec
from .wahba import (
    StereoObservationSet,
    solve_GM,
    solve_GM_batch,
    solve_GP,
    solve_GP_batch,
    solve_GS,
    solve_GS_batch,
    solve_davenport,
    solve_davenport_batch,
)

SOLVERS = ("davenport", "gp", "gs", "gm", "two-point", "two-point-weighted", "one-point")
CHUNK = 4096  # fixed batch size, independent of the worker count
RESAMPLE_TOL = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    solver: str
    n: int
    noise_sigma: float
    trials: int
    seed: int
    weight_mode: str = "random"
    emit: str = "csv"
    out: str = "bench_results"
    timing: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.solver in ("two-point", "two-point-weighted") and self.n != 2:
            raise ConfigError(f"solver {self.solver!r} requires n = 2")
        if self.solver == "one-point" and self.n != 1:
            raise ConfigError("solver 'one-point' requires n = 1")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise sigma must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.weight_mode not in ("uniform", "random"):
            raise ConfigError("weight_mode must be 'uniform' or 'random'")
        if self.emit not in ("csv", "json", "both"):
            raise ConfigError("emit must be 'csv', 'json', or 'both'")
        return self


@dataclass(frozen=True)
class Summary:
    config: dict
    trials: int
    errors: int
    median_theta_err_deg: float
    mean_theta_err_deg: float
    p90_theta_err_deg: float
    median_runtime_ns: int | None = None

    def to_dict(self) -> dict:
        d = {
            "config": self.config,
            "trials": self.trials,
            "errors": self.errors,
            "median_theta_err_deg": self.median_theta_err_deg,
            "mean_theta_err_deg": self.mean_theta_err_deg,
            "p90_theta_err_deg": self.p90_theta_err_deg,
        }
        if self.median_runtime_ns is not None:
            d["median_runtime_ns"] = self.median_runtime_ns
        return d


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """The counter-based stream owned by one trial."""
    key = np.array([seed, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def polar_normals(gen: np.random.Generator, count: int) -> Array:
    """Standard normals via the Marsaglia polar method.

    Pairs are consumed in draw order and rejected in place, so the stream
    is branch-stable: the sequence depends only on the generator state.
    """
    out = np.empty(count)
    have = 0
    while have < count:
        pairs = ((count - have) * 2 + 5) // 3  # ~pi/4 acceptance, slight surplus
        u = gen.random((pairs, 2)) * 2.0 - 1.0
        s = u[:, 0] ** 2 + u[:, 1] ** 2
        acc = (s > 0.0) & (s < 1.0)
        ua, sa = u[acc], s[acc]
        f = np.sqrt(-2.0 * np.log(sa) / sa)
        z = (ua * f[:, None]).reshape(-1)
        take = min(z.size, count - have)
        out[have : have + take] = z[:take]
        have += take
    return out


def _unit_rows(gen: np.random.Generator, rows: int, dim: int) -> Array:
    v = polar_normals(gen, rows * dim).reshape(rows, dim)
    while True:
        n = np.sqrt(np.sum(v * v, axis=-1))
        bad = n < RESAMPLE_TOL
        if not np.any(bad):
            return v / n[:, None]
        v[bad] = polar_normals(gen, int(bad.sum()) * dim).reshape(-1, dim)


def sample_trial(gen: np.random.Generator, n: int, sigma: float, weight_mode: str):
    """Draw one trial. Returns (refs, targets, weights, q_gt).

    Draw order is part of the reproducibility contract: ground-truth
    quaternion, reference points, target noise, then weights, with
    per-vector redraws whenever a pre-normalization norm falls below 1e-6.
    """
    q_gt = _unit_rows(gen, 1, 4)[0]
    refs = _unit_rows(gen, n, 3)
    exact = rotate_vec(q_gt, refs)
    if sigma == 0.0:
        targets = exact
    else:
        noise = polar_normals(gen, n * 3).reshape(n, 3)
        targets = exact + sigma * noise
        while True:
            nn = np.sqrt(np.sum(targets * targets, axis=-1))
            bad = nn < RESAMPLE_TOL
            if not np.any(bad):
                break
            k = int(bad.sum())
            targets[bad] = exact[bad] + sigma * polar_normals(gen, k * 3).reshape(-1, 3)
        targets = targets / nn[:, None]
    weights = gen.random(n) if weight_mode == "random" else np.ones(n)
    return refs, targets, weights, q_gt


def _solve_chunk(solver: str, refs, targets, weights):
    """Batched dispatch. Returns (q, error_mask)."""
    m = refs.shape[0]
    no_err = np.zeros(m, dtype=bool)
    if solver == "davenport":
        q, _, _ = solve_davenport_batch(refs, targets, weights)
        return q, no_err
    if solver == "gs":
        q, _, _ = solve_GS_batch(refs, targets, weights)
        return q, no_err
    if solver in ("gp", "gm"):
        z = stereo_project(refs)
        p = stereo_project(targets)
        if solver == "gp":
            q, _, _ = solve_GP_batch(z, p, weights)
            return q, no_err
        q, _, _, ok = solve_GM_batch(z, p, weights)
        return q, ~ok
    if solver == "one-point":
        return one_point_align(refs[:, 0], targets[:, 0]), no_err
    a1, a2 = refs[:, 0], refs[:, 1]
    b1, b2 = targets[:, 0], targets[:, 1]
    if solver == "two-point":
        q, deg = two_point_unweighted_batch(a1, a2, b1, b2)
    else:
        q, deg = two_point_weighted_batch(a1, a2, b1, b2, weights[:, 0], weights[:, 1])
    if np.any(deg):
        # no unique optimum; route to the documented degenerate solution
        for i in np.nonzero(deg)[0]:
            w1, w2 = (1.0, 1.0) if solver == "two-point" else (weights[i, 0], weights[i, 1])
            q[i] = degenerate_two_point(a1[i], a2[i], b1[i], b2[i], w1, w2)
    return q, no_err


def _timed_solve(solver: str, refs, targets, weights):
    """Single-trial solve through the scalar library API, timed around the
    solver call only. Returns (q, runtime_ns, errored)."""
    if solver in ("davenport", "gs"):
        obs = ObservationSet(refs, targets, weights)
        fn = solve_davenport if solver == "davenport" else solve_GS
        t0 = time.perf_counter_ns()
        sol = fn(obs)
        dt = time.perf_counter_ns() - t0
        return sol.q, dt, False
    if solver in ("gp", "gm"):
        sobs = StereoObservationSet(stereo_project(refs), stereo_project(targets), weights)
        fn = solve_GP if solver == "gp" else solve_GM
        t0 = time.perf_counter_ns()
        try:
            sol = fn(sobs)
        except Exception:
            return np.array([1.0, 0.0, 0.0, 0.0]), time.perf_counter_ns() - t0, True
        return sol.q, time.perf_counter_ns() - t0, False
    if solver == "one-point":
        a, b = refs[0], targets[0]
        t0 = time.perf_counter_ns()
        q = one_point_align(a, b)
        return q, time.perf_counter_ns() - t0, False
    a1, a2, b1, b2 = refs[0], refs[1], targets[0], targets[1]
    t0 = time.perf_counter_ns()
    try:
        if solver == "two-point":
            q = two_point_unweighted(a1, a2, b1, b2).q
        else:
            q = two_point_weighted(a1, a2, b1, b2, weights[0], weights[1]).q
    except DegenerateFrame:
        w1, w2 = (1.0, 1.0) if solver == "two-point" else (weights[0], weights[1])
        q = degenerate_two_point(a1, a2, b1, b2, w1, w2)
    return q, time.perf_counter_ns() - t0, False


def _run_chunk(args):
    solver, n, sigma, weight_mode, seed, start, stop, timing = args
    m = stop - start
    refs = np.empty((m, n, 3))
    targets = np.empty((m, n, 3))
    weights = np.empty((m, n))
    q_gt = np.empty((m, 4))
    for i in range(m):
        gen = trial_rng(seed, start + i)
        refs[i], targets[i], weights[i], q_gt[i] = sample_trial(gen, n, sigma, weight_mode)
    runtimes = None
    if timing:
        q = np.empty((m, 4))
        err = np.zeros(m, dtype=bool)
        runtimes = np.empty(m, dtype=np.int64)
        for i in range(m):
            q[i], runtimes[i], err[i] = _timed_solve(solver, refs[i], targets[i], weights[i])
    else:
        q, err = _solve_chunk(solver, refs, targets, weights)
    theta = quat_angular_error(q, q_gt)
    theta[err] = np.nan
    return theta, runtimes


def worker_count() -> int:
    env = os.environ.get("BENCH_THREADS", "").strip()
    if env:
        try:
            w = int(env)
        except ValueError as e:
            raise ConfigError(f"BENCH_THREADS must be an integer, got {env!r}") from e
        if w < 1:
            raise ConfigError("BENCH_THREADS must be >= 1")
        return w
    return os.cpu_count() or 1


def _lower_median(x: Array) -> float:
    xs = np.sort(x)
    return float(xs[(len(xs) - 1) // 2])


def _nearest_rank_p90(x: Array) -> float:
    xs = np.sort(x)
    idx = max(0, int(np.ceil(0.9 * len(xs))) - 1)
    return float(xs[idx])


def run_experiment(cfg: ExperimentConfig):
    """Run all trials. Returns (summary, theta_err array, runtimes or None).

    Chunk boundaries are fixed by CHUNK, and every trial's random stream is
    keyed by (seed, trial), so the output is identical for any worker count.
    """
    cfg.validate()
    ranges = [(s, min(s + CHUNK, cfg.trials)) for s in range(0, cfg.trials, CHUNK)]
    tasks = [
        (cfg.solver, cfg.n, cfg.noise_sigma, cfg.weight_mode, cfg.seed, a, b, cfg.timing)
        for a, b in ranges
    ]
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_run_chunk, tasks)
    else:
        results = [_run_chunk(t) for t in tasks]
    theta = np.concatenate([r[0] for r in results])
    runtimes = np.concatenate([r[1] for r in results]) if cfg.timing else None

    valid = theta[~np.isnan(theta)]
    errors = int(np.isnan(theta).sum())
    if valid.size == 0:
        med = mean = p90 = float("nan")
    else:
        med = _lower_median(valid)
        mean = float(np.mean(valid))
        p90 = _nearest_rank_p90(valid)
    summary = Summary(
        config={
            "solver": cfg.solver,
            "n": cfg.n,
            "noise_sigma": cfg.noise_sigma,
            "trials": cfg.trials,
            "seed": cfg.seed,
            "weight_mode": cfg.weight_mode,
            "timing": cfg.timing,
        },
        trials=cfg.trials,
        errors=errors,
        median_theta_err_deg=med,
        mean_theta_err_deg=mean,
        p90_theta_err_deg=p90,
        median_runtime_ns=int(_lower_median(runtimes)) if cfg.timing else None,
    )
    return summary, theta, runtimes


def _out_base(out: str) -> str:
    for suffix in (".csv", ".json"):
        if out.endswith(suffix):
            return out[: -len(suffix)]
    return out


def write_csv(path: str, theta: Array, runtimes) -> None:
    """Trial stream with LF endings and 17-significant-digit values."""
    try:
        with open(path, "w", newline="\n") as f:
            if runtimes is None:
                f.write("trial,theta_err_deg\n")
                for i, t in enumerate(theta):
                    f.write(f"{i},{t:.17g}\n")
            else:
                f.write("trial,theta_err_deg,runtime_ns\n")
                for i, (t, r) in enumerate(zip(theta, runtimes)):
                    f.write(f"{i},{t:.17g},{int(r)}\n")
    except OSError as e:
        raise OSError(f"cannot write CSV to {path!r}: {e}") from e


def write_json(path: str, summary: Summary) -> None:
    """Summary with a stable key order (byte-identical on re-serialization)."""
    try:
        with open(path, "w", newline="\n") as f:
            f.write(json.dumps(summary.to_dict(), indent=2))
            f.write("\n")
    except OSError as e:
        raise OSError(f"cannot write JSON to {path!r}: {e}") from e


def emit_results(summary: Summary, theta: Array, runtimes, emit: str, out: str) -> dict:
    """Write the requested artifacts next to the `out` base path.

    Returns {"csv": path} and/or {"json": path} for whatever was written.
    """
    base = _out_base(out)
    written = {}
    if emit in ("csv", "both"):
        path = base + ".csv"
        write_csv(path, theta, runtimes)
        written["csv"] = path
    if emit in ("json", "both"):
        path = base + ".json"
        write_json(path, summary)
        written["json"] = path
    return written
