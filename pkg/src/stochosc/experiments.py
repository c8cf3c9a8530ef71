"""Reproducible Monte Carlo experiments behind the command-line tools.

Paths are split into fixed batches of ``PATH_BATCH`` consecutive stream ids.
Each batch is simulated independently and results are reassembled in path
order, so the thread count changes wall time but never a single output byte.
"""

import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import count_changes_array, lil_envelope, sign_changes, simple_zero_diagnostic
from .config import build_model, checkpoint_schedule
from .errors import ConfigError
from .exact import component_coefficients, deterministic_part, s_n_sq_series, sample_exact_paths
from .integrators import (
    em_integrate_paths,
    ll_coefficients,
    ll_integrate_paths,
    ll_s_n_sq_series,
    strong_error_study,
    threshold,
)
from .models import CoupledOscillatorSpec
from .rng import streams
from .trajectory import uniform_times

PATH_BATCH = 16
CSV_FLOAT = "%.16e"
MANIFEST_VERSION = 1
MACHINE_PRECISION_ERROR = 1e-12

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_CONFIG = 2


@dataclass
class CommandResult:
    exit_code: int
    files: list
    summary: dict = field(default_factory=dict)


# -- simulation -------------------------------------------------------------

def _batches(n_paths):
    return [(start, min(start + PATH_BATCH, n_paths)) for start in range(0, n_paths, PATH_BATCH)]


def _simulate(cfg, spec, stream_list, keep):
    n = cfg.horizon_steps
    if cfg.scheme == "exact":
        return sample_exact_paths(spec, cfg.step, n, stream_list, keep=keep), None
    if cfg.scheme == "ll":
        return ll_integrate_paths(spec, cfg.step, n, stream_list, Q=cfg.Q, keep=keep), None
    res = em_integrate_paths(spec, cfg.step, n, stream_list, keep=keep)
    return res.states, res.diverged_at


def map_batches(cfg, spec, keep, reduce, threads=1):
    """Simulate all paths batch by batch and apply ``reduce`` to each batch.

    ``reduce(start, states, diverged)`` receives the first path index, the
    ``(P, len(keep), 2d)`` states and per-path divergence indices (or
    ``None``).  Results come back in path order.
    """
    def work(bounds):
        start, stop = bounds
        states, diverged = _simulate(cfg, spec, streams(cfg.seed, stop - start, start), keep)
        return reduce(start, states, diverged)

    jobs = _batches(cfg.paths)
    if threads <= 1 or len(jobs) == 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, jobs))


def _scheme_flags(cfg, spec):
    flags = {"scheme": cfg.scheme}
    if cfg.scheme == "ll":
        thr = threshold(spec)
        flags["threshold"] = thr
        flags["below_threshold"] = bool(cfg.step < thr)
    return flags


# -- file output ------------------------------------------------------------

def _csv_bytes(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue().encode()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return CSV_FLOAT % v
    return str(v)


def _array_csv_bytes(header, array):
    buf = io.BytesIO()
    np.savetxt(buf, array, fmt=CSV_FLOAT, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


class _Output:
    def __init__(self, directory):
        self.directory = directory
        self.files = []
        os.makedirs(directory, exist_ok=True)

    def write(self, name, data):
        with open(os.path.join(self.directory, name), "wb") as fh:
            fh.write(data)
        self.files.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})

    def manifest(self, command, cfg, extra=None):
        body = {
            "manifest_version": MANIFEST_VERSION,
            "tool_version": __version__,
            "command": command,
            "config_sha256": cfg.digest(),
            "config": cfg.experiment_dict(),
            "root_seed": cfg.seed,
            "paths": [{"path": k, "stream_id": k, "root_seed": cfg.seed} for k in range(cfg.paths)],
            "files": self.files,
        }
        if extra:
            body.update(extra)
        data = (json.dumps(body, indent=2, sort_keys=True) + "\n").encode()
        with open(os.path.join(self.directory, "manifest.json"), "wb") as fh:
            fh.write(data)
        return [f["name"] for f in self.files] + ["manifest.json"]


def state_header(d):
    return ["t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)]


# -- commands ---------------------------------------------------------------

def cmd_simulate(cfg, threads=1):
    """One CSV per path, ``path_00000.csv`` onwards, plus ``manifest.json``."""
    spec = build_model(cfg)
    n = cfg.horizon_steps
    times = uniform_times(spec.t0, cfg.step, n)
    header = state_header(spec.d)

    def reduce(start, states, diverged):
        blobs = []
        for p in range(states.shape[0]):
            blobs.append(_array_csv_bytes(header, np.column_stack([times, states[p]])))
        return blobs, diverged

    out = _Output(cfg.output_dir)
    diverged_all = []
    for blobs, diverged in map_batches(cfg, spec, None, reduce, threads):
        for blob in blobs:
            out.write(f"path_{len(out.files):05d}.csv", blob)
        diverged_all.extend(diverged or [])
    flags = _scheme_flags(cfg, spec)
    summary = dict(flags)
    if cfg.scheme == "em":
        flags["diverged_at"] = diverged_all
        summary["diverged_paths"] = sum(d is not None for d in diverged_all)
    files = out.manifest("simulate", cfg, {"flags": flags})
    return CommandResult(EXIT_OK, files, summary)


LIL_HEADER = [
    "path", "stream_id", "component", "max_z", "min_z", "first_upper", "first_lower", "passed", "pass_rate", "note",
]


def _components(cfg, d):
    if cfg.components is None:
        return list(range(d))
    bad = [i for i in cfg.components if i > d]
    if bad:
        raise ConfigError(f"components: {bad} out of range 1..{d}")
    return sorted({i - 1 for i in cfg.components})


def cmd_verify_lil(cfg, threads=1):
    """Envelope statistic per path and component; exit 1 below the pass-rate threshold.

    A path passes when every selected component reaches both ``+(1 - eps)``
    and ``-(1 - eps)`` at some checkpoint.
    """
    if cfg.scheme == "em" or cfg.model.kind != "linear":
        raise ConfigError("verify-lil needs a linear model with the exact or ll scheme (no closed-form s^2 otherwise)")
    spec = build_model(cfg)
    n_max = cfg.horizon_steps
    checkpoints = np.asarray(checkpoint_schedule(cfg, n_max), dtype=int)
    keep = np.concatenate([[0], checkpoints])
    times = uniform_times(spec.t0, cfg.step, n_max)[checkpoints]
    comps = _components(cfg, spec.d)
    s2 = {}
    drift = {}
    for i in comps:
        if cfg.scheme == "exact":
            series = s_n_sq_series(component_coefficients(spec, i), cfg.step, n_max)
        else:
            series = ll_s_n_sq_series(ll_coefficients(spec, i, cfg.Q), cfg.step, n_max - 1)
        s2[i] = series[checkpoints - 1]
        drift[i] = deterministic_part(spec, i, times)

    def reduce(start, states, diverged):
        rows = []
        for p in range(states.shape[0]):
            reports = []
            for i in comps:
                s = states[p, 1:, i] - drift[i]
                reports.append((i, lil_envelope(s, s2[i], cfg.epsilon, checkpoints)))
            rows.append((start + p, reports))
        return rows

    table = []
    n_pass = 0
    for batch in map_batches(cfg, spec, keep, reduce, threads):
        for path, reports in batch:
            path_ok = all(r.passed for _, r in reports)
            n_pass += path_ok
            for i, r in reports:
                note = "" if r.defined.any() else "s^2 <= e at every checkpoint; Z undefined"
                table.append([
                    path, path, i + 1, r.max_z, r.min_z, r.first_upper, r.first_lower, r.passed, None, note,
                ])
    rate = n_pass / cfg.paths
    passed = rate >= cfg.pass_rate
    note = f"two-sided passage at level {1 - cfg.epsilon:.6g}; threshold {cfg.pass_rate:.6g}"
    if not any(row[-1] == "" for row in table):
        note = "Z undefined for every path (s^2 never exceeds e); aggregate fails"
    table.append(["all", None, None, None, None, None, None, passed, rate, note])
    out = _Output(cfg.output_dir)
    out.write("lil_summary.csv", _csv_bytes(LIL_HEADER, table))
    flags = _scheme_flags(cfg, spec)
    summary = {"pass_rate": rate, "passed": passed, "checkpoints": int(checkpoints.size)}
    files = out.manifest("verify-lil", cfg, {"flags": flags, "summary": summary})
    return CommandResult(EXIT_OK if passed else EXIT_THRESHOLD, files, summary)


CONVERGENCE_HEADER = ["row", "scheme", "h", "strong_error", "observed_order"]


def cmd_compare_integrators(cfg, threads=1):
    """Strong error table over ``step_sizes``; exit 1 if the LL slope leaves ``order_window``.

    Every path is simulated once per batch; errors are averaged over all
    paths.  When the LL error is at machine precision for every ``h`` (no
    noise) the slope is meaningless and the check is skipped.
    """
    spec = build_model(cfg)
    if not isinstance(spec, CoupledOscillatorSpec):
        raise ConfigError("compare-integrators needs a linear model")
    t_end = cfg.horizon_time

    def work(bounds):
        start, stop = bounds
        rows, _ = strong_error_study(
            spec, cfg.step_sizes, t_end, streams(cfg.seed, stop - start, start), cfg.refine, tuple(cfg.compare_schemes),
        )
        return stop - start, rows

    jobs = _batches(cfg.paths)
    if threads <= 1 or len(jobs) == 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    keys = [(r.scheme, r.h) for r in results[0][1]]
    totals = {k: 0.0 for k in keys}
    for count, rows in results:
        for r in rows:
            totals[(r.scheme, r.h)] += count * r.strong_error
    errors = {k: totals[k] / cfg.paths for k in keys}

    table = []
    slopes = {}
    for scheme in cfg.compare_schemes:
        hs = sorted((h for s, h in keys if s == scheme), reverse=True)
        errs = np.array([errors[(scheme, h)] for h in hs])
        prev = None
        for h, err in zip(hs, errs):
            order = None
            if prev is not None and prev[1] > 0 and err > 0:
                order = float(np.log(prev[1] / err) / np.log(prev[0] / h))
            table.append(["error", scheme, h, float(err), order])
            prev = (h, err)
        slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0]) if np.all(errs > 0) else float("nan")
        slopes[scheme] = slope
        table.append(["slope", scheme, None, None, slope])

    out = _Output(cfg.output_dir)
    out.write("convergence.csv", _csv_bytes(CONVERGENCE_HEADER, table))
    lo, hi = cfg.order_window
    ll_errs = [errors[k] for k in keys if k[0] == "ll"]
    noiseless = bool(ll_errs) and max(ll_errs) <= MACHINE_PRECISION_ERROR
    ok = True
    if "ll" in slopes and not noiseless:
        ok = bool(lo <= slopes["ll"] <= hi)
    summary = {"slopes": slopes, "machine_precision": noiseless, "passed": ok}
    files = out.manifest("compare-integrators", cfg, {"summary": summary})
    return CommandResult(EXIT_OK if ok else EXIT_THRESHOLD, files, summary)


SIGN_HEADER = [
    "path", "stream_id", "component", "variable", "horizon_step", "horizon_time", "count", "below_threshold",
    "diverged_at",
]
SIMPLE_ZERO_HEADER = ["component", "delta", "fraction", "n_crossings", "suspect_double_zero"]


def count_horizons(cfg):
    """Horizon step indices: ``count_horizons`` times, or ``T / 2`` and ``T``."""
    n = cfg.horizon_steps
    if cfg.count_horizons is None:
        return [max(1, n // 2), n]
    steps = sorted({int(round(t / cfg.step)) for t in cfg.count_horizons})
    bad = [s for s in steps if not 1 <= s <= n]
    if bad:
        raise ConfigError(f"count_horizons: {bad} steps fall outside 1..{n}")
    return steps


def cmd_sign_changes(cfg, threads=1):
    """Sign-change counts of every ``x_i`` and ``y_i`` at each horizon, plus a simple-zero table."""
    spec = build_model(cfg)
    horizons = count_horizons(cfg)
    n = cfg.horizon_steps
    times = uniform_times(spec.t0, cfg.step, n)
    d = spec.d
    flags = _scheme_flags(cfg, spec)
    below = flags.get("below_threshold")

    def reduce(start, states, diverged):
        rows = []
        abs_y = [[] for _ in range(d)]
        for p in range(states.shape[0]):
            div = None if diverged is None else diverged[p]
            for var, offset in (("x", 0), ("y", d)):
                for i in range(d):
                    values = states[p, :, offset + i]
                    for hz in horizons:
                        count = int(count_changes_array(values[None, : hz + 1])[0])
                        rows.append([start + p, start + p, i + 1, var, hz, float(times[hz]), count, below, div])
                    if var == "x":
                        a, b, t_cross = sign_changes(values, times)
                        y = states[p, :, d + i]
                        span = times[b] - times[a]
                        w = (t_cross - times[a]) / span
                        abs_y[i].append(np.abs(y[a] + w * (y[b] - y[a])))
        return rows, [np.concatenate(v) if v else np.empty(0) for v in abs_y]

    table = []
    pooled = [[] for _ in range(d)]
    for rows, abs_y in map_batches(cfg, spec, None, reduce, threads):
        table.extend(rows)
        for i in range(d):
            pooled[i].append(abs_y[i])
    zero_rows = []
    for i in range(d):
        diag = simple_zero_diagnostic(np.concatenate(pooled[i]), cfg.deltas)
        for delta, frac in zip(diag.deltas, diag.fractions):
            zero_rows.append([i + 1, float(delta), float(frac), diag.n_crossings, diag.suspect_double_zero])
    out = _Output(cfg.output_dir)
    out.write("sign_changes.csv", _csv_bytes(SIGN_HEADER, table))
    out.write("simple_zero.csv", _csv_bytes(SIMPLE_ZERO_HEADER, zero_rows))
    files = out.manifest("sign-changes", cfg, {"flags": flags})
    return CommandResult(EXIT_OK, files, flags)


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-lil": cmd_verify_lil,
    "compare-integrators": cmd_compare_integrators,
    "sign-changes": cmd_sign_changes,
}
