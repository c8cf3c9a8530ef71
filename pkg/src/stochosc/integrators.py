"""Locally linearized (LL) integrator, its variance analytics, and an Euler-Maruyama baseline.

The LL scheme advances ``x_{n+1} = x_n + L exp(C_n h) r + Q dw_n`` where
``C_n`` is the augmented ``(2d+1) x (2d+1)`` matrix carrying the current
state.  For the linear oscillator ``L exp(C_n h) r = (exp(A h) - I) x_n``, so
the step collapses to ``x_{n+1} = M x_n + Q dw_n`` with ``M`` the block
rotation at lag ``h``; both constructions are provided and must agree.

Sign changes of every LL component are guaranteed for ``h < pi / max|lam|``.
Larger steps are simulated but flagged.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .exact import merge_groups
from .linalg import augmented_exp, rotation_matrix
from .models import CoupledOscillatorSpec, as_linear_system
from .trajectory import TrajectoryGrid, _matvec, gaussian_blocks, linear_recursion, uniform_times

DIVERGENCE_LIMIT = 1e150
_ALIAS_TOL = 1e-9


def threshold(spec):
    """Largest stepsize ``pi / max|lam|`` covered by the sign-change guarantee."""
    return math.pi / spec.spectral.max_abs


@dataclass(frozen=True, eq=False)
class LLStepper:
    spec: CoupledOscillatorSpec
    h: float
    M: np.ndarray
    Q: np.ndarray
    below_threshold: bool


def _noise_matrix(spec, Q):
    if Q is None:
        return as_linear_system(spec)[1]
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != 2 * spec.d:
        raise PreconditionError(f"Q must be {2 * spec.d} x m, got shape {Q.shape}")
    return Q


def ll_stepper(spec, h, Q=None):
    """Build the LL one-step map; ``Q`` defaults to ``B = [0; Pi]``."""
    if not h > 0:
        raise PreconditionError(f"h must be positive, got {h}")
    return LLStepper(
        spec=spec,
        h=float(h),
        M=rotation_matrix(spec.spectral, h),
        Q=_noise_matrix(spec, Q),
        below_threshold=bool(h < threshold(spec)),
    )


def ll_step(stepper, state, dw):
    """``M state + Q dw``."""
    dw = np.asarray(dw, dtype=float)
    if not np.all(np.isfinite(dw)):
        raise PreconditionError("Wiener increment must be finite")
    return stepper.M @ np.asarray(state, dtype=float) + stepper.Q @ dw


def augmented_matrix(spec, state):
    """``C_n = [[0, I, y_n], [-Lambda^2, 0, -Lambda^2 x_n], [0, 0, 0]]``."""
    d = spec.d
    x, y = state[:d], state[d:]
    lam2 = spec.Lambda @ spec.Lambda
    c = np.zeros((2 * d + 1, 2 * d + 1))
    c[:d, d:2 * d] = np.eye(d)
    c[:d, -1] = y
    c[d:2 * d, :d] = -lam2
    c[d:2 * d, -1] = -lam2 @ x
    return c


def ll_increment(spec, h, state):
    """Deterministic LL increment ``u_n = L exp(C_n h) r``."""
    state = np.asarray(state, dtype=float)
    return augmented_exp(augmented_matrix(spec, state), h)[: 2 * spec.d, -1]


def ll_step_augmented(spec, h, state, dw, Q=None):
    """One LL step in its defining augmented-exponential form."""
    state = np.asarray(state, dtype=float)
    return state + ll_increment(spec, h, state) + _noise_matrix(spec, Q) @ np.asarray(dw, dtype=float)


def ll_integrate_paths(spec, h, n_steps, stream_list, Q=None, keep=None):
    """LL paths for a batch of streams; returns ``(P, len(keep), 2d)``."""
    stepper = ll_stepper(spec, h, Q)
    noise = gaussian_blocks(stream_list, stepper.Q.shape[1], n_steps, scale=math.sqrt(h))
    return linear_recursion(stepper.M, stepper.Q, spec.initial_state, n_steps, noise, keep=keep)


def ll_integrate_increments(spec, h, increments, Q=None):
    """LL paths driven by given Wiener increments of shape ``(N, m, P)``."""
    stepper = ll_stepper(spec, h, Q)
    return linear_recursion(stepper.M, stepper.Q, spec.initial_state, increments.shape[0], [increments])


def ll_integrate(spec, h, n_steps, stream, Q=None):
    """Full LL trajectory; ``flags["below_threshold"]`` records ``h < pi / max|lam|``."""
    states = ll_integrate_paths(spec, h, n_steps, [stream], Q)[0]
    return TrajectoryGrid(
        times=uniform_times(spec.t0, h, n_steps),
        states=states,
        step=float(h),
        scheme="ll",
        root_seed=stream.root_seed,
        stream_id=stream.stream_id,
        flags={"below_threshold": bool(h < threshold(spec)), "threshold": threshold(spec)},
    )


# -- LL variance analytics --------------------------------------------------

@dataclass(frozen=True)
class LLCoefficients:
    """Noise coefficients of LL position component ``i``.

    ``e[j, l] = P_ij <P_j, Q1_l>`` and ``f[j, l] = P_ij / lam_j <P_j, Q2_l>``
    so the lag-``r`` weight of ``dw_l`` is
    ``sum_j e[j, l] cos(r lam_j h) + f[j, l] sin(r lam_j h)``.

    ``amplitudes`` and ``phases`` rewrite the channel sums
    ``sum_l e[j, l] cos + sum_l f[j, l] sin`` as ``c_j cos(r lam_j h - alpha_j)``;
    ``c_j`` carries the sign of ``sum_l e[j, l]`` so the identity is exact.
    """

    component: int
    eigenvalues: np.ndarray
    e: np.ndarray
    f: np.ndarray
    group_values: np.ndarray
    E: np.ndarray
    F: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray


def ll_coefficients(spec, i, Q=None):
    dec = spec.spectral
    lam = dec.eigenvalues
    Q = _noise_matrix(spec, Q)
    d = spec.d
    row = dec.P[i]
    e = row[:, None] * (dec.P.T @ Q[:d])
    f = (row / lam)[:, None] * (dec.P.T @ Q[d:])
    values, E = merge_groups(lam, e, signed=False)
    _, F = merge_groups(lam, f, signed=True)
    se = e.sum(axis=1)
    sf = f.sum(axis=1)
    phases = np.where(se != 0.0, np.arctan(sf / np.where(se != 0.0, se, 1.0)), math.pi / 2)
    amplitudes = np.where(se != 0.0, np.sign(se) * np.hypot(se, sf), sf)
    return LLCoefficients(
        component=i, eigenvalues=lam.copy(), e=e, f=f, group_values=values, E=E, F=F,
        amplitudes=amplitudes, phases=phases,
    )


def ll_sigma_sq_series(coeffs, h, r_max):
    """``sigma_r^2`` for ``r = 0..r_max``: ``h sum_l (sum_j e cos + f sin)^2``."""
    r = np.arange(r_max + 1)[:, None]
    theta = r * coeffs.eigenvalues[None, :] * h
    weights = np.cos(theta) @ coeffs.e + np.sin(theta) @ coeffs.f
    return h * np.sum(weights**2, axis=1)


def ll_sigma_nr_sq(coeffs, h, r):
    if r < 0:
        raise PreconditionError(f"r must be >= 0, got {r}")
    return float(ll_sigma_sq_series(coeffs, h, r)[-1])


def ll_s_n_sq_series(coeffs, h, n_max):
    """``s_n^2 = sum_{r=0}^n sigma_r^2`` for ``n = 0..n_max``.

    ``s_n^2`` is the variance of the noise part of ``x_{n+1}``.
    """
    return np.cumsum(ll_sigma_sq_series(coeffs, h, n_max))


def ll_s_n_sq(coeffs, h, n):
    if n < 0:
        raise PreconditionError(f"n must be >= 0, got {n}")
    return float(ll_s_n_sq_series(coeffs, h, n)[-1])


def _aliased(theta):
    return abs(math.remainder(theta, 2.0 * math.pi)) <= _ALIAS_TOL


def ll_slope(coeffs, h):
    """Exact limit of ``s_n^2 / n`` for any ``h``.

    Writing each lag weight as ``Re(z_jl exp(i r theta_j))`` with
    ``z = e - i f`` and ``theta_j = lam_j h``, the Cesaro mean of
    ``sigma_r^2`` keeps only the frequency pairs with
    ``theta_j +- theta_k = 0 mod 2 pi``.  Below the threshold and with
    distinct ``|lam|`` this is ``(h / 2) sum_{j,l} e^2 + f^2``.
    """
    theta = coeffs.eigenvalues * h
    z = coeffs.e - 1j * coeffs.f
    total = 0.0
    d = theta.shape[0]
    for j in range(d):
        for k in range(d):
            if _aliased(theta[j] + theta[k]):
                total += 0.5 * float(np.sum((z[j] * z[k]).real))
            if _aliased(theta[j] - theta[k]):
                total += 0.5 * float(np.sum((z[j] * np.conj(z[k])).real))
    return h * total


def ll_amplitude_slope(coeffs, h):
    """``(h / 2) sum_j c_j^2`` from the phase-amplitude rewrite.

    Equals :func:`ll_slope` for a single noise channel with distinct
    ``|lam|`` below the threshold; with ``m > 1`` channels the channel sums
    inside ``c_j`` cross-couple independent noises and the value differs.
    """
    return 0.5 * h * float(np.sum(coeffs.amplitudes**2))


def ll_aliasing(coeffs, h):
    """Frequency pairs ``(j, k, sign)`` with ``h (lam_j +- lam_k) = 0 mod 2 pi``.

    Diagonal ``-`` pairs are always present and excluded.  A non-empty result
    means the geometric sums in ``s_n^2`` grow linearly and the
    below-threshold slope formula does not apply.
    """
    theta = coeffs.eigenvalues * h
    hits = []
    d = theta.shape[0]
    for j in range(d):
        for k in range(j, d):
            if _aliased(theta[j] + theta[k]):
                hits.append((j, k, "+"))
            if j != k and _aliased(theta[j] - theta[k]):
                hits.append((j, k, "-"))
    return hits


# -- Euler-Maruyama ---------------------------------------------------------

@dataclass
class EMResult:
    states: np.ndarray
    diverged_at: list = field(default_factory=list)


def _first_bad(states):
    bad = ~np.isfinite(states).all(axis=-1) | (np.abs(states) > DIVERGENCE_LIMIT).any(axis=-1)
    out = []
    for row in bad:
        idx = np.flatnonzero(row)
        out.append(int(idx[0]) if idx.size else None)
    return out


def em_integrate_paths(spec, h, n_steps, stream_list, keep=None, increments=None):
    """Euler-Maruyama paths for a batch; returns :class:`EMResult`.

    Linear specs step with ``I + h A``; nonlinear specs use drift
    ``(y, -f(x, y))``.  ``diverged_at[p]`` is the first recorded index where
    path ``p`` left the finite range (``None`` if it never did).
    """
    if not h > 0:
        raise PreconditionError(f"h must be positive, got {h}")
    m = spec.m
    if increments is None:
        noise = gaussian_blocks(stream_list, m, n_steps, scale=math.sqrt(h))
    else:
        noise = [increments]
    keep_idx = np.arange(n_steps + 1) if keep is None else np.asarray(keep, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(spec, CoupledOscillatorSpec):
            a, b = as_linear_system(spec)
            states = linear_recursion(np.eye(2 * spec.d) + h * a, b, spec.initial_state, n_steps, noise, keep=keep_idx)
        else:
            states = _em_nonlinear(spec, h, n_steps, noise, keep_idx)
    return EMResult(states=states, diverged_at=_first_bad(states))


def _em_nonlinear(spec, h, n_steps, noise, keep):
    d = spec.d
    pi = np.asarray(spec.Pi, dtype=float)
    out = None
    pos = 0
    n = 0
    x = y = None
    for block in noise:
        if x is None:
            n_paths = block.shape[-1]
            x = np.repeat(spec.x0[:, None], n_paths, axis=1)
            y = np.repeat(spec.y0[:, None], n_paths, axis=1)
            out = np.empty((keep.size, 2 * d, n_paths))
            while pos < keep.size and keep[pos] == 0:
                out[pos, :d], out[pos, d:] = x, y
                pos += 1
        for dw in block:
            f = spec.drift(x, y)
            x, y = x + h * y, y - h * f + _matvec(pi, dw)
            n += 1
            while pos < keep.size and keep[pos] == n:
                out[pos, :d], out[pos, d:] = x, y
                pos += 1
    if n != n_steps:
        raise ValueError(f"noise covered {n} steps, expected {n_steps}")
    return np.transpose(out, (2, 0, 1))


def em_integrate(spec, h, n_steps, stream):
    """Single Euler-Maruyama trajectory; ``flags["diverged_at"]`` marks overflow."""
    res = em_integrate_paths(spec, h, n_steps, [stream])
    t0 = spec.t0
    return TrajectoryGrid(
        times=uniform_times(t0, h, n_steps),
        states=res.states[0],
        step=float(h),
        scheme="em",
        root_seed=stream.root_seed,
        stream_id=stream.stream_id,
        flags={"diverged_at": res.diverged_at[0]},
    )


# -- strong convergence -----------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    scheme: str
    h: float
    strong_error: float
    observed_order: float | None


def fit_order(hs, errors):
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def strong_error_study(spec, hs, t_end, stream_list, refine=64, schemes=("ll", "em")):
    """Strong error at ``t_end`` against an LL reference at ``h / refine``.

    Every path draws one Brownian path on the grid ``min(hs) / refine``; the
    scheme at ``h`` and its reference at ``h / refine`` both use increments
    summed from that common fine path.  Error is the mean Euclidean distance
    of the final states.

    Returns
    -------
    rows : list of ConvergenceRow
        One row per ``(scheme, h)`` with the local order against the
        previous ``h``.
    slopes : dict
        Regression slope per scheme.
    """
    hs = sorted((float(h) for h in hs), reverse=True)
    h_min = hs[-1]
    fine = h_min / refine
    n_fine = int(round(t_end / fine))
    for h in hs:
        ratio = h / h_min
        if abs(ratio - round(ratio)) > 1e-9 or abs(n_fine * fine - t_end) > 1e-9 * t_end:
            raise PreconditionError("stepsizes must be integer multiples of the smallest and divide t_end")
    base = next(iter(gaussian_blocks(stream_list, spec.m, n_fine, scale=math.sqrt(fine), chunk=n_fine)))

    def aggregate(factor):
        return base.reshape(n_fine // factor, factor, base.shape[1], base.shape[2]).sum(axis=1)

    rows = []
    slopes = {}
    for scheme in schemes:
        errors = []
        for h in hs:
            factor = int(round(h / h_min))
            ref = ll_integrate_increments(spec, h / refine, aggregate(factor))[:, -1]
            coarse_inc = aggregate(factor * refine)
            if scheme == "ll":
                approx = ll_integrate_increments(spec, h, coarse_inc)[:, -1]
            elif scheme == "em":
                approx = em_integrate_paths(spec, h, coarse_inc.shape[0], None, increments=coarse_inc).states[:, -1]
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
            err = float(np.mean(np.linalg.norm(approx - ref, axis=1)))
            order = None
            if errors and errors[-1][1] > 0 and err > 0:
                order = math.log(errors[-1][1] / err) / math.log(errors[-1][0] / h)
            errors.append((h, err))
            rows.append(ConvergenceRow(scheme, h, err, order))
        hs_arr = np.array([h for h, _ in errors])
        errs = np.array([e for _, e in errors])
        slopes[scheme] = fit_order(hs_arr, errs) if np.all(errs > 0) else float("nan")
    return rows, slopes


__all__ = [
    "ConvergenceRow",
    "EMResult",
    "LLCoefficients",
    "LLStepper",
    "augmented_matrix",
    "em_integrate",
    "em_integrate_paths",
    "fit_order",
    "ll_aliasing",
    "ll_amplitude_slope",
    "ll_coefficients",
    "ll_increment",
    "ll_integrate",
    "ll_integrate_increments",
    "ll_integrate_paths",
    "ll_s_n_sq",
    "ll_s_n_sq_series",
    "ll_sigma_nr_sq",
    "ll_sigma_sq_series",
    "ll_slope",
    "ll_step",
    "ll_step_augmented",
    "ll_stepper",
    "strong_error_study",
    "threshold",
]
