"""Exact Gaussian transition law of the linear oscillator and its variance analytics.

Over a step ``delta`` the solution moves by ``x(t + delta) = R(delta) x(t) + xi``
where ``R`` is the block rotation and ``xi`` is Gaussian with covariance
``C(delta)``.  ``C`` is assembled in the eigenbasis of ``Lambda`` from the
closed-form integrals of ``sin``/``cos`` products; resonant frequency pairs
use their analytic limits.

For one position component ``x_i(t) = D(t) + V(t)``: ``D`` is the
deterministic rotation of the initial state and ``V`` the stochastic
convolution.  On the grid ``t_n = t0 + n delta`` the variance of ``V(t_n)`` is
``s_n^2 = sum_r sigma_nr^2`` with ``s_n^2 / n -> (delta / 2) sum (c_k^l)^2``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import PreconditionError
from .linalg import EIGEN_MERGE_RTOL, eigh_symmetric, rotation_matrix
from .trajectory import TrajectoryGrid, gaussian_blocks, linear_recursion, uniform_times

COV_CLAMP_RTOL = 1e-12
_SMALL_STEP = 5e-3


# -- elementary integrals ---------------------------------------------------

def _cos_integral(omega, a, b, tol):
    """``int_a^b cos(omega u) du`` elementwise, exact limit for ``|omega| <= tol``."""
    omega = np.asarray(omega, dtype=float)
    width = b - a
    mid = 0.5 * (a + b)
    safe = np.where(np.abs(omega) <= tol, 1.0, omega)
    val = 2.0 * np.cos(safe * mid) * np.sin(0.5 * safe * width) / safe
    return np.where(np.abs(omega) <= tol, width + 0.0 * mid, val)


def _sin_integral_from_zero(omega, width, tol):
    """``int_0^width sin(omega u) du`` elementwise; zero in the resonant limit."""
    omega = np.asarray(omega, dtype=float)
    safe = np.where(np.abs(omega) <= tol, 1.0, omega)
    val = 2.0 * np.sin(0.5 * safe * width) ** 2 / safe
    return np.where(np.abs(omega) <= tol, 0.0, val)


def _sin_sin_over_pq(p, q, width, tol):
    """``int_0^width sin(p u) sin(q u) du / (p q)``.

    For short steps the product-to-sum difference cancels catastrophically,
    so a Taylor expansion in ``u`` is used instead.
    """
    if np.max(np.abs(p)) * width < _SMALL_STEP:
        p2, q2 = p * p, q * q
        return (width**3 / 3.0 - (p2 + q2) * width**5 / 30.0
                + ((p2 * p2 + q2 * q2) / 120.0 + p2 * q2 / 36.0) * width**7 / 7.0)
    val = 0.5 * (_cos_integral(p - q, 0.0, width, tol) - _cos_integral(p + q, 0.0, width, tol))
    return val / (p * q)


# -- transition kernel ------------------------------------------------------

@dataclass(frozen=True)
class TransitionKernel:
    """One-step law: mean map ``R(step)``, covariance ``C(step)`` and factor ``G G^T = C``."""

    step: float
    mean_map: np.ndarray
    cov: np.ndarray
    factor: np.ndarray


def noise_covariance(spec, delta):
    """Covariance of ``int_0^delta exp(A u) B B^T exp(A u)^T du`` in closed form."""
    if not delta > 0:
        raise PreconditionError(f"step must be positive, got {delta}")
    dec = spec.spectral
    dec.require_nonsingular()
    lam = dec.eigenvalues
    tol = EIGEN_MERGE_RTOL * dec.max_abs
    g = dec.P.T @ spec.Pi
    k = g @ g.T
    p = lam[:, None]
    q = lam[None, :]
    ixx = _sin_sin_over_pq(p, q, delta, tol)
    ixy = 0.5 * (_sin_integral_from_zero(p + q, delta, tol) + _sin_integral_from_zero(p - q, delta, tol)) / p
    iyy = 0.5 * (_cos_integral(p - q, 0.0, delta, tol) + _cos_integral(p + q, 0.0, delta, tol))
    cxx = k * ixx
    cxy = k * ixy
    cyy = k * iyy
    spectral_cov = np.block([[cxx, cxy], [cxy.T, cyy]])
    d = spec.d
    pb = np.zeros((2 * d, 2 * d))
    pb[:d, :d] = dec.P
    pb[d:, d:] = dec.P
    cov = pb @ spectral_cov @ pb.T
    return 0.5 * (cov + cov.T)


def covariance_factor(cov):
    """Factor ``G`` with ``G G^T = cov`` from a symmetric eigendecomposition.

    Eigenvalues below ``1e-12 * trace`` (including small negative round-off)
    are clamped to zero, so rank-deficient covariances factor cleanly.
    """
    trace = float(np.trace(cov))
    if trace <= 0.0:
        return np.zeros_like(cov)
    dec = eigh_symmetric(cov)
    w = dec.eigenvalues.copy()
    if w.min() < -1e-12 * trace:
        raise PreconditionError(f"covariance is not positive semidefinite (min eigenvalue {w.min()})")
    w[w < COV_CLAMP_RTOL * trace] = 0.0
    return dec.P * np.sqrt(w)


def transition_kernel(spec, delta):
    cov = noise_covariance(spec, delta)
    return TransitionKernel(
        step=float(delta),
        mean_map=rotation_matrix(spec.spectral, delta),
        cov=cov,
        factor=covariance_factor(cov),
    )


def sample_exact_paths(spec, delta, n_steps, stream_list, keep=None, x0=None):
    """Exact grid samples for a batch of paths, one stream per path.

    Returns an array of shape ``(P, len(keep), 2d)``; ``keep`` defaults to
    every step ``0..n_steps`` and must be increasing.
    """
    kernel = transition_kernel(spec, delta)
    start = spec.initial_state if x0 is None else x0
    noise = gaussian_blocks(stream_list, 2 * spec.d, n_steps)
    return linear_recursion(kernel.mean_map, kernel.factor, start, n_steps, noise, keep=keep)


def sample_exact_path(spec, delta, n_steps, stream):
    """One exact path on ``t_n = t0 + n delta``, reproducible from ``stream``."""
    states = sample_exact_paths(spec, delta, n_steps, [stream])[0]
    return TrajectoryGrid(
        times=uniform_times(spec.t0, delta, n_steps),
        states=states,
        step=float(delta),
        scheme="exact",
        root_seed=stream.root_seed,
        stream_id=stream.stream_id,
    )


# -- deterministic part -----------------------------------------------------

def deterministic_part(spec, i, t):
    """``D(t)`` for position component ``i``: the noiseless rotation of the initial state."""
    dec = spec.spectral
    lam = dec.eigenvalues
    tau = np.asarray(t, dtype=float)[..., None] - spec.t0
    px = dec.P.T @ spec.x0
    py = dec.P.T @ spec.y0
    row = dec.P[i]
    terms = row * (np.cos(lam * tau) * px + np.sin(lam * tau) / lam * py)
    return terms.sum(axis=-1)


def deterministic_bound(spec):
    """Uniform bound ``|P|^2 (|x0| + |y0| max_k |lam_k|^-1)`` on ``|D(t)|``."""
    dec = spec.spectral
    p_norm2 = float(np.sum(dec.P**2))
    return p_norm2 * (np.linalg.norm(spec.x0) + np.linalg.norm(spec.y0) / np.min(np.abs(dec.eigenvalues)))


# -- variance coefficients --------------------------------------------------

@dataclass(frozen=True)
class ComponentCoefficients:
    """Noise coefficients of position component ``i``.

    ``c[k, l] = P_ik / lam_k * <P_k, Pi_l>`` so that
    ``V(t) = sum_l int sum_k c[k, l] sin(lam_k (t - s)) dw_l(s)``.
    ``merged[j, l]`` folds eigenvalues sharing ``|lam| = group_values[j]``,
    with a sign flip for negative eigenvalues.
    """

    component: int
    eigenvalues: np.ndarray
    c: np.ndarray
    group_values: np.ndarray
    merged: np.ndarray


def merge_groups(eigenvalues, table, signed):
    """Sum rows of ``table`` over eigenvalues sharing the same ``|lam|``."""
    absval = np.abs(eigenvalues)
    tol = EIGEN_MERGE_RTOL * absval.max()
    groups = []
    for k in np.argsort(-absval, kind="stable"):
        if groups and abs(groups[-1][0] - absval[k]) <= tol:
            groups[-1][1].append(k)
        else:
            groups.append((absval[k], [k]))
    group_values = np.array([g[0] for g in groups])
    sign = np.sign(eigenvalues) if signed else np.ones_like(eigenvalues)
    merged = np.array([sum(sign[k] * table[k] for k in members) for _, members in groups])
    return group_values, merged


def component_coefficients(spec, i):
    dec = spec.spectral
    lam = dec.eigenvalues
    proj = dec.P.T @ spec.Pi
    c = (dec.P[i] / lam)[:, None] * proj
    values, merged = merge_groups(lam, c, signed=True)
    return ComponentCoefficients(component=i, eigenvalues=lam.copy(), c=c, group_values=values, merged=merged)


def _block_variance(coeffs, delta, lags):
    """``g(q) = sum_l int_{q delta}^{(q+1) delta} (sum_k c_kl sin(lam_k u))^2 du`` for each lag."""
    lam = coeffs.eigenvalues
    w = coeffs.c @ coeffs.c.T
    tol = EIGEN_MERGE_RTOL * np.max(np.abs(lam))
    a = np.asarray(lags, dtype=float)[:, None, None] * delta
    b = a + delta
    diff = lam[:, None] - lam[None, :]
    summ = lam[:, None] + lam[None, :]
    integral = 0.5 * (_cos_integral(diff, a, b, tol) - _cos_integral(summ, a, b, tol))
    return np.sum(w * integral, axis=(-2, -1))


def sigma_nr_sq(coeffs, delta, n, r):
    """Variance of the step-``r`` contribution to ``V(t_n)``, ``1 <= r <= n``."""
    if not 1 <= r <= n:
        raise PreconditionError(f"need 1 <= r <= n, got r={r}, n={n}")
    return float(_block_variance(coeffs, delta, [n - r])[0])


def s_n_sq_series(coeffs, delta, n_max):
    """``s_n^2`` for ``n = 1..n_max`` (index ``n - 1``).

    ``sigma_nr^2`` depends on ``n - r`` only, so the sequence is a running
    sum of per-lag block variances.
    """
    return np.cumsum(_block_variance(coeffs, delta, np.arange(n_max)))


def s_n_sq(coeffs, delta, n):
    if n < 1:
        raise PreconditionError(f"n must be >= 1, got {n}")
    return float(s_n_sq_series(coeffs, delta, n)[-1])


def s_n_slope(coeffs, delta):
    """Limit of ``s_n^2 / n``: ``(delta / 2) sum_{l,j} merged[j, l]^2``.

    With distinct ``|lam_k|`` the merged table equals ``c``.
    """
    return 0.5 * delta * float(np.sum(coeffs.merged**2))


# -- single oscillator density ----------------------------------------------

def _x_minus_sin(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, z, 0.0)
    series = zs**3 / 6.0 - zs**5 / 120.0 + zs**7 / 5040.0 - zs**9 / 362880.0
    return np.where(small, series, z - np.sin(z))


def simple_oscillator_covariance(alpha, rho, t, convention="oscillator"):
    """Covariance at time ``t`` of the scalar oscillator started at the origin.

    ``rho`` is the total noise variance rate ``sum_j sigma_j^2``.  With
    ``convention="oscillator"`` the cross term is ``+rho sin^2(alpha t) / (2 alpha^2)``,
    the covariance of ``dx = y dt, dy = -alpha^2 x dt + noise``.  The
    time-reversed system ``dx = -y dt, dy = alpha^2 x dt + noise`` has the
    same diagonal and the opposite cross term (``convention="reversed"``).
    """
    if not t > 0:
        raise PreconditionError(f"t must be positive, got {t}")
    if alpha == 0:
        raise PreconditionError("alpha must be nonzero")
    if convention not in ("oscillator", "reversed"):
        raise ValueError(f"unknown convention {convention!r}")
    two = 2.0 * alpha * t
    vxx = rho * _x_minus_sin(two) / (4.0 * alpha**3)
    vyy = rho * (two + np.sin(two)) / (4.0 * alpha)
    cross = rho * np.sin(alpha * t) ** 2 / (2.0 * alpha**2)
    if convention == "reversed":
        cross = -cross
    return np.array([[vxx, cross], [cross, vyy]])


def _simple_det(alpha, rho, t):
    at = alpha * t
    return rho**2 / (4.0 * alpha**4) * _x_minus_sin(at) * (at + np.sin(at))


def density_simple_oscillator(alpha, rho, t, x, y, convention="oscillator"):
    """Transition density from the origin, ``p(t, x, y)``, as a bivariate Gaussian.

    Broadcasts over ``x`` and ``y``.
    """
    cov = simple_oscillator_covariance(alpha, rho, t, convention)
    det = _simple_det(alpha, rho, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    quad = (cov[1, 1] * x * x - 2.0 * cov[0, 1] * x * y + cov[0, 0] * y * y) / det
    return np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))


def lyapunov_v(alpha, rho, x, y, t_cut, convention="oscillator"):
    """Truncated ``int_0^t_cut p(s, x, y) ds``.

    The integral is taken over ``log s`` in unit-width pieces so the sharp
    onset near ``s = 0`` is resolved.  The untruncated integral diverges
    logarithmically, so only the truncated value is meaningful.
    """
    if not t_cut > 0:
        raise PreconditionError(f"t_cut must be positive, got {t_cut}")

    def integrand(u):
        s = math.exp(u)
        return float(density_simple_oscillator(alpha, rho, s, x, y, convention)) * s

    lo = math.log(t_cut) - 40.0
    edges = np.arange(lo, math.log(t_cut), 1.0).tolist() + [math.log(t_cut)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-11, limit=200)
        total += val
    return total
