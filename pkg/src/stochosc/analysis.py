"""Sign-change counting, LIL envelope statistics and simple-zero diagnostics.

These turn sampled paths into finite-horizon evidence for almost-sure
statements: counts that keep growing as the horizon doubles, normalized
partial sums ``Z_n = S_n / sqrt(2 s_n^2 log log s_n^2)`` that pass both
``+(1 - eps)`` and ``-(1 - eps)``, and crossings where the velocity is
bounded away from zero.  The growth and passage rates are engineering
surrogates; no quantitative zero rate is claimed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .exact import deterministic_part
from .trajectory import TrajectoryGrid

DEFAULT_EPSILON = 0.2
DEFAULT_RATIO = 1.2


@dataclass(frozen=True)
class SignChangeReport:
    """Strict sign changes of one state coordinate.

    Crossing ``c`` happens between grid indices ``indices[c]`` and
    ``ends[c]`` (adjacent unless exact zeros sit in between); ``times``
    are linearly interpolated crossing times.  For position coordinates
    ``abs_y`` is ``|y_i|`` interpolated at each crossing time; it is empty
    for velocity coordinates.
    """

    component: int
    variable: str
    count: int
    indices: np.ndarray
    ends: np.ndarray
    times: np.ndarray
    abs_y: np.ndarray

    def count_until(self, n):
        """Number of crossings completed by grid index ``n``."""
        return int(np.count_nonzero(self.ends <= n))


def _crossings(values):
    """Pairs ``(a, b)`` of consecutive nonzero samples with opposite signs."""
    nz = np.flatnonzero(values != 0.0)
    if nz.size < 2:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    sv = np.sign(values[nz])
    flip = np.flatnonzero(sv[:-1] * sv[1:] < 0)
    return nz[flip], nz[flip + 1]


def sign_changes(values, times):
    """Crossing pairs and interpolated times for a 1-d sampled signal.

    Exact zeros on the grid are skipped: a run of zeros between opposite
    signs is one crossing, placed at the first zero sample.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    a, b = _crossings(values)
    adjacent = b == a + 1
    va, vb = values[a], values[b]
    t_next = times[a + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(adjacent, va / (va - vb), 1.0)
    t_cross = np.where(adjacent, times[a] + frac * (t_next - times[a]), t_next)
    return a, b, t_cross


def count_sign_changes(traj, i, variable="x"):
    """Report the strict sign changes of ``x_i`` (or ``y_i``) along ``traj``."""
    if traj.states.shape[0] == 0:
        raise PreconditionError("trajectory is empty")
    d = traj.dim
    if not 0 <= i < d:
        raise PreconditionError(f"component {i} out of range for d={d}")
    if variable not in ("x", "y"):
        raise ValueError(f"variable must be 'x' or 'y', got {variable!r}")
    col = i if variable == "x" else d + i
    values = traj.states[:, col]
    a, b, t_cross = sign_changes(values, traj.times)
    if variable == "x":
        y = traj.states[:, d + i]
        span = traj.times[b] - traj.times[a]
        w = np.where(span > 0, (t_cross - traj.times[a]) / np.where(span > 0, span, 1.0), 0.0)
        abs_y = np.abs(y[a] + w * (y[b] - y[a]))
    else:
        abs_y = np.empty(0)
    return SignChangeReport(
        component=i, variable=variable, count=int(a.size), indices=a, ends=b, times=t_cross, abs_y=abs_y,
    )


def count_changes_array(values):
    """Sign-change counts along axis 1 of ``values`` (shape ``(P, N)``), zeros skipped."""
    values = np.asarray(values, dtype=float)
    counts = np.empty(values.shape[0], dtype=int)
    for p, row in enumerate(values):
        counts[p] = _crossings(row)[0].size
    return counts


def noise_part(traj, spec, i):
    """``S_n = x_i(t_n) - D(t_n)``, the stochastic convolution part of ``x_i``.

    Valid for exact and LL trajectories, whose homogeneous part is the exact
    rotation of the initial state.
    """
    if traj.scheme not in ("exact", "ll"):
        raise PreconditionError(f"noise part is only defined for exact or LL paths, got {traj.scheme!r}")
    return traj.states[:, i] - deterministic_part(spec, i, traj.times)


def geometric_checkpoints(n_max, ratio=DEFAULT_RATIO, start=1):
    """Distinct ``ceil(ratio^k)`` values in ``[start, n_max]``, plus ``n_max``."""
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    points = set()
    k = 0
    while True:
        n = math.ceil(ratio**k)
        if n > n_max:
            break
        if n >= start:
            points.add(n)
        k += 1
    points.add(n_max)
    return np.array(sorted(points), dtype=int)


@dataclass(frozen=True)
class LILReport:
    """Envelope statistic at each checkpoint.

    ``z`` is NaN where ``s_n^2 <= e`` (``log log s_n^2`` not positive);
    ``defined`` marks the usable checkpoints.  ``first_upper`` and
    ``first_lower`` are the first checkpoints ``n`` with ``Z_n > 1 - eps``
    and ``Z_n < -(1 - eps)``, or ``None``.
    """

    checkpoints: np.ndarray
    s: np.ndarray
    s2: np.ndarray
    z: np.ndarray
    defined: np.ndarray
    running_max: np.ndarray
    running_min: np.ndarray
    epsilon: float
    first_upper: int | None
    first_lower: int | None

    @property
    def max_z(self):
        return float(np.nanmax(self.z)) if self.defined.any() else float("nan")

    @property
    def min_z(self):
        return float(np.nanmin(self.z)) if self.defined.any() else float("nan")

    @property
    def passed_upper(self):
        return self.first_upper is not None

    @property
    def passed_lower(self):
        return self.first_lower is not None

    @property
    def passed(self):
        return self.passed_upper and self.passed_lower


def lil_envelope(s, s2, epsilon=DEFAULT_EPSILON, checkpoints=None):
    """Normalized statistic ``Z_n = S_n / sqrt(2 s_n^2 log log s_n^2)``.

    Parameters
    ----------
    s, s2 : array_like
        Partial sums and their variances, aligned with ``checkpoints``.
    epsilon : float
        Passage level is ``1 - epsilon``; must lie in ``(0, 1)``.
    checkpoints : array_like of int, optional
        Labels for the entries (default ``1..len(s)``).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if s.shape != s2.shape:
        raise ValueError("S and s^2 series must be aligned")
    cps = np.arange(1, s.size + 1) if checkpoints is None else np.asarray(checkpoints, dtype=int)
    defined = s2 > math.e
    z = np.full(s.shape, np.nan)
    s2d = s2[defined]
    z[defined] = s[defined] / np.sqrt(2.0 * s2d * np.log(np.log(s2d)))
    filled_hi = np.where(defined, z, -np.inf)
    filled_lo = np.where(defined, z, np.inf)
    running_max = np.maximum.accumulate(filled_hi) if z.size else z
    running_min = np.minimum.accumulate(filled_lo) if z.size else z
    level = 1.0 - epsilon
    up = np.flatnonzero(defined & (filled_hi > level))
    down = np.flatnonzero(defined & (filled_lo < -level))
    return LILReport(
        checkpoints=cps,
        s=s,
        s2=s2,
        z=z,
        defined=defined,
        running_max=np.where(np.isfinite(running_max), running_max, np.nan),
        running_min=np.where(np.isfinite(running_min), running_min, np.nan),
        epsilon=epsilon,
        first_upper=int(cps[up[0]]) if up.size else None,
        first_lower=int(cps[down[0]]) if down.size else None,
    )


@dataclass(frozen=True)
class SimpleZeroTable:
    """Fraction of crossings with ``|y| < delta`` for each ``delta``.

    ``suspect_double_zero`` is set when the fraction does not shrink across
    the grid: the smallest ``delta`` still captures at least half of the
    crossings caught by the largest.
    """

    deltas: np.ndarray
    fractions: np.ndarray
    n_crossings: int
    suspect_double_zero: bool


def simple_zero_diagnostic(abs_y, deltas, i=None):
    """Tabulate crossing velocities; ``abs_y`` pools ``SignChangeReport.abs_y`` values.

    A report, a list of reports, or a trajectory together with the
    component ``i`` is accepted in place of the raw array.
    """
    if isinstance(abs_y, TrajectoryGrid):
        if i is None:
            raise ValueError("component i is required when passing a trajectory")
        abs_y = count_sign_changes(abs_y, i).abs_y
    elif isinstance(abs_y, SignChangeReport):
        abs_y = abs_y.abs_y
    elif isinstance(abs_y, (list, tuple)) and abs_y and isinstance(abs_y[0], SignChangeReport):
        abs_y = np.concatenate([r.abs_y for r in abs_y])
    abs_y = np.asarray(abs_y, dtype=float)
    deltas = np.sort(np.asarray(deltas, dtype=float))[::-1]
    n = abs_y.size
    if n == 0:
        fractions = np.zeros(deltas.size)
    else:
        sorted_y = np.sort(abs_y)
        fractions = np.searchsorted(sorted_y, deltas, side="left") / n
    suspect = bool(n > 0 and fractions[0] > 0 and fractions[-1] >= 0.5 * fractions[0])
    return SimpleZeroTable(deltas=deltas, fractions=fractions, n_crossings=n, suspect_double_zero=suspect)
