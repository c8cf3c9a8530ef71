"""Dense symmetric eigen-decomposition and matrix functions.

Everything downstream (rotation matrices, covariance closed forms, variance
coefficients) is built from ``Lambda = P diag(lam) P^T`` and functions applied
through it, ``f(Lambda) = P diag(f(lam)) P^T``.  Matrices are numpy arrays in
row-major (C) layout; the matrix norm used throughout is Frobenius.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, PreconditionError, ValidationError

SYMMETRY_RTOL = 1e-12
NONSINGULAR_RTOL = 1e-10
# |lam_i| and |lam_j| are treated as the same frequency within this relative gap
EIGEN_MERGE_RTOL = 1e-9
MAX_JACOBI_SWEEPS = 100
_SIGN_TOL = 1e-12


def as_sym_matrix(m, name="matrix"):
    """Return ``m`` as a float ``(d, d)`` array after checking symmetry.

    Raises
    ------
    ValidationError
        If ``m`` is not square, empty, non-finite, or asymmetric beyond
        ``1e-12 * max|m_ij|``.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise ValidationError(f"{name} is not symmetric")
    return a


@dataclass(frozen=True)
class SpectralDecomposition:
    """Orthogonal ``P`` and eigenvalues sorted in descending order.

    Column ``k`` of ``P`` is the eigenvector of ``eigenvalues[k]``.
    """

    P: np.ndarray
    eigenvalues: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.eigenvalues)))

    def is_nonsingular(self):
        lam = np.abs(self.eigenvalues)
        return bool(lam.min() > NONSINGULAR_RTOL * lam.max())

    def require_nonsingular(self):
        if not self.is_nonsingular():
            raise PreconditionError(
                f"matrix is singular to relative tolerance {NONSINGULAR_RTOL}: "
                f"eigenvalues {self.eigenvalues}"
            )

    def apply(self, values):
        """Return ``P diag(values) P^T``."""
        return (self.P * np.asarray(values, dtype=float)) @ self.P.T

    def reconstruct(self):
        return self.apply(self.eigenvalues)


def _off_norm(a):
    return np.linalg.norm(a - np.diag(np.diag(a)))


def _jacobi_rotate(a, v, p, q):
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    ap = a[:, p].copy()
    aq = a[:, q].copy()
    a[:, p] = c * ap - s * aq
    a[:, q] = s * ap + c * aq
    ap = a[p, :].copy()
    aq = a[q, :].copy()
    a[p, :] = c * ap - s * aq
    a[q, :] = s * ap + c * aq
    a[p, q] = a[q, p] = 0.0
    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def eigh_symmetric(m, max_sweeps=MAX_JACOBI_SWEEPS):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    Pairs ``(p, q)`` are visited in row order each sweep, so the output is a
    deterministic function of the input.  Eigenvalues are sorted descending
    and every eigenvector is signed so that its first entry with magnitude
    above ``1e-12`` is positive.

    Parameters
    ----------
    m : array_like, shape (d, d)
        Symmetric matrix.
    max_sweeps : int
        Sweep budget before giving up.

    Returns
    -------
    SpectralDecomposition

    Raises
    ------
    ValidationError
        Non-symmetric input.
    ConvergenceError
        Off-diagonal mass still above tolerance after ``max_sweeps`` sweeps.
    """
    a = as_sym_matrix(m)
    a = 0.5 * (a + a.T)
    d = a.shape[0]
    v = np.eye(d)
    scale = np.linalg.norm(a)
    if scale > 0.0 and d > 1:
        skip = 1e-300 + 1e-18 * scale
        for _ in range(max_sweeps):
            off = _off_norm(a)
            if off <= 1e-14 * scale:
                break
            for p in range(d - 1):
                for q in range(p + 1, d):
                    if abs(a[p, q]) > skip:
                        _jacobi_rotate(a, v, p, q)
        else:
            off = _off_norm(a)
            if off > 1e-14 * scale:
                raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    v = v[:, order]
    for k in range(d):
        col = v[:, k]
        first = np.flatnonzero(np.abs(col) > _SIGN_TOL)
        if first.size and col[first[0]] < 0:
            v[:, k] = -col
    return SpectralDecomposition(P=v, eigenvalues=lam)


class MatrixTrig(NamedTuple):
    cos: np.ndarray
    inv_sin: np.ndarray
    lam_sin: np.ndarray


def matrix_trig(dec, t):
    """Blocks ``cos(Lambda t)``, ``Lambda^-1 sin(Lambda t)`` and ``Lambda sin(Lambda t)``."""
    dec.require_nonsingular()
    lam = dec.eigenvalues
    arg = lam * t
    return MatrixTrig(
        cos=dec.apply(np.cos(arg)),
        inv_sin=dec.apply(np.sin(arg) / lam),
        lam_sin=dec.apply(lam * np.sin(arg)),
    )


def rotation_matrix(dec, t):
    """The ``2d x 2d`` propagator ``exp(A t)`` of the undamped linear oscillator."""
    c, s_inv, s_lam = matrix_trig(dec, t)
    return np.block([[c, s_inv], [-s_lam, c]])


# Pade coefficients and norm thresholds for the scaling-and-squaring expm
# (degrees 3, 5, 7, 9, 13).
_PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}
_PADE_B = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}


def _pade_uv(a, degree):
    b = _PADE_B[degree]
    n = a.shape[0]
    ident = np.eye(n)
    a2 = a @ a
    if degree < 13:
        powers = [ident, a2]
        for _ in range(2, degree // 2 + 1):
            powers.append(powers[-1] @ a2)
        u = sum(b[2 * k + 1] * powers[k] for k in range(degree // 2 + 1))
        v = sum(b[2 * k] * powers[k] for k in range(degree // 2 + 1))
        return a @ u, v
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    return u, v


def expm_pade(a):
    """Matrix exponential by scaling and squaring with a diagonal Pade kernel.

    The Pade degree is the smallest of 3, 5, 7, 9, 13 whose backward-error
    threshold covers ``||a||_1``; above the degree-13 threshold the matrix is
    scaled by ``2^-s`` and the result squared ``s`` times.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    norm1 = np.linalg.norm(a, 1) if a.size else 0.0
    squarings = 0
    for degree in (3, 5, 7, 9):
        if norm1 <= _PADE_THETA[degree]:
            break
    else:
        degree = 13
        if norm1 > _PADE_THETA[13]:
            squarings = max(0, int(np.ceil(np.log2(norm1 / _PADE_THETA[13]))))
            a = a / 2.0**squarings
    u, v = _pade_uv(a, degree)
    r = np.linalg.solve(v - u, v + u)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(squarings):
            r = r @ r
    if not np.all(np.isfinite(r)):
        raise FloatingPointError("matrix exponential overflowed")
    return r


def augmented_exp(c, h):
    """``exp(C h)`` for the ``(2d+1) x (2d+1)`` augmented LL matrix ``C``."""
    if not h > 0:
        raise PreconditionError(f"h must be positive, got {h}")
    return expm_pade(np.asarray(c, dtype=float) * h)
