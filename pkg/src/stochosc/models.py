"""Model specifications: linear coupled oscillator, generic nonlinear oscillator, pendulum pair."""

import importlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .errors import ValidationError
from .linalg import as_sym_matrix, eigh_symmetric


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _vector(v, d, name):
    a = _frozen(v).reshape(-1)
    if a.shape != (d,):
        raise ValidationError(f"{name} must have length {d}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class CoupledOscillatorSpec:
    """Linear oscillator ``dx = y dt``, ``dy = -Lambda^2 x dt + Pi dw``.

    ``Lambda`` is ``d x d`` symmetric and nonsingular, ``Pi`` is ``d x m``.
    Construction validates both and freezes every array.
    """

    Lambda: np.ndarray
    Pi: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        lam = _frozen(as_sym_matrix(self.Lambda, "Lambda"))
        d = lam.shape[0]
        pi = _frozen(self.Pi)
        if pi.ndim == 1 and d == 1:
            pi = _frozen(pi.reshape(1, -1))
        if pi.ndim != 2 or pi.shape[0] != d or pi.shape[1] < 1:
            raise ValidationError(f"Pi must be {d} x m with m >= 1, got shape {pi.shape}")
        if not np.all(np.isfinite(pi)):
            raise ValidationError("Pi has non-finite entries")
        if not (np.isfinite(self.t0) and self.t0 >= 0):
            raise ValidationError(f"t0 must be a finite time >= 0, got {self.t0}")
        object.__setattr__(self, "Lambda", lam)
        object.__setattr__(self, "Pi", pi)
        object.__setattr__(self, "x0", _vector(self.x0, d, "x0"))
        object.__setattr__(self, "y0", _vector(self.y0, d, "y0"))
        object.__setattr__(self, "t0", float(self.t0))
        if not self.spectral.is_nonsingular():
            raise ValidationError(f"Lambda is singular (eigenvalues {self.spectral.eigenvalues})")

    @property
    def d(self):
        return self.Lambda.shape[0]

    @property
    def m(self):
        return self.Pi.shape[1]

    @property
    def initial_state(self):
        return np.concatenate([self.x0, self.y0])

    @cached_property
    def spectral(self):
        return eigh_symmetric(self.Lambda)

    def replace(self, **changes):
        fields = dict(Lambda=self.Lambda, Pi=self.Pi, x0=self.x0, y0=self.y0, t0=self.t0)
        fields.update(changes)
        return CoupledOscillatorSpec(**fields)

    def to_dict(self):
        return {
            "kind": "linear",
            "Lambda": self.Lambda.tolist(),
            "Pi": self.Pi.tolist(),
            "x0": self.x0.tolist(),
            "y0": self.y0.tolist(),
            "t0": self.t0,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(Lambda=data["Lambda"], Pi=data["Pi"], x0=data["x0"], y0=data["y0"], t0=data.get("t0", 0.0))


def as_linear_system(spec):
    """Block drift ``A = [[0, I], [-Lambda^2, 0]]`` and diffusion ``B = [[0], [Pi]]``."""
    d, m = spec.d, spec.m
    a = np.zeros((2 * d, 2 * d))
    a[:d, d:] = np.eye(d)
    a[d:, :d] = -spec.Lambda @ spec.Lambda
    b = np.zeros((2 * d, m))
    b[d:, :] = spec.Pi
    return a, b


def pendulum_drift(spec, x, y=None):
    """Restoring force ``f(x, y)`` of the spring-coupled pendulum pair.

    Returns ``(a sin x1 + b (sin x1 - sin x2) cos x1, a sin x2 - b (sin x1 - sin x2) cos x2)``.
    The velocity equation is ``dy = -f dt + Pi dw``: the sign is applied by
    the integrator, not here.  ``x`` may carry trailing batch axes.  ``y`` is
    accepted for signature uniformity and ignored.
    """
    x = np.asarray(x, dtype=float)
    s1, s2 = np.sin(x[0]), np.sin(x[1])
    diff = s1 - s2
    return np.stack([
        spec.alpha * s1 + spec.beta * diff * np.cos(x[0]),
        spec.alpha * s2 - spec.beta * diff * np.cos(x[1]),
    ])


@dataclass(frozen=True, eq=False)
class PendulumPairSpec:
    """Two identical pendulums joined by a weak spring, each with its own noise.

    The noise matrix is ``Pi = diag(sigma1, sigma2)`` acting on the velocity
    equations.
    """

    alpha: float
    beta: float
    sigma1: float
    sigma2: float
    x0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    y0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t0: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "sigma1", "sigma2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be strictly positive, got {value}")
            object.__setattr__(self, name, float(value))
        if not (np.isfinite(self.t0) and self.t0 >= 0):
            raise ValidationError(f"t0 must be a finite time >= 0, got {self.t0}")
        object.__setattr__(self, "x0", _vector(self.x0, 2, "x0"))
        object.__setattr__(self, "y0", _vector(self.y0, 2, "y0"))
        object.__setattr__(self, "t0", float(self.t0))

    d = 2
    m = 2

    @property
    def Pi(self):
        return np.diag([self.sigma1, self.sigma2])

    @property
    def initial_state(self):
        return np.concatenate([self.x0, self.y0])

    @property
    def drift_bound(self):
        """Per-component bound ``alpha + 2 beta`` on ``|f_i|``."""
        return self.alpha + 2.0 * self.beta

    def drift(self, x, y=None):
        return pendulum_drift(self, x, y)

    def as_nonlinear(self):
        return NonlinearDriftSpec(
            drift=self.drift, Pi=self.Pi, K1=self.drift_bound, x0=self.x0, y0=self.y0, t0=self.t0,
        )

    def to_dict(self):
        return {
            "kind": "pendulum-pair",
            "alpha": self.alpha,
            "beta": self.beta,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "x0": self.x0.tolist(),
            "y0": self.y0.tolist(),
            "t0": self.t0,
        }


def load_drift(path):
    """Import a drift evaluator given as ``"package.module:function"``."""
    module_name, _, attr = path.partition(":")
    if not module_name or not attr:
        raise ValidationError(f"drift must look like 'module:function', got {path!r}")
    try:
        obj = importlib.import_module(module_name)
    except ImportError as exc:
        raise ValidationError(f"cannot import drift module {module_name!r}: {exc}") from exc
    for part in attr.split("."):
        obj = getattr(obj, part, None)
        if obj is None:
            raise ValidationError(f"{path!r} has no attribute {part!r}")
    if not callable(obj):
        raise ValidationError(f"{path!r} is not callable")
    return obj


@dataclass(frozen=True, eq=False)
class NonlinearDriftSpec:
    """Nonlinear oscillator ``dx = y dt``, ``dy = -f(x, y) dt + Pi dw``.

    ``drift(x, y)`` must be pure and accept arrays of shape ``(d, ...)``,
    returning the same shape.  ``K1`` is the claimed linear-growth constant;
    it is checked by :func:`growth_bound_check`, not at construction.
    """

    drift: object
    Pi: np.ndarray
    K1: float
    x0: np.ndarray
    y0: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        pi = _frozen(self.Pi)
        if pi.ndim != 2 or pi.shape[1] < 1:
            raise ValidationError(f"Pi must be d x m with m >= 1, got shape {pi.shape}")
        d = pi.shape[0]
        if not (np.isfinite(self.K1) and self.K1 > 0):
            raise ValidationError(f"K1 must be positive, got {self.K1}")
        if not callable(self.drift):
            raise ValidationError("drift must be callable")
        object.__setattr__(self, "Pi", pi)
        object.__setattr__(self, "K1", float(self.K1))
        object.__setattr__(self, "x0", _vector(self.x0, d, "x0"))
        object.__setattr__(self, "y0", _vector(self.y0, d, "y0"))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def d(self):
        return self.Pi.shape[0]

    @property
    def m(self):
        return self.Pi.shape[1]

    @property
    def initial_state(self):
        return np.concatenate([self.x0, self.y0])


@dataclass(frozen=True)
class GrowthCheck:
    passed: bool
    worst_ratio: float
    worst_point: np.ndarray
    n_points: int


def growth_bound_check(spec, n_points=10_000, radius=1e3):
    """Sampled falsification test of ``|f(x, y)| <= K1 (1 + |x| + |y|)``.

    Evaluates the drift at ``n_points`` Halton points filling the box
    ``[-radius, radius]^{2d}`` and reports the largest ratio
    ``|f| / (1 + |x| + |y|)``.  Passing is evidence, not proof.
    """
    d = spec.d
    unit = qmc.Halton(d=2 * d, scramble=False).random(n_points + 1)[1:]
    pts = (2.0 * unit - 1.0) * radius
    x = pts[:, :d].T
    y = pts[:, d:].T
    f = np.asarray(spec.drift(x, y), dtype=float).reshape(d, -1)
    ratio = np.linalg.norm(f, axis=0) / (1.0 + np.linalg.norm(x, axis=0) + np.linalg.norm(y, axis=0))
    k = int(np.argmax(ratio))
    return GrowthCheck(
        passed=bool(ratio[k] <= spec.K1),
        worst_ratio=float(ratio[k]),
        worst_point=pts[k],
        n_points=n_points,
    )
