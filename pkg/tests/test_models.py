import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochosc import CoupledOscillatorSpec, PendulumPairSpec, ValidationError
from stochosc.models import (
    NonlinearDriftSpec,
    as_linear_system,
    growth_bound_check,
    load_drift,
    pendulum_drift,
)

from .conftest import random_spec


class TestCoupledSpec:
    def test_dimensions(self, reference_spec):
        assert reference_spec.d == 2 and reference_spec.m == 2
        np.testing.assert_array_equal(reference_spec.initial_state, [1.0, -0.5, 0.0, 0.3])

    def test_arrays_frozen(self, reference_spec):
        with pytest.raises(ValueError):
            reference_spec.Lambda[0, 0] = 3.0

    def test_singular_rejected(self):
        with pytest.raises(ValidationError, match="singular"):
            CoupledOscillatorSpec(Lambda=[[1.0, 1.0], [1.0, 1.0]], Pi=np.eye(2), x0=[0, 0], y0=[0, 0])

    def test_asymmetric_rejected(self):
        with pytest.raises(ValidationError):
            CoupledOscillatorSpec(Lambda=[[1.0, 0.2], [0.0, 1.0]], Pi=np.eye(2), x0=[0, 0], y0=[0, 0])

    @pytest.mark.parametrize("pi", [np.ones((3, 1)), np.ones((2, 0))])
    def test_bad_pi_shape(self, pi):
        with pytest.raises(ValidationError):
            CoupledOscillatorSpec(Lambda=np.eye(2), Pi=pi, x0=[0, 0], y0=[0, 0])

    def test_bad_initial_state(self):
        with pytest.raises(ValidationError):
            CoupledOscillatorSpec(Lambda=np.eye(2), Pi=np.eye(2), x0=[0, 0, 0], y0=[0, 0])
        with pytest.raises(ValidationError):
            CoupledOscillatorSpec(Lambda=np.eye(2), Pi=np.eye(2), x0=[0, np.nan], y0=[0, 0])

    def test_negative_t0_rejected(self):
        with pytest.raises(ValidationError):
            CoupledOscillatorSpec(Lambda=[[1.0]], Pi=[[1.0]], x0=[0], y0=[0], t0=-1.0)

    def test_dict_round_trip(self, reference_spec):
        data = reference_spec.to_dict()
        again = CoupledOscillatorSpec.from_dict(data)
        assert again.to_dict() == data

    def test_replace(self, reference_spec):
        other = reference_spec.replace(Pi=np.zeros((2, 1)))
        assert other.m == 1 and reference_spec.m == 2


class TestLinearSystem:
    def test_scalar(self):
        a, b = as_linear_system(CoupledOscillatorSpec(Lambda=[[1.0]], Pi=[[1.0]], x0=[0], y0=[0]))
        np.testing.assert_array_equal(a, [[0.0, 1.0], [-1.0, 0.0]])
        np.testing.assert_array_equal(b, [[0.0], [1.0]])

    def test_diagonal_lower_left(self):
        a, _ = as_linear_system(CoupledOscillatorSpec(Lambda=np.diag([1.0, 2.0]), Pi=np.eye(2), x0=[0, 0], y0=[0, 0]))
        np.testing.assert_array_equal(a[2:, :2], np.diag([-1.0, -4.0]))

    def test_blocks_random(self):
        spec = random_spec(np.random.default_rng(1), 3, 2)
        a, b = as_linear_system(spec)
        np.testing.assert_array_equal(a[:3, :3], 0.0)
        np.testing.assert_array_equal(a[:3, 3:], np.eye(3))
        np.testing.assert_allclose(a[3:, :3], -spec.Lambda @ spec.Lambda, rtol=0, atol=0)
        np.testing.assert_array_equal(a[3:, 3:], 0.0)
        np.testing.assert_array_equal(b[:3], 0.0)
        np.testing.assert_array_equal(b[3:], spec.Pi)


class TestPendulum:
    def test_rest_position(self):
        spec = PendulumPairSpec(alpha=1.0, beta=0.1, sigma1=0.5, sigma2=0.5)
        np.testing.assert_array_equal(pendulum_drift(spec, [0.0, 0.0], [3.0, -1.0]), [0.0, 0.0])

    def test_quarter_turn(self):
        spec = PendulumPairSpec(alpha=1.0, beta=1.0, sigma1=1.0, sigma2=1.0)
        np.testing.assert_allclose(pendulum_drift(spec, [math.pi / 2, 0.0]), [1.0, -1.0], atol=1e-15)

    @pytest.mark.parametrize("name", ["alpha", "beta", "sigma1", "sigma2"])
    def test_parameters_positive(self, name):
        params = dict(alpha=1.0, beta=0.1, sigma1=0.5, sigma2=0.5)
        params[name] = 0.0
        with pytest.raises(ValidationError):
            PendulumPairSpec(**params)

    def test_componentwise_bound(self):
        rng = np.random.default_rng(0)
        spec = PendulumPairSpec(alpha=1.3, beta=0.4, sigma1=1.0, sigma2=1.0)
        x = rng.uniform(-50, 50, size=(2, 100_000))
        f = pendulum_drift(spec, x)
        assert np.abs(f).max() <= spec.drift_bound

    def test_bound_on_grid(self):
        spec = PendulumPairSpec(alpha=1.0, beta=0.1, sigma1=0.5, sigma2=0.5)
        g = np.linspace(-2 * math.pi, 2 * math.pi, 401)
        x1, x2 = np.meshgrid(g, g)
        f = pendulum_drift(spec, np.stack([x1.ravel(), x2.ravel()]))
        assert np.abs(f).max() <= spec.drift_bound

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
    def test_antisymmetric_coupling(self, a, b):
        spec = PendulumPairSpec(alpha=0.7, beta=0.2, sigma1=1.0, sigma2=1.0)
        f = pendulum_drift(spec, [a, b])
        g = pendulum_drift(spec, [b, a])
        np.testing.assert_allclose(f, g[::-1], atol=1e-12)

    def test_noise_matrix(self):
        spec = PendulumPairSpec(alpha=1.0, beta=0.1, sigma1=0.5, sigma2=0.7)
        np.testing.assert_array_equal(spec.Pi, np.diag([0.5, 0.7]))
        assert spec.to_dict()["kind"] == "pendulum-pair"


class TestGrowthCheck:
    def test_pendulum_passes(self):
        spec = PendulumPairSpec(alpha=1.0, beta=0.1, sigma1=0.5, sigma2=0.5).as_nonlinear()
        assert growth_bound_check(spec).passed

    def test_identity_passes_below_one(self):
        spec = NonlinearDriftSpec(drift=load_drift("tests.drifts:identity"), Pi=[[1.0]], K1=1.0, x0=[0], y0=[0])
        check = growth_bound_check(spec)
        assert check.passed and check.worst_ratio < 1.0

    def test_square_fails(self):
        spec = NonlinearDriftSpec(drift=load_drift("tests.drifts:square"), Pi=[[1.0]], K1=50.0, x0=[0], y0=[0])
        check = growth_bound_check(spec)
        assert not check.passed
        assert abs(check.worst_point[0]) > 100

    def test_deterministic_sample(self):
        spec = PendulumPairSpec(alpha=1.0, beta=0.1, sigma1=0.5, sigma2=0.5).as_nonlinear()
        a, b = growth_bound_check(spec), growth_bound_check(spec)
        assert a.worst_ratio == b.worst_ratio

    @pytest.mark.parametrize("path", ["nocolon", "no_such_module_xyz:f", "tests.drifts:missing"])
    def test_bad_drift_path(self, path):
        with pytest.raises(ValidationError):
            load_drift(path)
