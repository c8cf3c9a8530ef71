import numpy as np
import pytest

from stochosc import CoupledOscillatorSpec

REFERENCE = dict(
    Lambda=[[1.5, 0.5], [0.5, 1.0]],
    Pi=[[1.0, 0.0], [0.5, 0.8]],
    x0=[1.0, -0.5],
    y0=[0.0, 0.3],
)


@pytest.fixture
def reference_spec():
    return CoupledOscillatorSpec(**REFERENCE)


def random_spec(rng, d, m=None, spread=(0.3, 2.0)):
    """Nonsingular random spec with eigenvalues of random sign."""
    m = d if m is None else m
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    lam = rng.uniform(*spread, size=d) * rng.choice([-1.0, 1.0], size=d)
    return CoupledOscillatorSpec(
        Lambda=(q * lam) @ q.T,
        Pi=rng.normal(size=(d, m)),
        x0=rng.normal(size=d),
        y0=rng.normal(size=d),
    )


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
