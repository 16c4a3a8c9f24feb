import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def random_stable(rng, n, margin=0.5):
    """Random dense matrix shifted to spectral abscissa <= -margin."""
    a = rng.standard_normal((n, n))
    shift = max(np.linalg.eigvals(a).real.max(), 0.0) + margin
    return a - shift * np.eye(n)


def random_spd(rng, n):
    b = rng.standard_normal((n, n))
    return b @ b.T + n * np.eye(n)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
