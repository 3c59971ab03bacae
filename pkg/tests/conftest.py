import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from qggibbs.gibbs import GibbsParams
from qggibbs.spectral import SpectralField, make_index_set

settings.register_profile(
    "default",
    deadline=None,
    max_examples=30,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_field(N, rng, decay=0.0):
    """Random real field on Lambda_N with coefficients damped by |l|^(-decay)."""
    idx = make_index_set(N)
    c = rng.standard_normal(idx.n_reduced) + 1j * rng.standard_normal(idx.n_reduced)
    c[idx.real_mask] = c[idx.real_mask].real
    return SpectralField(idx, c * idx.modulus2_red.astype(float) ** (-0.5 * decay))


seeds = st.integers(min_value=0, max_value=2**32 - 1)
cutoffs = st.integers(min_value=1, max_value=12)


@pytest.fixture
def params5():
    return GibbsParams.default(5)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
