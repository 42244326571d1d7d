import os
import sys

import numpy as np
import pytest

BACKEND_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if BACKEND_DIR not in sys.path:
    sys.path.insert(0, BACKEND_DIR)

from analytics import SpectralDensity  # noqa: E402
from rmt import BulkSpectrum, KineticSpectrum, MPParams, lambda_map, mp_edges, mp_quantiles  # noqa: E402

SAMPLE_PANEL = os.path.join(BACKEND_DIR, "data", "sp500_sample.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mp_params():
    return MPParams(sigma2=1.0, q=0.25)


@pytest.fixture(scope="session")
def mp_bulk(mp_params):
    """1000 MP mid-quantiles with the theoretical edges as x_plus / x_minus."""
    x_minus, x_plus = mp_edges(mp_params)
    return BulkSpectrum(bulk_eigenvalues=mp_quantiles(1000, mp_params), x_plus=x_plus, x_minus=x_minus,
                        cutoff_index=0)


@pytest.fixture(scope="session")
def mp_spectrum(mp_bulk) -> KineticSpectrum:
    return lambda_map(mp_bulk)


@pytest.fixture(scope="session")
def mp_density_discrete(mp_spectrum, mp_bulk) -> SpectralDensity:
    return SpectralDensity.from_spectrum(mp_spectrum, mp_bulk)


@pytest.fixture
def sample_panel_path():
    return SAMPLE_PANEL
