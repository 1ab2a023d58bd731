import pytest

from mvsched.rdmodel import CorrelationModel, FrameId, RateParams


def make_corr(pairs, spatial_extent=4, temporal_extent=1, beta_s=0.1, beta_t=0.1):
    """Correlation model from {(target, source): rho} with tuple keys."""
    typed = {(FrameId(*f), FrameId(*g)): rho for (f, g), rho in pairs.items()}
    return CorrelationModel(spatial_extent, temporal_extent, beta_s, beta_t, typed)


@pytest.fixture
def simple_rates():
    # d(key) = 65025 * 2^-10 = 63.5009765625, PSNR 30.103 dB
    return RateParams(key_cost=100, mu_sigma2=65025.0, d_max=2000.0, rate_to_bits=0.05)
