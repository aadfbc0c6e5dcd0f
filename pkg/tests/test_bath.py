import numpy as np
import pytest
from scipy.integrate import quad

from nmr_probe.bath import BathSpec, correlation, memory_integral, spectral_density


def test_correlation_at_zero_lag():
    assert correlation(BathSpec(1.0, 0.8, 0.0), 0.0, 0.0) == pytest.approx(0.4)


def test_correlation_decays_and_rotates():
    b = BathSpec(1.0, 0.5, 2.0)
    a = correlation(b, 1.0, 0.0)
    assert a == pytest.approx(0.25 * np.exp(-0.5) * np.exp(-2j))
    assert correlation(b, 0.0, 1.0) == pytest.approx(np.conj(a))


def test_spectral_density_peak():
    b = BathSpec(1.0, 0.8, 0.3)
    assert spectral_density(b, 0.3) == pytest.approx(1 / (2 * np.pi))
    assert spectral_density(b, 1.1) == pytest.approx(0.5 / (2 * np.pi))


@pytest.mark.parametrize("tau", [0.0, 0.7, 2.5])
def test_correlation_is_fourier_transform_of_density(tau):
    b = BathSpec(1.3, 0.9, 0.4)

    # symmetric about the centre frequency, so only the cosine part survives
    lorentz = lambda u: spectral_density(b, b.omega_shift + u)
    if tau == 0:
        val = 2 * quad(lorentz, 0, np.inf)[0]
    else:
        val = 2 * quad(lorentz, 0, np.inf, weight="cos", wvar=tau)[0]
    num = np.exp(-1j * b.omega_shift * tau) * val
    assert num == pytest.approx(correlation(b, tau, 0.0), abs=1e-6)


def test_markov_limit():
    # gamma -> infinity: alpha -> Gamma * delta(t - s), so the integral saturates at Gamma/2
    b = BathSpec(1.0, 1e4, 0.0)
    assert memory_integral(b, 1.0) == pytest.approx(0.5, rel=1e-6)


def test_memory_integral_matches_quadrature():
    b = BathSpec(1.0, 0.6, 0.9)
    t = 1.7
    re = quad(lambda s: correlation(b, t, s).real, 0, t)[0]
    im = quad(lambda s: correlation(b, t, s).imag, 0, t)[0]
    assert memory_integral(b, t) == pytest.approx(re + 1j * im, rel=1e-10)


@pytest.mark.parametrize("kw", [{"gamma": 0.0}, {"gamma": -1.0}, {"gamma_cap": -0.1},
                                {"gamma": float("nan")}])
def test_invalid_bath_rejected(kw):
    with pytest.raises(ValueError):
        BathSpec(**kw)


def test_shifted_changes_one_parameter():
    b = BathSpec(1.0, 0.8, 0.0)
    s = b.shifted("gamma", 1e-4)
    assert s.gamma == 0.8 + 1e-4 and s.gamma_cap == b.gamma_cap and s.omega_shift == b.omega_shift
    with pytest.raises(ValueError):
        b.shifted("beta", 1.0)
