import numpy as np
import pytest

import splidar as sp
from splidar.errors import FitError


def _gaussian_samples(amplitude, sigma2, center, bins):
    bins = np.asarray(bins, dtype=float)
    resp = amplitude * np.exp(-(bins - center) ** 2 / (2 * sigma2))
    return np.column_stack([bins, resp])


def test_exact_recovery():
    samples = _gaussian_samples(1000.0, 100.0, 250.0, np.arange(200, 300))
    irf = sp.fit_impulse(samples, n_bins=2000)
    assert irf.amplitude == pytest.approx(1000.0, rel=1e-6)
    assert irf.sigma2 == pytest.approx(100.0, rel=1e-6)
    assert irf.alpha == 0.0


def test_area_matches_continuous_limit():
    samples = _gaussian_samples(1000.0, 100.0, 1000.0, np.arange(900, 1100))
    irf = sp.fit_impulse(samples, n_bins=2000)
    # independent value: direct summation of the fitted pulse over the window
    t = np.arange(2000, dtype=float)
    direct = np.sum(1000.0 * np.exp(-(t - 1000.0) ** 2 / 200.0))
    assert irf.area == pytest.approx(direct, rel=1e-9)
    assert irf.area == pytest.approx(1000.0 * 10.0 * np.sqrt(2 * np.pi),
                                     rel=1e-6)
    assert irf.area == pytest.approx(25066.3, abs=0.1)


def test_noise_robustness(rng):
    clean = _gaussian_samples(1000.0, 100.0, 500.0, np.arange(450, 551))
    noisy = clean.copy()
    noisy[:, 1] *= 1.0 + 0.01 * rng.standard_normal(noisy.shape[0])
    irf = sp.fit_impulse(noisy, n_bins=2000)
    assert irf.amplitude == pytest.approx(1000.0, rel=0.05)
    assert irf.sigma2 == pytest.approx(100.0, rel=0.05)


def test_degenerate_samples_rejected():
    samples = np.array([[50.0, 1.0], [50.0, 2.0], [50.0, 3.0]])
    with pytest.raises(FitError, match="degenerate|distinct"):
        sp.fit_impulse(samples, n_bins=100)


def test_too_few_or_invalid_samples_rejected():
    with pytest.raises(FitError):
        sp.fit_impulse(np.array([[1.0, 2.0], [2.0, 3.0]]), n_bins=100)
    bad = np.array([[1.0, 2.0], [2.0, 0.0], [3.0, 1.0]])
    with pytest.raises(FitError, match="positive"):
        sp.fit_impulse(bad, n_bins=100)


def test_no_curvature_rejected():
    flat = np.column_stack([np.arange(10.0), np.full(10, 3.0)])
    with pytest.raises(FitError):
        sp.fit_impulse(flat, n_bins=100)
