import numpy as np
import pytest

from popenergy.widths import fwhm

GAUSSIAN_FWHM_FACTOR = 2.0 * np.sqrt(2.0 * np.log(2.0))


def test_gaussian_width_matches_sigma():
    s = np.linspace(-50.0, 50.0, 2001)
    sigma = 7.0
    res = fwhm(s, np.exp(-0.5 * (s / sigma) ** 2))
    assert not res.saturated
    assert res.width == pytest.approx(GAUSSIAN_FWHM_FACTOR * sigma,
                                      rel=1e-4)
    assert res.left == pytest.approx(-res.right, abs=1e-6)


def test_width_is_baseline_sensitive():
    # half maximum means half of the peak value, not half of the rise
    s = np.linspace(-50.0, 50.0, 4001)
    sigma = 7.0
    lifted = 0.5 + np.exp(-0.5 * (s / sigma) ** 2)
    res = fwhm(s, lifted)
    # half level 0.75 sits sqrt(2 ln 6) sigma from center... solved:
    # exp(-u^2/2) = 0.25 at u = sqrt(2 ln 4)
    expect = 2.0 * sigma * np.sqrt(2.0 * np.log(4.0))
    assert res.width == pytest.approx(expect, rel=1e-3)


def test_periodic_peak_at_wrap_point():
    s = np.linspace(-90.0, 90.0, 721)
    sigma = 12.0
    d = (s - (-90.0) + 90.0) % 180.0 - 90.0
    vals = np.exp(-0.5 * (d / sigma) ** 2)
    res = fwhm(s, vals, periodic=True)
    assert not res.saturated
    assert res.width == pytest.approx(GAUSSIAN_FWHM_FACTOR * sigma,
                                      rel=1e-3)


def test_periodic_width_matches_linear_width_away_from_wrap():
    s = np.linspace(-90.0, 90.0, 721)
    sigma = 9.0
    vals = np.exp(-0.5 * ((s - 20.0) / sigma) ** 2)
    lin = fwhm(s, vals)
    per = fwhm(s, vals, periodic=True)
    assert per.width == pytest.approx(lin.width, rel=1e-9)


def test_flat_curve_reports_saturation():
    s = np.linspace(0.0, 10.0, 101)
    res = fwhm(s, np.ones_like(s), periodic=False)
    assert res.saturated
    assert res.width == pytest.approx(10.0)
    assert np.isnan(res.left) and np.isnan(res.right)


def test_shoulder_above_half_saturates_periodic():
    # broad periodic bump whose minimum 2.5 stays above half its max 2.25
    s = np.linspace(-90.0, 90.0, 361)
    vals = 3.5 + np.cos(2.0 * np.pi * s / 180.0)
    res = fwhm(s, vals, periodic=True)
    assert res.saturated
    assert res.width == pytest.approx(180.0)


def test_edge_truncated_peak_saturates():
    # peak at the boundary of a non-periodic window; the left crossing
    # does not exist inside the window
    s = np.linspace(0.0, 30.0, 301)
    vals = np.exp(-0.5 * (s / 20.0) ** 2)
    res = fwhm(s, vals)
    assert res.saturated


def test_asymmetric_peak_crossings():
    # crossings are reported in stimulus units, not relative to the peak
    s = np.linspace(0.0, 10.0, 1001)
    vals = np.where(s < 4.0, s / 4.0, np.maximum(0.0, 1.0 - (s - 4.0) / 2.0))
    res = fwhm(s, vals)
    assert res.left == pytest.approx(2.0, abs=1e-6)
    assert res.right == pytest.approx(5.0, abs=1e-6)
    assert res.width == pytest.approx(3.0, abs=1e-6)


def test_periodic_endpoint_mismatch_rejected():
    s = np.linspace(-90.0, 90.0, 181)
    vals = np.exp(-0.5 * (s / 20.0) ** 2)
    vals[-1] *= 1.1
    with pytest.raises(ValueError, match="endpoints"):
        fwhm(s, vals, periodic=True)


def test_input_validation():
    with pytest.raises(ValueError, match="length >= 3"):
        fwhm(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="increasing"):
        fwhm(np.array([0.0, 0.0, 1.0]), np.array([1.0, 2.0, 1.0]))
