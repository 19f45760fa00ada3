import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popenergy.grids import (MIN_GRID_POINTS, Prior, RateTarget,
                             StimulusGrid)


def test_uniform_grid_basic_geometry():
    grid = StimulusGrid.uniform(-90.0, 90.0, 181, periodic=True)
    assert grid.n == 181
    assert grid.spacing == pytest.approx(1.0)
    assert grid.span == pytest.approx(180.0)
    assert grid.period == pytest.approx(180.0)


def test_grid_rejects_too_few_points():
    with pytest.raises(ValueError, match="at least"):
        StimulusGrid.uniform(0.0, 1.0, MIN_GRID_POINTS - 1)


def test_grid_rejects_nonuniform_spacing():
    pts = np.linspace(0.0, 1.0, 100)
    pts[50] += 1e-3
    with pytest.raises(ValueError, match="uniformly spaced"):
        StimulusGrid(pts)


def test_grid_rejects_decreasing_points():
    with pytest.raises(ValueError):
        StimulusGrid(np.linspace(1.0, 0.0, 100))


def test_period_requires_periodic_flag():
    grid = StimulusGrid.uniform(0.0, 1.0, 100)
    with pytest.raises(ValueError, match="not periodic"):
        grid.period


def test_trapezoid_weights_sum_to_span():
    grid = StimulusGrid.uniform(-90.0, 90.0, 256, periodic=True)
    assert grid.weights.sum() == pytest.approx(grid.span)


def test_integrate_matches_numpy_trapezoid():
    grid = StimulusGrid.uniform(0.0, 2.0, 128)
    vals = np.sin(grid.points) + 2.0
    assert grid.integrate(vals) == pytest.approx(
        np.trapezoid(vals, grid.points))


def test_cumulative_starts_at_zero_and_ends_at_integral():
    grid = StimulusGrid.uniform(0.0, 5.0, 200)
    vals = grid.points ** 2
    cum = grid.cumulative(vals)
    assert cum[0] == 0.0
    assert cum[-1] == pytest.approx(grid.integrate(vals))
    assert np.all(np.diff(cum) >= 0)


def test_wrap_maps_into_base_interval():
    grid = StimulusGrid.uniform(-90.0, 90.0, 128, periodic=True)
    assert grid.wrap(90.0) == pytest.approx(-90.0)
    assert grid.wrap(135.0) == pytest.approx(-45.0)
    assert grid.wrap(-91.0) == pytest.approx(89.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
def test_wrap_is_idempotent(s):
    grid = StimulusGrid.uniform(-90.0, 90.0, 128, periodic=True)
    once = grid.wrap(s)
    assert grid.wrap(once) == pytest.approx(once)
    assert -90.0 <= once < 90.0 or once == pytest.approx(-90.0)


def test_uniform_prior_integrates_to_one(grid256):
    prior = Prior.uniform(grid256)
    assert grid256.integrate(prior.density) == pytest.approx(1.0, abs=1e-12)


def test_prior_rejects_negative_density(grid256):
    dens = np.full(grid256.n, 1.0 / grid256.span)
    dens[3] = -1e-9
    with pytest.raises(ValueError, match="nonnegative"):
        Prior(grid256, dens)


def test_prior_allows_zero_mass_regions(grid256):
    dens = np.zeros(grid256.n)
    mid = slice(grid256.n // 4, 3 * grid256.n // 4)
    dens[mid] = 1.0
    dens /= grid256.integrate(dens)
    dens[0] = dens[-1] = 0.0
    prior = Prior(grid256, dens)
    assert np.all(prior.density >= 0)


def test_prior_rejects_wrong_mass(grid256):
    with pytest.raises(ValueError, match="integrates to"):
        Prior(grid256, np.full(grid256.n, 2.0 / grid256.span))


def test_prior_renormalizes_within_tolerance(grid256):
    dens = np.full(grid256.n, (1.0 + 5e-7) / grid256.span)
    prior = Prior(grid256, dens)
    assert grid256.integrate(prior.density) == pytest.approx(1.0, abs=1e-14)


def test_periodic_prior_must_close(grid256):
    dens = np.full(grid256.n, 1.0 / grid256.span)
    dens[-1] *= 1.5
    with pytest.raises(ValueError, match="endpoints"):
        Prior(grid256, dens)


def test_cosine_peaked_prior_peaks_on_axes(grid256):
    prior = Prior.cosine_peaked(grid256)
    s = grid256.points
    p = prior.density
    at = lambda x: p[np.argmin(np.abs(s - x))]
    assert at(0.0) > at(45.0)
    assert at(-90.0) > at(-45.0)
    assert grid256.integrate(p) == pytest.approx(1.0, abs=1e-12)
    # peak-to-trough ratio of 1+depth over 1-depth, up to grid sampling
    assert p.max() / p.min() == pytest.approx(3.0, rel=1e-3)


def test_cosine_peaked_rejects_bad_depth(grid256):
    with pytest.raises(ValueError, match="depth"):
        Prior.cosine_peaked(grid256, depth=1.0)


def test_rate_target_must_be_positive(grid256):
    with pytest.raises(ValueError, match="positive"):
        RateTarget.constant(grid256, 0.0)
    vals = np.ones(grid256.n)
    vals[0] = 0.0
    with pytest.raises(ValueError, match="positive"):
        RateTarget(grid256, vals)


def test_rate_target_shape_checked(grid256):
    with pytest.raises(ValueError, match="shape"):
        RateTarget(grid256, np.ones(grid256.n - 1))
