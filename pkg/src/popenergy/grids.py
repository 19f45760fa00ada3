"""Stimulus grids, priors, and firing-rate targets.

All population-level quantities live on a shared 1-D stimulus grid.
Integrals use trapezoid weights; on periodic grids both endpoints are
included (the span equals one period) so the trapezoid rule coincides
with the rectangle rule and is spectrally accurate for smooth periodic
integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PRIOR_NORM_TOL = 1e-6  # max allowed |integral - 1| before renormalizing
MIN_GRID_POINTS = 64   # quadrature identities below this are too coarse


@dataclass(frozen=True)
class StimulusGrid:
    """Uniform 1-D grid of stimulus values.

    Parameters
    ----------
    points : ndarray
        Strictly increasing, uniformly spaced stimulus values. For a
        periodic grid the first and last point are one period apart and
        represent the same stimulus.
    periodic : bool
        Whether the stimulus variable is circular.
    """

    points: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < MIN_GRID_POINTS:
            raise ValueError(
                f"grid needs at least {MIN_GRID_POINTS} points, "
                f"got shape {pts.shape}")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be uniformly spaced")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, lo, hi, n, periodic=False):
        """Grid of n points from lo to hi inclusive.

        For periodic grids pass hi - lo equal to the period; the two
        endpoints then refer to the same stimulus.
        """
        if hi <= lo:
            raise ValueError(f"need hi > lo, got [{lo}, {hi}]")
        return cls(np.linspace(lo, hi, n), periodic=periodic)

    @property
    def n(self):
        return self.points.size

    @property
    def spacing(self):
        return (self.points[-1] - self.points[0]) / (self.points.size - 1)

    @property
    def span(self):
        return self.points[-1] - self.points[0]

    @property
    def period(self):
        if not self.periodic:
            raise ValueError("grid is not periodic")
        return self.span

    @property
    def weights(self):
        """Trapezoid quadrature weights (endpoint weights halved)."""
        w = np.full(self.n, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def integrate(self, values):
        """Trapezoid integral of grid-sampled values."""
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def cumulative(self, values):
        """Running trapezoid integral, zero at the first grid point."""
        v = np.asarray(values, dtype=float)
        out = np.empty(self.n)
        out[0] = 0.0
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * self.spacing)
        return out

    def wrap(self, s):
        """Map stimuli into [points[0], points[-1]) on a periodic grid."""
        if not self.periodic:
            return np.asarray(s, dtype=float)
        lo = self.points[0]
        return (np.asarray(s, dtype=float) - lo) % self.period + lo


def _as_grid_values(grid, values, name):
    v = np.asarray(values, dtype=float)
    if v.shape != grid.points.shape:
        raise ValueError(f"{name} must match grid shape {grid.points.shape}")
    return v


@dataclass(frozen=True)
class Prior:
    """Stimulus prior density sampled on a grid, normalized to unit mass.

    Construction validates that the supplied density is nonnegative and
    integrates to 1 within PRIOR_NORM_TOL, then renormalizes exactly so
    downstream identities hold to machine precision. Zeros are allowed;
    solvers exclude zero-mass points from allocations.
    """

    grid: StimulusGrid
    density: np.ndarray

    def __post_init__(self):
        p = _as_grid_values(self.grid, self.density, "prior density")
        if np.any(p < 0):
            raise ValueError("prior density must be nonnegative")
        if self.grid.periodic and not np.isclose(p[0], p[-1], rtol=1e-9):
            raise ValueError("periodic prior must match at the endpoints")
        mass = self.grid.integrate(p)
        if abs(mass - 1.0) > PRIOR_NORM_TOL:
            raise ValueError(
                f"prior integrates to {mass:.8f}, expected 1 within "
                f"{PRIOR_NORM_TOL}")
        object.__setattr__(self, "density", p / mass)

    @classmethod
    def uniform(cls, grid):
        return cls(grid, np.full(grid.n, 1.0 / grid.span))

    @classmethod
    def cosine_peaked(cls, grid, depth=0.5, period=None):
        """Prior proportional to 1 + depth*cos(2*pi*s/period).

        With the default period of half the grid span on a circular
        stimulus this peaks at the axis stimuli and dips in between.
        """
        if not 0.0 <= depth < 1.0:
            raise ValueError(f"depth must be in [0, 1), got {depth}")
        if period is None:
            period = grid.span / 2.0
        raw = 1.0 + depth * np.cos(2.0 * np.pi * grid.points / period)
        return cls(grid, raw / grid.integrate(raw))


@dataclass(frozen=True)
class RateTarget:
    """Per-neuron mean firing-rate target R(s) on the grid."""

    grid: StimulusGrid
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        r = _as_grid_values(self.grid, self.values, "rate target")
        if np.any(r <= 0):
            raise ValueError("rate target must be strictly positive")
        object.__setattr__(self, "values", r)

    @classmethod
    def constant(cls, grid, rate=1.0):
        if rate <= 0:
            raise ValueError(f"rate must be positive, got {rate}")
        return cls(grid, np.full(grid.n, float(rate)))
