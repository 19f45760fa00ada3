"""Least-squares fits used by the sweep analysis.

Covers the through-origin dispersion parabola, low-degree polynomial
surfaces over the cell grid, one-dimensional affine and polynomial
fits with exact raw-coefficient expansion, and the shifted-hyperbola
model for dispersion versus energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0
HYPERBOLA_SCAN_POINTS = 400     # log-spaced offsets tried before refinement
HYPERBOLA_SCAN_SPAN = (1e-6, 1e6)   # offset range relative to the data span


def _r_squared(y, resid):
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class DispersionFit:
    """Through-origin fit of count variance against mu * (1 - mu).

    r_squared is uncentered (1 - SS_res / sum(variance**2)), the usual
    convention for a proportional model with no intercept term.
    """

    eta: float
    r_squared: float
    residual_rms: float
    n_points: int

    def predict(self, mu):
        mu = np.asarray(mu, dtype=float)
        return self.eta * mu * (1.0 - mu)


def fit_dispersion(mu, variance):
    """Fit variance = eta * mu * (1 - mu) through the origin.

    Parameters
    ----------
    mu, variance : array_like
        Per-condition mean and variance of the response count, at
        least 5 points.

    Returns
    -------
    DispersionFit
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(variance, dtype=float)
    if mu.shape != var.shape or mu.ndim != 1:
        raise ValueError("mu and variance must be matching 1-D arrays")
    if mu.size < 5:
        raise ValueError(f"need at least 5 points, got {mu.size}")
    x = mu * (1.0 - mu)
    denom = float(np.sum(x * x))
    if denom == 0.0:
        raise ValueError("all mu values are 0 or 1; parabola is degenerate")
    eta = float(np.sum(x * var)) / denom
    resid = var - eta * x
    ss_tot = float(np.sum(var ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0.0 else 0.0
    return DispersionFit(eta=eta, r_squared=r2,
                         residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                         n_points=int(mu.size))


@dataclass(frozen=True)
class AffineFit:
    intercept: float
    slope: float
    r_squared: float

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)


def fit_affine(x, y):
    """Ordinary least-squares line y = intercept + slope * x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need matching 1-D arrays of length >= 2")
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return AffineFit(intercept=float(coef[0]), slope=float(coef[1]),
                     r_squared=_r_squared(y, resid))


def _monomial_powers(degree):
    # total degree <= degree, graded lexicographic
    return [(i, j)
            for total in range(degree + 1)
            for i in range(total, -1, -1)
            for j in [total - i]]


def _normalizer(values):
    lo = float(np.min(values))
    hi = float(np.max(values))
    if hi <= lo:
        raise ValueError("coordinate values must not all coincide")
    return 0.5 * (hi + lo), 0.5 * (hi - lo)


@dataclass(frozen=True)
class PolySurface:
    """Polynomial z(x, y) fitted in coordinates normalized to [-1, 1].

    Attributes
    ----------
    degree : int
    coeffs : ndarray
        One coefficient per monomial in `powers`, acting on the
        normalized coordinates.
    powers : tuple of (int, int)
        Exponent pairs (i, j) for u**i * v**j.
    x_mid, x_half, y_mid, y_half : float
        Normalization u = (x - x_mid) / x_half, v likewise.
    r_squared : float
    """

    degree: int
    coeffs: np.ndarray
    powers: tuple
    x_mid: float
    x_half: float
    y_mid: float
    y_half: float
    r_squared: float
    max_rel_error: float

    def _uv(self, x, y):
        u = (np.asarray(x, dtype=float) - self.x_mid) / self.x_half
        v = (np.asarray(y, dtype=float) - self.y_mid) / self.y_half
        return u, v

    def evaluate(self, x, y):
        u, v = self._uv(x, y)
        out = np.zeros(np.broadcast(u, v).shape)
        for c, (i, j) in zip(self.coeffs, self.powers):
            out += c * u ** i * v ** j
        return out if out.ndim else float(out)

    def gradient(self, x, y):
        """(dz/dx, dz/dy) via the chain rule through the normalization."""
        u, v = self._uv(x, y)
        du = np.zeros(np.broadcast(u, v).shape)
        dv = np.zeros_like(du)
        for c, (i, j) in zip(self.coeffs, self.powers):
            if i > 0:
                du += c * i * u ** (i - 1) * v ** j
            if j > 0:
                dv += c * j * u ** i * v ** (j - 1)
        gx = du / self.x_half
        gy = dv / self.y_half
        if gx.ndim:
            return gx, gy
        return float(gx), float(gy)

    def affine_coefficients(self):
        """Raw (a0, ax, ay) with z = a0 + ax*x + ay*y. Degree 1 only."""
        if self.degree != 1:
            raise ValueError(f"surface has degree {self.degree}, not 1")
        by_power = dict(zip(self.powers, self.coeffs))
        ax = by_power[(1, 0)] / self.x_half
        ay = by_power[(0, 1)] / self.y_half
        a0 = by_power[(0, 0)] - ax * self.x_mid - ay * self.y_mid
        return float(a0), float(ax), float(ay)


def fit_surface(x, y, z, degree):
    """Least-squares polynomial surface of given total degree.

    Coordinates are rescaled to [-1, 1] before building the Vandermonde
    matrix, which keeps the normal equations well conditioned at the
    degrees used here.

    Raises
    ------
    ValueError
        If fewer distinct points than monomial coefficients are given,
        or the design matrix is rank deficient.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if not (x.size == y.size == z.size):
        raise ValueError("x, y, z must have equal sizes")
    if degree < 0:
        raise ValueError("degree must be non-negative")
    powers = _monomial_powers(degree)
    n_coef = len(powers)
    n_distinct = np.unique(np.column_stack([x, y]), axis=0).shape[0]
    if n_distinct < n_coef:
        raise ValueError(
            f"degree {degree} needs {n_coef} distinct points, "
            f"got {n_distinct}")
    x_mid, x_half = _normalizer(x)
    y_mid, y_half = _normalizer(y)
    u = (x - x_mid) / x_half
    v = (y - y_mid) / y_half
    design = np.column_stack([u ** i * v ** j for i, j in powers])
    coef, _, rank, _ = np.linalg.lstsq(design, z, rcond=None)
    if rank < n_coef:
        raise ValueError(
            f"design matrix rank {rank} < {n_coef}; points too collinear "
            f"for degree {degree}")
    resid = z - design @ coef
    rel = np.abs(resid) / np.maximum(np.abs(z), 1e-300)
    return PolySurface(degree=degree, coeffs=coef, powers=tuple(powers),
                       x_mid=x_mid, x_half=x_half, y_mid=y_mid,
                       y_half=y_half, r_squared=_r_squared(z, resid),
                       max_rel_error=float(np.max(rel)))


def polyfit_raw(x, y, degree):
    """Polynomial fit returning raw ascending coefficients.

    The fit runs in normalized coordinates and the result is expanded
    back exactly through the binomial theorem, so the returned
    coefficients apply to x directly: y = sum(c[k] * x**k).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be matching 1-D arrays")
    if x.size < degree + 1:
        raise ValueError(
            f"degree {degree} needs {degree + 1} points, got {x.size}")
    mid, half = _normalizer(x)
    u = (x - mid) / half
    design = np.column_stack([u ** k for k in range(degree + 1)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    raw = np.zeros(degree + 1)
    for k in range(degree + 1):
        scale = coef[k] / half ** k
        for j in range(k + 1):
            raw[j] += scale * math.comb(k, j) * (-mid) ** (k - j)
    return raw


def golden_section_min(func, lo, hi, tol=1e-12, max_iter=200):
    """Locate the minimum of a unimodal function on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN_RATIO * (b - a)
    d = a + GOLDEN_RATIO * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if abs(b - a) < tol * (abs(a) + abs(b) + 1e-30):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN_RATIO * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN_RATIO * (b - a)
            fd = func(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class HyperbolaFit:
    """Shifted hyperbola y = floor + strength / (x - pole)."""

    floor: float
    strength: float
    pole: float
    r_squared: float

    def predict(self, x):
        return self.floor + self.strength / (np.asarray(x, dtype=float)
                                             - self.pole)


def fit_hyperbola(x, y):
    """Fit y = floor + strength / (x - pole) with the pole left of the data.

    The pole is scanned on a log grid of offsets below min(x), the two
    linear parameters are solved in closed form at each candidate, and
    the best offset is refined by golden-section search.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 4:
        raise ValueError("need matching 1-D arrays of length >= 4")
    x_min = float(np.min(x))
    span = float(np.max(x) - x_min)
    if span <= 0.0:
        raise ValueError("x values must not all coincide")

    def solve_at(log_delta):
        delta = math.exp(log_delta)
        basis = 1.0 / (x - (x_min - delta))
        design = np.column_stack([np.ones_like(x), basis])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        return float(np.sum(resid ** 2)), coef

    lo = math.log(HYPERBOLA_SCAN_SPAN[0] * span)
    hi = math.log(HYPERBOLA_SCAN_SPAN[1] * span)
    grid = np.linspace(lo, hi, HYPERBOLA_SCAN_POINTS)
    losses = np.array([solve_at(g)[0] for g in grid])
    k = int(np.argmin(losses))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    best = golden_section_min(lambda g: solve_at(g)[0], a, b, tol=1e-14)
    loss, coef = solve_at(best)
    pole = x_min - math.exp(best)
    resid = y - (coef[0] + coef[1] / (x - pole))
    return HyperbolaFit(floor=float(coef[0]), strength=float(coef[1]),
                        pole=pole, r_squared=_r_squared(y, resid))
