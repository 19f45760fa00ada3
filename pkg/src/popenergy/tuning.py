"""Tuning-curve banks realized from gain and density fields.

Neuron n has h_n(s) = g(s) * hhat(D(s) - D(s_n)) where D is the
cumulative tuning density and hhat is a unit-mass Gaussian of width
sigma (the base width) in the D coordinate. Centers are placed at
half-integer offsets in D so the population tiles the stimulus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Prior, RateTarget, StimulusGrid

DEFAULT_BASE_WIDTH = 0.5  # base-shape sigma in the cumulative coordinate
_WRAP_COPIES = 3          # Gaussian images folded in for periodic banks


def _base_shape(u, sigma):
    return np.exp(-0.5 * (u / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))


def _base_shape_deriv(u, sigma):
    return -(u / sigma ** 2) * _base_shape(u, sigma)


@dataclass(frozen=True)
class TuningCurveBank:
    """Sampled tuning curves h_n(s) plus the fields that generated them."""

    grid: StimulusGrid
    gain: np.ndarray
    density: np.ndarray
    cumulative: np.ndarray
    centers: np.ndarray        # preferred stimuli s_n
    center_offsets: np.ndarray  # D(s_n)
    base_width: float
    eta: float
    curves: np.ndarray         # (n_neurons, grid.n)

    @property
    def n_neurons(self):
        return self.centers.size

    def peak_rates(self):
        return self.curves.max(axis=1)


def build_tuning_bank(grid, solution, base_width=DEFAULT_BASE_WIDTH,
                      n_neurons=None, anchor=None):
    """Realize a bank of tuning curves from an allocation.

    Parameters
    ----------
    grid, solution : StimulusGrid, PopulationSolution
    base_width : float
        Gaussian sigma in the cumulative-density coordinate. The
        default 0.5 makes each curve's stimulus-space FWHM equal to
        2*sqrt(2 ln 2) * 0.5 / d(s).
    n_neurons : int, optional
        Override for the neuron count; defaults to round(int d ds).
    anchor : float, optional
        Stimulus at which one neuron's center is pinned exactly;
        centers keep unit spacing in the cumulative coordinate.

    Returns
    -------
    TuningCurveBank
    """
    if base_width <= 0:
        raise ValueError(f"base width must be positive, got {base_width}")
    d = solution.density
    g = solution.gain
    cum = grid.cumulative(d)
    mass = cum[-1]
    n = int(round(mass)) if n_neurons is None else int(n_neurons)
    if n < 3:
        raise ValueError(
            f"bank needs at least 3 neurons, got {n} "
            f"(density mass {mass:.3f})")
    offsets = np.arange(n) + 0.5
    if anchor is not None:
        u_anchor = float(np.interp(grid.wrap(anchor), grid.points, cum))
        k = int(np.argmin(np.abs(offsets - u_anchor)))
        offsets = offsets + (u_anchor - offsets[k])
    if grid.periodic:
        # the cumulative coordinate is circular with circumference mass
        offsets = np.sort(offsets % mass)
    elif offsets[0] < 0.0 or offsets[-1] > mass:
        raise ValueError(
            f"{n} neurons at unit spacing exceed the density mass "
            f"{mass:.3f} on a non-periodic stimulus; reduce n_neurons "
            f"or raise the budget")
    centers = np.interp(offsets, cum, grid.points)
    if grid.periodic:
        images = np.arange(-_WRAP_COPIES, _WRAP_COPIES + 1) * mass
        u = cum[None, :] - offsets[:, None]
        base = np.zeros_like(u)
        for km in images:
            base += _base_shape(u + km, base_width)
    else:
        base = _base_shape(cum[None, :] - offsets[:, None], base_width)
    curves = g[None, :] * base
    return TuningCurveBank(grid=grid, gain=g, density=d, cumulative=cum,
                           centers=centers, center_offsets=offsets,
                           base_width=float(base_width), eta=solution.eta,
                           curves=curves)


def _field_gradient(grid, values):
    out = np.gradient(values, grid.points)
    if grid.periodic:
        # endpoints are identified; use the wrapped central difference
        h = grid.spacing
        central = (values[1] - values[-2]) / (2.0 * h)
        out[0] = central
        out[-1] = central
    return out


RATE_TERM_FLOOR = 1e-12  # curves below this rate contribute no Fisher term


def exact_fisher(bank, eta=None):
    """Population Fisher information sum_n h_n'(s)^2 / (eta h_n(s)).

    Derivatives are taken analytically through the base shape with the
    gain derivative obtained by finite differences on the grid. Terms
    where a curve sits below RATE_TERM_FLOOR are dropped. eta defaults
    to the dispersion stored in the bank.
    """
    grid = bank.grid
    sigma = bank.base_width
    dg = _field_gradient(grid, bank.gain)
    mass = bank.cumulative[-1]
    if grid.periodic:
        images = np.arange(-_WRAP_COPIES, _WRAP_COPIES + 1) * mass
    else:
        images = np.array([0.0])
    fisher = np.zeros(grid.n)
    for c in bank.center_offsets:
        u = bank.cumulative - c
        b = np.zeros(grid.n)
        db = np.zeros(grid.n)
        for km in images:
            b += _base_shape(u + km, sigma)
            db += _base_shape_deriv(u + km, sigma)
        h = bank.gain * b
        dh = dg * b + bank.gain * db * bank.density
        fisher += np.where(h >= RATE_TERM_FLOOR,
                           dh ** 2 / np.maximum(h, RATE_TERM_FLOOR), 0.0)
    return fisher / (bank.eta if eta is None else float(eta))


def approx_fisher(bank):
    """Tiling approximation g d^2 / (eta sigma^2).

    The 1/sigma^2 factor is the convolution integral
    int hhat'(u)^2 / hhat(u) du of the unit-mass Gaussian base shape,
    so for sigma = 1 this matches the convention of
    PopulationSolution.fisher.
    """
    return (bank.gain * bank.density ** 2
            / (bank.eta * bank.base_width ** 2))


def homeostasis_residual(bank, prior, rate_target):
    """Per-neuron relative gap between mean rate and its target.

    Mean rate of neuron n is int p(s) h_n(s) ds; the residual is
    (rate - R(s_n)) / R(s_n), one entry per neuron.
    """
    w = bank.grid.weights
    rates = bank.curves @ (w * prior.density)
    targets = np.interp(bank.centers, bank.grid.points, rate_target.values)
    return rates / targets - 1.0
