"""Closed-form optimal gain/density allocations for population codes.

Setup: a population of tuning curves h_n(s) = g(s) * hhat(D(s) - D(s_n))
tiles a stimulus with density d(s) (D is its cumulative) and gain g(s).
Under dispersed counting noise (variance eta * mean) the Fisher
information is proportional to g(s) d(s)^2 / eta, and a per-neuron
firing-rate budget R(s) couples the two fields through
p(s) g(s) / d(s) = R(s).

solve_optimal_code maximizes int p(s) f(J(s)) ds over gain fields
subject to the generalized energy constraint int p(s) g(s)^alpha ds = E,
where J = g d^2 / eta and f is the coding objective. Eliminating d via
the rate constraint gives a pointwise concave problem with an explicit
solution for the supported objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import Prior, RateTarget, StimulusGrid

DEGENERATE_PRIOR_FLOOR = 1e-12  # prior mass below this gets no allocation


@dataclass(frozen=True)
class Objective:
    """Concave utility f applied to the Fisher information field.

    kind "infomax" uses f(J) = log(J)/2 (mutual-information rate for
    dense codes). kind "power" uses f(J) = sign(beta) * J**beta, which
    is increasing for any nonzero beta; negative beta is the
    resolution-error family (beta = -q/2 minimizes an L^q
    reconstruction-error proxy, so beta = -1 targets squared error and
    beta = -0.5 absolute error). The solver additionally requires
    beta < alpha/3, the boundedness condition that depends on the
    energy exponent and so cannot be checked here.
    """

    kind: str
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("infomax", "power"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "power" and (self.beta == 0.0
                                     or not math.isfinite(self.beta)):
            raise ValueError(
                f"power objective needs finite nonzero beta, got {self.beta}")

    @classmethod
    def infomax(cls):
        return cls("infomax")

    @classmethod
    def power_law(cls, beta):
        return cls("power", float(beta))

    @classmethod
    def discrimax(cls):
        """Mean-squared-error proxy, f(J) = -1/J."""
        return cls("power", -1.0)

    def value(self, j):
        j = np.asarray(j, dtype=float)
        if self.kind == "infomax":
            return 0.5 * np.log(j)
        return math.copysign(1.0, self.beta) * np.power(j, self.beta)

    def derivative(self, j):
        j = np.asarray(j, dtype=float)
        if self.kind == "infomax":
            return 0.5 / j
        return abs(self.beta) * np.power(j, self.beta - 1.0)

    @property
    def label(self):
        if self.kind == "infomax":
            return "infomax"
        if self.beta == -1.0:
            return "discrimax"
        return f"power({self.beta:g})"


@dataclass(frozen=True)
class PopulationSolution:
    """Optimal allocation on a grid.

    fisher uses the convention J = gain * density^2 / eta, i.e. the
    convolution factor of the unit-width base shape is folded into the
    proportionality constant. delta_min = fisher**-0.5 is the local
    discriminability floor up to the same constant. norm_constant is
    the quadrature integral that scales the gain shape so the energy
    constraint binds exactly (1 for constant-gain solutions).
    """

    grid: StimulusGrid
    prior: Prior
    rate_target: RateTarget
    objective: Objective
    gain: np.ndarray
    density: np.ndarray
    alpha: float
    eta: float
    energy_budget: float
    norm_constant: float = 1.0

    @property
    def supported(self):
        """Mask of grid points carrying prior mass (allocation domain)."""
        return self.prior.density >= DEGENERATE_PRIOR_FLOOR

    @property
    def fisher(self):
        return self.gain * self.density ** 2 / self.eta

    @property
    def delta_min(self):
        with np.errstate(divide="ignore"):
            return 1.0 / np.sqrt(self.fisher)

    @property
    def energy_used(self):
        return self.grid.integrate(
            self.prior.density * self.gain ** self.alpha)

    @property
    def neuron_mass(self):
        """Total neuron count int d(s) ds implied by the density."""
        return self.grid.integrate(self.density)

    def objective_value(self):
        m = self.supported
        vals = self.objective.value(self.fisher[m])
        return float(np.dot(self.grid.weights[m],
                            self.prior.density[m] * vals))

    def homeostasis_gap(self):
        """Max relative deviation of p g / d from the rate target."""
        m = self.supported
        lhs = self.prior.density[m] * self.gain[m] / self.density[m]
        return float(np.max(np.abs(lhs / self.rate_target.values[m] - 1.0)))


def solve_optimal_code(grid, prior, rate_target, objective,
                       energy_budget, alpha=1.0, eta=1.0):
    """Closed-form optimal gain and density fields.

    Parameters
    ----------
    grid : StimulusGrid
    prior : Prior
    rate_target : RateTarget
        Per-neuron mean firing-rate budget R(s).
    objective : Objective
    energy_budget : float
        Value E of the constraint int p g^alpha ds = E.
    alpha : float
        Energy-cost exponent, >= 1 (1: mean rate; larger values price
        high gains superlinearly).
    eta : float
        Count-noise dispersion (variance / mean), > 0.

    Returns
    -------
    PopulationSolution
        With density d = p g / R, so the rate constraint holds exactly
        and the energy constraint binds under this grid's quadrature.
    """
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if energy_budget <= 0.0:
        raise ValueError(f"energy budget must be positive, got {energy_budget}")
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    if objective.kind == "power" and not objective.beta < alpha / 3.0:
        raise ValueError(
            f"objective is unbounded for beta={objective.beta:g} with "
            f"alpha={alpha:g}; needs beta < alpha/3")
    p = prior.density
    r = rate_target.values
    valid = p >= DEGENERATE_PRIOR_FLOOR
    if not np.any(valid):
        raise ValueError("prior has no mass above the degeneracy floor")
    if objective.kind == "infomax":
        # stationarity in g is R-independent: constant gain saturates
        # the budget, g^alpha * int p = E
        shape = np.ones(grid.n)
    else:
        beta = objective.beta
        t = 2.0 * beta / (3.0 * beta - alpha)
        # zero-mass points get no gain; keeps p**(-t) finite for t > 0
        shape = np.zeros(grid.n)
        shape[valid] = np.power(r[valid], t) * np.power(p[valid], -t)
    norm = grid.integrate(p * shape ** alpha)
    gain = (energy_budget / norm) ** (1.0 / alpha) * shape
    density = np.where(valid, p * gain / r, 0.0)
    return PopulationSolution(grid=grid, prior=prior, rate_target=rate_target,
                              objective=objective, gain=gain, density=density,
                              alpha=alpha, eta=eta,
                              energy_budget=float(energy_budget),
                              norm_constant=float(norm))


def reduce_to_mean_rate_model(grid, prior, objective, rate_budget,
                              n_neurons, eta=1.0, alpha=1.0):
    """Fixed-population limit: alpha = 1 with a shared rate budget.

    A population of n_neurons with total mean-rate budget rate_budget
    corresponds to E = rate_budget and a constant per-neuron target
    R = rate_budget / n_neurons; infomax then gives g = rate_budget and
    d = n_neurons * p. The energy exponent is part of the reduction and
    must stay at 1.
    """
    if alpha != 1.0:
        raise ValueError(
            f"mean-rate reduction is an alpha = 1 statement, got {alpha}")
    if n_neurons <= 0:
        raise ValueError(f"n_neurons must be positive, got {n_neurons}")
    target = RateTarget.constant(grid, rate_budget / n_neurons)
    return solve_optimal_code(grid, prior, target, objective,
                              energy_budget=rate_budget, alpha=1.0, eta=eta)


def reduce_to_capacity_model(grid, prior, objective, capacity, eta=1.0,
                             alpha=1.5):
    """Unit-gain limit: allocation through tuning density alone.

    Gain is pinned at 1 (so the energy budget is the unit prior mass
    and the recorded rate target is budget/capacity = 1/C) and the
    density integrates the square root of the Fisher field to the
    budget: int sqrt(g) d ds = capacity. The optimal densities are
    d = C p (infomax) and d proportional to p**(1/(1-2*beta)) for the
    power family. The per-neuron rate p g / d is constant only for
    infomax; for the other objectives this construction trades rate
    homeostasis away by design. The exponent 3/2 is what makes constant
    gain optimal and is not adjustable.
    """
    if alpha != 1.5:
        raise ValueError(
            f"capacity reduction is an alpha = 3/2 statement, got {alpha}")
    if capacity <= 0.0:
        raise ValueError(f"capacity must be positive, got {capacity}")
    p = prior.density
    gain = np.ones(grid.n)
    if objective.kind == "infomax":
        shape = p.copy()
    else:
        shape = np.power(p, 1.0 / (1.0 - 2.0 * objective.beta))
    norm = grid.integrate(shape)
    density = capacity * shape / norm
    target = RateTarget.constant(grid, 1.0 / capacity)
    return PopulationSolution(grid=grid, prior=prior, rate_target=target,
                              objective=objective, gain=gain, density=density,
                              alpha=1.5, eta=eta,
                              energy_budget=grid.integrate(p * gain ** 1.5),
                              norm_constant=float(norm))


def capacity_used(solution):
    """int sqrt(gain) * density ds, the square-root-Fisher budget."""
    return solution.grid.integrate(
        np.sqrt(solution.gain) * solution.density)


def optimal_infomax_gain(energy_budget, alpha):
    """Scalar infomax gain level E**(1/alpha) (unit prior mass)."""
    return energy_budget ** (1.0 / alpha)


def lp_gain_exponent(beta, alpha):
    """Exponent t with g proportional to (R/p)**t for the power family."""
    if not beta < alpha / 3.0:
        raise ValueError(
            f"beta must be below alpha/3 = {alpha / 3.0:g}, got {beta}")
    return 2.0 * beta / (3.0 * beta - alpha)


def verify_gs_homeostasis_emergence(grid, prior, objective, rate_budget,
                                    n_neurons, seed=0, max_iter=40000):
    """Numeric check that proportional rate allocation is optimal.

    Maximizes int p f(g d^2) over independent positive fields g and d
    under int p g = rate_budget and int d = n_neurons (no built-in rate
    coupling), and returns the maximum relative deviation of
    p g / d from the constant rate_budget / n_neurons at the optimum,
    taken over grid points with prior mass above 1e-6.
    """
    from .oracle import gs_numeric

    res = gs_numeric(grid, prior, objective, rate_budget, n_neurons,
                     seed=seed, max_iter=max_iter)
    m = prior.density > 1e-6
    per_neuron = prior.density[m] * res.gain[m] / res.density[m]
    target = rate_budget / n_neurons
    return float(np.max(np.abs(per_neuron / target - 1.0)))
