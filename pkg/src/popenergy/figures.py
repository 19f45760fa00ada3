"""Static SVG figures for the CLI subcommands.

Every function writes one SVG next to the CSV/JSON it illustrates and
returns the path. The Agg backend is forced so figures render without a
display; nothing here is needed to consume the numeric outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analytic import Objective, solve_optimal_code
from .compare import (ANCHOR_STIMULUS, CONTROL_ENERGY, CONTROL_RATE,
                      STIMULUS_HI, STIMULUS_LO)
from .grids import Prior, RateTarget, StimulusGrid
from .tuning import DEFAULT_BASE_WIDTH, build_tuning_bank

_CONTROL_STYLE = dict(color="0.45", linestyle="--", linewidth=1.2)
_STRESS_STYLE = dict(color="tab:red", linewidth=1.6)


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def _anchored_normalized_curves(report, grid_points=1024):
    """Control and per-model stressed curves, control peak = 1."""
    grid = StimulusGrid.uniform(STIMULUS_LO, STIMULUS_HI, grid_points,
                                periodic=True)
    prior = Prior.uniform(grid)
    target = RateTarget.constant(grid, CONTROL_RATE)
    control = solve_optimal_code(grid, prior, target, Objective.infomax(),
                                 energy_budget=CONTROL_ENERGY, alpha=1.0)
    bank = build_tuning_bank(grid, control, base_width=DEFAULT_BASE_WIDTH,
                             anchor=ANCHOR_STIMULUS)
    k = int(np.argmin(np.abs(bank.centers - ANCHOR_STIMULUS)))
    base = bank.curves[k] / bank.curves[k].max()
    s = grid.points - grid.points[np.argmax(base)]
    s = (s + 0.5 * grid.period) % grid.period - 0.5 * grid.period
    order = np.argsort(s)
    s = s[order]
    base = base[order]

    def widen(curve, factor):
        # rescale the stimulus axis about the peak; periodic tails are
        # negligible at these widths
        return np.interp(s / factor, s, curve)

    curves = {}
    for m in report.models:
        curves[m.name] = m.peak_ratio * widen(base, m.width_ratio)
    return s, base, curves


def comparison_figure(report, path, grid_points=1024):
    """Three-panel tuning-curve comparison under the energy cut."""
    s, base, stressed = _anchored_normalized_curves(report, grid_points)
    fig, axes = plt.subplots(1, len(report.models), figsize=(10.5, 3.2),
                             sharey=True)
    for ax, model in zip(np.atleast_1d(axes), report.models):
        ax.plot(s, base, label="control", **_CONTROL_STYLE)
        ax.plot(s, stressed[model.name], label="stressed", **_STRESS_STYLE)
        ax.set_title(f"{model.name}\nwidth x{model.width_ratio:.2f}, "
                     f"rate {model.rate_deviation_pct:+.1f}%", fontsize=9)
        ax.set_xlabel("stimulus (deg)")
        ax.set_xlim(-90, 90)
    np.atleast_1d(axes)[0].set_ylabel("rate / control peak")
    np.atleast_1d(axes)[0].legend(fontsize=8, frameon=False)
    fig.suptitle(f"control FWHM {report.control_fwhm_deg:.1f} deg, "
                 f"ATP x{report.atp_fraction:.2f}", fontsize=10)
    return _save(fig, path)


def prior_study_figure(study, path):
    """Objective-by-prior grid of control vs. stressed curves."""
    objectives = []
    priors = []
    for c in study.cases:
        if c.objective not in objectives:
            objectives.append(c.objective)
        if c.prior not in priors:
            priors.append(c.prior)
    fig, axes = plt.subplots(len(priors), len(objectives),
                             figsize=(3.3 * len(objectives),
                                      2.8 * len(priors)),
                             sharex=True, sharey=True, squeeze=False)
    for i, pname in enumerate(priors):
        for j, oname in enumerate(objectives):
            case = study.case(oname, pname)
            ax = axes[i][j]
            ax.plot(case.stimuli, case.control_curve, label="control",
                    **_CONTROL_STYLE)
            ax.plot(case.stimuli, case.stressed_curve, label="stressed",
                    **_STRESS_STYLE)
            ax.set_title(f"{oname}, {pname}\nmax rate dev "
                         f"{100 * case.max_rate_deviation:.3f}%", fontsize=8)
            if i == len(priors) - 1:
                ax.set_xlabel("stimulus (deg)")
            if j == 0:
                ax.set_ylabel("rate / control peak")
    axes[0][0].legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def paths_figure(analysis, path):
    """Dispersion-energy curves and state-plane paths per activity level."""
    fig, (ax_eta, ax_plane) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    cmap = plt.get_cmap("viridis")
    kappas = sorted(analysis.paths)
    lo, hi = min(kappas), max(kappas)
    for kappa in kappas:
        opt_path = analysis.paths[kappa]
        model = analysis.models[kappa]
        c = cmap(0.15 + 0.7 * ((kappa - lo) / (hi - lo) if hi > lo else 0.5))
        ax_eta.plot(opt_path.epsilon, opt_path.eta, "o", ms=3, color=c)
        eps = np.linspace(opt_path.epsilon[0], opt_path.epsilon[-1], 200)
        ax_eta.plot(eps, model.predict_eta(eps), "-", color=c,
                    label=f"kappa={opt_path.kappa:g}")
        ax_plane.plot(opt_path.v_rest, opt_path.g_leak, "-o", ms=3, color=c)
    ax_eta.set_xlabel("energy (ATP/s)")
    ax_eta.set_ylabel("dispersion eta")
    ax_eta.legend(fontsize=8, frameon=False)
    ax_plane.set_xlabel("v_rest (mV)")
    ax_plane.set_ylabel("g_leak (mS/cm^2)")
    ax_plane.set_title("optimal adaptations", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def sweep_figure(table, path):
    """Heatmaps of the fitted dispersion and background cost per cell."""
    fig, (ax_eta, ax_eps) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    extent = (table.g_leak_values[0], table.g_leak_values[-1],
              table.v_rest_values[0], table.v_rest_values[-1])
    eta = np.where(table.mask, table.eta, np.nan)
    eps = np.where(table.mask, table.eps_bg, np.nan)
    for ax, values, label in ((ax_eta, eta, "dispersion eta"),
                              (ax_eps, eps, "background ATP/s")):
        im = ax.imshow(values, origin="lower", aspect="auto", extent=extent)
        ax.set_xlabel("g_leak (mS/cm^2)")
        ax.set_ylabel("v_rest (mV)")
        ax.set_title(label, fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    return _save(fig, path)
