"""From sweep tables to metabolic operating paths.

Each simulated cell state (v_rest, g_leak) yields a count-dispersion
estimate, per-window ATP costs, and a tuning width obtained by pushing
a Gaussian synaptic drive profile through the cell's measured
conductance-to-activation curve. Polynomial surfaces over the state
plane then let a constrained search trace, for every total-energy
level, the state of least dispersion: the optimal path. Along the path
the tuning density is affine in energy and the dispersion follows a
shifted hyperbola; both model families are fitted here, per activity
level kappa, together with polynomial trends of their coefficients in
kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fits import (AffineFit, fit_affine, fit_dispersion, fit_hyperbola,
                   fit_surface, golden_section_min, polyfit_raw)
from .widths import HalfWidth, fwhm

DRIVE_SIGMA_DEG = 170.0    # Gaussian width of the stimulus drive profile
DRIVE_HEADROOM = 0.02      # peak drive overshoot above the calibrated level
STIMULUS_HALF_SPAN = 90.0  # response curves sampled on [-90, 90] degrees
STIMULUS_PERIOD = 180.0
N_STIMULUS_SAMPLES = 2001
N_CONTOUR_PRESAMPLES = 200
DEFAULT_N_LEVELS = 25
DEFAULT_LEVEL_MARGIN = 0.05
ETA_SURFACE_DEGREE = 8
ENERGY_SURFACE_DEGREE = 1
WIDTH_SURFACE_DEGREE = 2
DEFAULT_KAPPA_GRID = (90.0, 100.0, 110.0, 120.0, 130.0, 140.0, 150.0)
KAPPA_FIT_MIN = 100.0      # trend fits ignore lower activity levels
KAPPA_TREND_DEGREES = {"a1": 1, "a2": 1, "b1": 2, "b2": 4, "eta0": 2}
ETA_MONOTONE_SLACK = 1e-9  # relative tolerance on path monotonicity


def compute_fwhm(gsyn, mu, gsyn_hat, drive_sigma=DRIVE_SIGMA_DEG,
                 headroom=DRIVE_HEADROOM, n_samples=N_STIMULUS_SAMPLES):
    """Tuning width of a cell from its conductance-to-activation map.

    A stimulus at angle s delivers the synaptic conductance
    (1 + headroom) * gsyn_hat * exp(-(s / drive_sigma)**2 / 2); the
    activation response is read off the empirical (gsyn, mu) curve by
    linear interpolation (clamped at the measured ends) and its full
    width at half maximum is measured on s in [-90, 90] treated as one
    period of a circular stimulus.

    Returns a HalfWidth; saturated is set when the response never falls
    below half its maximum, in which case width is the full period.
    """
    gsyn = np.asarray(gsyn, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if gsyn.shape != mu.shape or gsyn.ndim != 1 or gsyn.size < 2:
        raise ValueError("need matching 1-D conductance/activation arrays")
    if np.any(np.diff(gsyn) <= 0):
        raise ValueError("conductance samples must be strictly increasing")
    if not np.all(np.isfinite(mu)):
        raise ValueError("activation samples must be finite")
    if gsyn_hat <= 0:
        raise ValueError(f"calibrated conductance must be positive, "
                         f"got {gsyn_hat}")
    s = np.linspace(-STIMULUS_HALF_SPAN, STIMULUS_HALF_SPAN, n_samples)
    drive = (1.0 + headroom) * gsyn_hat * np.exp(
        -0.5 * (s / drive_sigma) ** 2)
    response = np.interp(drive, gsyn, mu)
    return fwhm(s, response, periodic=True, period=STIMULUS_PERIOD)


@dataclass(frozen=True)
class CellStateTable:
    """Per-cell derived quantities on the (v_rest, g_leak) grid.

    Arrays are indexed [i_v_rest, i_g_leak]. mask marks cells whose
    calibration succeeded and whose fits are usable; everything else
    holds nan and is excluded from surface fits.
    """

    v_rest: np.ndarray
    g_leak: np.ndarray
    eta: np.ndarray
    eta_r_squared: np.ndarray
    eps_sig: np.ndarray
    eps_bg: np.ndarray
    width: np.ndarray
    width_saturated: np.ndarray
    mask: np.ndarray

    @property
    def n_cells(self):
        return self.mask.size

    @property
    def n_masked_in(self):
        return int(self.mask.sum())

    def bounds(self):
        """((v_lo, v_hi), (g_lo, g_hi)) of the state rectangle."""
        return ((float(self.v_rest[0]), float(self.v_rest[-1])),
                (float(self.g_leak[0]), float(self.g_leak[-1])))

    def interp_width(self, v, g):
        """Bilinear raw-width lookup; nan outside or at masked cells."""
        return _bilinear(self.v_rest, self.g_leak, self.width, v, g)


def _bilinear(ax_x, ax_y, table, x, y):
    if not (ax_x[0] <= x <= ax_x[-1] and ax_y[0] <= y <= ax_y[-1]):
        return float("nan")
    i = min(max(int(np.searchsorted(ax_x, x)), 1), ax_x.size - 1)
    j = min(max(int(np.searchsorted(ax_y, y)), 1), ax_y.size - 1)
    tx = (x - ax_x[i - 1]) / (ax_x[i] - ax_x[i - 1])
    ty = (y - ax_y[j - 1]) / (ax_y[j] - ax_y[j - 1])
    c = table[i - 1:i + 1, j - 1:j + 1]
    if not np.all(np.isfinite(c)):
        return float("nan")
    return float(c[0, 0] * (1 - tx) * (1 - ty) + c[1, 0] * tx * (1 - ty)
                 + c[0, 1] * (1 - tx) * ty + c[1, 1] * tx * ty)


def build_cell_table(sweep):
    """Reduce a SweepResult to per-cell dispersion, cost, and width.

    Per cell: the dispersion eta is fitted to the in-band activation
    moments, the ATP costs are taken at the calibrated operating point,
    and the tuning width comes from compute_fwhm on the cell's full
    conductance-to-activation map anchored at (0, 0). Cells whose
    calibration or fits failed stay masked out with nan entries.
    """
    v_axis = np.array(sorted({c.v_rest for c in sweep.cells}))
    g_axis = np.array(sorted({c.g_leak for c in sweep.cells}))
    shape = (v_axis.size, g_axis.size)
    eta = np.full(shape, np.nan)
    eta_r2 = np.full(shape, np.nan)
    eps_sig = np.full(shape, np.nan)
    eps_bg = np.full(shape, np.nan)
    width = np.full(shape, np.nan)
    saturated = np.zeros(shape, dtype=bool)
    mask = np.zeros(shape, dtype=bool)

    rows_by_cell = {}
    for row in sweep.rows:
        rows_by_cell.setdefault((row.v_rest, row.g_leak), []).append(row)

    for rec in sweep.cells:
        i = int(np.searchsorted(v_axis, rec.v_rest))
        j = int(np.searchsorted(g_axis, rec.g_leak))
        eps_sig[i, j] = rec.eps_sig_atp
        eps_bg[i, j] = rec.eps_bg_atp
        rows = rows_by_cell.get((rec.v_rest, rec.g_leak), [])
        band = [r for r in rows
                if r.valid and math.isfinite(r.mu_f)
                and math.isfinite(r.sigma2_f)]
        try:
            disp = fit_dispersion([r.mu_f for r in band],
                                  [r.sigma2_f for r in band])
            eta[i, j] = disp.eta
            eta_r2[i, j] = disp.r_squared
        except ValueError:
            pass
        if math.isfinite(rec.gsyn_hat) and rec.gsyn_hat > 0:
            pts = sorted((r.g_syn, r.mu_f) for r in rows
                         if math.isfinite(r.mu_f))
            if len(pts) >= 2:
                gg = np.array([0.0] + [q[0] for q in pts])
                mm = np.array([0.0] + [q[1] for q in pts])
                try:
                    hw = compute_fwhm(gg, mm, rec.gsyn_hat)
                    width[i, j] = hw.width
                    saturated[i, j] = hw.saturated
                except ValueError:
                    pass
        mask[i, j] = (math.isfinite(eta[i, j])
                      and math.isfinite(eps_sig[i, j])
                      and math.isfinite(eps_bg[i, j])
                      and math.isfinite(width[i, j])
                      and not saturated[i, j])
    return CellStateTable(v_rest=v_axis, g_leak=g_axis, eta=eta,
                          eta_r_squared=eta_r2, eps_sig=eps_sig,
                          eps_bg=eps_bg, width=width,
                          width_saturated=saturated, mask=mask)


@dataclass(frozen=True)
class CellSurfaces:
    """Polynomial fits over the masked-in cells of a CellStateTable."""

    table: CellStateTable
    eta: object
    eps_sig: object
    eps_bg: object
    width: object


def fit_cell_surfaces(table, eta_degree=None):
    """Fit the dispersion, cost, and width surfaces at their degrees.

    The cost components use degree 1 and the width degree 2. The
    dispersion surface uses degree 8 when the masked-in grid can
    support it (a degree d needs more than d distinct values on each
    axis and at least (d + 1)**2 cells); on smaller grids the largest
    supportable degree is used instead. Pass eta_degree to override.
    """
    m = table.mask
    if not np.any(m):
        raise ValueError("no masked-in cells to fit")
    vv, gg = np.meshgrid(table.v_rest, table.g_leak, indexing="ij")
    x = vv[m]
    y = gg[m]
    if eta_degree is None:
        eta_degree = min(ETA_SURFACE_DEGREE,
                         np.unique(x).size - 1, np.unique(y).size - 1,
                         int(math.isqrt(x.size)) - 1)
    if eta_degree < 1:
        raise ValueError("masked-in grid too small for a dispersion surface")
    return CellSurfaces(
        table=table,
        eta=fit_surface(x, y, table.eta[m], eta_degree),
        eps_sig=fit_surface(x, y, table.eps_sig[m], ENERGY_SURFACE_DEGREE),
        eps_bg=fit_surface(x, y, table.eps_bg[m], ENERGY_SURFACE_DEGREE),
        width=fit_surface(x, y, table.width[m], WIDTH_SURFACE_DEGREE))


def energy_affine(surfaces, kappa):
    """Raw coefficients (a0, ax, ay) of kappa * eps_sig + eps_bg."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    s0, sx, sy = surfaces.eps_sig.affine_coefficients()
    b0, bx, by = surfaces.eps_bg.affine_coefficients()
    return (kappa * s0 + b0, kappa * sx + bx, kappa * sy + by)


@dataclass(frozen=True)
class OptimalPath:
    """Minimum-dispersion states along increasing total-energy levels.

    width holds the degree-2 surface evaluation at each path point and
    width_raw the bilinear interpolation of the per-cell measurements
    (nan where a neighbor cell is masked out). kkt is the normalized
    projected gradient of the dispersion surface along the contour,
    nan at boundary-clamped points.
    """

    kappa: float
    epsilon: np.ndarray
    v_rest: np.ndarray
    g_leak: np.ndarray
    eta: np.ndarray
    width: np.ndarray
    width_raw: np.ndarray
    kkt: np.ndarray
    on_boundary: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if eps.size < 2:
            raise ValueError("a path needs at least two energy levels")
        if np.any(np.diff(eps) <= 0):
            raise ValueError("path energies must be strictly increasing")
        slack = ETA_MONOTONE_SLACK * float(np.max(np.abs(eta)))
        if np.any(np.diff(eta) > slack):
            k = int(np.argmax(np.diff(eta)))
            raise ValueError(
                f"path dispersion increases with energy between levels "
                f"{eps[k]:.6g} and {eps[k + 1]:.6g}")

    @property
    def n_points(self):
        return self.epsilon.size


def _clip_level_line(coeffs, level, x_bounds, y_bounds):
    """Endpoints of an affine level line inside a rectangle, or None."""
    a0, ax, ay = coeffs
    (xlo, xhi), (ylo, yhi) = x_bounds, y_bounds
    tol_x = 1e-9 * (xhi - xlo)
    tol_y = 1e-9 * (yhi - ylo)
    cands = []
    if abs(ay) > 0.0:
        for xx in (xlo, xhi):
            yy = (level - a0 - ax * xx) / ay
            if ylo - tol_y <= yy <= yhi + tol_y:
                cands.append((xx, min(max(yy, ylo), yhi)))
    if abs(ax) > 0.0:
        for yy in (ylo, yhi):
            xx = (level - a0 - ay * yy) / ax
            if xlo - tol_x <= xx <= xhi + tol_x:
                cands.append((min(max(xx, xlo), xhi), yy))
    if not cands:
        return None
    pts = []
    for c in cands:
        if all(abs(c[0] - q[0]) > tol_x or abs(c[1] - q[1]) > tol_y
               for q in pts):
            pts.append(c)
    if len(pts) == 1:
        return pts[0], pts[0]
    best = (0.0, (pts[0], pts[0]))
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            d = math.hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1])
            if d > best[0]:
                best = (d, (pts[a], pts[b]))
    return best[1]


def optimal_path(surfaces, kappa, epsilon_levels=None,
                 n_levels=DEFAULT_N_LEVELS, margin=DEFAULT_LEVEL_MARGIN):
    """Trace the least-dispersion state per total-energy level.

    The total energy kappa * eps_sig + eps_bg is affine in the state,
    so each level set is a line; it is clipped to the state rectangle,
    pre-sampled densely (a high-degree dispersion surface can be
    multi-modal along the line), and the best bracket is refined by
    golden-section search. Minima within one pre-sample spacing of the
    segment ends are clamped to the boundary.

    Each sample reports the best state attainable within its energy
    budget: when fit noise makes a level's constrained minimum worse
    than a cheaper level's optimum, the cheaper state is carried
    forward, which keeps dispersion non-increasing along the path. On
    noiseless surfaces every sample is its own level's minimizer.

    epsilon_levels defaults to n_levels values spanning the attainable
    range with a relative margin inset at both ends. Levels outside the
    attainable range raise ValueError.
    """
    table = surfaces.table
    x_bounds, y_bounds = table.bounds()
    coeffs = energy_affine(surfaces, kappa)
    a0, ax, ay = coeffs
    corners = [a0 + ax * x + ay * y
               for x in x_bounds for y in y_bounds]
    lo, hi = min(corners), max(corners)
    if epsilon_levels is None:
        inset = margin * (hi - lo)
        levels = np.linspace(lo + inset, hi - inset, n_levels)
    else:
        levels = np.asarray(epsilon_levels, dtype=float)
        if np.any(levels < lo) or np.any(levels > hi):
            raise ValueError(
                f"energy levels outside the attainable range "
                f"[{lo:.6g}, {hi:.6g}]")
    out = {k: [] for k in ("eps", "v", "g", "eta", "w", "wr", "kkt", "bd")}
    for level in levels:
        seg = _clip_level_line(coeffs, level, x_bounds, y_bounds)
        if seg is None:
            raise ValueError(f"energy level {level:.6g} misses the domain")
        (x0, y0), (x1, y1) = seg
        span = math.hypot(x1 - x0, y1 - y0)

        def state(t):
            return x0 + t * (x1 - x0), y0 + t * (y1 - y0)

        def eta_at(t):
            return float(surfaces.eta.evaluate(*state(t)))

        if span == 0.0:
            t_star, boundary = 0.0, True
        else:
            ts = np.linspace(0.0, 1.0, N_CONTOUR_PRESAMPLES)
            vals = np.array([eta_at(t) for t in ts])
            k = int(np.argmin(vals))
            spacing = 1.0 / (N_CONTOUR_PRESAMPLES - 1)
            if k == 0 or k == N_CONTOUR_PRESAMPLES - 1:
                t_star = float(ts[k])
                boundary = True
            else:
                t_star = golden_section_min(eta_at, ts[k - 1], ts[k + 1])
                boundary = False
                if t_star < spacing:
                    t_star, boundary = 0.0, True
                elif t_star > 1.0 - spacing:
                    t_star, boundary = 1.0, True
        xs, ys = state(t_star)
        if boundary:
            kkt = float("nan")
        else:
            gx, gy = surfaces.eta.gradient(xs, ys)
            # angle measure in normalized coordinates: both axes O(1)
            gxn = gx * surfaces.eta.x_half
            gyn = gy * surfaces.eta.y_half
            ux = (x1 - x0) / surfaces.eta.x_half
            uy = (y1 - y0) / surfaces.eta.y_half
            un = math.hypot(ux, uy)
            gn = math.hypot(gxn, gyn)
            kkt = abs(gxn * ux + gyn * uy) / max(un * gn, 1e-300)
        eta_here = float(surfaces.eta.evaluate(xs, ys))
        if out["eta"] and eta_here > out["eta"][-1]:
            # cheaper earlier optimum still fits this budget; carry it
            for key in ("v", "g", "eta", "w", "wr", "kkt", "bd"):
                out[key].append(out[key][-1])
            out["eps"].append(float(level))
            continue
        out["eps"].append(float(level))
        out["v"].append(xs)
        out["g"].append(ys)
        out["eta"].append(eta_here)
        out["w"].append(float(surfaces.width.evaluate(xs, ys)))
        out["wr"].append(table.interp_width(xs, ys))
        out["kkt"].append(kkt)
        out["bd"].append(boundary)
    return OptimalPath(kappa=float(kappa),
                       epsilon=np.array(out["eps"]),
                       v_rest=np.array(out["v"]),
                       g_leak=np.array(out["g"]),
                       eta=np.array(out["eta"]),
                       width=np.array(out["w"]),
                       width_raw=np.array(out["wr"]),
                       kkt=np.array(out["kkt"]),
                       on_boundary=np.array(out["bd"], dtype=bool))


def fit_energy_affine(path):
    """Affine fit of tuning density 1/FWHM against path energy.

    Uses the fitted widths along the path. Raises on fewer than three
    samples or a degenerate (constant-energy) path.
    """
    if path.n_points < 3:
        raise ValueError("affine energy fit needs at least 3 path samples")
    if float(np.ptp(path.epsilon)) == 0.0:
        raise ValueError("path energies are constant; affine fit degenerate")
    return fit_affine(path.epsilon, 1.0 / path.width)


@dataclass(frozen=True)
class DispersionModel:
    """Hyperbolic dispersion-versus-energy law along one path.

    eta(eps) = eta0 + b1 / (eps - b2) with the pole b2 below the fitted
    energy range; a1, a2 map path energy to tuning density
    (density = a1 * eps + a2), and c1 = a1 * b1, c2 = a2 + a1 * b2
    re-express the law in density units:
    eta(density) = eta0 + c1 / (density - c2).
    """

    kappa: float
    a1: float
    a2: float
    b1: float
    b2: float
    eta0: float
    c1: float
    c2: float
    r_squared_energy: float
    r_squared_dispersion: float

    def __post_init__(self):
        if self.a1 == 0.0:
            raise ValueError("affine energy coefficient a1 must be nonzero")

    def predict_eta(self, epsilon):
        return self.eta0 + self.b1 / (np.asarray(epsilon, float) - self.b2)

    def predict_eta_from_density(self, density):
        return self.eta0 + self.c1 / (np.asarray(density, float) - self.c2)

    def density(self, epsilon):
        return self.a1 * np.asarray(epsilon, float) + self.a2


def fit_dispersion_hyperbola(epsilon, eta, energy_fit, kappa):
    """Fit the shifted hyperbola eta(eps) and bundle a DispersionModel.

    Requires at least 4 samples with eta non-increasing and overall
    decreasing in eps; the pole search runs on a log grid below the
    sample range so the pole invariant holds by construction.
    """
    epsilon = np.asarray(epsilon, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if epsilon.size < 4:
        raise ValueError("hyperbola fit needs at least 4 samples")
    order = np.argsort(epsilon)
    eps_s = epsilon[order]
    eta_s = eta[order]
    slack = ETA_MONOTONE_SLACK * float(np.max(np.abs(eta_s)))
    if np.any(np.diff(eta_s) > slack) or not eta_s[-1] < eta_s[0]:
        raise ValueError("dispersion must decrease with energy for the "
                         "hyperbola model")
    hyp = fit_hyperbola(eps_s, eta_s)
    a1 = energy_fit.slope
    a2 = energy_fit.intercept
    return DispersionModel(kappa=float(kappa), a1=float(a1), a2=float(a2),
                           b1=hyp.strength, b2=hyp.pole, eta0=hyp.floor,
                           c1=float(a1 * hyp.strength),
                           c2=float(a2 + a1 * hyp.pole),
                           r_squared_energy=energy_fit.r_squared,
                           r_squared_dispersion=hyp.r_squared)


def build_dispersion_model(path):
    """Energy-affine plus dispersion-hyperbola fits for one path."""
    affine = fit_energy_affine(path)
    return fit_dispersion_hyperbola(path.epsilon, path.eta, affine,
                                    path.kappa)


@dataclass(frozen=True)
class KappaTrends:
    """Polynomial trends of the dispersion-model coefficients in kappa.

    Coefficients are raw ascending polynomials in kappa (index k is the
    kappa**k coefficient): a1 and a2 affine, b1 and eta0 quadratic, b2
    quartic. residuals maps each coefficient name to its per-kappa
    fit residual over all supplied models, including the activity
    levels excluded from the fit.
    """

    kappas: np.ndarray
    fitted_kappas: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    eta0: np.ndarray
    residuals: dict = field(repr=False)

    def evaluate(self, name, kappa):
        coeffs = getattr(self, name)
        return np.polynomial.polynomial.polyval(
            np.asarray(kappa, dtype=float), coeffs)


def fit_kappa_trends(models, fit_min=KAPPA_FIT_MIN):
    """Fit the coefficient-versus-kappa trend polynomials.

    models is a sequence of DispersionModel with distinct kappa values,
    at least 7 of them; fitting is restricted to kappa >= fit_min where
    the models are reliable, while residuals are reported for every
    supplied kappa.
    """
    models = sorted(models, key=lambda m: m.kappa)
    kappas = np.array([m.kappa for m in models])
    if kappas.size < 7:
        raise ValueError(
            f"trend fits need at least 7 activity levels, got {kappas.size}")
    if np.any(np.diff(kappas) <= 0):
        raise ValueError("kappa values must be distinct")
    sel = kappas >= fit_min
    needed = max(KAPPA_TREND_DEGREES.values()) + 1
    if int(sel.sum()) < needed:
        raise ValueError(
            f"need at least {needed} activity levels at kappa >= {fit_min}")
    series = {name: np.array([getattr(m, name) for m in models])
              for name in KAPPA_TREND_DEGREES}
    coeffs = {}
    residuals = {}
    for name, degree in KAPPA_TREND_DEGREES.items():
        raw = polyfit_raw(kappas[sel], series[name][sel], degree)
        coeffs[name] = raw
        residuals[name] = series[name] - np.polynomial.polynomial.polyval(
            kappas, raw)
    return KappaTrends(kappas=kappas, fitted_kappas=kappas[sel],
                       a1=coeffs["a1"], a2=coeffs["a2"], b1=coeffs["b1"],
                       b2=coeffs["b2"], eta0=coeffs["eta0"],
                       residuals=residuals)


@dataclass(frozen=True)
class PathAnalysis:
    """Full sweep-to-model analysis: table, surfaces, paths, trends."""

    table: CellStateTable
    surfaces: CellSurfaces
    paths: dict
    models: dict
    trends: object


def run_path_analysis(sweep, kappas=DEFAULT_KAPPA_GRID,
                      n_levels=DEFAULT_N_LEVELS,
                      margin=DEFAULT_LEVEL_MARGIN):
    """Table, surfaces, per-kappa paths and models, and kappa trends.

    Trends are fitted only when at least 7 activity levels are given;
    otherwise the trends field is None.
    """
    table = build_cell_table(sweep)
    surfaces = fit_cell_surfaces(table)
    paths = {}
    models = {}
    for kappa in kappas:
        path = optimal_path(surfaces, kappa, n_levels=n_levels,
                            margin=margin)
        paths[float(kappa)] = path
        models[float(kappa)] = build_dispersion_model(path)
    trends = (fit_kappa_trends(list(models.values()))
              if len(models) >= 7 else None)
    return PathAnalysis(table=table, surfaces=surfaces, paths=paths,
                        models=models, trends=trends)
