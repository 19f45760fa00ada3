"""Tests for the sweep-to-path analysis chain."""

import math

import numpy as np
import pytest

from popenergy.fits import fit_affine
from popenergy.neuron import CellRecord, SweepResult, SweepRow
from popenergy.paths import (CellStateTable, DispersionModel, OptimalPath,
                             build_cell_table, build_dispersion_model,
                             compute_fwhm, energy_affine, fit_cell_surfaces,
                             fit_dispersion_hyperbola, fit_energy_affine,
                             fit_kappa_trends, optimal_path,
                             run_path_analysis)

DRIVE_SIGMA = 170.0
HEADROOM = 0.02

V_AXIS = (-75.0, -70.0, -65.0)
G_AXIS = (0.08, 0.10, 0.12)
G_RAMP = (0.30, 0.50, 0.70, 0.80, 0.84, 0.85, 0.86, 0.87, 0.88, 0.89,
          0.90, 0.91, 0.92, 0.93, 0.94, 0.96, 1.00, 1.05, 1.10, 1.20)
SIGMOID_CENTER = 0.9


def cell_slope(v, g):
    return 0.02 + 0.002 * (v + 70.0) + 0.05 * (g - 0.10)


def cell_eta(v, g):
    return 1.0 + ((v + 65.0) / 10.0) ** 2 + ((g - 0.12) / 0.04) ** 2


def eps_sig_fn(v, g):
    return 17.5 + 0.1 * v + 20.0 * g


def eps_bg_fn(v, g):
    return 8.75 + 0.05 * v + 8.0 * g


def activation(gsyn, slope):
    return 1.0 / (1.0 + math.exp(-(gsyn - SIGMOID_CENTER) / slope))


def make_sweep(drop=None):
    """Synthetic 3x3 sweep with sigmoidal activation maps.

    Per cell the in-band variance is exactly eta * mu * (1 - mu) for a
    smooth eta(v, g), so the fitted table must reproduce eta to float
    precision. drop marks one cell as failed calibration.
    """
    rows = []
    cells = []
    for v in V_AXIS:
        for g in G_AXIS:
            if drop is not None and (v, g) == drop:
                cells.append(CellRecord(
                    v_rest=v, g_leak=g, g_star=math.nan, gsyn_hat=math.nan,
                    gsyn_lo=math.nan, gsyn_hi=math.nan,
                    eps_sig_atp=math.nan, eps_bg_atp=math.nan))
                continue
            slope = cell_slope(v, g)
            hat = SIGMOID_CENTER - slope * math.log(9.0)
            cells.append(CellRecord(
                v_rest=v, g_leak=g, g_star=SIGMOID_CENTER, gsyn_hat=hat,
                gsyn_lo=hat, gsyn_hi=SIGMOID_CENTER + slope * math.log(9.0),
                eps_sig_atp=eps_sig_fn(v, g), eps_bg_atp=eps_bg_fn(v, g)))
            eta = cell_eta(v, g)
            for gs in G_RAMP:
                mu = activation(gs, slope)
                rows.append(SweepRow(
                    v_rest=v, g_leak=g, g_syn=gs, mu_f=mu,
                    sigma2_f=eta * mu * (1.0 - mu),
                    eps_sig_atp=eps_sig_fn(v, g), eps_bg_atp=eps_bg_fn(v, g),
                    n_trials=1000,
                    valid=int(1e-9 < mu < 1.0 - 1e-9)))
    return SweepResult(rows=tuple(rows), cells=tuple(cells),
                       root_seed=7, n_trials=1000)


def analytic_table(eta_fn, v_axis=None, g_axis=None, width_fn=None):
    """CellStateTable sampled from closed-form surfaces, fully masked in."""
    if v_axis is None:
        v_axis = np.linspace(-75.0, -65.0, 21)
    if g_axis is None:
        g_axis = np.linspace(0.05, 0.15, 21)
    if width_fn is None:
        def width_fn(v, g):
            return 90.0 - 2.0 * (v + 70.0) - 400.0 * (g - 0.095)
    vv, gg = np.meshgrid(v_axis, g_axis, indexing="ij")
    shape = vv.shape
    return CellStateTable(
        v_rest=np.asarray(v_axis, dtype=float),
        g_leak=np.asarray(g_axis, dtype=float),
        eta=eta_fn(vv, gg), eta_r_squared=np.ones(shape),
        eps_sig=eps_sig_fn(vv, gg), eps_bg=eps_bg_fn(vv, gg),
        width=width_fn(vv, gg),
        width_saturated=np.zeros(shape, dtype=bool),
        mask=np.ones(shape, dtype=bool))


def make_path(epsilon, eta, width=None, kappa=100.0):
    epsilon = np.asarray(epsilon, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if width is None:
        width = np.full(epsilon.shape, 50.0)
    return OptimalPath(kappa=kappa, epsilon=epsilon,
                       v_rest=np.zeros_like(epsilon),
                       g_leak=np.zeros_like(epsilon), eta=eta,
                       width=np.asarray(width, dtype=float),
                       width_raw=np.asarray(width, dtype=float),
                       kkt=np.zeros_like(epsilon),
                       on_boundary=np.zeros(epsilon.shape, dtype=bool))


def test_fwhm_matches_closed_form_for_ramp_map():
    # activation rises linearly from the knee, so the half-max crossing
    # sits where the Gaussian drive equals the knee-peak midpoint
    knee = 0.816
    gsyn = np.array([0.0, knee, knee + 0.3, 1.3])
    mu = np.array([0.0, 0.0, 1.0, 1.0])
    hw = compute_fwhm(gsyn, mu, 1.0)
    peak = (1.0 + HEADROOM) * 1.0
    expected = 2.0 * DRIVE_SIGMA * math.sqrt(
        -2.0 * math.log((peak + knee) / (2.0 * peak)))
    assert not hw.saturated
    assert hw.width == pytest.approx(expected, abs=0.05)
    assert hw.left == pytest.approx(-expected / 2.0, abs=0.05)
    assert hw.right == pytest.approx(expected / 2.0, abs=0.05)


def test_fwhm_saturates_for_shallow_map():
    # a gentle linear map keeps the response above half max everywhere
    hw = compute_fwhm(np.array([0.0, 3.0]), np.array([0.0, 1.0]), 1.0)
    assert hw.saturated
    assert hw.width == pytest.approx(180.0)
    assert math.isnan(hw.left) and math.isnan(hw.right)


def test_fwhm_validates_inputs():
    good = np.array([0.0, 1.0, 2.0])
    with pytest.raises(ValueError, match="matching 1-D"):
        compute_fwhm(good, np.array([0.0, 1.0]), 1.0)
    with pytest.raises(ValueError, match="strictly increasing"):
        compute_fwhm(np.array([0.0, 1.0, 1.0]), np.zeros(3), 1.0)
    with pytest.raises(ValueError, match="must be finite"):
        compute_fwhm(good, np.array([0.0, math.nan, 1.0]), 1.0)
    with pytest.raises(ValueError, match="must be positive"):
        compute_fwhm(good, np.zeros(3), 0.0)


def test_build_cell_table_recovers_synthetic_cells():
    table = build_cell_table(make_sweep(drop=(-70.0, 0.10)))
    assert table.n_cells == 9
    assert table.n_masked_in == 8
    assert table.bounds() == ((-75.0, -65.0), (0.08, 0.12))
    assert not table.mask[1, 1]
    assert math.isnan(table.eta[1, 1])
    for i, v in enumerate(V_AXIS):
        for j, g in enumerate(G_AXIS):
            if (v, g) == (-70.0, 0.10):
                continue
            assert table.mask[i, j]
            assert table.eta[i, j] == pytest.approx(cell_eta(v, g),
                                                    rel=1e-9)
            assert table.eta_r_squared[i, j] == pytest.approx(1.0)
            assert table.eps_sig[i, j] == pytest.approx(eps_sig_fn(v, g))
            assert table.eps_bg[i, j] == pytest.approx(eps_bg_fn(v, g))
            assert not table.width_saturated[i, j]
            assert 30.0 < table.width[i, j] < 120.0


def test_interp_width_is_bilinear_and_nan_guarded():
    table = build_cell_table(make_sweep())
    assert table.interp_width(-75.0, 0.08) == pytest.approx(
        table.width[0, 0])
    mid = table.interp_width(-72.5, 0.09)
    assert mid == pytest.approx(float(table.width[:2, :2].mean()))
    assert math.isnan(table.interp_width(-80.0, 0.10))
    assert math.isnan(table.interp_width(-70.0, 0.20))
    dropped = build_cell_table(make_sweep(drop=(-70.0, 0.10)))
    assert math.isnan(dropped.interp_width(-72.0, 0.09))


def test_cell_surfaces_recover_analytic_fields():
    def eta_fn(v, g):
        return 1.2 + 0.04 * (v + 70.0) ** 2 + 3000.0 * (g - 0.095) ** 2

    table = analytic_table(eta_fn, v_axis=np.linspace(-75.0, -65.0, 9),
                           g_axis=np.linspace(0.07, 0.12, 6))
    surfaces = fit_cell_surfaces(table)
    # 6 distinct g values cap the dispersion surface at degree 5
    assert surfaces.eta.degree == 5
    v, g = -68.3, 0.0832
    assert surfaces.eta.evaluate(v, g) == pytest.approx(eta_fn(v, g),
                                                        rel=1e-7)
    assert surfaces.eps_sig.affine_coefficients() == pytest.approx(
        (17.5, 0.1, 20.0), rel=1e-8)
    assert surfaces.eps_bg.affine_coefficients() == pytest.approx(
        (8.75, 0.05, 8.0), rel=1e-8)
    assert fit_cell_surfaces(table, eta_degree=2).eta.degree == 2
    a0, ax, ay = energy_affine(surfaces, 100.0)
    assert a0 == pytest.approx(100.0 * 17.5 + 8.75, rel=1e-8)
    assert ax == pytest.approx(100.0 * 0.1 + 0.05, rel=1e-8)
    assert ay == pytest.approx(100.0 * 20.0 + 8.0, rel=1e-8)
    with pytest.raises(ValueError, match="kappa must be positive"):
        energy_affine(surfaces, 0.0)


def test_cell_surfaces_reject_degenerate_masks():
    def eta_fn(v, g):
        return 1.0 + 0.0 * v + 0.0 * g

    table = analytic_table(eta_fn)
    empty = CellStateTable(**{**table.__dict__,
                              "mask": np.zeros_like(table.mask)})
    with pytest.raises(ValueError, match="no masked-in cells"):
        fit_cell_surfaces(empty)
    column = np.zeros_like(table.mask)
    column[:, 3] = True
    thin = CellStateTable(**{**table.__dict__, "mask": column})
    with pytest.raises(ValueError, match="too small for a dispersion"):
        fit_cell_surfaces(thin)


def test_optimal_path_finds_constrained_minima():
    # eta is an elliptic paraboloid with vertex at the most expensive
    # corner, so each level's constrained minimum has a closed form
    def eta_fn(v, g):
        return 1.0 + ((v + 65.0) / 5.0) ** 2 + ((g - 0.15) / 0.05) ** 2

    surfaces = fit_cell_surfaces(analytic_table(eta_fn))
    kappa = 100.0
    a0, ax, ay = energy_affine(surfaces, kappa)
    levels = np.array([1180.0, 1230.0, 1280.0, 1330.0, 1380.0])
    t = (levels - (a0 - 65.0 * ax + 0.15 * ay)) / (
        12.5 * ax ** 2 + 0.00125 * ay ** 2)
    v_exp = -65.0 + 12.5 * ax * t
    g_exp = 0.15 + 0.00125 * ay * t
    path = optimal_path(surfaces, kappa, epsilon_levels=levels)
    np.testing.assert_allclose(path.epsilon, levels)
    np.testing.assert_allclose(path.v_rest, v_exp, atol=2e-3)
    np.testing.assert_allclose(path.g_leak, g_exp, atol=2e-5)
    np.testing.assert_allclose(path.eta, eta_fn(v_exp, g_exp), rtol=1e-7)
    assert not path.on_boundary.any()
    assert np.all(path.kkt < 1e-5)
    assert np.all(np.diff(path.eta) < 0.0)
    assert np.all(np.isfinite(path.width_raw))


def test_optimal_path_clamps_affine_dispersion_to_boundary():
    # an affine eta has no interior minimum along any level line
    def eta_fn(v, g):
        return 5.0 - 0.1 * (v + 75.0) - 10.0 * (g - 0.05)

    surfaces = fit_cell_surfaces(analytic_table(eta_fn))
    path = optimal_path(surfaces, 100.0, n_levels=8)
    assert path.n_points == 8
    assert path.on_boundary.all()
    assert np.all(np.isnan(path.kkt))
    assert np.all(np.diff(path.eta) <= 1e-12)


def test_optimal_path_carries_cheaper_optimum_forward():
    # once the budget admits the global vertex, richer levels keep it
    def eta_fn(v, g):
        return 1.0 + ((v + 70.0) / 5.0) ** 2 + ((g - 0.1) / 0.05) ** 2

    surfaces = fit_cell_surfaces(analytic_table(eta_fn))
    a0, ax, ay = energy_affine(surfaces, 100.0)
    eps_vertex = a0 - 70.0 * ax + 0.1 * ay
    levels = np.array([1150.0, 1200.0, eps_vertex, 1320.0, 1380.0])
    path = optimal_path(surfaces, 100.0, epsilon_levels=levels)
    assert path.n_points == 5
    np.testing.assert_allclose(path.epsilon, levels)
    assert np.all(np.diff(path.eta) <= 0.0)
    assert path.eta[2] == pytest.approx(1.0, rel=1e-8)
    for field in ("v_rest", "g_leak", "eta", "width", "on_boundary"):
        values = getattr(path, field)
        assert values[3] == values[2]
        assert values[4] == values[2]


def test_optimal_path_rejects_unreachable_levels():
    def eta_fn(v, g):
        return 2.0 + (v + 70.0) ** 2 + (g - 0.1) ** 2

    surfaces = fit_cell_surfaces(analytic_table(eta_fn))
    with pytest.raises(ValueError, match="outside the attainable range"):
        optimal_path(surfaces, 100.0, epsilon_levels=[900.0, 1200.0])
    with pytest.raises(ValueError, match="outside the attainable range"):
        optimal_path(surfaces, 100.0, epsilon_levels=[1200.0, 2000.0])


def test_path_invariants_are_enforced():
    with pytest.raises(ValueError, match="at least two energy levels"):
        make_path([1.0], [2.0])
    with pytest.raises(ValueError, match="strictly increasing"):
        make_path([1.0, 1.0, 2.0], [3.0, 2.0, 1.0])
    with pytest.raises(ValueError, match="dispersion increases"):
        make_path([1.0, 2.0, 3.0], [3.0, 2.0, 2.5])


def test_energy_affine_fit_recovers_density_line():
    eps = np.linspace(10.0, 30.0, 9)
    width = 1.0 / (0.004 * eps + 0.06)
    path = make_path(eps, np.linspace(2.0, 1.0, 9), width=width)
    fit = fit_energy_affine(path)
    assert fit.slope == pytest.approx(0.004, rel=1e-9)
    assert fit.intercept == pytest.approx(0.06, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0)
    short = make_path([1.0, 2.0], [2.0, 1.0])
    with pytest.raises(ValueError, match="at least 3 path samples"):
        fit_energy_affine(short)


def test_dispersion_model_round_trips_hyperbola():
    eps = np.linspace(10.0, 30.0, 12)
    eta = 1.05 + 8.0 / (eps - 2.0)
    width = 1.0 / (0.004 * eps + 0.06)
    model = build_dispersion_model(make_path(eps, eta, width=width))
    assert model.kappa == 100.0
    assert model.a1 == pytest.approx(0.004, rel=1e-9)
    assert model.a2 == pytest.approx(0.06, rel=1e-9)
    assert model.b1 == pytest.approx(8.0, rel=1e-5)
    assert model.b2 == pytest.approx(2.0, rel=1e-4)
    assert model.eta0 == pytest.approx(1.05, rel=1e-5)
    assert model.c1 == pytest.approx(model.a1 * model.b1)
    assert model.c2 == pytest.approx(model.a2 + model.a1 * model.b2)
    assert model.r_squared_energy > 0.999999
    assert model.r_squared_dispersion > 0.999999
    np.testing.assert_allclose(model.predict_eta(eps), eta, rtol=1e-5)
    # the density form is the energy form under the affine change of
    # variable, so the two predictions agree identically
    np.testing.assert_allclose(model.predict_eta_from_density(
        model.density(eps)), model.predict_eta(eps), rtol=1e-12)
    np.testing.assert_allclose(model.density(eps), 1.0 / width, rtol=1e-9)


def test_dispersion_model_validations():
    line = fit_affine([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
    with pytest.raises(ValueError, match="at least 4 samples"):
        fit_dispersion_hyperbola([1.0, 2.0, 3.0], [3.0, 2.0, 1.0],
                                 line, 100.0)
    with pytest.raises(ValueError, match="dispersion must decrease"):
        fit_dispersion_hyperbola([1.0, 2.0, 3.0, 4.0],
                                 [1.0, 2.0, 3.0, 4.0], line, 100.0)
    with pytest.raises(ValueError, match="a1 must be nonzero"):
        DispersionModel(kappa=100.0, a1=0.0, a2=1.0, b1=1.0, b2=0.0,
                        eta0=1.0, c1=0.0, c2=1.0, r_squared_energy=1.0,
                        r_squared_dispersion=1.0)


def coefficient_truth(kappa):
    k = np.asarray(kappa, dtype=float)
    return {"a1": 1e-3 * k + 0.5,
            "a2": -2e-3 * k + 1.1,
            "b1": 0.02 * k ** 2 - 3.0 * k + 150.0,
            "b2": 1e-5 * k ** 4 - 3e-3 * k ** 3 + 0.3 * k ** 2
                  - 12.0 * k + 180.0,
            "eta0": 4e-4 * k ** 2 - 0.1 * k + 7.0}


def synthetic_models(kappas, corrupt_first_eta0=0.0):
    models = []
    for idx, kappa in enumerate(kappas):
        c = {name: float(vals) for name, vals
             in coefficient_truth(kappa).items()}
        if idx == 0:
            c["eta0"] += corrupt_first_eta0
        models.append(DispersionModel(
            kappa=float(kappa), a1=c["a1"], a2=c["a2"], b1=c["b1"],
            b2=c["b2"], eta0=c["eta0"], c1=c["a1"] * c["b1"],
            c2=c["a2"] + c["a1"] * c["b2"], r_squared_energy=1.0,
            r_squared_dispersion=1.0))
    return models


def test_kappa_trends_recover_polynomial_coefficients():
    kappas = np.arange(90.0, 151.0, 10.0)
    # the lowest activity level is corrupted; the fit window starts at
    # 100 so the trends must ignore it while still reporting its residual
    trends = fit_kappa_trends(synthetic_models(kappas,
                                               corrupt_first_eta0=50.0))
    np.testing.assert_allclose(trends.kappas, kappas)
    np.testing.assert_allclose(trends.fitted_kappas, kappas[1:])
    probe = np.array([105.0, 117.0, 133.0, 148.0])
    truth = coefficient_truth(probe)
    for name in ("a1", "a2", "b1", "b2", "eta0"):
        np.testing.assert_allclose(trends.evaluate(name, probe),
                                   truth[name], rtol=1e-6)
        assert len(trends.residuals[name]) == kappas.size
    assert trends.residuals["eta0"][0] == pytest.approx(50.0, abs=1e-3)
    assert np.max(np.abs(trends.residuals["b2"][1:])) < 1e-3
    assert np.max(np.abs(trends.residuals["eta0"][1:])) < 1e-6


def test_kappa_trend_validations():
    kappas = np.arange(90.0, 151.0, 10.0)
    with pytest.raises(ValueError, match="at least 7 activity levels"):
        fit_kappa_trends(synthetic_models(kappas[:6]))
    doubled = synthetic_models(kappas)
    doubled[1] = DispersionModel(**{**doubled[0].__dict__})
    with pytest.raises(ValueError, match="must be distinct"):
        fit_kappa_trends(doubled)
    with pytest.raises(ValueError, match="at kappa >= 149"):
        fit_kappa_trends(synthetic_models(kappas), fit_min=149.0)


def test_run_path_analysis_composes_the_chain():
    analysis = run_path_analysis(make_sweep(), kappas=(100.0, 110.0),
                                 n_levels=6)
    assert analysis.trends is None
    assert analysis.table.n_masked_in == 9
    assert set(analysis.paths) == {100.0, 110.0}
    for kappa, path in analysis.paths.items():
        assert path.kappa == kappa
        assert path.n_points == 6
        assert np.all(np.diff(path.epsilon) > 0.0)
        assert np.all(np.diff(path.eta) <= 1e-12)
        model = analysis.models[kappa]
        assert model.kappa == kappa
        assert model.a1 != 0.0
        assert model.b1 > 0.0
