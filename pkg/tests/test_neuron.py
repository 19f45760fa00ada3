import math
from statistics import NormalDist

import numpy as np
import pytest

from popenergy.neuron import (CALIBRATION_BLOCK, MembraneConfig, SimConfig,
                              SynapseConfig, TrialStats, activation_band,
                              calibrate_gsyn, deterministic_threshold,
                              estimate_stats, gsyn_schedule, measured_band,
                              simulate_trial, spike_train_moments,
                              sweep_grid, trial_seeds)

FAST_SIM = SimConfig(duration=400.0)


def test_membrane_validation():
    with pytest.raises(ValueError, match="must lie between"):
        MembraneConfig(v_rest=-95.0)
    with pytest.raises(ValueError, match="g_leak must be positive"):
        MembraneConfig(g_leak=0.0)


def test_membrane_geometry():
    mem = MembraneConfig()
    assert mem.area_cm2 == pytest.approx(math.pi * 64.0e-8, rel=1e-12)
    assert mem.n_sub_channels == 18
    # quantization keeps the total within one channel of the target
    total = mem.n_sub_channels * mem.g_sub_single
    assert abs(total - mem.g_sub_total) <= mem.g_sub_single
    # 1 uA*ms/cm^2 of Na charge, three ions pumped per ATP
    expect = 1e-9 * mem.area_cm2 / (3.0 * 1.602176634e-19)
    assert mem.atp_per_charge_unit == pytest.approx(expect, rel=1e-12)


def test_leak_reversal_cancels_standing_channel_current():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.08)
    g_sub = mem.n_sub_channels * mem.g_sub_single * mem.sub_open_at_rest
    i_leak = mem.g_leak * (mem.e_leak_effective - mem.v_rest)
    i_sub = g_sub * (mem.e_k - mem.v_rest)
    assert i_leak + i_sub == pytest.approx(0.0, abs=1e-12)


def test_leak_sodium_share_balances_at_rest():
    mem = MembraneConfig(v_rest=-72.0)
    g_na = mem.g_leak_na
    g_k = mem.g_leak - g_na
    influx = g_na * (mem.e_na - mem.v_rest)
    efflux = g_k * (mem.v_rest - mem.e_k)
    assert influx == pytest.approx(efflux, rel=1e-12)


def test_synapse_peak_is_normalized():
    syn = SynapseConfig()
    tp = syn.t_peak
    peak = syn.peak_norm * (math.exp(-tp / syn.tau_decay)
                            - math.exp(-tp / syn.tau_rise))
    assert peak == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError, match="tau_rise < tau_decay"):
        SynapseConfig(tau_rise=10.0, tau_decay=1.0)


def test_sim_validation_and_steps():
    sim = SimConfig(dt=0.1, duration=400.0, dead_time=2.0)
    assert sim.n_steps == 4000
    assert sim.dead_steps == 20
    with pytest.raises(ValueError, match="duration > dt > 0"):
        SimConfig(dt=0.0)


def test_rest_is_stationary_without_input():
    # v_init equals v_rest here and the leak reversal offsets the
    # standing channel current, so the deterministic cell must not move
    mem = MembraneConfig(v_rest=-75.0, g_leak=0.1)
    syn = SynapseConfig()
    count, _, _, trace = simulate_trial(0, 0.0, mem, syn, FAST_SIM,
                                        stochastic=False, amp_noise=False,
                                        record=True)
    assert count == 0
    assert np.max(np.abs(trace - mem.v_rest)) < 0.01


def test_rest_settles_near_target_when_depolarized():
    # Na and KDR window currents shift the fixed point by well under a
    # millivolt; the trace must settle there from the common v_init
    mem = MembraneConfig(v_rest=-65.0, g_leak=0.1)
    syn = SynapseConfig()
    count, _, _, trace = simulate_trial(0, 0.0, mem, syn, FAST_SIM,
                                        stochastic=False, amp_noise=False,
                                        record=True)
    assert count == 0
    assert abs(trace[-1] - mem.v_rest) < 1.0
    assert np.max(np.abs(np.diff(trace[-100:]))) < 1e-6


def test_stochastic_rest_stays_bounded_and_silent():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.08)
    syn = SynapseConfig()
    count, _, _, trace = simulate_trial(7, 0.0, mem, syn, FAST_SIM,
                                        record=True)
    assert count == 0
    assert np.all(trace > mem.e_k - 5.0)
    assert np.all(trace < mem.e_na + 5.0)


def test_driven_trial_spikes_within_voltage_bounds():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.1)
    syn = SynapseConfig()
    g_star = deterministic_threshold(mem, syn, FAST_SIM)
    count, q_syn, q_bg, trace = simulate_trial(
        3, 1.5 * g_star, mem, syn, FAST_SIM, record=True)
    assert count >= 1
    assert trace.shape == (FAST_SIM.n_steps + 1,)
    assert np.all(trace > mem.e_k - 5.0)
    assert np.all(trace < mem.e_na + 5.0)
    # synaptic and sodium currents are inward, charges negative
    assert q_syn < 0.0 and q_bg < 0.0


def test_trials_are_seed_deterministic():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.1)
    syn = SynapseConfig()
    g_star = deterministic_threshold(mem, syn, FAST_SIM)
    a = simulate_trial(42, g_star, mem, syn, FAST_SIM)
    b = simulate_trial(42, g_star, mem, syn, FAST_SIM)
    c = simulate_trial(43, g_star, mem, syn, FAST_SIM)
    assert a[:3] == b[:3]
    assert a[1] != c[1]


def test_estimate_stats_matches_trial_loop():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.1)
    syn = SynapseConfig()
    g_star = deterministic_threshold(mem, syn, FAST_SIM)
    seeds = trial_seeds(5, 0, 0, 2, 24)
    stats = estimate_stats(g_star, seeds, mem, syn, FAST_SIM)
    out = [simulate_trial(int(s), g_star, mem, syn, FAST_SIM)
           for s in seeds]
    counts = np.array([o[0] for o in out], dtype=float)
    conv = mem.atp_per_charge_unit
    assert stats.mu_f == pytest.approx(counts.mean(), rel=1e-12)
    assert stats.sigma2_f == pytest.approx(counts.var(ddof=1), rel=1e-12)
    assert stats.eps_sig_atp == pytest.approx(
        np.abs([o[1] for o in out]).mean() * conv, rel=1e-12)
    assert stats.eps_bg_atp == pytest.approx(
        np.abs([o[2] for o in out]).mean() * conv, rel=1e-12)
    assert stats.n_trials == 24
    with pytest.raises(ValueError, match="at least 2 trials"):
        estimate_stats(g_star, seeds[:1], mem, syn, FAST_SIM)


def test_deterministic_threshold_brackets_firing():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.1)
    syn = SynapseConfig()
    g_star = deterministic_threshold(mem, syn, FAST_SIM)
    silent = simulate_trial(0, 0.999 * g_star, mem, syn, FAST_SIM,
                            stochastic=False, amp_noise=False)
    firing = simulate_trial(0, 1.001 * g_star, mem, syn, FAST_SIM,
                            stochastic=False, amp_noise=False)
    assert silent[0] == 0
    assert firing[0] >= 1


def test_threshold_falls_with_depolarization():
    syn = SynapseConfig()
    g_lo = deterministic_threshold(
        MembraneConfig(v_rest=-75.0, g_leak=0.1), syn, FAST_SIM)
    g_hi = deterministic_threshold(
        MembraneConfig(v_rest=-65.0, g_leak=0.1), syn, FAST_SIM)
    assert g_hi < g_lo


def test_activation_band_and_schedule_shape():
    lo, hi = activation_band(40.0, amp_sd_rel=0.1)
    assert lo < 40.0 < hi
    gsyn, valid = gsyn_schedule(40.0, band=(lo, hi))
    assert gsyn.shape == (15,) and valid.shape == (15,)
    assert np.all(np.diff(gsyn) > 0.0)
    assert list(valid) == [0] * 5 + [1] * 10
    assert gsyn[5] == pytest.approx(lo, rel=1e-12)
    assert gsyn[-1] == pytest.approx(hi, rel=1e-12)


def test_measured_band_inverts_probit_line():
    # counts following probit(mu) = 3 - 4 / g make the edges exact
    normal = NormalDist()

    def mu(g):
        return normal.cdf(3.0 - 4.0 / g)

    lo, hi = measured_band(1.0, mu(1.0), 2.0, mu(2.0), g_star=1.8)
    z_lo, z_hi = normal.inv_cdf(0.2), normal.inv_cdf(0.8)
    assert lo == pytest.approx(4.0 / (3.0 - z_lo), rel=1e-9)
    assert hi == pytest.approx(4.0 / (3.0 - z_hi), rel=1e-9)


def test_measured_band_falls_back_on_bad_anchors():
    model = activation_band(40.0, amp_sd_rel=0.1)
    assert measured_band(36.0, 0.5, 40.0, 0.1, g_star=40.0) == model
    assert measured_band(float("nan"), 0.1, 40.0, 0.6,
                         g_star=40.0) == model
    assert measured_band(40.0, 0.1, 36.0, 0.6, g_star=40.0) == model


def test_trial_seeds_are_reproducible_and_disjoint():
    a = trial_seeds(0, 1, 2, 3, 16)
    b = trial_seeds(0, 1, 2, 3, 16)
    c = trial_seeds(0, 1, 2, 4, 16)
    assert a.dtype == np.int64 and a.shape == (16,)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(a >= 0)


def test_calibration_hits_target_and_repeats():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.1)
    syn = SynapseConfig()
    g_star = deterministic_threshold(mem, syn, FAST_SIM)
    seeds = trial_seeds(1, 0, 0, CALIBRATION_BLOCK, 200)
    cal = calibrate_gsyn(mem, syn, FAST_SIM, seeds, g_star=g_star)
    assert abs(cal.stats.mu_f - 0.1) <= 0.01
    assert 0.3 * g_star <= cal.gsyn_hat <= 2.0 * g_star
    assert cal.n_evaluations <= 12
    again = calibrate_gsyn(mem, syn, FAST_SIM, seeds, g_star=g_star)
    assert again.gsyn_hat == cal.gsyn_hat


def test_calibration_target_zero_is_the_silent_cell():
    mem = MembraneConfig(v_rest=-70.0, g_leak=0.1)
    syn = SynapseConfig()
    seeds = trial_seeds(1, 0, 0, CALIBRATION_BLOCK, 50)
    cal = calibrate_gsyn(mem, syn, FAST_SIM, seeds, target=0.0)
    assert cal.gsyn_hat == 0.0
    assert cal.stats.mu_f == 0.0


def test_dispersion_rises_under_stress():
    # depolarization-gated slow K channels make the stressed cell's
    # count noise clearly super-binomial at matched mid-band drive
    syn = SynapseConfig()

    def midband_eta(v_rest, g_leak):
        mem = MembraneConfig(v_rest=v_rest, g_leak=g_leak)
        g_star = deterministic_threshold(mem, syn, FAST_SIM)
        seeds = trial_seeds(2, 0, 0, CALIBRATION_BLOCK, 300)
        cal = calibrate_gsyn(mem, syn, FAST_SIM, seeds, g_star=g_star)
        star = estimate_stats(g_star, seeds, mem, syn, FAST_SIM)
        lo, hi = measured_band(cal.gsyn_hat, cal.stats.mu_f, g_star,
                               star.mu_f, g_star, syn.amp_sd_rel)
        probe = estimate_stats(0.5 * (lo + hi),
                               trial_seeds(2, 0, 0, 7, 600),
                               mem, syn, FAST_SIM)
        return probe.sigma2_f / (probe.mu_f * (1.0 - probe.mu_f))

    eta_stressed = midband_eta(-75.0, 0.07)
    eta_healthy = midband_eta(-65.0, 0.12)
    assert eta_healthy > 0.9
    assert eta_stressed > eta_healthy + 0.2


def test_background_cost_trends():
    syn = SynapseConfig()
    seeds = trial_seeds(3, 0, 0, 0, 4)

    def bg(v_rest, g_leak):
        mem = MembraneConfig(v_rest=v_rest, g_leak=g_leak)
        return estimate_stats(0.0, seeds, mem, syn, FAST_SIM,
                              stochastic=False).eps_bg_atp

    assert bg(-65.0, 0.1) > bg(-75.0, 0.1)
    assert bg(-70.0, 0.12) > bg(-70.0, 0.07)


def test_spike_train_moments_identities():
    stats = TrialStats(mu_f=0.4, sigma2_f=0.3, eps_sig_atp=0.0,
                       eps_bg_atp=0.0, n_trials=100)
    mean, var, fano = spike_train_moments(5.0, 2.0, stats)
    assert mean == pytest.approx(10.0 * 0.4, rel=1e-12)
    assert var == pytest.approx(10.0 * (0.3 + 0.16), rel=1e-12)
    assert fano == pytest.approx(var / mean, rel=1e-12)
    with pytest.raises(ValueError, match="lambda_rate"):
        spike_train_moments(0.0, 2.0, stats)


def test_mini_sweep_contract():
    v_axis = np.linspace(-73.0, -65.0, 5)
    g_axis = np.linspace(0.08, 0.12, 5)
    sweep = sweep_grid(v_axis, g_axis, sim=FAST_SIM, n_trials=100,
                       root_seed=11)
    assert sweep.root_seed == 11 and sweep.n_trials == 100
    assert len(sweep.cells) == 25
    assert len(sweep.rows) == 25 * 15
    calibrated = [c for c in sweep.cells if np.isfinite(c.gsyn_hat)]
    assert len(calibrated) >= 20
    for cell in sweep.cells:
        assert 0.0 < cell.gsyn_lo < cell.gsyn_hi
    for k in range(0, len(sweep.rows), 15):
        chunk = sweep.rows[k:k + 15]
        assert [r.valid for r in chunk] == [0] * 5 + [1] * 10
        assert all(r.n_trials == 100 for r in chunk)
        gs = [r.g_syn for r in chunk]
        assert gs == sorted(gs)
        # response grows across the band
        assert chunk[-1].mu_f > chunk[5].mu_f
    valid_rows = [r for r in sweep.rows if r.valid]
    assert all(r.sigma2_f > 0.0 for r in valid_rows)
    assert all(r.eps_bg_atp > 0.0 for r in sweep.rows)


def test_sweep_rejects_small_grids():
    with pytest.raises(ValueError, match="5x5"):
        sweep_grid(np.linspace(-75.0, -65.0, 4),
                   np.linspace(0.07, 0.12, 5))
