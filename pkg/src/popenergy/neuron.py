"""Single-compartment neuron experiments.

Configuration dataclasses, spike-threshold search, synaptic-weight
calibration to a target activation probability, and the cell-grid
sweep that produces per-condition activation statistics and sodium
charge costs. Heavy lifting happens in the compiled kernel.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

import numpy as np

from . import _kernel

ELEMENTARY_CHARGE = 1.602176634e-19   # C
NA_IONS_PER_ATP = 3.0                 # pump stoichiometry
CHANNEL_CONDUCTANCE_PS = 20.0         # pS, one subthreshold K channel

TARGET_ACTIVATION = 0.1       # calibrated spike probability per input
BAND_ACTIVATION_LO = 0.2      # activation spanned by the in-band points
BAND_ACTIVATION_HI = 0.8
BAND_QUANTILE = statistics.NormalDist().inv_cdf(BAND_ACTIVATION_HI)

N_GSYN_BELOW_BAND = 5     # low-drive points kept for the response map
N_GSYN_IN_BAND = 10
GSYN_FLOOR_FRACTION = 0.7     # lowest probed drive, relative to threshold

CALIBRATION_BLOCK = 1000      # seed block reserved for calibration draws


class CalibrationError(RuntimeError):
    """Raised when threshold search or weight calibration fails."""


@dataclass(frozen=True)
class MembraneConfig:
    """Passive and active membrane parameters of the soma.

    The subthreshold K conductance is quantized into two-state
    channels of CHANNEL_CONDUCTANCE_PS each; both the stochastic and
    deterministic modes use the quantized total. Part of the
    population is open at rest, so the leak reversal is offset just
    enough to cancel the standing channel current and hold the
    zero-input cell at v_rest. The sodium leak share used for energy
    accounting keeps the plain v_rest reversal.
    """

    v_rest: float = -75.0        # mV
    g_leak: float = 0.1          # mS/cm^2
    c_m: float = 1.0             # uF/cm^2
    gbar_na: float = 35.0        # mS/cm^2
    gbar_kdr: float = 4.0        # mS/cm^2
    g_sub_total: float = 0.18    # mS/cm^2
    e_na: float = 55.0           # mV
    e_k: float = -90.0           # mV
    soma_diameter_um: float = 8.0
    soma_length_um: float = 8.0

    def __post_init__(self):
        if not self.e_k < self.v_rest < self.e_na:
            raise ValueError(
                f"v_rest={self.v_rest} must lie between e_k={self.e_k} "
                f"and e_na={self.e_na}")
        for name in ("g_leak", "c_m", "gbar_na", "gbar_kdr", "g_sub_total",
                     "soma_diameter_um", "soma_length_um"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def area_cm2(self):
        return (math.pi * self.soma_diameter_um * self.soma_length_um
                * 1e-8)

    @property
    def n_sub_channels(self):
        per_channel = CHANNEL_CONDUCTANCE_PS * 1e-12 / self.area_cm2  # S/cm^2
        return int(round(self.g_sub_total * 1e-3 / per_channel))

    @property
    def g_sub_single(self):
        """One channel's conductance density in mS/cm^2."""
        return CHANNEL_CONDUCTANCE_PS * 1e-12 / self.area_cm2 * 1e3

    @property
    def g_leak_na(self):
        """Sodium share of the leak.

        Splitting the leak into Na and K components whose currents
        cancel at v_rest gives g_na_leak = g_leak * (v_rest - e_k) /
        (e_na - e_k).
        """
        ratio = (self.e_na - self.v_rest) / (self.v_rest - self.e_k)
        return self.g_leak / (1.0 + ratio)

    @property
    def sub_open_at_rest(self):
        """Resting open fraction of the subthreshold K channels."""
        return _kernel.sub_open_fraction(self.v_rest)

    @property
    def e_leak_effective(self):
        """Leak reversal that holds the zero-input cell at v_rest.

        Offsets the standing subthreshold K current (quantized total)
        so the deterministic resting potential equals v_rest exactly.
        """
        g_sub_rest = (self.n_sub_channels * self.g_sub_single
                      * self.sub_open_at_rest)
        return self.v_rest + (g_sub_rest * (self.v_rest - self.e_k)
                              / self.g_leak)

    @property
    def atp_per_charge_unit(self):
        """ATP demand of 1 uA*ms/cm^2 of sodium charge over the soma."""
        coulombs = 1e-9 * self.area_cm2
        return coulombs / (NA_IONS_PER_ATP * ELEMENTARY_CHARGE)


@dataclass(frozen=True)
class SynapseConfig:
    """Double-exponential conductance synapse, normalized to its peak."""

    tau_rise: float = 1.0     # ms
    tau_decay: float = 10.0   # ms
    e_syn: float = 0.0        # mV
    amp_sd_rel: float = 0.1   # relative sd of the peak amplitude

    def __post_init__(self):
        if not 0.0 < self.tau_rise < self.tau_decay:
            raise ValueError(
                f"need 0 < tau_rise < tau_decay, got {self.tau_rise}, "
                f"{self.tau_decay}")
        if self.amp_sd_rel < 0:
            raise ValueError("amp_sd_rel must be nonnegative")

    @property
    def t_peak(self):
        tr, td = self.tau_rise, self.tau_decay
        return tr * td / (td - tr) * math.log(td / tr)

    @property
    def peak_norm(self):
        """Scale making the conductance peak equal the amplitude."""
        tp = self.t_peak
        return 1.0 / (math.exp(-tp / self.tau_decay)
                      - math.exp(-tp / self.tau_rise))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1            # ms
    duration: float = 2000.0   # ms
    v_init: float = -75.0      # mV, fixed across cells
    threshold: float = -50.0   # mV, upward crossing counts a spike
    dead_time: float = 2.0     # ms, refractory for counting

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= self.dt:
            raise ValueError(
                f"need duration > dt > 0, got dt={self.dt}, "
                f"duration={self.duration}")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def dead_steps(self):
        return int(round(self.dead_time / self.dt))


@dataclass(frozen=True)
class TrialStats:
    """Moments and energy costs over a batch of trials."""

    mu_f: float          # mean spike count per input
    sigma2_f: float      # sample variance of the count
    eps_sig_atp: float   # mean synaptic Na charge in ATP
    eps_bg_atp: float    # mean background Na charge in ATP
    n_trials: int


@dataclass(frozen=True)
class CalibrationResult:
    gsyn_hat: float      # uS/cm^2 reaching the target activation
    stats: TrialStats    # full-size evaluation at gsyn_hat
    n_evaluations: int


@dataclass(frozen=True)
class CellRecord:
    """Per-cell sweep bookkeeping."""

    v_rest: float
    g_leak: float
    g_star: float      # deterministic spike threshold, uS/cm^2
    gsyn_hat: float    # calibrated weight at TARGET_ACTIVATION
    gsyn_lo: float     # band edge, activation ~ BAND_ACTIVATION_LO
    gsyn_hi: float     # band edge, activation ~ BAND_ACTIVATION_HI
    eps_sig_atp: float
    eps_bg_atp: float


@dataclass(frozen=True)
class SweepRow:
    v_rest: float
    g_leak: float
    g_syn: float
    mu_f: float
    sigma2_f: float
    eps_sig_atp: float
    eps_bg_atp: float
    n_trials: int
    valid: int          # 1 inside the activation band, else 0


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    cells: tuple
    root_seed: int
    n_trials: int


def _kernel_args(gsyn_us, membrane, synapse, sim):
    tab, p0_open, p0_close, w_relax, exp_neg = _kernel.rate_tables(
        sim.dt, membrane.n_sub_channels)
    return (tab, p0_open, p0_close, exp_neg, w_relax,
            sim.v_init, membrane.sub_open_at_rest,
            sim.n_steps, sim.dt, membrane.c_m,
            membrane.gbar_na, membrane.gbar_kdr,
            membrane.g_sub_single, membrane.n_sub_channels,
            membrane.g_leak, membrane.g_leak_na,
            membrane.e_na, membrane.e_k, membrane.e_leak_effective,
            synapse.e_syn,
            gsyn_us, synapse.amp_sd_rel, synapse.peak_norm,
            math.exp(-sim.dt / synapse.tau_rise),
            math.exp(-sim.dt / synapse.tau_decay),
            sim.threshold, sim.dead_steps)


def simulate_trial(seed, gsyn_us, membrane, synapse, sim,
                   stochastic=True, amp_noise=True, record=False):
    """Run one trial; returns (count, q_syn, q_bg, trace).

    trace is the voltage at every step boundary when record is True,
    else None. Raises RuntimeError if the integration diverges.
    """
    trace = np.empty(sim.n_steps + 1 if record else 1)
    count, q_syn, q_bg, diverged = _kernel.run_trial(
        int(seed), stochastic, amp_noise,
        *_kernel_args(float(gsyn_us), membrane, synapse, sim), trace)
    if diverged:
        raise RuntimeError(
            f"membrane potential diverged (seed={seed}, "
            f"gsyn={gsyn_us} uS/cm^2, v_rest={membrane.v_rest})")
    return count, q_syn, q_bg, (trace if record else None)


def estimate_stats(gsyn_us, seeds, membrane, synapse, sim,
                   stochastic=True, amp_noise=True):
    """Batch trials and summarize counts and sodium costs."""
    seeds = np.asarray(seeds, dtype=np.int64)
    n = seeds.size
    if n < 2:
        raise ValueError(f"need at least 2 trials, got {n}")
    counts = np.empty(n, dtype=np.int64)
    q_syn = np.empty(n)
    q_bg = np.empty(n)
    diverged = np.empty(n, dtype=np.bool_)
    _kernel.run_batch(seeds, stochastic, amp_noise,
                      *_kernel_args(float(gsyn_us), membrane, synapse, sim),
                      counts, q_syn, q_bg, diverged)
    if diverged.any():
        bad = seeds[diverged][0]
        raise RuntimeError(
            f"membrane potential diverged (seed={bad}, "
            f"gsyn={gsyn_us} uS/cm^2, v_rest={membrane.v_rest})")
    conv = membrane.atp_per_charge_unit
    return TrialStats(mu_f=float(counts.mean()),
                      sigma2_f=float(counts.var(ddof=1)),
                      eps_sig_atp=float(np.abs(q_syn).mean() * conv),
                      eps_bg_atp=float(np.abs(q_bg).mean() * conv),
                      n_trials=int(n))


def deterministic_threshold(membrane, synapse, sim, g_max=250.0,
                            n_bisect=48):
    """Smallest synaptic weight that fires the noise-free cell.

    Bisects spike count over (0, g_max] uS/cm^2 with channel and
    amplitude noise disabled.
    """

    def fires(g):
        count, _, _, _ = simulate_trial(0, g, membrane, synapse, sim,
                                        stochastic=False, amp_noise=False)
        return count >= 1

    if not fires(g_max):
        raise CalibrationError(
            f"no spike at g_max={g_max} uS/cm^2 "
            f"(v_rest={membrane.v_rest}, g_leak={membrane.g_leak})")
    lo, hi = 0.0, g_max
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if fires(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def activation_band(g_star, amp_sd_rel=0.1):
    """Model-predicted weights bracketing activations [0.2, 0.8].

    With relative amplitude sd r, a weight g spikes when the drawn
    amplitude exceeds g_star, so the activation is approximately
    Phi((1 - g_star/g) / r); inverting at the band quantiles gives the
    edges below. Channel noise and repeat spikes shift the real count
    curve, so measured_band refines these edges from data.
    """
    lo = g_star / (1.0 + BAND_QUANTILE * amp_sd_rel)
    hi = g_star / (1.0 - BAND_QUANTILE * amp_sd_rel)
    return lo, hi


def measured_band(g1, mu1, g2, mu2, g_star, amp_sd_rel=0.1):
    """Band edges read off a probit line through two measured anchors.

    The probit of the mean count is modelled as affine in 1/weight,
    the same map the calibration secant uses; the line through
    (g1, mu1) and (g2, mu2) is evaluated at the band activations 0.2
    and 0.8. Falls back to the amplitude-model band when the anchors
    cannot pin a decreasing line.
    """
    fallback = activation_band(g_star, amp_sd_rel)
    if not (math.isfinite(g1) and math.isfinite(g2)
            and math.isfinite(mu1) and math.isfinite(mu2)
            and 0.0 < g1 < g2 and mu1 < mu2):
        return fallback
    normal = statistics.NormalDist()
    clip = 1e-4
    z1 = normal.inv_cdf(min(max(mu1, clip), 1.0 - clip))
    z2 = normal.inv_cdf(min(max(mu2, clip), 1.0 - clip))
    slope = (z2 - z1) / (1.0 / g2 - 1.0 / g1)
    if not slope < 0.0:
        return fallback
    inv_lo = 1.0 / g1 + (normal.inv_cdf(BAND_ACTIVATION_LO) - z1) / slope
    inv_hi = 1.0 / g1 + (normal.inv_cdf(BAND_ACTIVATION_HI) - z1) / slope
    if not (inv_lo > 0.0 and inv_hi > 0.0 and inv_hi < inv_lo):
        return fallback
    return 1.0 / inv_lo, 1.0 / inv_hi


def gsyn_schedule(g_star, band=None, amp_sd_rel=0.1):
    """Per-cell probe weights and their in-band validity mask."""
    lo, hi = band if band is not None else activation_band(g_star,
                                                           amp_sd_rel)
    floor = min(GSYN_FLOOR_FRACTION * g_star, 0.9 * lo)
    below = np.linspace(floor, lo, N_GSYN_BELOW_BAND, endpoint=False)
    in_band = np.linspace(lo, hi, N_GSYN_IN_BAND)
    gsyn = np.concatenate([below, in_band])
    valid = np.concatenate([np.zeros(N_GSYN_BELOW_BAND, dtype=int),
                            np.ones(N_GSYN_IN_BAND, dtype=int)])
    return gsyn, valid


def trial_seeds(root_seed, cell_iv, cell_ig, block, n_trials):
    """Deterministic per-trial seeds for one (cell, block) slot."""
    ss = np.random.SeedSequence((root_seed, cell_iv, cell_ig, block))
    return ss.generate_state(n_trials, dtype=np.uint32).astype(np.int64)


def calibrate_gsyn(membrane, synapse, sim, seeds, g_star=None,
                   target=TARGET_ACTIVATION, tol=0.01, max_evals=12):
    """Find the weight whose activation probability hits the target.

    Every candidate weight is evaluated on the same seed array, so the
    empirical activation is a monotone function of the weight and a
    secant iteration in probit coordinates converges in a couple of
    evaluations: the amplitude-noise model predicts the probit of the
    activation to be nearly affine in 1/weight, and the first secant
    slope is taken from that model.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if target <= 0.0:
        stats = estimate_stats(0.0, seeds, membrane, synapse, sim)
        return CalibrationResult(gsyn_hat=0.0, stats=stats, n_evaluations=1)
    if g_star is None:
        g_star = deterministic_threshold(membrane, synapse, sim)
    normal = statistics.NormalDist()
    z_target = normal.inv_cdf(target)
    clamp = 0.5 / seeds.size

    def probit_at(g):
        stats = estimate_stats(g, seeds, membrane, synapse, sim)
        mu = min(max(stats.mu_f, clamp), 1.0 - clamp)
        return normal.inv_cdf(mu), stats

    r = synapse.amp_sd_rel if synapse.amp_sd_rel > 0 else 0.1
    g = g_star / (1.0 - r * z_target)
    slope = -g_star / r       # model slope of probit vs 1/weight
    z_prev = None
    g_prev = None
    history = []
    for n_eval in range(1, max_evals + 1):
        z, stats = probit_at(g)
        history.append((g, stats.mu_f))
        if abs(stats.mu_f - target) <= tol:
            return CalibrationResult(gsyn_hat=g, stats=stats,
                                     n_evaluations=n_eval)
        if z_prev is not None and abs(z - z_prev) > 1e-9:
            slope = (z - z_prev) / (1.0 / g - 1.0 / g_prev)
        z_prev, g_prev = z, g
        inv_g = 1.0 / g + (z_target - z) / slope
        if inv_g <= 0:
            inv_g = 1.0 / (1.5 * g)
        g = 1.0 / inv_g
        g = min(max(g, 0.3 * g_star), 2.0 * g_star)
    trail = ", ".join(f"mu({gv:.3f}) = {mv:.4f}" for gv, mv in history[-3:])
    raise CalibrationError(
        f"activation target {target} +- {tol} not reached in {max_evals} "
        f"evaluations on [{0.3 * g_star:.3f}, {2.0 * g_star:.3f}] "
        f"uS/cm^2: {trail}")


def sweep_grid(v_rest_values, g_leak_values, synapse=None, sim=None,
               n_trials=1000, root_seed=0, membrane_template=None):
    """Sweep the cell grid and measure activation statistics.

    For each (v_rest, g_leak) cell: locate the deterministic spike
    threshold, calibrate the weight to TARGET_ACTIVATION, then probe
    15 weights (5 below the activation band for the response map, 10
    inside it) with n_trials stochastic trials each.

    A cell whose calibration fails keeps its probe rows but records
    nan for the calibrated weight; a cell with no reachable threshold
    is skipped entirely. Returns a SweepResult; rows appear in
    (v_rest, g_leak, weight) order.
    """
    if len(v_rest_values) < 5 or len(g_leak_values) < 5:
        raise ValueError(
            f"need at least a 5x5 cell grid, got "
            f"{len(v_rest_values)}x{len(g_leak_values)}")
    synapse = synapse or SynapseConfig()
    sim = sim or SimConfig()
    membrane_template = membrane_template or MembraneConfig()
    rows = []
    cells = []
    for iv, v_rest in enumerate(v_rest_values):
        for ig, g_leak in enumerate(g_leak_values):
            membrane = MembraneConfig(
                v_rest=float(v_rest), g_leak=float(g_leak),
                c_m=membrane_template.c_m,
                gbar_na=membrane_template.gbar_na,
                gbar_kdr=membrane_template.gbar_kdr,
                g_sub_total=membrane_template.g_sub_total,
                e_na=membrane_template.e_na, e_k=membrane_template.e_k,
                soma_diameter_um=membrane_template.soma_diameter_um,
                soma_length_um=membrane_template.soma_length_um)
            try:
                g_star = deterministic_threshold(membrane, synapse, sim)
            except CalibrationError:
                continue
            cal_seeds = trial_seeds(root_seed, iv, ig, CALIBRATION_BLOCK,
                                    n_trials)
            try:
                cal = calibrate_gsyn(membrane, synapse, sim, cal_seeds,
                                     g_star=g_star)
                gsyn_hat = cal.gsyn_hat
                eps_sig = cal.stats.eps_sig_atp
                eps_bg = cal.stats.eps_bg_atp
                # second probit anchor near the middle of the count
                # curve, on the calibration seeds for common randomness
                star_stats = estimate_stats(g_star, cal_seeds, membrane,
                                            synapse, sim)
                lo, hi = measured_band(gsyn_hat, cal.stats.mu_f,
                                       g_star, star_stats.mu_f,
                                       g_star, synapse.amp_sd_rel)
            except CalibrationError:
                gsyn_hat = float("nan")
                eps_sig = float("nan")
                eps_bg = float("nan")
                lo, hi = activation_band(g_star, synapse.amp_sd_rel)
            cells.append(CellRecord(
                v_rest=float(v_rest), g_leak=float(g_leak), g_star=g_star,
                gsyn_hat=gsyn_hat, gsyn_lo=lo, gsyn_hi=hi,
                eps_sig_atp=eps_sig, eps_bg_atp=eps_bg))
            gsyn, valid = gsyn_schedule(g_star, band=(lo, hi))
            for k, (g, flag) in enumerate(zip(gsyn, valid)):
                stats = estimate_stats(
                    g, trial_seeds(root_seed, iv, ig, k, n_trials),
                    membrane, synapse, sim)
                rows.append(SweepRow(
                    v_rest=float(v_rest), g_leak=float(g_leak),
                    g_syn=float(g), mu_f=stats.mu_f,
                    sigma2_f=stats.sigma2_f,
                    eps_sig_atp=stats.eps_sig_atp,
                    eps_bg_atp=stats.eps_bg_atp,
                    n_trials=stats.n_trials, valid=int(flag)))
    return SweepResult(rows=tuple(rows), cells=tuple(cells),
                       root_seed=int(root_seed), n_trials=int(n_trials))


def spike_train_moments(lambda_rate, duration, stats):
    """Window count moments for Poisson inputs with per-input counts.

    With K ~ Poisson(lambda_rate * duration) input spikes, each
    contributing an iid output count F with moments from stats, the
    window count O = sum F_i has mean lambda*T*E[F] and variance
    lambda*T*E[F^2].

    Returns (mean, variance, fano); fano is nan at zero mean.
    """
    if lambda_rate * duration <= 0:
        raise ValueError(
            f"need lambda_rate * duration > 0, got "
            f"{lambda_rate} * {duration}")
    lam_t = lambda_rate * duration
    mean = lam_t * stats.mu_f
    var = lam_t * (stats.sigma2_f + stats.mu_f ** 2)
    fano = var / mean if mean > 0 else float("nan")
    return mean, var, fano
