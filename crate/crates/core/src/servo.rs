//! Dual-band phase stabilization, laser-frequency pre-compensation and timing alignment.
//!
//! The fast loop locks the λc interference (seen through the count rate of a reference
//! detector Dc) at mid-fringe by driving a phase modulator every 10 µs. Because the fiber
//! phase at λq is λc/λq times the one at λc, locking λc slows the λq drift by
//! λc/|λc−λq|. The slow loop then nulls the remaining λq drift at 1 kHz with a fiber stretcher,
//! using reference pulses at λq.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, regression_slope, rms, shape_moments, std_dev, wrap_pi};
use crate::optics::{ChannelPhaseState, NoiseModel, PhaseStepper};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

/// Reference gains from [`relay_autotune`] on the noiseless loop plant.
pub const REFERENCE_GAINS: PidGains = PidGains { kp: 0.796, ki: 0.181, kd: 0.0 };

/// Loop timing, count rates, gains and actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub fast_interval_us: f64,
    pub fast_rate_hz: f64,
    pub slow_rate_hz: f64,
    /// Dc count rate at the mid-fringe set point (half the fringe maximum).
    pub dc_target_counts_hz: f64,
    pub dc_visibility: f64,
    /// λq reference count rate at the slow loop's set point.
    pub ref_counts_hz: f64,
    pub fast_gains: PidGains,
    pub slow_gains: PidGains,
    pub pm_range_rad: f64,
    pub fs_range_rad: f64,
    /// Largest stretcher move per slow step; larger requests saturate.
    pub fs_max_step_rad: f64,
    pub fs_blanking_s: f64,
    pub timing_gain: f64,
    pub timing_arrivals_per_s: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            fast_interval_us: 10.0,
            fast_rate_hz: 1e5,
            slow_rate_hz: 1e3,
            dc_target_counts_hz: 6e6,
            dc_visibility: 0.98,
            ref_counts_hz: 3e5,
            fast_gains: REFERENCE_GAINS,
            slow_gains: REFERENCE_GAINS,
            pm_range_rad: TAU,
            fs_range_rad: 40.0,
            fs_max_step_rad: 0.5,
            fs_blanking_s: 1e-3,
            timing_gain: 1.0,
            timing_arrivals_per_s: 100.0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = [
            ("fast_interval_us", self.fast_interval_us),
            ("fast_rate_hz", self.fast_rate_hz),
            ("slow_rate_hz", self.slow_rate_hz),
            ("pm_range_rad", self.pm_range_rad),
            ("fs_range_rad", self.fs_range_rad),
            ("fs_max_step_rad", self.fs_max_step_rad),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("dc_target_counts_hz", self.dc_target_counts_hz),
            ("ref_counts_hz", self.ref_counts_hz),
            ("fs_blanking_s", self.fs_blanking_s),
            ("timing_gain", self.timing_gain),
            ("timing_arrivals_per_s", self.timing_arrivals_per_s),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.dc_visibility > 0.0 && self.dc_visibility <= 1.0) {
            return Err(Error::config(format!("{path}.dc_visibility"), "must lie in (0, 1]"));
        }
        if (self.fast_rate_hz * self.fast_interval_us * 1e-6 - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("{path}.fast_rate_hz"), "must equal 1 / fast_interval_us"));
        }
        let ratio = self.fast_rate_hz / self.slow_rate_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::config(format!("{path}.slow_rate_hz"), "must divide the fast rate"));
        }
        for (name, g) in [("fast_gains", self.fast_gains), ("slow_gains", self.slow_gains)] {
            if !(g.kp.is_finite() && g.ki.is_finite() && g.kd.is_finite()) {
                return Err(Error::config(format!("{path}.{name}"), "gains must be finite"));
            }
        }
        Ok(())
    }

    pub fn fast_dt(&self) -> f64 {
        self.fast_interval_us * 1e-6
    }

    fn fast_per_slow(&self) -> usize {
        (self.fast_rate_hz / self.slow_rate_hz).round() as usize
    }

    fn dc_counts_per_bin(&self) -> f64 {
        self.dc_target_counts_hz * self.fast_dt()
    }
}

/// Positional PID with integral accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub last_error: Option<f64>,
}

impl PidState {
    pub fn update(&mut self, g: &PidGains, e: f64) -> f64 {
        self.integral += e;
        let d = self.last_error.map_or(0.0, |l| e - l);
        self.last_error = Some(e);
        g.kp * e + g.ki * self.integral + g.kd * d
    }
}

/// Phase error inferred from a mid-fringe count: asin((n − n̄)/(n̄·V)).
pub fn fringe_error(counts: f64, set_point: f64, visibility: f64) -> f64 {
    if set_point <= 0.0 {
        return 0.0;
    }
    ((counts - set_point) / (set_point * visibility)).clamp(-1.0, 1.0).asin()
}

/// Fast λc loop driving the phase modulator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FastLoop {
    pub pid: PidState,
    /// Current modulator phase, kept within ±range/2.
    pub pm: f64,
    pub wraps: u64,
}

impl FastLoop {
    /// One 10 µs update from the Dc counts of the bin; returns the new modulator phase.
    pub fn step(&mut self, dc_counts: f64, cfg: &LoopConfig) -> f64 {
        let e = fringe_error(dc_counts, cfg.dc_counts_per_bin(), cfg.dc_visibility);
        let u = self.pid.update(&cfg.fast_gains, e);
        self.pm -= u;
        let half = cfg.pm_range_rad / 2.0;
        while self.pm > half {
            self.pm -= TAU;
            self.wraps += 1;
        }
        while self.pm < -half {
            self.pm += TAU;
            self.wraps += 1;
        }
        self.pm
    }
}

/// Slow λq loop driving the fiber stretcher.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlowLoop {
    pub pid: PidState,
    pub fs: f64,
    pub blanking_left_s: f64,
    pub resets: u64,
    pub saturated: bool,
    pub saturated_steps: u64,
}

impl SlowLoop {
    /// One slow update from the reference counts of the bin; returns the stretcher phase.
    pub fn step(&mut self, ref_counts: f64, cfg: &LoopConfig) -> f64 {
        let dt = 1.0 / cfg.slow_rate_hz;
        if self.blanking_left_s > 0.0 {
            self.blanking_left_s -= dt;
            return self.fs;
        }
        let set = cfg.ref_counts_hz * dt;
        let e = fringe_error(ref_counts, set, 1.0);
        let u = self.pid.update(&cfg.slow_gains, e);
        self.saturated = u.abs() > cfg.fs_max_step_rad;
        if self.saturated {
            self.saturated_steps += 1;
        }
        self.fs -= u.clamp(-cfg.fs_max_step_rad, cfg.fs_max_step_rad);
        if self.fs.abs() > cfg.fs_range_rad / 2.0 {
            // reset by whole fringes so the lock point is kept
            self.fs -= TAU * (self.fs / TAU).round();
            self.resets += 1;
            self.blanking_left_s = cfg.fs_blanking_s;
        }
        self.fs
    }

    pub fn blanking(&self) -> bool {
        self.blanking_left_s > 0.0
    }
}

/// Frequency offset (Hz) from a modulator-correction history sampled every `dt` seconds: the
/// regression slope of the unwrapped series over 2π.
pub fn frequency_readout(history: &[f64], dt: f64) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 2", history.len())));
    }
    let mut unwrapped = Vec::with_capacity(history.len());
    let mut acc = history[0];
    unwrapped.push(acc);
    for w in history.windows(2) {
        acc += wrap_pi(w[1] - w[0]);
        unwrapped.push(acc);
    }
    Ok(regression_slope(&unwrapped, dt) / TAU)
}

/// AOM frequency shift that cancels the expected linear laser drift at time `t` (s).
pub fn aom_precompensation(t: f64, noise: &NoiseModel) -> f64 {
    -noise.laser_drift_hz_per_hour * t / 3600.0
}

/// Residual laser offset (Hz) sampled every minute over `hours` with the AOM
/// pre-compensation applied, when the true drift is linear plus a bounded wander.
pub fn simulate_frequency_compensation(hours: f64, wander_hz: f64, noise: &NoiseModel, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step: f64 = 60.0;
    let tau = 3600.0;
    let a = (-step / tau).exp();
    let sd = 0.5 * wander_hz * (1.0 - a * a).sqrt();
    let mut wander: f64 = 0.0;
    let n = (hours * 3600.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 * step;
            let truth = noise.laser_drift_hz_per_hour * t / 3600.0 + wander;
            let z: f64 = StandardNormal.sample(&mut rng);
            wander = (a * wander + sd * z).clamp(-wander_hz, wander_hz);
            (t, truth + aom_precompensation(t, noise))
        })
        .collect()
}

/// Result of one timing-loop update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingUpdate {
    pub delays_ps: [f64; 2],
    pub gap: bool,
}

/// Recenters both arms' arrivals on the common grid from their centroid.
pub fn timing_loop_step(arrivals_a: &[f64], arrivals_b: &[f64], delays_ps: [f64; 2], gain: f64) -> TimingUpdate {
    if arrivals_a.is_empty() || arrivals_b.is_empty() {
        return TimingUpdate { delays_ps, gap: true };
    }
    TimingUpdate {
        delays_ps: [delays_ps[0] - gain * mean(arrivals_a), delays_ps[1] - gain * mean(arrivals_b)],
        gap: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub residual_std_ps: f64,
    pub max_abs_ps: f64,
    pub gaps: u64,
}

/// One-second timing loop under a diurnal delay swing of `noise.diurnal_delay_ns` per arm.
pub fn simulate_timing(duration_s: f64, noise: &NoiseModel, cfg: &LoopConfig, seed: u64) -> TimingSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.timing_jitter_ps.max(1e-12)).expect("finite jitter");
    let arrivals = Poisson::new(cfg.timing_arrivals_per_s.max(1e-9)).expect("positive rate");
    let amp = noise.diurnal_delay_ns * 1e3;
    let drift = |t: f64, phase: f64| amp * (TAU * t / 86_400.0 + phase).sin();
    let phases = [0.0, 2.1];
    let mut delays = [-drift(0.0, phases[0]), -drift(0.0, phases[1])];
    let mut residuals = Vec::new();
    let mut gaps = 0;
    let steps = duration_s.floor() as u64;
    for k in 1..=steps {
        let t = k as f64;
        let offsets = [drift(t, phases[0]) + delays[0], drift(t, phases[1]) + delays[1]];
        residuals.push(offsets[0] - offsets[1]);
        let mut sample = |off: f64| -> Vec<f64> {
            let n = arrivals.sample(&mut rng) as usize;
            (0..n).map(|_| off + jitter.sample(&mut rng)).collect()
        };
        let (a, b) = (sample(offsets[0]), sample(offsets[1]));
        let upd = timing_loop_step(&a, &b, delays, cfg.timing_gain);
        gaps += upd.gap as u64;
        delays = upd.delays_ps;
    }
    TimingSummary {
        residual_std_ps: std_dev(&residuals),
        max_abs_ps: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        gaps,
    }
}

/// Relay-feedback tuning: drives `plant` (actuator increment → next error measurement) with a
/// ±`relay` relay for `steps` steps, reads the limit cycle's amplitude and period and returns
/// Tyreus–Luyben PI gains per loop step.
pub fn relay_autotune(mut plant: impl FnMut(f64) -> f64, relay: f64, steps: usize) -> Result<PidGains> {
    let mut e = plant(0.0);
    let mut crossings = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let settle = steps / 2;
    let mut last_sign = e >= 0.0;
    for k in 0..steps {
        let u = if e >= 0.0 { relay } else { -relay };
        e = plant(u);
        let sign = e >= 0.0;
        if k >= settle {
            lo = lo.min(e);
            hi = hi.max(e);
            if sign != last_sign {
                crossings.push(k);
            }
        }
        last_sign = sign;
    }
    if crossings.len() < 3 || !(hi > lo) {
        return Err(Error::InsufficientData("relay experiment produced no limit cycle".into()));
    }
    let a = 0.5 * (hi - lo);
    let period = 2.0 * (crossings[crossings.len() - 1] - crossings[0]) as f64 / (crossings.len() - 1) as f64;
    let ku = 4.0 * relay / (PI * a);
    let kp = ku / 3.2;
    Ok(PidGains { kp, ki: kp / (2.2 * period), kd: 0.0 })
}

/// The loop plant in discrete form: the actuator integrates the correction and the next bin
/// measures the phase it leaves behind.
pub fn noiseless_plant(initial_error: f64) -> impl FnMut(f64) -> f64 {
    let mut phase = initial_error;
    move |u| {
        phase -= u;
        phase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stages {
    None,
    FastOnly,
    #[default]
    Full,
}

impl Stages {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stages::None => "none",
            Stages::FastOnly => "fast-only",
            Stages::Full => "full",
        }
    }
}

impl std::str::FromStr for Stages {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Stages::None),
            "fast-only" | "fastOnly" | "fast" => Ok(Stages::FastOnly),
            "full" => Ok(Stages::Full),
            other => Err(Error::config("stages", format!("expected none, fast-only or full, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationSummary {
    pub duration_s: f64,
    pub stages: Stages,
    /// Drift-rate RMS of the uncorrected λq phase (rad/s).
    pub free_drift_std_rad_per_s: f64,
    /// Drift-rate RMS of the corrected λq phase (rad/s).
    pub fast_locked_drift_std_rad_per_s: f64,
    /// λc phase error inferred from Dc counts, as a time tagger would see it.
    pub residual_c_rad: f64,
    pub residual_c_true_rad: f64,
    /// Std of the wrapped corrected λq phase.
    pub residual_q_rad: f64,
    pub residual_q_skewness: f64,
    pub residual_q_excess_kurtosis: f64,
    pub reduction_factor: f64,
    pub freq_readout_hz: f64,
    pub pm_wraps: u64,
    pub fs_resets: u64,
    pub saturated_steps: u64,
    pub blanked_fraction: f64,
}

impl StabilizationSummary {
    pub fn write(&self, r: &mut Report) {
        r.section("stabilization");
        r.real("duration_s", self.duration_s)
            .text("stages", self.stages.as_str())
            .real("free_drift_std_rad_per_s", self.free_drift_std_rad_per_s)
            .real("locked_drift_std_rad_per_s", self.fast_locked_drift_std_rad_per_s)
            .real("reduction_factor", self.reduction_factor)
            .real("residual_phase_c_rad", self.residual_c_rad)
            .real("residual_phase_c_true_rad", self.residual_c_true_rad)
            .real("residual_phase_q_rad", self.residual_q_rad)
            .real("residual_q_skewness", self.residual_q_skewness)
            .real("residual_q_excess_kurtosis", self.residual_q_excess_kurtosis)
            .real("freq_readout_hz", self.freq_readout_hz)
            .int("pm_wraps", self.pm_wraps)
            .int("fs_resets", self.fs_resets)
            .int("saturated_steps", self.saturated_steps)
            .real("blanked_fraction", self.blanked_fraction);
    }
}

/// One decimated sample of the servo time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t_s: f64,
    pub phi_c_rad: f64,
    pub phi_q_rad: f64,
    pub pm_rad: f64,
    pub fs_rad: f64,
    pub dc_counts: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationRun {
    pub summary: StabilizationSummary,
    pub series: Vec<SeriesRow>,
}

impl StabilizationRun {
    /// Delimited text with a header line.
    pub fn series_text(&self) -> String {
        let mut s = String::from("t_s,phiC_rad,phiQ_rad,pm_rad,fs_rad,dc_counts\n");
        for r in &self.series {
            s.push_str(&format!(
                "{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.t_s, r.phi_c_rad, r.phi_q_rad, r.pm_rad, r.fs_rad, r.dc_counts
            ));
        }
        s
    }
}

/// Drift-rate statistic: every 1 ms, the change of the 5 ms moving average of a
/// continuity-unwrapped phase, divided by 1 ms. Fed with the per-millisecond means of the
/// phase.
#[derive(Debug, Default)]
struct DriftRateEstimator {
    block_means: Vec<f64>,
}

const MA_BLOCKS: usize = 5;

impl DriftRateEstimator {
    fn push(&mut self, block_mean: f64) {
        self.block_means.push(block_mean);
    }

    fn rates(&self, skip_blocks: usize, block_s: f64) -> Vec<f64> {
        let b = &self.block_means;
        (skip_blocks.max(MA_BLOCKS)..b.len())
            .map(|k| (b[k] - b[k - MA_BLOCKS]) / (MA_BLOCKS as f64 * block_s))
            .collect()
    }
}

/// Continuity unwrapping of an observable known only modulo 2π.
#[derive(Debug, Default)]
struct Unwrapper {
    last: Option<f64>,
    value: f64,
}

impl Unwrapper {
    fn push(&mut self, x: f64) -> f64 {
        match self.last {
            None => self.value = x,
            Some(l) => self.value += wrap_pi(x - l),
        }
        self.last = Some(x);
        self.value
    }
}

/// Simulates the stabilization chain for `duration_s` seconds.
///
/// The λc phase seen by Dc is φc + PM; the λq phase is (λc/λq)(φc,fiber + PM) plus the common
/// laser term, the clock floor and the stretcher FS. Time-series rows are kept every
/// `decimation` fast steps (0 keeps none).
pub fn run_stabilization(
    duration_s: f64,
    noise: &NoiseModel,
    cfg: &LoopConfig,
    stages: Stages,
    seed: u64,
    decimation: usize,
) -> Result<StabilizationRun> {
    noise.validate("noise")?;
    cfg.validate("servo")?;
    let dt = cfg.fast_dt();
    let steps = (duration_s / dt).round() as usize;
    let per_slow = cfg.fast_per_slow();
    if steps < 10_000 {
        return Err(Error::InsufficientData(format!(
            "{steps} fast-loop cycles; at least 10000 are needed for stable statistics"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stepper = PhaseStepper::new(noise, dt);
    let mut state = ChannelPhaseState::stationary(noise, &mut rng);
    let ratio = noise.wavelength_ratio();
    let nset = cfg.dc_counts_per_bin();
    let ref_per_bin = cfg.ref_counts_hz / cfg.slow_rate_hz;
    let vq = noise.effective_visibility();

    let mut fast = FastLoop::default();
    let mut slow = SlowLoop::default();
    let mut free_est = DriftRateEstimator::default();
    let mut locked_est = DriftRateEstimator::default();
    let mut unwrap_q = Unwrapper::default();
    let (mut free_acc, mut locked_acc) = (0.0, 0.0);
    let mut sin_acc = 0.0;
    let mut blanked_steps = 0usize;
    // readout samples every 0.1 ms keep the per-sample phase advance below π up to ±5 kHz
    let readout_every = (per_slow / 10).max(1);
    let mut pm_history = Vec::with_capacity(steps / readout_every + 1);

    let settle = (steps / 5).min((0.5 / dt) as usize);
    let mut res_c_meas = Vec::new();
    let mut res_c_true = Vec::new();
    let mut res_q = Vec::new();
    let mut series = Vec::new();

    for i in 0..steps {
        stepper.step(&mut state, &mut rng);
        let theta_c = state.phi_c + fast.pm;
        let theta_q = state.phi_q + ratio * fast.pm + slow.fs;

        let lam = nset * (1.0 + cfg.dc_visibility * theta_c.sin());
        let counts = if lam > 0.0 {
            Poisson::new(lam).expect("positive rate").sample(&mut rng)
        } else {
            0.0
        };

        if i >= settle {
            res_c_meas.push(fringe_error(counts, nset, cfg.dc_visibility));
            res_c_true.push(wrap_pi(theta_c));
            res_q.push(wrap_pi(theta_q));
        }
        if decimation > 0 && i % decimation == 0 {
            series.push(SeriesRow {
                t_s: i as f64 * dt,
                phi_c_rad: theta_c.rem_euclid(TAU),
                phi_q_rad: theta_q.rem_euclid(TAU),
                pm_rad: fast.pm,
                fs_rad: slow.fs,
                dc_counts: counts,
            });
        }

        free_acc += state.phi_q;
        locked_acc += unwrap_q.push(theta_q.rem_euclid(TAU));
        sin_acc += theta_q.sin();
        if slow.blanking() {
            blanked_steps += 1;
        }

        if stages != Stages::None {
            fast.step(counts, cfg);
        }
        if (i + 1) % readout_every == 0 {
            pm_history.push(-fast.pm);
        }
        if (i + 1) % per_slow == 0 {
            free_est.push(free_acc / per_slow as f64);
            locked_est.push(locked_acc / per_slow as f64);
            if stages == Stages::Full {
                let m = sin_acc / per_slow as f64;
                let lam = ref_per_bin * (1.0 + vq * m);
                let c = if lam > 0.0 {
                    Poisson::new(lam).expect("positive rate").sample(&mut rng)
                } else {
                    0.0
                };
                slow.step(c, cfg);
            }
            free_acc = 0.0;
            locked_acc = 0.0;
            sin_acc = 0.0;
        }
    }

    let block_s = per_slow as f64 * dt;
    let skip = settle / per_slow;
    let free = rms(&free_est.rates(skip, block_s));
    let locked = rms(&locked_est.rates(skip, block_s));
    let (skew, kurt) = shape_moments(&res_q);
    let summary = StabilizationSummary {
        duration_s,
        stages,
        free_drift_std_rad_per_s: free,
        fast_locked_drift_std_rad_per_s: locked,
        residual_c_rad: std_dev(&res_c_meas),
        residual_c_true_rad: std_dev(&res_c_true),
        residual_q_rad: std_dev(&res_q),
        residual_q_skewness: skew,
        residual_q_excess_kurtosis: kurt,
        reduction_factor: if locked > 0.0 { free / locked } else { f64::INFINITY },
        freq_readout_hz: {
            let first = (settle / readout_every).min(pm_history.len().saturating_sub(2));
            frequency_readout(&pm_history[first..], readout_every as f64 * dt)?
        },
        pm_wraps: fast.wraps,
        fs_resets: slow.resets,
        saturated_steps: slow.saturated_steps,
        blanked_fraction: blanked_steps as f64 / steps as f64,
    };
    Ok(StabilizationRun { summary, series })
}
