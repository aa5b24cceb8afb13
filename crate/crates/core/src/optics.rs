//! Physical layer: link and detector models, interference click probabilities and the
//! drifting differential phase of the two fiber arms.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    D0,
    D1,
}

impl Detector {
    pub fn index(self) -> usize {
        match self {
            Detector::D0 => 0,
            Detector::D1 => 1,
        }
    }
}

/// Fiber arms from each sender to the relay.
///
/// A measured arm loss, when present, replaces `len·atten` for that arm; the length then only
/// labels the sweep axis. Extra losses model the relay's own components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub len_alice_km: f64,
    pub len_bob_km: f64,
    pub atten_db_per_km: f64,
    pub extra_loss_alice_db: f64,
    pub extra_loss_bob_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_loss_alice_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_loss_bob_db: Option<f64>,
}

impl LinkConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let fields = [
            ("len_alice_km", Some(self.len_alice_km)),
            ("len_bob_km", Some(self.len_bob_km)),
            ("atten_db_per_km", Some(self.atten_db_per_km)),
            ("extra_loss_alice_db", Some(self.extra_loss_alice_db)),
            ("extra_loss_bob_db", Some(self.extra_loss_bob_db)),
            ("measured_loss_alice_db", self.measured_loss_alice_db),
            ("measured_loss_bob_db", self.measured_loss_bob_db),
        ];
        for (name, v) in fields {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(format!("{path}.{name}"), format!("must be finite and nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Fiber-only loss of one arm (dB).
    pub fn fiber_loss_db(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Alice => self
                .measured_loss_alice_db
                .unwrap_or(self.len_alice_km * self.atten_db_per_km),
            Arm::Bob => self
                .measured_loss_bob_db
                .unwrap_or(self.len_bob_km * self.atten_db_per_km),
        }
    }

    /// Fiber plus relay-component loss of one arm (dB).
    pub fn arm_loss_db(&self, arm: Arm) -> f64 {
        self.fiber_loss_db(arm)
            + match arm {
                Arm::Alice => self.extra_loss_alice_db,
                Arm::Bob => self.extra_loss_bob_db,
            }
    }

    /// Sender-to-sender fiber loss, the channel the repeaterless bound refers to.
    pub fn channel_loss_db(&self) -> f64 {
        self.fiber_loss_db(Arm::Alice) + self.fiber_loss_db(Arm::Bob)
    }

    pub fn total_length_km(&self) -> f64 {
        self.len_alice_km + self.len_bob_km
    }
}

/// Threshold detectors at the relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub eff_d0: f64,
    pub eff_d1: f64,
    pub dark_d0_hz: f64,
    pub dark_d1_hz: f64,
    pub window_ns: f64,
}

impl DetectorModel {
    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, e) in [("eff_d0", self.eff_d0), ("eff_d1", self.eff_d1)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config(format!("{path}.{name}"), format!("efficiency must lie in [0, 1], got {e}")));
            }
        }
        for (name, v) in [
            ("dark_d0_hz", self.dark_d0_hz),
            ("dark_d1_hz", self.dark_d1_hz),
            ("window_ns", self.window_ns),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must be finite and nonnegative, got {v}")));
            }
        }
        for det in [Detector::D0, Detector::D1] {
            let pd = self.dark_probability(det);
            if pd >= 1e-3 {
                return Err(Error::config(
                    format!("{path}.window_ns"),
                    format!("dark probability per window {pd:.3e} must stay below 1e-3"),
                ));
            }
        }
        Ok(())
    }

    pub fn efficiency(&self, det: Detector) -> f64 {
        match det {
            Detector::D0 => self.eff_d0,
            Detector::D1 => self.eff_d1,
        }
    }

    /// Dark-count probability per detection window.
    pub fn dark_probability(&self, det: Detector) -> f64 {
        let hz = match det {
            Detector::D0 => self.dark_d0_hz,
            Detector::D1 => self.dark_d1_hz,
        };
        hz * self.window_ns * 1e-9
    }
}

/// Phase-drift, laser, clock and interference parameters.
///
/// The λc fiber phase is an integrated Ornstein–Uhlenbeck velocity with correlation time
/// `drift_correlation_s`; its amplitude is set so that 1 ms point differences have rate std
/// `free_drift_rate_std` (rad/s). `residual_phase_std_rad` is the locked λq phase error seen
/// by the quantum windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub free_drift_rate_std: f64,
    pub drift_correlation_s: f64,
    pub laser_drift_hz_per_hour: f64,
    pub initial_freq_offset_hz: f64,
    pub clock_accuracy: f64,
    pub comb_span_ghz: f64,
    pub lambda_q_nm: f64,
    pub lambda_c_nm: f64,
    pub visibility: f64,
    pub residual_phase_std_rad: f64,
    pub timing_jitter_ps: f64,
    pub pulse_width_ps: f64,
    pub diurnal_delay_ns: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            free_drift_rate_std: TAU * 2.63e3,
            drift_correlation_s: 0.05,
            laser_drift_hz_per_hour: 1777.0,
            initial_freq_offset_hz: 0.0,
            clock_accuracy: 5e-11,
            comb_span_ghz: 100.0,
            lambda_q_nm: 1550.495,
            lambda_c_nm: 1549.694,
            visibility: 0.9795,
            residual_phase_std_rad: 0.20,
            timing_jitter_ps: 8.4,
            pulse_width_ps: 300.0,
            diurnal_delay_ns: 20.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self, path: &str) -> Result<()> {
        let fields = [
            ("free_drift_rate_std", self.free_drift_rate_std),
            ("laser_drift_hz_per_hour", self.laser_drift_hz_per_hour),
            ("clock_accuracy", self.clock_accuracy),
            ("comb_span_ghz", self.comb_span_ghz),
            ("lambda_q_nm", self.lambda_q_nm),
            ("lambda_c_nm", self.lambda_c_nm),
            ("visibility", self.visibility),
            ("residual_phase_std_rad", self.residual_phase_std_rad),
            ("timing_jitter_ps", self.timing_jitter_ps),
            ("diurnal_delay_ns", self.diurnal_delay_ns),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must be finite and nonnegative, got {v}")));
            }
        }
        if self.visibility > 1.0 {
            return Err(Error::config(format!("{path}.visibility"), "must not exceed 1"));
        }
        if !(self.drift_correlation_s > 0.0) {
            return Err(Error::config(format!("{path}.drift_correlation_s"), "must be positive"));
        }
        if !(self.pulse_width_ps > 0.0) {
            return Err(Error::config(format!("{path}.pulse_width_ps"), "must be positive"));
        }
        if !self.initial_freq_offset_hz.is_finite() {
            return Err(Error::config(format!("{path}.initial_freq_offset_hz"), "must be finite"));
        }
        Ok(())
    }

    /// λc/λq, the factor by which a fiber phase at λc maps onto λq.
    pub fn wavelength_ratio(&self) -> f64 {
        self.lambda_c_nm / self.lambda_q_nm
    }

    /// Interference visibility including the timing-jitter overlap penalty.
    pub fn effective_visibility(&self) -> f64 {
        self.visibility * timing_overlap_visibility(self.timing_jitter_ps, self.pulse_width_ps)
    }

    /// Deterministic λq drift from two independent clocks referencing the comb span (rad/s).
    pub fn clock_floor_rad_per_s(&self) -> f64 {
        TAU * std::f64::consts::SQRT_2 * self.clock_accuracy * self.comb_span_ghz * 1e9
    }

    /// OU velocity amplitude σv so that 1 ms point differences have the configured rate std.
    pub fn drift_velocity_std(&self) -> f64 {
        let x = DRIFT_RATE_INTERVAL_S / self.drift_correlation_s;
        let shape = (2.0 * (x - 1.0 + (-x).exp())).sqrt() / x;
        self.free_drift_rate_std / shape
    }
}

/// Differencing interval defining the drift-rate statistic.
pub const DRIFT_RATE_INTERVAL_S: f64 = 1e-3;

/// Differential phases of the two arms at λq and λc, plus laser and timing offsets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelPhaseState {
    /// Unwrapped λq differential phase (rad).
    pub phi_q: f64,
    /// Unwrapped λc differential phase (rad).
    pub phi_c: f64,
    /// Fiber phase velocity at λc (rad/s), the state of the drift process.
    pub drift_velocity: f64,
    pub freq_offset_hz: f64,
    pub time_offsets_ps: [f64; 2],
}

impl ChannelPhaseState {
    /// Starts from zero phase with the velocity drawn from its stationary law.
    pub fn stationary<R: Rng + ?Sized>(noise: &NoiseModel, rng: &mut R) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        ChannelPhaseState {
            drift_velocity: noise.drift_velocity_std() * z,
            freq_offset_hz: noise.initial_freq_offset_hz,
            ..Default::default()
        }
    }

    pub fn phi_q_wrapped(&self) -> f64 {
        self.phi_q.rem_euclid(TAU)
    }

    pub fn phi_c_wrapped(&self) -> f64 {
        self.phi_c.rem_euclid(TAU)
    }
}

/// Exact discretization of the integrated OU drift for a fixed step, cached so the servo loop
/// does not recompute exponentials every 10 µs.
#[derive(Debug, Clone)]
pub struct PhaseStepper {
    dt: f64,
    ratio: f64,
    clock_rate: f64,
    laser_slope_hz_per_s: f64,
    decay: f64,
    v_to_x: f64,
    v_sd: f64,
    x_on_v: f64,
    x_sd: f64,
}

impl PhaseStepper {
    pub fn new(noise: &NoiseModel, dt: f64) -> Self {
        let tau = noise.drift_correlation_s;
        let sigma = noise.drift_velocity_std();
        let decay = (-dt / tau).exp();
        let om = -(-dt / tau).exp_m1();
        let var_v = sigma * sigma * (1.0 - decay * decay);
        let kappa = sigma * sigma * tau * om * om;
        let var_x = 2.0 * sigma * sigma * tau * tau * (dt / tau - 2.0 * om + 0.5 * (1.0 - decay * decay));
        let x_on_v = if var_v > 0.0 { kappa / var_v } else { 0.0 };
        let cond = if var_v > 0.0 { var_x - kappa * kappa / var_v } else { var_x };
        PhaseStepper {
            dt,
            ratio: noise.wavelength_ratio(),
            clock_rate: noise.clock_floor_rad_per_s(),
            laser_slope_hz_per_s: noise.laser_drift_hz_per_hour / 3600.0,
            decay,
            v_to_x: tau * om,
            v_sd: var_v.max(0.0).sqrt(),
            x_on_v,
            x_sd: cond.max(0.0).sqrt(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances the state by one step; returns the λc fiber-phase increment.
    pub fn step<R: Rng + ?Sized>(&self, s: &mut ChannelPhaseState, rng: &mut R) -> f64 {
        let dfiber = if self.v_sd > 0.0 || self.x_sd > 0.0 {
            let nv: f64 = StandardNormal.sample(rng);
            let nx: f64 = StandardNormal.sample(rng);
            let dv = self.v_sd * nv;
            let dx = s.drift_velocity * self.v_to_x + self.x_on_v * dv + self.x_sd * nx;
            s.drift_velocity = s.drift_velocity * self.decay + dv;
            dx
        } else {
            s.drift_velocity *= self.decay;
            0.0
        };
        // laser offset integrated exactly over the linear frequency ramp
        let laser = TAU * (s.freq_offset_hz + 0.5 * self.laser_slope_hz_per_s * self.dt) * self.dt;
        s.phi_c += dfiber + laser;
        s.phi_q += self.ratio * dfiber + laser + self.clock_rate * self.dt;
        s.freq_offset_hz += self.laser_slope_hz_per_s * self.dt;
        dfiber
    }
}

/// One stochastic step of the channel phase.
pub fn phase_step<R: Rng + ?Sized>(
    state: &ChannelPhaseState,
    dt: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> ChannelPhaseState {
    let mut next = *state;
    PhaseStepper::new(noise, dt).step(&mut next, rng);
    next
}

/// Overall transmittance from a sender to one detector, including its efficiency.
pub fn arm_transmittance(link: &LinkConfig, arm: Arm, det: &DetectorModel, detector: Detector) -> f64 {
    10f64.powf(-link.arm_loss_db(arm) / 10.0) * det.efficiency(detector)
}

/// Mean photon numbers at the two output ports for coherent inputs of arriving means `mu_a`,
/// `mu_b` and relative phase `delta`.
pub fn port_means(mu_a: f64, mu_b: f64, delta: f64, v: f64) -> (f64, f64) {
    let mean = 0.5 * (mu_a + mu_b);
    let cross = v * (mu_a * mu_b).sqrt() * delta.cos();
    (mean + cross, mean - cross)
}

/// Click probabilities of D0 and D1 (each may click independently).
pub fn click_probabilities(mu_a: f64, mu_b: f64, delta: f64, v: f64, pd0: f64, pd1: f64) -> (f64, f64) {
    let (n0, n1) = port_means(mu_a, mu_b, delta, v);
    (
        1.0 - (1.0 - pd0) * (-n0.max(0.0)).exp(),
        1.0 - (1.0 - pd1) * (-n1.max(0.0)).exp(),
    )
}

/// Drift slow-down factor λc/|λc−λq| of the dual-band lock.
pub fn dual_band_reduction_factor(noise: &NoiseModel) -> Result<f64> {
    let diff = (noise.lambda_c_nm - noise.lambda_q_nm).abs();
    if diff < 1e-12 {
        return Err(Error::Domain {
            what: "wavelength separation",
            value: diff,
            expected: "> 0",
        });
    }
    Ok(noise.lambda_c_nm / diff)
}

/// Gaussian-pulse overlap factor multiplying the interference visibility.
pub fn timing_overlap_visibility(offset_ps: f64, pulse_width_ps: f64) -> f64 {
    (-offset_ps * offset_ps / (2.0 * pulse_width_ps * pulse_width_ps)).exp()
}
