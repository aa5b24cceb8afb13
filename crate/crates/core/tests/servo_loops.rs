use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use tfqkd::experiment::Preset;
use tfqkd::optics::{dual_band_reduction_factor, ChannelPhaseState, NoiseModel, PhaseStepper};
use tfqkd::servo::{
    fringe_error, run_stabilization, simulate_frequency_compensation, simulate_timing, FastLoop, LoopConfig, SlowLoop,
    Stages, REFERENCE_GAINS,
};

fn ideal_clocks(mut n: NoiseModel) -> NoiseModel {
    n.clock_accuracy = 0.0;
    n.laser_drift_hz_per_hour = 0.0;
    n.initial_freq_offset_hz = 0.0;
    n
}

#[test]
fn static_offset_corrected_within_50_iterations() {
    // noiseless counts: the modulator must settle at −0.5 rad
    let cfg = LoopConfig::default();
    let mut fast = FastLoop::default();
    let nset = cfg.dc_target_counts_hz * cfg.fast_dt();
    for _ in 0..50 {
        let theta = 0.5 + fast.pm;
        fast.step(nset * (1.0 + cfg.dc_visibility * theta.sin()), &cfg);
    }
    assert!((fast.pm + 0.5).abs() < 1e-3, "pm = {}", fast.pm);
}

#[test]
fn free_drift_matches_nominal_546() {
    let noise = Preset::Sym546.config().noise;
    let run = run_stabilization(60.0, &noise, &LoopConfig::default(), Stages::None, 11, 0).unwrap();
    let s = run.summary.free_drift_std_rad_per_s;
    assert!((s / 1.65e4 - 1.0).abs() <= 0.05, "{s}");
}

#[test]
fn fast_stage_residual_with_60_counts_per_bin() {
    let noise = Preset::Sym546.config().noise;
    let run = run_stabilization(5.0, &noise, &LoopConfig::default(), Stages::FastOnly, 12, 0).unwrap();
    let r = run.summary.residual_c_rad;
    assert!((0.15..=0.35).contains(&r), "{r}");
}

#[test]
fn reduction_factor_with_ideal_clocks() {
    let noise = ideal_clocks(Preset::Sym546.config().noise);
    let run = run_stabilization(10.0, &noise, &LoopConfig::default(), Stages::FastOnly, 13, 0).unwrap();
    let f = run.summary.reduction_factor;
    assert!((1000.0..=2500.0).contains(&f), "{f}");
}

#[test]
fn reduction_factor_approaches_wavelength_ratio_at_high_counts() {
    let noise = ideal_clocks(Preset::Sym546.config().noise);
    let cfg = LoopConfig { dc_target_counts_hz: 100.0 * 6e6, ..Default::default() };
    let run = run_stabilization(10.0, &noise, &cfg, Stages::FastOnly, 14, 0).unwrap();
    let analytic = dual_band_reduction_factor(&noise).unwrap();
    assert!((analytic - 1934.7).abs() < 0.1);
    let f = run.summary.reduction_factor;
    assert!((f / analytic - 1.0).abs() < 0.15, "{f} vs {analytic}");
}

#[test]
fn clock_floor_limits_fast_stage() {
    let mut noise = Preset::Sym546.config().noise;
    noise.clock_accuracy = 5e-11;
    let run = run_stabilization(10.0, &noise, &LoopConfig::default(), Stages::FastOnly, 15, 0).unwrap();
    let d = run.summary.fast_locked_drift_std_rad_per_s;
    assert!((40.0..=150.0).contains(&d), "{d}");
}

#[test]
fn full_pipeline_residual_on_each_preset() {
    for (i, p) in Preset::ALL.into_iter().enumerate() {
        let cfg = p.config();
        let run = run_stabilization(10.0, &cfg.noise, &cfg.servo, Stages::Full, 20 + i as u64, 0).unwrap();
        let s = run.summary;
        assert!(s.residual_q_rad <= 0.30, "{}: {}", p.name(), s.residual_q_rad);
        // near-Gaussian residual
        assert!(s.residual_q_skewness.abs() < 0.3, "{}: skew {}", p.name(), s.residual_q_skewness);
        assert!(s.residual_q_excess_kurtosis.abs() < 1.0, "{}: kurt {}", p.name(), s.residual_q_excess_kurtosis);
    }
}

#[test]
fn slow_loop_holds_residual_drift_of_12_hz() {
    let noise = NoiseModel {
        free_drift_rate_std: TAU * 12.09,
        laser_drift_hz_per_hour: 0.0,
        clock_accuracy: 0.0,
        ..NoiseModel::default()
    };
    let cfg = LoopConfig::default();
    let dt = 1.0 / cfg.slow_rate_hz;
    let stepper = PhaseStepper::new(&noise, dt);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = ChannelPhaseState::stationary(&noise, &mut rng);
    let mut slow = SlowLoop::default();
    let set = cfg.ref_counts_hz * dt;
    let mut res = Vec::new();
    for i in 0..20_000 {
        stepper.step(&mut state, &mut rng);
        let theta = state.phi_c + slow.fs;
        let c = Poisson::new(set * (1.0 + theta.sin())).unwrap().sample(&mut rng);
        slow.step(c, &cfg);
        if i > 1000 {
            res.push((theta + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI);
        }
    }
    let m = res.iter().sum::<f64>() / res.len() as f64;
    let sd = (res.iter().map(|x| (x - m).powi(2)).sum::<f64>() / res.len() as f64).sqrt();
    assert!(sd <= 0.30, "{sd}");
}

#[test]
fn slew_limit_reports_saturation() {
    let cfg = LoopConfig { fs_max_step_rad: 0.01, ..Default::default() };
    let mut slow = SlowLoop::default();
    let set = cfg.ref_counts_hz / cfg.slow_rate_hz;
    // a phase running away at 100 rad/s cannot be followed at 0.01 rad per step
    let mut phase = 0.0;
    for _ in 0..100 {
        phase += 0.1;
        let theta = phase + slow.fs;
        slow.step(set * (1.0 + theta.sin()), &cfg);
    }
    assert!(slow.saturated_steps > 0);
}

#[test]
fn frequency_readout_of_500_hz_offset() {
    let mut noise = Preset::Sym546.config().noise;
    // laser offset and shot noise only; fiber drift would add ~260 Hz of slope noise in 10 s
    noise.initial_freq_offset_hz = 500.0;
    noise.laser_drift_hz_per_hour = 0.0;
    noise.free_drift_rate_std = 0.0;
    let run = run_stabilization(10.0, &noise, &LoopConfig::default(), Stages::FastOnly, 16, 0).unwrap();
    let f = run.summary.freq_readout_hz;
    assert!((f - 500.0).abs() <= 50.0, "{f}");
}

#[test]
fn aom_precompensation_over_20_hours() {
    let noise = NoiseModel::default();
    let res = simulate_frequency_compensation(20.0, 250.0, &noise, 4);
    assert_eq!(res.len(), 20 * 60 + 1);
    let worst = res.iter().map(|&(_, r)| r.abs()).fold(0.0, f64::max);
    assert!(worst <= 300.0, "{worst}");
}

#[test]
fn timing_loop_residual_jitter() {
    let noise = NoiseModel::default();
    let s = simulate_timing(6.0 * 3600.0, &noise, &LoopConfig::default(), 5);
    assert!(s.residual_std_ps <= 10.0, "{s:?}");
}

#[test]
fn same_seed_same_series() {
    let noise = NoiseModel::default();
    let cfg = LoopConfig::default();
    let a = run_stabilization(0.2, &noise, &cfg, Stages::Full, 9, 100).unwrap();
    let b = run_stabilization(0.2, &noise, &cfg, Stages::Full, 9, 100).unwrap();
    assert_eq!(a.series_text(), b.series_text());
    assert_eq!(a.summary, b.summary);
    let c = run_stabilization(0.2, &noise, &cfg, Stages::Full, 10, 100).unwrap();
    assert_ne!(a.series_text(), c.series_text());
}

#[test]
fn noiseless_loops_converge_to_constants() {
    let noise = NoiseModel {
        free_drift_rate_std: 0.0,
        laser_drift_hz_per_hour: 0.0,
        clock_accuracy: 0.0,
        ..NoiseModel::default()
    };
    // no shot noise either: count at the exact fringe value
    let cfg = LoopConfig { fast_gains: REFERENCE_GAINS, ..Default::default() };
    let nset = cfg.dc_target_counts_hz * cfg.fast_dt();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let state = ChannelPhaseState::stationary(&noise, &mut rng);
    let mut fast = FastLoop::default();
    let mut last = f64::NAN;
    for _ in 0..400 {
        let theta = state.phi_c + 1.0 + fast.pm;
        last = fast.step(nset * (1.0 + cfg.dc_visibility * theta.sin()), &cfg);
    }
    let next = fast.step(nset * (1.0 + cfg.dc_visibility * (state.phi_c + 1.0 + last).sin()), &cfg);
    assert!((next - last).abs() < 1e-9);
    assert!(fringe_error(nset * (1.0 + cfg.dc_visibility * (state.phi_c + 1.0 + next).sin()), nset, cfg.dc_visibility).abs() < 1e-9);
}
