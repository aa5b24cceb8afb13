//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::SyntheticChannel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tfqkd::engine::{expected_counts, run_session, Category};
use tfqkd::experiment::Preset;
use tfqkd::optics::{dual_band_reduction_factor, NoiseModel};
use tfqkd::postproc::{aopp_phase_error, analyze_session, decoy_bounds, decoy_bounds_asymptotic, quoted_map_tolerance};
use tfqkd::ratecore::{check_sns_constraint, phase_misalignment_qber, plob_bound, Mode, SecuritySettings};
use tfqkd::servo::{run_stabilization, LoopConfig, Stages};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn plob_identities() -> Outcome {
    let cases = [(100.13, 1.400e-10), (108.59, 1.996e-11), (84.62, 4.979e-9)];
    let mut ok = true;
    let mut d = Vec::new();
    for (loss, want) in cases {
        let got = plob_bound(loss);
        ok &= (got / want - 1.0).abs() <= 0.005;
        d.push(format!("{loss} dB -> {got:.4e}"));
    }
    outcome(ok, d.join(", "))
}

fn aopp_map() -> Outcome {
    let pairs = [(0.1128, 0.2001), (0.0790, 0.1455), (0.0994, 0.1790)];
    let mut ok = true;
    let mut d = Vec::new();
    for (before, after) in pairs {
        let got = aopp_phase_error(before).unwrap();
        ok &= (got - after).abs() <= quoted_map_tolerance(before);
        d.push(format!("{before} -> {got:.5}"));
    }
    outcome(ok, d.join(", "))
}

fn balance_checker() -> Outcome {
    let sym = Preset::Sym546.config().protocol;
    let asym = Preset::Asym452.config().protocol;
    let s = check_sns_constraint(&sym.alice, &sym.bob).unwrap();
    let a = check_sns_constraint(&asym.alice, &asym.bob).unwrap();
    outcome(s == 0.0 && a <= 0.05, format!("symmetric {s}, asymmetric {a:.5}"))
}

fn phase_noise_qber() -> Outcome {
    let q = phase_misalignment_qber(0.20, 1.0);
    outcome((q - 0.0099).abs() <= 0.0005, format!("{q:.5}"))
}

fn clock_floor() -> Outcome {
    let n = NoiseModel { clock_accuracy: 5e-11, comb_span_ghz: 100.0, ..NoiseModel::default() };
    let f = n.clock_floor_rad_per_s();
    outcome((f - 44.4).abs() <= 0.5, format!("{f:.2} rad/s"))
}

fn servo_reduction() -> Outcome {
    let base = Preset::Sym546.config().noise;
    let ideal = NoiseModel { clock_accuracy: 0.0, laser_drift_hz_per_hour: 0.0, initial_freq_offset_hz: 0.0, ..base };
    let t = Instant::now();
    let r1 = run_stabilization(10.0, &ideal, &LoopConfig::default(), Stages::FastOnly, 13, 0).unwrap();
    let t1 = t.elapsed();
    let clocked = NoiseModel { clock_accuracy: 5e-11, ..base };
    let t = Instant::now();
    let r2 = run_stabilization(10.0, &clocked, &LoopConfig::default(), Stages::FastOnly, 15, 0).unwrap();
    let t2 = t.elapsed();
    let f = r1.summary.reduction_factor;
    let d = r2.summary.fast_locked_drift_std_rad_per_s;
    let minute = Duration::from_secs(60);
    outcome(
        (1000.0..=2500.0).contains(&f) && (40.0..=150.0).contains(&d) && t1 <= minute && t2 <= minute,
        format!(
            "factor {f:.0} (analytic {:.1}), clock-limited drift {d:.1} rad/s, {:.1}s/{:.1}s",
            dual_band_reduction_factor(&ideal).unwrap(),
            t1.as_secs_f64(),
            t2.as_secs_f64()
        ),
    )
}

fn closed_loop_residual() -> Outcome {
    let mut ok = true;
    let mut d = Vec::new();
    for (i, p) in Preset::ALL.into_iter().enumerate() {
        let cfg = p.config();
        let t = Instant::now();
        let run = run_stabilization(10.0, &cfg.noise, &cfg.servo, Stages::Full, 20 + i as u64, 0).unwrap();
        let el = t.elapsed();
        let r = run.summary.residual_q_rad;
        ok &= r <= 0.30 && el <= Duration::from_secs(60);
        d.push(format!("{} {r:.3} rad", p.name()));
    }
    outcome(ok, d.join(", "))
}

fn monte_carlo_vs_analytic() -> Outcome {
    let session = Preset::Sym546.config().session();
    let n = 100_000_000u64;
    let t = Instant::now();
    let r = run_session(&session, n, 20240601, 8).unwrap();
    let e = expected_counts(&session, n as f64).unwrap();
    let el = t.elapsed();
    let mut worst = (0.0f64, String::new());
    let mut check = |name: String, got: f64, ex: f64| {
        let z = (got - ex).abs() / ex.sqrt().max(1.0);
        if z > worst.0 {
            worst = (z, name);
        }
    };
    for c in Category::all() {
        check(c.name(), r.counts.detected_in(c) as f64, e.detected_in(c));
    }
    for (k, name) in ["X11", "X22"].into_iter().enumerate() {
        check(format!("{name} errors"), r.counts.matched[k].errors as f64, e.matched[k].errors);
        check(format!("{name} detected"), r.counts.matched[k].detected as f64, e.matched[k].detected);
    }
    check("heralded".into(), r.counts.detected.iter().sum::<u64>() as f64, e.total_detected());
    outcome(
        worst.0 <= 4.0 && el <= Duration::from_secs(300),
        format!("worst |z| {:.2} ({}), {:.1}s", worst.0, worst.1, el.as_secs_f64()),
    )
}

fn end_to_end_rates() -> Outcome {
    let t = Instant::now();
    let mut c603 = Preset::Sym603.config();
    c603.security.mode = Mode::Asymptotic;
    let r603 = c603.key_rate().unwrap().skr_bit_per_signal;
    let r546 = Preset::Sym546.config().key_rate().unwrap();
    let mut c452 = Preset::Asym452.config();
    c452.security.mode = Mode::Asymptotic;
    let r452 = c452.key_rate().unwrap();
    let f = r603 / 2.455e-10;
    let ok = (1.0 / 3.0..=3.0).contains(&f)
        && r546.skr_bit_per_signal > r546.skc0_bit_per_signal
        && r452.skr_bit_per_signal > 0.0
        && t.elapsed() <= Duration::from_secs(300);
    outcome(
        ok,
        format!(
            "603 asymptotic {r603:.3e} ({f:.2}x), 546 ratio {:.2}, asym452 {:.3e} bit/signal ({:.2} bit/s)",
            r546.ratio, r452.skr_bit_per_signal, r452.skr_bit_per_s
        ),
    )
}

fn aopp_suppression() -> Outcome {
    let cfg = Preset::Sym546.config();
    let session = cfg.session();
    let windows = 1_000_000_000_000u64;
    let t = Instant::now();
    let record = run_session(&session, windows, cfg.run.seed, cfg.run.chunks).unwrap();
    let mut ok = true;
    let mut d = vec![format!("{windows:.0e} windows in {:.0}s", t.elapsed().as_secs_f64())];
    for mode in [Mode::Finite, Mode::Asymptotic] {
        let (_, r) = analyze_session(&record, &session, &cfg.security.with_mode(mode)).unwrap();
        let share = r.aopp.n1_prime / r.decoy.n1;
        ok &= r.aopp.e_prime <= r.e_z_before / 10.0 && (0.10..=0.30).contains(&share);
        d.push(format!(
            "{}: Ez {:.4} -> {:.4}, n1'/n1 {share:.3}",
            mode.as_str(),
            r.e_z_before,
            r.aopp.e_prime
        ));
    }
    outcome(ok, d.join(", "))
}

fn determinism() -> Outcome {
    let mut cfg = Preset::Sym546.config();
    cfg.run.mc_windows = 100_000_000;
    let a = cfg.simulate_report().unwrap();
    let b = cfg.simulate_report().unwrap();
    cfg.run.stabilize_s = 2.0;
    let (c, _) = cfg.stabilize_report(0).unwrap();
    let (d, _) = cfg.stabilize_report(0).unwrap();
    outcome(
        a == b && c == d,
        format!("simulate {} bytes, stabilize {} bytes", a.len(), c.len()),
    )
}

fn bound_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sec = SecuritySettings::default();
    let (mut violations, mut informative) = (0, 0);
    for _ in 0..100 {
        let ch = SyntheticChannel::random(&mut rng);
        let truth = ch.true_n1();
        let exact = ch.expected_counts();
        let noisy = ch.sampled_counts(&mut rng);
        let bounds = [
            decoy_bounds_asymptotic(&exact, &ch.alice, &ch.bob),
            decoy_bounds(&exact, &ch.alice, &ch.bob, &sec),
            decoy_bounds(&noisy, &ch.alice, &ch.bob, &sec),
        ];
        for b in &bounds {
            if b.n1 > truth * (1.0 + 1e-9) || b.e1_ph < ch.e1 - 1e-9 {
                violations += 1;
            }
        }
        informative += (bounds[0].e1_ph < 0.5) as u32;
    }
    outcome(
        violations == 0,
        format!("100 channels, {violations} violations, {informative} with e1 bound below 1/2"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("repeaterless bound identities", plob_identities),
        ("pairing phase-error map", aopp_map),
        ("balance-condition checker", balance_checker),
        ("phase-noise QBER", phase_noise_qber),
        ("clock floor", clock_floor),
        ("servo reduction factor", servo_reduction),
        ("closed-loop residual phase", closed_loop_residual),
        ("Monte Carlo vs analytic counts", monte_carlo_vs_analytic),
        ("end-to-end rates", end_to_end_rates),
        ("pairing error suppression", aopp_suppression),
        ("determinism", determinism),
        ("decoy bound validity", bound_validity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += !o.passed as usize;
        println!("{} criterion {:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
