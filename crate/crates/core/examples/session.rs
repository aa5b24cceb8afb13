//! Runs a Monte Carlo session of a preset and prints the post-processing summary.

use std::time::Instant;

use tfqkd::engine::run_session;
use tfqkd::experiment::Preset;
use tfqkd::postproc::analyze_session;
use tfqkd::ratecore::Mode;

fn main() -> tfqkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().unwrap_or_else(|| "sym546".into()).parse()?;
    let windows = args.next().and_then(|a| a.parse::<f64>().ok()).unwrap_or(1e11) as u64;
    let cfg = preset.config();
    let t = Instant::now();
    let record = run_session(&cfg.session(), windows, cfg.run.seed, cfg.run.chunks)?;
    println!("simulated {windows} windows in {:.1} s", t.elapsed().as_secs_f64());
    for mode in [Mode::Finite, Mode::Asymptotic] {
        let (_, r) = analyze_session(&record, &cfg.session(), &cfg.security.with_mode(mode))?;
        println!(
            "{:<10} skr={:.3e} Ez={:.4} E'={:.4} n1={:.4e} n1'={:.4e} ratio={:.3} e1ph={:.4} pairs={} survivors={}",
            mode.as_str(),
            r.skr_bit_per_signal,
            r.e_z_before,
            r.aopp.e_prime,
            r.decoy.n1,
            r.aopp.n1_prime,
            r.aopp.n1_prime / r.decoy.n1,
            r.decoy.e1_ph,
            r.aopp.pairs,
            r.aopp.surviving_pair_count
        );
    }
    Ok(())
}
