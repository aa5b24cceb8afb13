//! Monte Carlo throughput of the 546 km preset.

use std::time::Instant;

use tfqkd::engine::run_session;
use tfqkd::experiment::Preset;

fn main() -> tfqkd::Result<()> {
    let windows: u64 = std::env::args().nth(1).and_then(|a| a.parse::<f64>().ok()).unwrap_or(1e8) as u64;
    let cfg = Preset::Sym546.config();
    let t = Instant::now();
    let r = run_session(&cfg.session(), windows, 7, 8)?;
    let dt = t.elapsed().as_secs_f64();
    println!(
        "{windows} windows in {dt:.2} s ({:.3e} windows/s), {} heralded",
        windows as f64 / dt,
        r.charlie.announcements.len()
    );
    Ok(())
}
