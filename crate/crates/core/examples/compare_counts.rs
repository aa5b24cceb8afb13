//! Prints analytic expected counts of each preset next to the measured rows.

use tfqkd::engine::{expected_counts, Category};
use tfqkd::experiment::Preset;

fn main() -> tfqkd::Result<()> {
    for p in Preset::ALL {
        let measured = p.measured_counts().rows;
        let cfg = p.config();
        let e = expected_counts(&cfg.session(), cfg.run.windows)?;
        println!("{}", p.name());
        for (c, want) in Category::all().into_iter().zip(measured) {
            let got = e.detected_in(c);
            println!("  {:<6} {:>12.0} {:>12.0} {:>7.3}", c.name(), got, want, got / want);
        }
        println!("  qx11 {:.4} qx22 {:.4}", e.matched[0].qber(), e.matched[1].qber());
    }
    Ok(())
}
