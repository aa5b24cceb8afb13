//! Refits the relay-side constants of each preset and prints them with the resulting
//! analytic key rates.

use tfqkd::experiment::{calibrate, Preset};
use tfqkd::ratecore::Mode;

fn main() -> tfqkd::Result<()> {
    let fit_window = std::env::args().all(|a| a != "--fixed-window");
    for p in Preset::ALL {
        let mut cfg = p.config();
        let mut targets = p.measured_counts();
        targets.fit_window = fit_window;
        let c = calibrate(&cfg, &targets)?;
        c.apply(&mut cfg);
        println!(
            "{}: extra_alice={:.4} dB extra_bob={:.4} dB window={:.4} ns visibility={:.5}",
            p.name(),
            c.extra_loss_alice_db,
            c.extra_loss_bob_db,
            c.window_ns,
            c.visibility
        );
        for mode in [Mode::Finite, Mode::Asymptotic] {
            cfg.security.mode = mode;
            let r = cfg.key_rate()?;
            println!(
                "  {:<10} skr={:.4e} ratio={:.3} n1={:.4e} e1ph={:.4} E'={:.4} n1'={:.4e} nt'={:.4e} Ez={:.4} qx22={:.4}",
                mode.as_str(),
                r.skr_bit_per_signal,
                r.ratio,
                r.decoy.n1,
                r.decoy.e1_ph,
                r.aopp.e_prime,
                r.aopp.n1_prime,
                r.aopp.nt_prime,
                r.e_z_before,
                r.qber_x22
            );
        }
    }
    Ok(())
}
