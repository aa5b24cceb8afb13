//! Sifting, actively odd-parity pairing (AOPP), decoy-state bounds, finite-size corrections
//! and key-rate finalization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    expected_counts, Basis, Category, CountsTable, Intensity, MatchedTally, SessionConfig, SessionRecord,
    WindowChoice, WindowKind, PHASE_SLICES,
};
use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::optics::Detector;
use crate::ratecore::{
    binary_entropy, key_rate_unclamped, plob_bound, rate_per_second, KeyRateInputs, Mode, PartySettings,
    SecuritySettings, DEFAULT_CLOCK_HZ,
};
use crate::report::Report;

/// Number of Chernoff applications in finite mode: three rates per side for the single-photon
/// yields, the X error rate and the vacuum rate.
pub const FINITE_BOUND_COUNT: u32 = 8;

/// Z-basis raw strings, one position per heralded window where both chose a signal window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZStrings {
    pub windows: Vec<u64>,
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    /// (Alice label, Bob label): 0 not-sent, 3 sent.
    pub classes: Vec<(u8, u8)>,
}

impl ZStrings {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    pub fn error_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let errs = self.alice.iter().zip(&self.bob).filter(|(a, b)| a != b).count();
        errs as f64 / self.len() as f64
    }
}

/// A heralded decoy–decoy window whose slices differ by 0 or 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedEvent {
    pub window: u64,
    pub ia: Intensity,
    pub ib: Intensity,
    pub slice_diff: u8,
    pub detector: Detector,
    /// Slice difference 0 expects D0; 8 flips the expectation to D1.
    pub error: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sifted {
    pub z: ZStrings,
    pub x_matched: Vec<MatchedEvent>,
    pub counts: CountsTable<u64>,
}

fn category_of(a: &WindowChoice, b: &WindowChoice) -> Category {
    let label = |c: &WindowChoice| match c.kind {
        WindowKind::Decoy => c.intensity.label(),
        WindowKind::Signal if c.intensity == Intensity::MuZ => 3,
        WindowKind::Signal => 0,
    };
    Category::new(a.basis(), b.basis(), label(a), label(b))
}

/// Joins the announcements with each sender's private log and cross-checks the tallies.
pub fn sift(session: &SessionRecord) -> Result<Sifted> {
    let ann = &session.charlie.announcements;
    if session.alice.entries.len() != ann.len() || session.bob.entries.len() != ann.len() {
        return Err(Error::InconsistentRecord(format!(
            "{} announcements but {} / {} logged windows",
            ann.len(),
            session.alice.entries.len(),
            session.bob.entries.len()
        )));
    }
    let mut out = Sifted { counts: session.counts.clone(), ..Default::default() };
    let mut detected = [0u64; 64];
    let mut matched = [MatchedTally::<u64>::default(); 2];
    for ((a, (wa, ca)), (wb, cb)) in ann.iter().zip(&session.alice.entries).zip(&session.bob.entries) {
        if *wa != a.window || *wb != a.window {
            return Err(Error::InconsistentRecord(format!(
                "announcement for window {} does not match logged windows {wa} / {wb}",
                a.window
            )));
        }
        detected[category_of(ca, cb).index()] += 1;
        match (ca.kind, cb.kind) {
            (WindowKind::Signal, WindowKind::Signal) => {
                let (Some(ba), Some(bb)) = (ca.z_bit, cb.z_bit) else {
                    return Err(Error::InconsistentRecord(format!("signal window {} without a bit", a.window)));
                };
                out.z.windows.push(a.window);
                out.z.alice.push(ba);
                out.z.bob.push(bb);
                out.z.classes.push((category_of(ca, cb).ia, category_of(ca, cb).ib));
            }
            (WindowKind::Decoy, WindowKind::Decoy) => {
                let d = (ca.phase_slice + PHASE_SLICES - cb.phase_slice) % PHASE_SLICES;
                if d == 0 || d == 8 {
                    let expected = if d == 0 { Detector::D0 } else { Detector::D1 };
                    let ev = MatchedEvent {
                        window: a.window,
                        ia: ca.intensity,
                        ib: cb.intensity,
                        slice_diff: d,
                        detector: a.detector,
                        error: a.detector != expected,
                    };
                    let k = match (ca.intensity, cb.intensity) {
                        (Intensity::Mu1, Intensity::Mu1) => Some(0),
                        (Intensity::Mu2, Intensity::Mu2) => Some(1),
                        _ => None,
                    };
                    if let Some(k) = k {
                        matched[k].detected += 1;
                        matched[k].errors += ev.error as u64;
                    }
                    out.x_matched.push(ev);
                }
            }
            _ => {}
        }
    }
    if detected != session.counts.detected {
        let bad = Category::all()
            .into_iter()
            .find(|c| detected[c.index()] != session.counts.detected[c.index()])
            .map(|c| c.name())
            .unwrap_or_else(|| "unknown".into());
        return Err(Error::InconsistentRecord(format!("detected tally for {bad} disagrees with the logs")));
    }
    for (m, s) in matched.iter().zip(&session.counts.matched) {
        if m.detected != s.detected || m.errors != s.errors {
            return Err(Error::InconsistentRecord("matched-slice tallies disagree with the logs".into()));
        }
    }
    Ok(out)
}

/// Outcome of pairing: survivors and the bits they emit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AoppPairing {
    pub pairs: usize,
    /// Surviving pairs as (first, second) positions, first < second.
    pub surviving: Vec<(usize, usize)>,
    pub alice_out: Vec<u8>,
    pub bob_out: Vec<u8>,
    pub errors: usize,
}

impl AoppPairing {
    pub fn error_rate(&self) -> f64 {
        if self.surviving.is_empty() {
            0.0
        } else {
            self.errors as f64 / self.surviving.len() as f64
        }
    }
}

/// Bob pairs each of his 0-bits with a distinct 1-bit at random; a pair survives when Alice's
/// two bits have odd parity and emits the bits at its first position.
pub fn aopp_pair<R: Rng + ?Sized>(alice: &[u8], bob: &[u8], rng: &mut R) -> Result<AoppPairing> {
    if alice.len() != bob.len() {
        return Err(Error::InsufficientData(format!(
            "bit strings differ in length ({} vs {})",
            alice.len(),
            bob.len()
        )));
    }
    let mut zeros: Vec<usize> = (0..bob.len()).filter(|&i| bob[i] == 0).collect();
    let mut ones: Vec<usize> = (0..bob.len()).filter(|&i| bob[i] == 1).collect();
    zeros.shuffle(rng);
    ones.shuffle(rng);
    let mut out = AoppPairing { pairs: zeros.len().min(ones.len()), ..Default::default() };
    let mut pairs: Vec<(usize, usize)> = zeros
        .iter()
        .zip(&ones)
        .map(|(&i, &j)| (i.min(j), i.max(j)))
        .collect();
    pairs.sort_unstable();
    for (i, j) in pairs {
        if alice[i] ^ alice[j] == 1 {
            out.surviving.push((i, j));
            out.alice_out.push(alice[i]);
            out.bob_out.push(bob[i]);
            out.errors += (alice[i] != bob[i]) as usize;
        }
    }
    Ok(out)
}

/// Phase-flip rate after pairing, 2e(1−e).
pub fn aopp_phase_error(e1_ph: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&e1_ph) {
        return Err(Error::Domain { what: "phase-flip rate", value: e1_ph, expected: "[0, 0.5]" });
    }
    Ok(2.0 * e1_ph * (1.0 - e1_ph))
}

/// Tolerance for comparing the map against a before/after pair quoted to four decimals:
/// half a unit in the last place of the output plus the input's rounding carried through
/// the slope 2(1 − 2e).
pub fn quoted_map_tolerance(before: f64) -> f64 {
    5e-5 + 2.0 * (1.0 - 2.0 * before).abs() * 5e-5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

/// Multiplicative Chernoff bound on the expectation behind an observed count, failing with
/// probability at most `epsilon`.
///
/// Upper: the U > x solving U − x − x·ln(U/x) = ln(1/ε). Lower: the L < x solving
/// x·ln(x/L) − x + L = ln(1/ε).
pub fn chernoff_interval(observed: f64, epsilon: f64, direction: Direction) -> f64 {
    let x = observed.max(0.0);
    let t = (1.0 / epsilon).ln();
    if t <= 0.0 {
        return x;
    }
    match direction {
        Direction::Upper => {
            if x == 0.0 {
                return t;
            }
            let g = |u: f64| u - x - x * (u / x).ln() - t;
            let mut hi = x + (2.0 * x * t).sqrt() + 2.0 * t + 1.0;
            while g(hi) < 0.0 {
                hi *= 2.0;
            }
            bisect(x, hi, g)
        }
        Direction::Lower => {
            if x == 0.0 {
                return 0.0;
            }
            let g = |l: f64| x * (x / l).ln() - x + l - t;
            // g decreases on (0, x) from +∞ to −t
            bisect(f64::MIN_POSITIVE.max(x * 1e-300), x, g)
        }
    }
}

/// Single-photon and phase-error estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyEstimates {
    pub n1: f64,
    pub n10: f64,
    pub n01: f64,
    /// Single-photon yield lower bounds (Alice alone, Bob alone).
    pub s10: f64,
    pub s01: f64,
    pub e1_ph: f64,
    pub mode: Mode,
    /// A numerator came out negative and its yield was clamped to zero.
    pub y1_clamped: bool,
    pub eps_total: f64,
    pub eps_per_bound: f64,
    pub bounds_used: u32,
}

/// Lower bound on the single-photon yield from three intensities μ0 < μ1 < μ2 with measured
/// rates `s0`, `s1`, `s2`. Reduces to the usual vacuum+two-decoy formula when μ0 = 0.
/// Returns the (possibly negative) raw value.
pub fn y1_lower(mu0: f64, mu1: f64, mu2: f64, s0: f64, s1: f64, s2: f64) -> f64 {
    let q0 = mu0.exp() * s0;
    let q1 = mu1.exp() * s1;
    let q2 = mu2.exp() * s2;
    let num = (mu2 * mu2 - mu0 * mu0) * (q1 - q0) - (mu1 * mu1 - mu0 * mu0) * (q2 - q0);
    num / ((mu1 - mu0) * (mu2 - mu0) * (mu2 - mu1))
}

/// Rate bounds used by the decoy analysis: finite mode widens counts by Chernoff intervals.
struct RateBounds {
    mode: Mode,
    eps: f64,
}

impl RateBounds {
    fn rate(&self, detected: f64, sent: f64, dir: Direction) -> f64 {
        if sent <= 0.0 {
            return 0.0;
        }
        let d = match self.mode {
            Mode::Asymptotic => detected,
            Mode::Finite => chernoff_interval(detected, self.eps, dir),
        };
        (d / sent).min(1.0)
    }
}

/// Decoy bounds in the configured mode.
///
/// Per side, the single-photon yield comes from the rows where the other sender's signal
/// window was empty (`XZ_a0`, mirrored `ZX_0b`). The untagged counts weight it by the
/// single-photon probability of the signal windows that sent alone. The phase-flip bound uses
/// the matched (μ1, μ1) X errors minus half the pooled vacuum rate, over the single-photon
/// share of those windows.
pub fn decoy_bounds(counts: &CountsTable<f64>, a: &PartySettings, b: &PartySettings, sec: &SecuritySettings) -> DecoyEstimates {
    let eps_per_bound = match sec.mode {
        Mode::Asymptotic => 0.0,
        Mode::Finite => sec.eps_pe / FINITE_BOUND_COUNT as f64,
    };
    let rb = RateBounds { mode: sec.mode, eps: eps_per_bound };
    let rate = |c: Category, dir| rb.rate(counts.detected_in(c), counts.sent_in(c), dir);
    use Basis::{X, Z};
    use Direction::{Lower, Upper};

    let side = |s: &PartySettings, cat: &dyn Fn(u8) -> Category| {
        y1_lower(s.mu0, s.mu1, s.mu2, rate(cat(0), Upper), rate(cat(1), Lower), rate(cat(2), Upper))
    };
    let raw10 = side(a, &|i| Category::new(X, Z, i, 0));
    let raw01 = side(b, &|i| Category::new(Z, X, 0, i));
    let y1_clamped = raw10 < 0.0 || raw01 < 0.0;
    let s10 = raw10.clamp(0.0, 1.0);
    let s01 = raw01.clamp(0.0, 1.0);

    let n10 = counts.sent_in(Category::new(Z, Z, 3, 0)) * a.mu_z * (-a.mu_z).exp() * s10;
    let n01 = counts.sent_in(Category::new(Z, Z, 0, 3)) * b.mu_z * (-b.mu_z).exp() * s01;

    let m = &counts.matched[0];
    let t_x = rb.rate(m.errors, m.sent, Upper);
    let vac: [Category; 3] = [Category::new(X, X, 0, 0), Category::new(X, Z, 0, 0), Category::new(Z, X, 0, 0)];
    let (vd, vs) = vac
        .iter()
        .fold((0.0, 0.0), |(d, s), c| (d + counts.detected_in(*c), s + counts.sent_in(*c)));
    let s00 = rb.rate(vd, vs, Lower);
    let p0 = (-(a.mu1 + b.mu1)).exp();
    let share = p0 * (a.mu1 * s10 + b.mu1 * s01);
    let e1_ph = if share > 0.0 {
        ((t_x - p0 * s00 / 2.0) / share).clamp(0.0, 0.5)
    } else {
        0.5
    };

    DecoyEstimates {
        n1: n10 + n01,
        n10,
        n01,
        s10,
        s01,
        e1_ph,
        mode: sec.mode,
        y1_clamped,
        eps_total: if sec.mode == Mode::Finite { sec.eps_pe } else { 0.0 },
        eps_per_bound,
        bounds_used: if sec.mode == Mode::Finite { FINITE_BOUND_COUNT } else { 0 },
    }
}

/// Asymptotic decoy bounds (no statistical fluctuation).
pub fn decoy_bounds_asymptotic(counts: &CountsTable<f64>, a: &PartySettings, b: &PartySettings) -> DecoyEstimates {
    decoy_bounds(counts, a, b, &SecuritySettings::default().with_mode(Mode::Asymptotic))
}

/// Post-pairing quantities entering the key formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoppResult {
    pub n1_prime: f64,
    /// Remaining bits after pairing: one per surviving pair.
    pub nt_prime: f64,
    pub e_prime: f64,
    pub e1_ph_prime: f64,
    pub surviving_pair_count: f64,
    pub pairs: f64,
    /// Bob's 0-bits (he sent) and 1-bits (he did not).
    pub bob_zeros: f64,
    pub bob_ones: f64,
}

/// Untagged pairs: a random 0/1 pairing joins one of Bob's 1-bits holding an Alice single
/// photon with one of his 0-bits holding his own.
fn untagged_pairs(n10: f64, n01: f64, bob_zeros: f64, bob_ones: f64) -> f64 {
    if bob_zeros <= 0.0 || bob_ones <= 0.0 {
        return 0.0;
    }
    bob_zeros.min(bob_ones) * (n10 / bob_ones).min(1.0) * (n01 / bob_zeros).min(1.0)
}

/// Pairing statistics from expected Z tallies (no strings needed).
pub fn aopp_expected(counts: &CountsTable<f64>, decoy: &DecoyEstimates) -> Result<AoppResult> {
    use Basis::Z;
    let zz = |a, b| counts.detected_in(Category::new(Z, Z, a, b));
    // Bob's bit is 0 when he sent.
    let bob_zeros = zz(0, 3) + zz(3, 3);
    let bob_ones = zz(3, 0) + zz(0, 0);
    let e0 = if bob_zeros > 0.0 { zz(3, 3) / bob_zeros } else { 0.0 };
    let e1 = if bob_ones > 0.0 { zz(0, 0) / bob_ones } else { 0.0 };
    let pairs = bob_zeros.min(bob_ones);
    let keep = (1.0 - e0) * (1.0 - e1) + e0 * e1;
    let surviving = pairs * keep;
    let e_prime = if keep > 0.0 { e0 * e1 / keep } else { 0.0 };
    let n1_prime = untagged_pairs(decoy.n10, decoy.n01, bob_zeros, bob_ones).min(surviving);
    Ok(AoppResult {
        n1_prime,
        nt_prime: surviving,
        e_prime: e_prime.min(0.5),
        e1_ph_prime: aopp_phase_error(decoy.e1_ph)?,
        surviving_pair_count: surviving,
        pairs,
        bob_zeros,
        bob_ones,
    })
}

/// Pairing statistics from an actual pairing of sifted strings.
pub fn aopp_result(z: &ZStrings, pairing: &AoppPairing, decoy: &DecoyEstimates) -> Result<AoppResult> {
    let bob_zeros = z.bob.iter().filter(|&&b| b == 0).count() as f64;
    let bob_ones = z.len() as f64 - bob_zeros;
    let surviving = pairing.surviving.len() as f64;
    Ok(AoppResult {
        n1_prime: untagged_pairs(decoy.n10, decoy.n01, bob_zeros, bob_ones).min(surviving),
        nt_prime: surviving,
        e_prime: pairing.error_rate().min(0.5),
        e1_ph_prime: aopp_phase_error(decoy.e1_ph)?,
        surviving_pair_count: surviving,
        pairs: pairing.pairs as f64,
        bob_zeros,
        bob_ones,
    })
}

/// Everything reported about one key-rate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    pub mode: Mode,
    pub windows: f64,
    pub counts: CountsTable<f64>,
    pub decoy: DecoyEstimates,
    pub aopp: AoppResult,
    pub e_z_before: f64,
    pub qber_x11: f64,
    pub qber_x22: f64,
    pub skr_unclamped: f64,
    pub skr_bit_per_signal: f64,
    pub skr_bit_per_s: f64,
    pub channel_loss_db: f64,
    pub skc0_bit_per_signal: f64,
    pub ratio: f64,
    pub f: f64,
    pub seed: Option<u64>,
}

impl KeyRateReport {
    pub fn write(&self, r: &mut Report) {
        r.section("counts");
        for c in Category::all() {
            r.real(&format!("\"Detected {}\"", c.name()), self.counts.detected_in(c));
        }
        r.real("\"QBER (X11)\"", self.qber_x11).real("\"QBER (X22)\"", self.qber_x22);
        r.section("sent");
        for c in Category::all() {
            r.real(&format!("\"Sent {}\"", c.name()), self.counts.sent_in(c));
        }
        r.real("matched_x11", self.counts.matched[0].sent).real("matched_x22", self.counts.matched[1].sent);
        r.real("no_click", self.counts.no_click).real("double_click", self.counts.double_click);
        r.real("invalid", self.counts.invalid);
        r.section("decoy");
        r.text("mode", self.mode.as_str())
            .real("n1_before_aopp", self.decoy.n1)
            .real("n10", self.decoy.n10)
            .real("n01", self.decoy.n01)
            .real("s10_lower", self.decoy.s10)
            .real("s01_lower", self.decoy.s01)
            .real("e1_ph_before_aopp", self.decoy.e1_ph)
            .flag("y1_clamped", self.decoy.y1_clamped);
        r.section("aopp");
        r.real("pairs", self.aopp.pairs)
            .real("surviving_pairs", self.aopp.surviving_pair_count)
            .real("n1_after_aopp", self.aopp.n1_prime)
            .real("nt_after_aopp", self.aopp.nt_prime)
            .real("e1_ph_after_aopp", self.aopp.e1_ph_prime)
            .real("e_z_before_aopp", self.e_z_before)
            .real("e_z_after_aopp", self.aopp.e_prime);
        r.section("key_rate");
        r.real("windows", self.windows)
            .real("f", self.f)
            .real("skr_unclamped", self.skr_unclamped)
            .real("skr_bit_per_signal", self.skr_bit_per_signal)
            .real("skr_bit_per_s", self.skr_bit_per_s)
            .real("channel_loss_db", self.channel_loss_db)
            .real("skc0_bit_per_signal", self.skc0_bit_per_signal)
            .real("ratio", self.ratio);
        r.section("epsilon_budget");
        r.real("eps_pe_total", self.decoy.eps_total)
            .real("eps_per_bound", self.decoy.eps_per_bound)
            .int("bounds", self.decoy.bounds_used as u64);
        if let Some(seed) = self.seed {
            r.int("seed", seed);
        }
    }
}

/// Maps decoy and pairing results through the key formula and attaches the repeaterless bound.
pub fn finalize(
    counts: &CountsTable<f64>,
    decoy: &DecoyEstimates,
    aopp: &AoppResult,
    e_z_before: f64,
    sec: &SecuritySettings,
    channel_loss_db: f64,
) -> Result<KeyRateReport> {
    let n = counts.windows;
    let inputs = KeyRateInputs {
        n,
        n1_prime: aopp.n1_prime,
        e1_ph_prime: aopp.e1_ph_prime,
        nt_prime: aopp.nt_prime,
        e_prime: aopp.e_prime,
    };
    let skr_unclamped = if n > 0.0 && aopp.nt_prime > 0.0 {
        key_rate_unclamped(&inputs, sec)?
    } else {
        0.0
    };
    // keep the entropy argument in range for the report even if no pairs survived
    binary_entropy(aopp.e_prime)?;
    let skr = skr_unclamped.max(0.0);
    let skc0 = plob_bound(channel_loss_db);
    Ok(KeyRateReport {
        mode: sec.mode,
        windows: n,
        counts: counts.clone(),
        decoy: *decoy,
        aopp: *aopp,
        e_z_before,
        qber_x11: counts.matched[0].qber(),
        qber_x22: counts.matched[1].qber(),
        skr_unclamped,
        skr_bit_per_signal: skr,
        skr_bit_per_s: rate_per_second(skr, DEFAULT_CLOCK_HZ),
        channel_loss_db,
        skc0_bit_per_signal: skc0,
        ratio: if skc0 > 0.0 { skr / skc0 } else { 0.0 },
        f: sec.f,
        seed: None,
    })
}

fn z_error_rate(counts: &CountsTable<f64>) -> f64 {
    use Basis::Z;
    let zz = |a, b| counts.detected_in(Category::new(Z, Z, a, b));
    let total = zz(0, 3) + zz(3, 0) + zz(3, 3) + zz(0, 0);
    if total > 0.0 {
        (zz(3, 3) + zz(0, 0)) / total
    } else {
        0.0
    }
}

/// Analytic pipeline: expected counts → decoy bounds → expected pairing → key rate.
pub fn analyze_expected(cfg: &SessionConfig, n: f64, sec: &SecuritySettings) -> Result<KeyRateReport> {
    let counts = expected_counts(cfg, n)?;
    let decoy = decoy_bounds(&counts, &cfg.alice, &cfg.bob, sec);
    let aopp = aopp_expected(&counts, &decoy)?;
    finalize(&counts, &decoy, &aopp, z_error_rate(&counts), sec, cfg.link.channel_loss_db())
}

/// Seed of the pairing stream, kept apart from every session stream.
pub fn pairing_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA0F1_5EED_0000_0001);
    rng.set_stream(u64::MAX);
    rng
}

/// Monte Carlo pipeline: sift → decoy bounds on the observed tallies → random pairing → key
/// rate.
pub fn analyze_session(record: &SessionRecord, cfg: &SessionConfig, sec: &SecuritySettings) -> Result<(Sifted, KeyRateReport)> {
    let sifted = sift(record)?;
    let counts = sifted.counts.to_f64();
    let decoy = decoy_bounds(&counts, &cfg.alice, &cfg.bob, sec);
    let pairing = aopp_pair(&sifted.z.alice, &sifted.z.bob, &mut pairing_rng(record.seed))?;
    let aopp = aopp_result(&sifted.z, &pairing, &decoy)?;
    let mut report = finalize(&counts, &decoy, &aopp, sifted.z.error_rate(), sec, cfg.link.channel_loss_db())?;
    report.seed = Some(record.seed);
    Ok((sifted, report))
}
