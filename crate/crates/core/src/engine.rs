//! Three-party session: the two senders' window state machines, the relay's heralded
//! measurement, the announcement queue between them, and the closed-form expectation of the
//! resulting tallies.
//!
//! Monte Carlo runs are laid out on a fixed grid of segments of [`SEGMENT_WINDOWS`] windows.
//! Every segment draws from its own ChaCha streams derived from the master seed, so the merged
//! record is the same whatever the chunk count. Chunks are contiguous segment ranges and run on
//! rayon when the `parallel` feature is on.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;
use std::ops::AddAssign;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::gauss_hermite;
use crate::optics::{arm_transmittance, Arm, ChannelPhaseState, Detector, DetectorModel, LinkConfig, NoiseModel};
use crate::ratecore::{check_sns_constraint, PartySettings};

/// Quantum slots per 200 ns block; the residual phase and validity are drawn per block.
pub const BLOCK_WINDOWS: u64 = 100;
/// Windows per random-stream segment (1024 blocks).
pub const SEGMENT_WINDOWS: u64 = 1024 * BLOCK_WINDOWS;
/// Number of phase slices.
pub const PHASE_SLICES: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::X => 0,
            Basis::Z => 1,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Signal,
    Decoy,
}

/// Intensity label; in a signal window `Mu0` means "not sending" (true vacuum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intensity {
    Mu0,
    Mu1,
    Mu2,
    MuZ,
}

impl Intensity {
    pub fn label(self) -> u8 {
        match self {
            Intensity::Mu0 => 0,
            Intensity::Mu1 => 1,
            Intensity::Mu2 => 2,
            Intensity::MuZ => 3,
        }
    }

    pub fn from_label(l: u8) -> Option<Self> {
        match l {
            0 => Some(Intensity::Mu0),
            1 => Some(Intensity::Mu1),
            2 => Some(Intensity::Mu2),
            3 => Some(Intensity::MuZ),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowChoice {
    pub kind: WindowKind,
    pub intensity: Intensity,
    pub phase_slice: u8,
    pub z_bit: Option<u8>,
}

impl WindowChoice {
    pub fn basis(&self) -> Basis {
        match self.kind {
            WindowKind::Signal => Basis::Z,
            WindowKind::Decoy => Basis::X,
        }
    }

    /// Emission class 0..5: X μ0, X μ1, X μ2, Z not-send, Z send.
    fn emission(&self) -> usize {
        match (self.kind, self.intensity) {
            (WindowKind::Decoy, i) => i.label() as usize,
            (WindowKind::Signal, Intensity::MuZ) => 4,
            (WindowKind::Signal, _) => 3,
        }
    }
}

const EMISSIONS: usize = 5;

fn emission_mean(s: &PartySettings, e: usize) -> f64 {
    match e {
        0 => s.mu0,
        1 => s.mu1,
        2 => s.mu2,
        3 => 0.0,
        _ => s.mu_z,
    }
}

fn emission_probability(s: &PartySettings, e: usize) -> f64 {
    let pd = s.p_decoy_window();
    match e {
        0 => pd * s.p_mu0,
        1 => pd * s.p_mu1,
        2 => pd * s.p_mu2,
        3 => s.p_signal_window * (1.0 - s.epsilon_send),
        _ => s.p_signal_window * s.epsilon_send,
    }
}

fn emission_category(e: usize) -> (Basis, u8) {
    match e {
        0..=2 => (Basis::X, e as u8),
        3 => (Basis::Z, 0),
        _ => (Basis::Z, 3),
    }
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Draws one window's choice from a single 64-bit word: the high 53 bits give the uniform
/// deciding window kind and intensity, the low 4 bits the phase slice.
pub fn choose_window<R: RngCore + ?Sized>(settings: &PartySettings, party: Party, rng: &mut R) -> WindowChoice {
    let word = rng.next_u64();
    let phase_slice = (word & 0xF) as u8;
    let u = (word >> 11) as f64 * TWO_POW_M53;
    let ps = settings.p_signal_window;
    if u < ps {
        let send = u < ps * settings.epsilon_send;
        let z_bit = match (party, send) {
            (Party::Alice, true) | (Party::Bob, false) => 1,
            _ => 0,
        };
        WindowChoice {
            kind: WindowKind::Signal,
            intensity: if send { Intensity::MuZ } else { Intensity::Mu0 },
            phase_slice,
            z_bit: Some(z_bit),
        }
    } else {
        let v = (u - ps) / (1.0 - ps);
        let intensity = if v < settings.p_mu0 {
            Intensity::Mu0
        } else if v < settings.p_mu0 + settings.p_mu1 {
            Intensity::Mu1
        } else {
            Intensity::Mu2
        };
        WindowChoice { kind: WindowKind::Decoy, intensity, phase_slice, z_bit: None }
    }
}

/// Numeric tally type of a [`CountsTable`]: integer counts for Monte Carlo, reals for
/// expectations.
pub trait Tally: Copy + Default + PartialEq + AddAssign + fmt::Debug + Send + Sync {
    fn to_f64(self) -> f64;
    fn one() -> Self;
}

impl Tally for u64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn one() -> Self {
        1
    }
}

impl Tally for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn one() -> Self {
        1.0
    }
}

/// One (basis, basis, intensity, intensity) category, named like `XZ_10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category {
    pub a: Basis,
    pub b: Basis,
    pub ia: u8,
    pub ib: u8,
}

impl Category {
    pub const fn new(a: Basis, b: Basis, ia: u8, ib: u8) -> Self {
        Category { a, b, ia, ib }
    }

    pub fn index(&self) -> usize {
        ((self.a.index() * 2 + self.b.index()) * 4 + self.ia as usize) * 4 + self.ib as usize
    }

    pub fn name(&self) -> String {
        format!("{}{}_{}{}", self.a.letter(), self.b.letter(), self.ia, self.ib)
    }

    /// Categories that can occur, with the fifteen measured rows first.
    pub fn all() -> Vec<Category> {
        use Basis::{X, Z};
        let mut out = vec![
            Category::new(X, X, 2, 0),
            Category::new(X, X, 0, 2),
            Category::new(X, X, 1, 0),
            Category::new(X, X, 0, 1),
            Category::new(X, X, 0, 0),
            Category::new(X, Z, 0, 0),
            Category::new(X, Z, 1, 0),
            Category::new(X, Z, 2, 0),
            Category::new(Z, X, 0, 0),
            Category::new(Z, X, 0, 1),
            Category::new(Z, X, 0, 2),
            Category::new(Z, Z, 0, 3),
            Category::new(Z, Z, 3, 0),
            Category::new(Z, Z, 3, 3),
            Category::new(Z, Z, 0, 0),
        ];
        let labels = |b: Basis| -> &'static [u8] {
            match b {
                X => &[0, 1, 2],
                Z => &[0, 3],
            }
        };
        for a in [X, Z] {
            for b in [X, Z] {
                for &ia in labels(a) {
                    for &ib in labels(b) {
                        let c = Category::new(a, b, ia, ib);
                        if !out.contains(&c) {
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Matched-slice X tallies for equal decoy intensities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchedTally<T> {
    pub sent: T,
    pub detected: T,
    pub errors: T,
}

impl<T: Tally> MatchedTally<T> {
    pub fn qber(&self) -> f64 {
        let d = self.detected.to_f64();
        if d > 0.0 {
            self.errors.to_f64() / d
        } else {
            0.0
        }
    }
}

/// Sent and detected tallies per category, matched-slice X tallies for (μ1, μ1) and (μ2, μ2),
/// and the windows that produced no or two clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsTable<T> {
    pub windows: T,
    pub sent: [T; 64],
    pub detected: [T; 64],
    /// Index 0: (μ1, μ1); index 1: (μ2, μ2).
    pub matched: [MatchedTally<T>; 2],
    pub no_click: T,
    pub double_click: T,
    /// Windows in blanked blocks, excluded from every tally.
    pub invalid: T,
}

impl<T: Tally> Default for CountsTable<T> {
    fn default() -> Self {
        CountsTable {
            windows: T::default(),
            sent: [T::default(); 64],
            detected: [T::default(); 64],
            matched: [MatchedTally::default(); 2],
            no_click: T::default(),
            double_click: T::default(),
            invalid: T::default(),
        }
    }
}

impl<T: Tally> CountsTable<T> {
    pub fn detected_in(&self, c: Category) -> T {
        self.detected[c.index()]
    }

    pub fn sent_in(&self, c: Category) -> T {
        self.sent[c.index()]
    }

    pub fn total_detected(&self) -> f64 {
        self.detected.iter().map(|t| t.to_f64()).sum()
    }

    pub fn to_f64(&self) -> CountsTable<f64> {
        let conv = |m: &MatchedTally<T>| MatchedTally {
            sent: m.sent.to_f64(),
            detected: m.detected.to_f64(),
            errors: m.errors.to_f64(),
        };
        CountsTable {
            windows: self.windows.to_f64(),
            sent: self.sent.map(|t| t.to_f64()),
            detected: self.detected.map(|t| t.to_f64()),
            matched: [conv(&self.matched[0]), conv(&self.matched[1])],
            no_click: self.no_click.to_f64(),
            double_click: self.double_click.to_f64(),
            invalid: self.invalid.to_f64(),
        }
    }
}

impl<T: Tally> AddAssign<&CountsTable<T>> for CountsTable<T> {
    fn add_assign(&mut self, rhs: &CountsTable<T>) {
        self.windows += rhs.windows;
        for i in 0..64 {
            self.sent[i] += rhs.sent[i];
            self.detected[i] += rhs.detected[i];
        }
        for k in 0..2 {
            self.matched[k].sent += rhs.matched[k].sent;
            self.matched[k].detected += rhs.matched[k].detected;
            self.matched[k].errors += rhs.matched[k].errors;
        }
        self.no_click += rhs.no_click;
        self.double_click += rhs.double_click;
        self.invalid += rhs.invalid;
    }
}

/// Everything the session needs besides the run size.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub alice: PartySettings,
    pub bob: PartySettings,
    pub link: LinkConfig,
    pub detectors: DetectorModel,
    pub noise: NoiseModel,
    /// Announcement delivery delay in windows.
    pub message_latency: u64,
    /// Probability that a 200 ns block falls in a stretcher-reset blanking interval.
    pub blanked_block_fraction: f64,
    /// Accept settings violating the balance condition.
    pub allow_unbalanced: bool,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.alice.validate("protocol.alice")?;
        self.bob.validate("protocol.bob")?;
        self.link.validate("link")?;
        self.detectors.validate("detectors")?;
        self.noise.validate("noise")?;
        if !(0.0..1.0).contains(&self.blanked_block_fraction) {
            return Err(Error::config("run.blanked_block_fraction", "must lie in [0, 1)"));
        }
        if !self.allow_unbalanced {
            let dev = check_sns_constraint(&self.alice, &self.bob)?;
            if dev > 0.05 {
                return Err(Error::config(
                    "protocol",
                    format!("balance-condition deviation {dev:.4} exceeds 0.05 (set protocol.allow_unbalanced to override)"),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one window at the relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    None,
    Click(Detector),
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeraldedEvent {
    pub window_index: u64,
    pub detector: Detector,
    pub announced: bool,
}

/// Arriving means (a0, b0, a1, b1) at the two detectors and an upper bound on P(any click).
type ClickEntry = (f64, f64, f64, f64, f64);

/// Precomputed arriving means per (emission A, emission B) and detector, plus a click
/// upper bound used to skip the exact evaluation for most windows.
#[derive(Debug, Clone)]
struct ClickTable {
    entries: [[ClickEntry; EMISSIONS]; EMISSIONS],
    v: f64,
    pd: [f64; 2],
    max_bound: f64,
    // joint choice distribution: (sent index, matched slot, probability)
    sent_cells: Vec<(usize, Option<usize>, f64)>,
}

impl ClickTable {
    fn new(cfg: &SessionConfig) -> Self {
        let t = |arm, d| arm_transmittance(&cfg.link, arm, &cfg.detectors, d);
        let (ta0, ta1) = (t(Arm::Alice, Detector::D0), t(Arm::Alice, Detector::D1));
        let (tb0, tb1) = (t(Arm::Bob, Detector::D0), t(Arm::Bob, Detector::D1));
        let pd = [
            cfg.detectors.dark_probability(Detector::D0),
            cfg.detectors.dark_probability(Detector::D1),
        ];
        let mut entries = [[(0.0, 0.0, 0.0, 0.0, 0.0); EMISSIONS]; EMISSIONS];
        for (ea, row) in entries.iter_mut().enumerate() {
            for (eb, cell) in row.iter_mut().enumerate() {
                let ma = emission_mean(&cfg.alice, ea);
                let mb = emission_mean(&cfg.bob, eb);
                let (a0, a1, b0, b1) = (ma * ta0, ma * ta1, mb * tb0, mb * tb1);
                // n0 + n1 ≤ (a0 + b0) + (a1 + b1) for any phase and visibility
                let ub = 1.0 - (1.0 - pd[0]) * (1.0 - pd[1]) * (-(a0 + b0 + a1 + b1)).exp();
                *cell = (a0, b0, a1, b1, (ub * (1.0 + 1e-12)).min(1.0));
            }
        }
        let max_bound = entries.iter().flatten().map(|c| c.4).fold(0.0, f64::max);
        let mut sent_cells = Vec::new();
        for ea in 0..EMISSIONS {
            for eb in 0..EMISSIONS {
                let p = emission_probability(&cfg.alice, ea) * emission_probability(&cfg.bob, eb);
                let (ba, ia) = emission_category(ea);
                let (bb, ib) = emission_category(eb);
                let cat = Category::new(ba, bb, ia, ib).index();
                // matched X pairs: equal intensity μ1 or μ2 and slice difference 0 or 8
                let slot = match (ea, eb) {
                    (1, 1) => Some(0),
                    (2, 2) => Some(1),
                    _ => None,
                };
                match slot {
                    Some(k) => {
                        sent_cells.push((cat, Some(k), p * 2.0 / PHASE_SLICES as f64));
                        sent_cells.push((cat, None, p * (1.0 - 2.0 / PHASE_SLICES as f64)));
                    }
                    None => sent_cells.push((cat, None, p)),
                }
            }
        }
        ClickTable { entries, v: cfg.noise.effective_visibility(), pd, max_bound, sent_cells }
    }

    /// Adds a multinomial draw of `n` windows over the joint choice distribution to the sent
    /// tallies.
    fn sample_sent<R: Rng + ?Sized>(&self, n: u64, counts: &mut CountsTable<u64>, rng: &mut R) {
        let mut left = n;
        let mut mass = 1.0;
        for (i, &(cat, slot, p)) in self.sent_cells.iter().enumerate() {
            if left == 0 {
                break;
            }
            let k = if i + 1 == self.sent_cells.len() || p >= mass {
                left
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0)
            };
            counts.sent[cat] += k;
            if let Some(slot) = slot {
                counts.matched[slot].sent += k;
            }
            left -= k;
            mass -= p;
        }
    }

    /// Exact (P(D0 only), P(D1 only), P(both)).
    fn probabilities(&self, ea: usize, eb: usize, delta: f64) -> (f64, f64, f64) {
        let (a0, b0, a1, b1, _) = self.entries[ea][eb];
        let c = delta.cos();
        let n0 = 0.5 * (a0 + b0) + self.v * (a0 * b0).sqrt() * c;
        let n1 = 0.5 * (a1 + b1) - self.v * (a1 * b1).sqrt() * c;
        let p0 = 1.0 - (1.0 - self.pd[0]) * (-n0.max(0.0)).exp();
        let p1 = 1.0 - (1.0 - self.pd[1]) * (-n1.max(0.0)).exp();
        (p0 * (1.0 - p1), p1 * (1.0 - p0), p0 * p1)
    }

    fn classify(&self, ea: usize, eb: usize, delta: f64, u: f64) -> Outcome {
        if u >= self.entries[ea][eb].4 {
            return Outcome::None;
        }
        let (only0, only1, both) = self.probabilities(ea, eb, delta);
        if u < only0 {
            Outcome::Click(Detector::D0)
        } else if u < only0 + only1 {
            Outcome::Click(Detector::D1)
        } else if u < only0 + only1 + both {
            Outcome::Double
        } else {
            Outcome::None
        }
    }
}

fn slice_phase(sa: u8, sb: u8) -> f64 {
    (sa as f64 - sb as f64) * PI / 8.0
}

/// Simulates the relay's measurement of one window. `phase.phi_q` is the residual λq
/// differential phase added to the slice difference.
pub fn simulate_window<R: RngCore + ?Sized>(
    window_index: u64,
    choice_a: &WindowChoice,
    choice_b: &WindowChoice,
    phase: &ChannelPhaseState,
    cfg: &SessionConfig,
    rng: &mut R,
) -> Option<HeraldedEvent> {
    let table = ClickTable::new(cfg);
    let delta = slice_phase(choice_a.phase_slice, choice_b.phase_slice) + phase.phi_q;
    let u = (rng.next_u64() >> 11) as f64 * TWO_POW_M53;
    match table.classify(choice_a.emission(), choice_b.emission(), delta, u) {
        Outcome::Click(detector) => Some(HeraldedEvent { window_index, detector, announced: true }),
        _ => None,
    }
}

/// Public announcement of a heralded window. This is all the relay ever publishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Announcement {
    pub window: u64,
    pub detector: Detector,
}

/// The relay's view of the session: its own announcements and nothing else.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharlieView {
    pub announcements: Vec<Announcement>,
}

/// A sender's private record of the windows that were heralded.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyLog {
    pub party: Party,
    pub entries: Vec<(u64, WindowChoice)>,
}

impl PartyLog {
    fn new(party: Party) -> Self {
        PartyLog { party, entries: Vec::new() }
    }
}

/// In-process queue carrying announcements to both senders after a fixed latency.
#[derive(Debug)]
struct MessageQueue {
    latency: u64,
    queue: VecDeque<Announcement>,
}

impl MessageQueue {
    fn publish(&mut self, a: Announcement) {
        self.queue.push_back(a);
    }

    /// Pops announcements due by `now` (all of them when `now` is `None`).
    fn due(&mut self, now: Option<u64>) -> Option<Announcement> {
        let front = self.queue.front()?;
        match now {
            Some(t) if front.window + self.latency > t => None,
            _ => self.queue.pop_front(),
        }
    }
}

/// A sender: draws its own choices from its own stream and remembers them until the
/// corresponding announcement (or its absence) is settled.
struct Station<'a> {
    party: Party,
    settings: &'a PartySettings,
    rng: ChaCha8Rng,
    pending: VecDeque<(u64, WindowChoice)>,
    log: PartyLog,
}

impl<'a> Station<'a> {
    fn new(party: Party, settings: &'a PartySettings, rng: ChaCha8Rng) -> Self {
        Station { party, settings, rng, pending: VecDeque::new(), log: PartyLog::new(party) }
    }

    fn prepare(&mut self, window: u64) -> WindowChoice {
        let c = choose_window(self.settings, self.party, &mut self.rng);
        self.pending.push_back((window, c));
        c
    }

    fn receive(&mut self, a: &Announcement) {
        while let Some(&(w, c)) = self.pending.front() {
            if w > a.window {
                break;
            }
            self.pending.pop_front();
            if w == a.window {
                self.log.entries.push((w, c));
                break;
            }
        }
    }

    /// Forgets choices for windows whose announcement deadline has passed.
    fn expire(&mut self, through: u64) {
        while matches!(self.pending.front(), Some(&(w, _)) if w <= through) {
            self.pending.pop_front();
        }
    }
}

/// Complete record of a Monte Carlo session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub windows: u64,
    pub seed: u64,
    pub chunks: usize,
    pub alice: PartyLog,
    pub bob: PartyLog,
    pub charlie: CharlieView,
    pub counts: CountsTable<u64>,
}

impl SessionRecord {
    pub fn heralded_events(&self) -> impl Iterator<Item = HeraldedEvent> + '_ {
        self.charlie.announcements.iter().map(|a| HeraldedEvent {
            window_index: a.window,
            detector: a.detector,
            announced: true,
        })
    }
}

struct ChunkOutput {
    counts: CountsTable<u64>,
    alice: Vec<(u64, WindowChoice)>,
    bob: Vec<(u64, WindowChoice)>,
    charlie: Vec<Announcement>,
}

fn stream_rng(seed: u64, segment: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(segment * 4 + role);
    rng
}

fn matched_index(a: &WindowChoice, b: &WindowChoice) -> Option<(usize, u8)> {
    if a.kind != WindowKind::Decoy || b.kind != WindowKind::Decoy || a.intensity != b.intensity {
        return None;
    }
    let k = match a.intensity {
        Intensity::Mu1 => 0,
        Intensity::Mu2 => 1,
        _ => return None,
    };
    let d = (a.phase_slice + PHASE_SLICES - b.phase_slice) % PHASE_SLICES;
    (d == 0 || d == 8).then_some((k, d))
}

/// Runs one segment.
///
/// Clicks are rare, so windows are visited by skip-ahead: candidate windows arrive as a
/// Bernoulli process at the largest click probability of any emission pair, and only they
/// draw choices, residual phase and an outcome (with the uniform conditioned on candidacy,
/// so outcomes are exact). Every other valid window is a certain no-click whose choices
/// only matter for the sent tallies, which are drawn as one multinomial per segment.
fn run_segment(cfg: &SessionConfig, table: &ClickTable, seed: u64, segment: u64, end: u64, out: &mut ChunkOutput) {
    let start = segment * SEGMENT_WINDOWS;
    let mut alice = Station::new(Party::Alice, &cfg.alice, stream_rng(seed, segment, 0));
    let mut bob = Station::new(Party::Bob, &cfg.bob, stream_rng(seed, segment, 1));
    let mut channel = stream_rng(seed, segment, 2);
    let mut queue = MessageQueue { latency: cfg.message_latency, queue: VecDeque::new() };
    let sigma = cfg.noise.residual_phase_std_rad;
    let counts = &mut out.counts;

    // block validity for the whole segment from its own stream
    let blocks = (end - start).div_ceil(BLOCK_WINDOWS);
    let valid: Vec<bool> = if cfg.blanked_block_fraction > 0.0 {
        let mut mask_rng = stream_rng(seed, segment, 3);
        (0..blocks).map(|_| mask_rng.random::<f64>() >= cfg.blanked_block_fraction).collect()
    } else {
        vec![true; blocks as usize]
    };
    let valid_windows: u64 = (0..blocks)
        .filter(|&b| valid[b as usize])
        .map(|b| (start + (b + 1) * BLOCK_WINDOWS).min(end) - (start + b * BLOCK_WINDOWS))
        .sum();
    counts.windows += end - start;
    counts.invalid += end - start - valid_windows;

    let ub = table.max_bound;
    let log_miss = (-ub).ln_1p();
    let mut residual = (u64::MAX, 0.0);
    let mut candidates = 0u64;
    let mut w = start;
    loop {
        if ub <= 0.0 {
            break;
        }
        if ub < 1.0 {
            let u = 1.0 - (channel.next_u64() >> 11) as f64 * TWO_POW_M53;
            let gap = (u.ln() / log_miss).floor();
            if gap >= (end - w) as f64 {
                break;
            }
            w += gap as u64;
        }
        if w >= end {
            break;
        }
        let block = (w - start) / BLOCK_WINDOWS;
        if valid[block as usize] {
            candidates += 1;
            if residual.0 != block {
                let z: f64 = StandardNormal.sample(&mut channel);
                residual = (block, sigma * z);
            }
            let ca = alice.prepare(w);
            let cb = bob.prepare(w);
            let u = (channel.next_u64() >> 11) as f64 * TWO_POW_M53 * ub;
            let (ba, ia) = emission_category(ca.emission());
            let (bb, ib) = emission_category(cb.emission());
            let cat = Category::new(ba, bb, ia, ib).index();
            counts.sent[cat] += 1;
            let matched = matched_index(&ca, &cb);
            if let Some((k, _)) = matched {
                counts.matched[k].sent += 1;
            }
            let delta = slice_phase(ca.phase_slice, cb.phase_slice) + residual.1;
            match table.classify(ca.emission(), cb.emission(), delta, u) {
                Outcome::None => counts.no_click += 1,
                Outcome::Double => counts.double_click += 1,
                Outcome::Click(detector) => {
                    counts.detected[cat] += 1;
                    if let Some((k, d)) = matched {
                        counts.matched[k].detected += 1;
                        let correct = if d == 0 { Detector::D0 } else { Detector::D1 };
                        if detector != correct {
                            counts.matched[k].errors += 1;
                        }
                    }
                    let a = Announcement { window: w, detector };
                    out.charlie.push(a);
                    queue.publish(a);
                }
            }
            while let Some(a) = queue.due(Some(w)) {
                alice.receive(&a);
                bob.receive(&a);
            }
            if let Some(deadline) = w.checked_sub(cfg.message_latency) {
                alice.expire(deadline);
                bob.expire(deadline);
            }
        }
        w += 1;
    }
    while let Some(a) = queue.due(None) {
        alice.receive(&a);
        bob.receive(&a);
    }
    out.alice.append(&mut alice.log.entries);
    out.bob.append(&mut bob.log.entries);

    let quiet = valid_windows - candidates;
    counts.no_click += quiet;
    table.sample_sent(quiet, counts, &mut channel);
}

fn run_chunk(cfg: &SessionConfig, table: &ClickTable, seed: u64, windows: u64, segments: std::ops::Range<u64>) -> ChunkOutput {
    let mut out = ChunkOutput {
        counts: CountsTable::default(),
        alice: Vec::new(),
        bob: Vec::new(),
        charlie: Vec::new(),
    };
    for s in segments {
        let end = ((s + 1) * SEGMENT_WINDOWS).min(windows);
        run_segment(cfg, table, seed, s, end, &mut out);
    }
    out
}

/// Runs a Monte Carlo session of `windows` windows split into `chunks` chunks.
pub fn run_session(cfg: &SessionConfig, windows: u64, seed: u64, chunks: usize) -> Result<SessionRecord> {
    run_session_with(cfg, windows, seed, chunks, Execution::default())
}

/// How chunks are scheduled. Both give identical records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// Rayon work-stealing over chunks (sequential when built without `parallel`).
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

pub fn run_session_with(
    cfg: &SessionConfig,
    windows: u64,
    seed: u64,
    chunks: usize,
    exec: Execution,
) -> Result<SessionRecord> {
    cfg.validate()?;
    if chunks == 0 {
        return Err(Error::config("run.chunks", "must be at least 1"));
    }
    let table = ClickTable::new(cfg);
    let segments = windows.div_ceil(SEGMENT_WINDOWS);
    let k = chunks as u64;
    let ranges: Vec<_> = (0..k).map(|c| (c * segments / k)..((c + 1) * segments / k)).collect();
    let run = |r| run_chunk(cfg, &table, seed, windows, r);

    let outputs: Vec<ChunkOutput> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(run).collect()
        }
        _ => ranges.into_iter().map(run).collect(),
    };

    let mut record = SessionRecord {
        windows,
        seed,
        chunks,
        alice: PartyLog::new(Party::Alice),
        bob: PartyLog::new(Party::Bob),
        charlie: CharlieView::default(),
        counts: CountsTable::default(),
    };
    for mut o in outputs {
        record.counts += &o.counts;
        record.alice.entries.append(&mut o.alice);
        record.bob.entries.append(&mut o.bob);
        record.charlie.announcements.append(&mut o.charlie);
    }
    Ok(record)
}

/// Probability-weighted click outcomes of one emission pair for each slice difference,
/// averaged over the Gaussian residual phase: `[d] -> (D0 only, D1 only, both)`.
fn slice_outcomes(table: &ClickTable, ea: usize, eb: usize, sigma: f64, nodes: &[(f64, f64)]) -> [(f64, f64, f64); 16] {
    let mut out = [(0.0, 0.0, 0.0); 16];
    let norm = PI.sqrt();
    for (d, slot) in out.iter_mut().enumerate() {
        let base = d as f64 * PI / 8.0;
        let mut acc = (0.0, 0.0, 0.0);
        for &(x, w) in nodes {
            let (p0, p1, pb) = table.probabilities(ea, eb, base + std::f64::consts::SQRT_2 * sigma * x);
            acc.0 += w * p0;
            acc.1 += w * p1;
            acc.2 += w * pb;
        }
        *slot = (acc.0 / norm, acc.1 / norm, acc.2 / norm);
    }
    out
}

/// Expected tallies of an `n`-window session, enumerating emission classes and averaging the
/// click probabilities over the 16 slice differences and the Gaussian residual phase.
pub fn expected_counts(cfg: &SessionConfig, n: f64) -> Result<CountsTable<f64>> {
    cfg.validate()?;
    let table = ClickTable::new(cfg);
    let nodes = gauss_hermite(24);
    let sigma = cfg.noise.residual_phase_std_rad;
    let valid = 1.0 - cfg.blanked_block_fraction;
    let mut t = CountsTable::<f64> {
        windows: n,
        invalid: n * cfg.blanked_block_fraction,
        ..Default::default()
    };
    for ea in 0..EMISSIONS {
        for eb in 0..EMISSIONS {
            let w = n * valid * emission_probability(&cfg.alice, ea) * emission_probability(&cfg.bob, eb);
            let (ba, ia) = emission_category(ea);
            let (bb, ib) = emission_category(eb);
            let cat = Category::new(ba, bb, ia, ib).index();
            let per_slice = slice_outcomes(&table, ea, eb, sigma, &nodes);
            let (mut single, mut double) = (0.0, 0.0);
            for &(p0, p1, pb) in &per_slice {
                single += (p0 + p1) / 16.0;
                double += pb / 16.0;
            }
            t.sent[cat] += w;
            t.detected[cat] += w * single;
            t.double_click += w * double;
            t.no_click += w * (1.0 - single - double);
            if ea == eb && (ea == 1 || ea == 2) {
                let k = ea - 1;
                let (c0, c8) = (per_slice[0], per_slice[8]);
                t.matched[k].sent += w * 2.0 / 16.0;
                t.matched[k].detected += w * (c0.0 + c0.1 + c8.0 + c8.1) / 16.0;
                t.matched[k].errors += w * (c0.1 + c8.0) / 16.0;
            }
        }
    }
    Ok(t)
}
