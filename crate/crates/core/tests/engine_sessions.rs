use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tfqkd::engine::{
    choose_window, expected_counts, run_session, run_session_with, Basis, Category, CountsTable, Execution, Intensity,
    Party, WindowKind,
};
use tfqkd::experiment::Preset;

fn within_binomial(hits: u64, n: u64, p: f64, sigmas: f64) -> bool {
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - n as f64 * p).abs() <= sigmas * sd
}

#[test]
fn decoy_mu1_frequency_over_ten_million_draws() {
    let s = Preset::Sym546.config().protocol.alice;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000_000u64;
    let hits = (0..n)
        .filter(|_| {
            let c = choose_window(&s, Party::Alice, &mut rng);
            c.kind == WindowKind::Decoy && c.intensity == Intensity::Mu1
        })
        .count() as u64;
    assert!(within_binomial(hits, n, 0.265 * 0.606, 3.0), "{hits}");
}

#[test]
fn every_choice_class_matches_its_probability() {
    for party in [Party::Alice, Party::Bob] {
        let s = Preset::Asym452.config().protocol.alice;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 2_000_000u64;
        let mut seen: HashMap<(WindowKind, Intensity, Option<u8>), u64> = HashMap::new();
        let mut slices = [0u64; 16];
        for _ in 0..n {
            let c = choose_window(&s, party, &mut rng);
            *seen.entry((c.kind, c.intensity, c.z_bit)).or_default() += 1;
            slices[c.phase_slice as usize] += 1;
        }
        let pd = 1.0 - s.p_signal_window;
        let (send, skip) = match party {
            Party::Alice => (1, 0),
            Party::Bob => (0, 1),
        };
        let expect = [
            ((WindowKind::Decoy, Intensity::Mu0, None), pd * s.p_mu0),
            ((WindowKind::Decoy, Intensity::Mu1, None), pd * s.p_mu1),
            ((WindowKind::Decoy, Intensity::Mu2, None), pd * s.p_mu2),
            ((WindowKind::Signal, Intensity::MuZ, Some(send)), s.p_signal_window * s.epsilon_send),
            ((WindowKind::Signal, Intensity::Mu0, Some(skip)), s.p_signal_window * (1.0 - s.epsilon_send)),
        ];
        assert_eq!(seen.len(), expect.len(), "{seen:?}");
        for (key, p) in expect {
            let hits = seen.get(&key).copied().unwrap_or(0);
            assert!(within_binomial(hits, n, p, 4.0), "{party:?} {key:?}: {hits} vs {}", n as f64 * p);
        }
        for &k in &slices {
            assert!(within_binomial(k, n, 1.0 / 16.0, 4.0), "{slices:?}");
        }
    }
}

#[test]
fn zz_ratio_of_546_preset() {
    let cfg = Preset::Sym546.config();
    let e = expected_counts(&cfg.session(), cfg.run.windows).unwrap();
    let zz = |a, b| e.detected_in(Category::new(Basis::Z, Basis::Z, a, b));
    let ratio = zz(3, 3) / zz(0, 3);
    let measured = 3107361.0 / 4005761.0;
    assert!((ratio / measured - 1.0).abs() <= 0.15, "{ratio}");
}

#[test]
fn sequential_and_parallel_records_are_identical() {
    let session = Preset::Sym603.config().session();
    let n = 40_000_000;
    let par = run_session_with(&session, n, 5, 8, Execution::Parallel).unwrap();
    let seq = run_session_with(&session, n, 5, 8, Execution::Sequential).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn detected_tallies_replay_from_party_logs() {
    let session = Preset::Sym546.config().session();
    let r = run_session(&session, 100_000_000, 9, 4).unwrap();
    assert!(!r.charlie.announcements.is_empty());
    let mut replay = CountsTable::<u64>::default();
    for ((wa, ca), ((wb, cb), ann)) in r.alice.entries.iter().zip(r.bob.entries.iter().zip(&r.charlie.announcements)) {
        assert_eq!((*wa, *wb), (ann.window, ann.window));
        let label = |c: &tfqkd::engine::WindowChoice| match c.kind {
            WindowKind::Decoy => c.intensity.label(),
            WindowKind::Signal if c.intensity == Intensity::MuZ => 3,
            WindowKind::Signal => 0,
        };
        replay.detected[Category::new(ca.basis(), cb.basis(), label(ca), label(cb)).index()] += 1;
    }
    assert_eq!(replay.detected, r.counts.detected);
}

#[test]
fn monte_carlo_matches_expectation_on_546_preset() {
    let session = Preset::Sym546.config().session();
    let n = 100_000_000u64;
    let r = run_session(&session, n, 20240601, 8).unwrap();
    let e = expected_counts(&session, n as f64).unwrap();
    let check = |what: String, got: u64, ex: f64| {
        assert!((got as f64 - ex).abs() <= 4.0 * ex.sqrt().max(1.0), "{what}: {got} vs {ex}");
    };
    for c in Category::all() {
        check(format!("detected {c}"), r.counts.detected_in(c), e.detected_in(c));
    }
    let heralded: u64 = r.counts.detected.iter().sum();
    check("heralded".into(), heralded, e.total_detected());
}

#[test]
fn counts_addition_is_associative_and_commutative() {
    let session = Preset::Sym546.config().session();
    let parts: Vec<_> = (0..3).map(|s| run_session(&session, 2_000_000, s, 1).unwrap().counts).collect();
    let sum = |order: [usize; 3]| {
        let mut t = CountsTable::default();
        for i in order {
            t += &parts[i];
        }
        t
    };
    assert_eq!(sum([0, 1, 2]), sum([2, 0, 1]));
    let mut left = parts[0].clone();
    left += &parts[1];
    left += &parts[2];
    let mut right = parts[1].clone();
    right += &parts[2];
    let mut grouped = parts[0].clone();
    grouped += &right;
    assert_eq!(left, grouped);
}
