//! Synthetic photon-number channels with known yields, for checking the decoy bounds.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use tfqkd::engine::{Basis, Category, CountsTable};
use tfqkd::ratecore::PartySettings;

/// Photon numbers carried explicitly; the Poisson tail beyond is negligible for μ ≤ 1.
pub const MAX_PHOTONS: usize = 24;

#[derive(Debug, Clone)]
pub struct SyntheticChannel {
    pub alice: PartySettings,
    pub bob: PartySettings,
    /// Yield of n photons from one sender while the other is dark, per side.
    pub yields_a: [f64; MAX_PHOTONS],
    pub yields_b: [f64; MAX_PHOTONS],
    /// True single-photon phase-flip rate.
    pub e1: f64,
    /// Yield and error rate of matched X windows with two or more photons in total.
    pub multi_yield: f64,
    pub multi_error: f64,
    /// Windows sent per category.
    pub sent: f64,
}

fn poisson(mu: f64, n: usize) -> f64 {
    let mut p = (-mu).exp();
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

fn settings<R: Rng>(rng: &mut R) -> PartySettings {
    let mu1 = rng.random_range(0.02..0.2);
    let mu2 = rng.random_range(mu1 + 0.05..0.8);
    PartySettings {
        mu_z: rng.random_range(0.1..0.8),
        mu2,
        mu1,
        mu0: 0.0,
        p_signal_window: 0.7,
        epsilon_send: rng.random_range(0.1..0.5),
        p_mu0: 0.1,
        p_mu1: 0.6,
        p_mu2: 0.3,
    }
}

fn yields<R: Rng>(rng: &mut R, y0: f64) -> [f64; MAX_PHOTONS] {
    let eta: f64 = 10f64.powf(rng.random_range(-6.0..-2.0));
    let mut y = [0.0; MAX_PHOTONS];
    y[0] = y0;
    for (n, slot) in y.iter_mut().enumerate().skip(1) {
        // loss-like yield times an arbitrary distortion for the multi-photon terms
        let base = 1.0 - (1.0 - y0) * (1.0 - eta).powi(n as i32);
        let distort = if n == 1 { 1.0 } else { rng.random_range(0.0..3.0) };
        *slot = (base * distort).min(1.0);
    }
    y
}

impl SyntheticChannel {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let y0 = 10f64.powf(rng.random_range(-9.0..-6.0));
        let yields_a = yields(rng, y0);
        let yields_b = yields(rng, y0);
        SyntheticChannel {
            alice: settings(rng),
            bob: settings(rng),
            yields_a,
            yields_b,
            e1: rng.random_range(0.0..0.3),
            // comparable to the two-photon yields, so the phase-error bound is not trivially 1/2
            multi_yield: rng.random_range(0.0..1.5) * yields_a[2].max(yields_b[2]),
            multi_error: rng.random_range(0.0..1.0),
            sent: 10f64.powf(rng.random_range(10.0..13.0)),
        }
    }

    fn rate(mu: f64, y: &[f64; MAX_PHOTONS]) -> f64 {
        (0..MAX_PHOTONS).map(|n| poisson(mu, n) * y[n]).sum()
    }

    /// Expected tallies the decoy analysis reads.
    pub fn expected_counts(&self) -> CountsTable<f64> {
        use Basis::{X, Z};
        let mut t = CountsTable::<f64> { windows: 20.0 * self.sent, ..Default::default() };
        let y0 = self.yields_a[0];
        let a = &self.alice;
        let b = &self.bob;
        let mut put = |c: Category, rate: f64| {
            t.sent[c.index()] = self.sent;
            t.detected[c.index()] = self.sent * rate;
        };
        for (i, mu) in [a.mu0, a.mu1, a.mu2].into_iter().enumerate() {
            put(Category::new(X, Z, i as u8, 0), Self::rate(mu, &self.yields_a));
        }
        for (i, mu) in [b.mu0, b.mu1, b.mu2].into_iter().enumerate() {
            put(Category::new(Z, X, 0, i as u8), Self::rate(mu, &self.yields_b));
        }
        put(Category::new(X, X, 0, 0), y0);
        put(Category::new(Z, Z, 3, 0), Self::rate(a.mu_z, &self.yields_a));
        put(Category::new(Z, Z, 0, 3), Self::rate(b.mu_z, &self.yields_b));
        // matched (μ1, μ1): vacuum errs half the time, single photons at e1, the rest at will
        let p0 = (-(a.mu1 + b.mu1)).exp();
        let single = p0 * (a.mu1 * self.yields_a[1] + b.mu1 * self.yields_b[1]);
        let multi = (1.0 - p0 * (1.0 + a.mu1 + b.mu1)) * self.multi_yield;
        let m = &mut t.matched[0];
        m.sent = self.sent;
        m.detected = self.sent * (p0 * y0 + single + multi);
        m.errors = self.sent * (p0 * y0 / 2.0 + single * self.e1 + multi * self.multi_error);
        t
    }

    /// The same tallies with Poisson-distributed detections.
    pub fn sampled_counts<R: Rng>(&self, rng: &mut R) -> CountsTable<f64> {
        let mut t = self.expected_counts();
        let draw = |mean: f64, rng: &mut R| if mean > 0.0 { Poisson::new(mean).unwrap().sample(rng) } else { 0.0 };
        for i in 0..64 {
            t.detected[i] = draw(t.detected[i], rng);
        }
        let m = &mut t.matched[0];
        let errors = draw(m.errors, rng);
        m.detected = errors + draw(m.detected - m.errors, rng);
        m.errors = errors;
        t
    }

    /// Single-photon counts in the signal windows where exactly one party sent.
    pub fn true_n1(&self) -> f64 {
        let a = &self.alice;
        let b = &self.bob;
        self.sent * (a.mu_z * (-a.mu_z).exp() * self.yields_a[1] + b.mu_z * (-b.mu_z).exp() * self.yields_b[1])
    }
}
