//! Key-rate kernel: binary entropy, the post-pairing finite key formula, the repeaterless
//! bound and the intensity-balance condition between the two senders.
//!
//! Everything here is pure; the functions are safe to call from any thread.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Effective quantum clock (Hz) used for per-second conversions.
pub const DEFAULT_CLOCK_HZ: f64 = 5.0e8;

/// One sender's source settings.
///
/// `p_signal_window` is the probability a window is a signal (Z) window; within it the
/// sender emits `mu_z` with probability `epsilon_send`. Decoy windows draw `mu0`/`mu1`/`mu2`
/// with `p_mu0`/`p_mu1`/`p_mu2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartySettings {
    pub mu_z: f64,
    pub mu2: f64,
    pub mu1: f64,
    pub mu0: f64,
    pub p_signal_window: f64,
    pub epsilon_send: f64,
    pub p_mu0: f64,
    pub p_mu1: f64,
    pub p_mu2: f64,
}

impl PartySettings {
    /// Checks the invariants, naming offending fields relative to `path`.
    pub fn validate(&self, path: &str) -> Result<()> {
        let field = |name: &str| format!("{path}.{name}");
        for (name, v) in [
            ("mu_z", self.mu_z),
            ("mu2", self.mu2),
            ("mu1", self.mu1),
            ("mu0", self.mu0),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(field(name), format!("must be a finite nonnegative mean photon number, got {v}")));
            }
        }
        if self.mu_z <= 0.0 {
            return Err(Error::config(field("mu_z"), "must be positive"));
        }
        if !(self.mu0 < self.mu1 && self.mu1 < self.mu2) {
            return Err(Error::config(
                field("mu1"),
                format!("intensities must satisfy mu0 < mu1 < mu2, got {} / {} / {}", self.mu0, self.mu1, self.mu2),
            ));
        }
        for (name, p) in [
            ("p_signal_window", self.p_signal_window),
            ("epsilon_send", self.epsilon_send),
            ("p_mu0", self.p_mu0),
            ("p_mu1", self.p_mu1),
            ("p_mu2", self.p_mu2),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(field(name), format!("probability must lie in [0, 1], got {p}")));
            }
        }
        let sum = self.p_mu0 + self.p_mu1 + self.p_mu2;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(field("p_mu*"), format!("decoy probabilities must sum to 1, got {sum}")));
        }
        Ok(())
    }

    pub fn p_decoy_window(&self) -> f64 {
        1.0 - self.p_signal_window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Asymptotic,
    #[default]
    Finite,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Asymptotic => "asymptotic",
            Mode::Finite => "finite",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(Mode::Asymptotic),
            "finite" => Ok(Mode::Finite),
            other => Err(Error::config("mode", format!("expected `asymptotic` or `finite`, got `{other}`"))),
        }
    }
}

/// Error-correction efficiency, failure probabilities and analysis mode.
///
/// `eps_pe` is the parameter-estimation failure budget shared evenly by all Chernoff
/// applications in finite mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecuritySettings {
    pub f: f64,
    pub eps_cor: f64,
    pub eps_pa: f64,
    pub eps_hat: f64,
    pub eps_pe: f64,
    pub mode: Mode,
}

impl Default for SecuritySettings {
    fn default() -> Self {
        SecuritySettings {
            f: 1.1,
            eps_cor: 1e-10,
            eps_pa: 1e-10,
            eps_hat: 1e-10,
            eps_pe: 1e-10,
            mode: Mode::Finite,
        }
    }
}

impl SecuritySettings {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.f >= 1.0 && self.f.is_finite()) {
            return Err(Error::config(format!("{path}.f"), format!("must be >= 1, got {}", self.f)));
        }
        for (name, e) in [
            ("eps_cor", self.eps_cor),
            ("eps_pa", self.eps_pa),
            ("eps_hat", self.eps_hat),
            ("eps_pe", self.eps_pe),
        ] {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("failure probability must lie in (0, 1), got {e}")));
            }
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

/// Inputs of the post-pairing key formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateInputs {
    /// Total window count.
    pub n: f64,
    pub n1_prime: f64,
    pub e1_ph_prime: f64,
    pub nt_prime: f64,
    pub e_prime: f64,
}

impl KeyRateInputs {
    pub fn validate(&self) -> Result<()> {
        let dom = |what, value, expected| Err(Error::Domain { what, value, expected });
        if !(0.0..=0.5).contains(&self.e1_ph_prime) {
            return dom("e1_ph_prime", self.e1_ph_prime, "[0, 0.5]");
        }
        if !(0.0..=0.5).contains(&self.e_prime) {
            return dom("e_prime", self.e_prime, "[0, 0.5]");
        }
        if !(self.n1_prime >= 0.0 && self.n1_prime <= self.nt_prime * (1.0 + 1e-12)) {
            return dom("n1_prime", self.n1_prime, "0 <= n1' <= nt'");
        }
        if self.nt_prime > self.n * (1.0 + 1e-12) {
            return dom("nt_prime", self.nt_prime, "nt' <= N");
        }
        Ok(())
    }
}

/// h(x) = −x log₂ x − (1−x) log₂(1−x), continuous at the endpoints.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            what: "binary entropy argument",
            value: x,
            expected: "[0, 1]",
        });
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// Unclamped key rate per window.
pub fn key_rate_unclamped(inputs: &KeyRateInputs, sec: &SecuritySettings) -> Result<f64> {
    inputs.validate()?;
    if inputs.n <= 0.0 {
        return Ok(0.0);
    }
    let privacy = inputs.n1_prime * (1.0 - binary_entropy(inputs.e1_ph_prime)?);
    let leak = sec.f * inputs.nt_prime * binary_entropy(inputs.e_prime)?;
    let finite = match sec.mode {
        Mode::Asymptotic => 0.0,
        Mode::Finite => {
            2.0 * (2.0 / sec.eps_cor).log2()
                + 2.0 * (1.0 / (std::f64::consts::SQRT_2 * sec.eps_pa * sec.eps_hat)).log2()
        }
    };
    Ok((privacy - leak - finite) / inputs.n)
}

/// Key rate per window, clamped at zero.
pub fn key_rate(inputs: &KeyRateInputs, sec: &SecuritySettings) -> Result<f64> {
    Ok(key_rate_unclamped(inputs, sec)?.max(0.0))
}

pub fn rate_per_second(rate: f64, clock_hz: f64) -> f64 {
    rate * clock_hz
}

/// Repeaterless secret-key capacity −log₂(1−η) for a channel of the given loss.
pub fn plob_bound(total_loss_db: f64) -> f64 {
    let eta = 10f64.powf(-total_loss_db / 10.0);
    -(-eta).ln_1p() / std::f64::consts::LN_2
}

/// Right-hand side of the balance condition, i.e. the μ1 ratio a/b that equalizes the
/// single-photon contributions of the two senders' signal windows.
pub fn sns_balance_ratio(a: &PartySettings, b: &PartySettings) -> f64 {
    let num = a.epsilon_send * (1.0 - b.epsilon_send) * a.mu_z * (-a.mu_z).exp();
    let den = b.epsilon_send * (1.0 - a.epsilon_send) * b.mu_z * (-b.mu_z).exp();
    num / den
}

/// Relative deviation |LHS − RHS|/RHS of the balance condition, LHS = μ1ᵃ/μ1ᵇ.
pub fn check_sns_constraint(a: &PartySettings, b: &PartySettings) -> Result<f64> {
    if b.mu1 == 0.0 {
        return Err(Error::Domain {
            what: "mu1 of the second party",
            value: 0.0,
            expected: "> 0",
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let rhs = sns_balance_ratio(a, b);
    if !(rhs.is_finite() && rhs > 0.0) {
        return Err(Error::Domain {
            what: "balance-condition right-hand side",
            value: rhs,
            expected: "finite and > 0",
        });
    }
    let lhs = a.mu1 / b.mu1;
    Ok((lhs - rhs).abs() / rhs)
}

/// X-basis error floor from a Gaussian phase error of std `sigma` and visibility `v`.
pub fn phase_misalignment_qber(sigma: f64, v: f64) -> f64 {
    0.5 * (1.0 - v * (-0.5 * sigma * sigma).exp())
}
