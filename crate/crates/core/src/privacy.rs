//! Gaussian mechanism on local gradients and the composition accountant.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::euclidean_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Sensitivity bound `u_i`; gradients are kept within `u_i / 2`.
    pub sensitivity: f64,
    pub enabled: bool,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        let p = PrivacyParams {
            epsilon,
            delta,
            sensitivity,
            enabled: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn disabled() -> Self {
        PrivacyParams {
            epsilon: 1.0,
            delta: 0.5,
            sensitivity: 0.0,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("{} must be > 0", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("{} not in (0, 1)", self.delta)));
        }
        if !(self.sensitivity >= 0.0 && self.sensitivity.is_finite()) {
            return Err(Error::invalid("sensitivity", format!("{} must be >= 0", self.sensitivity)));
        }
        Ok(())
    }
}

/// `rho_i = 2 ln(1.25 / delta) u_i^2 / epsilon^2`.
pub fn gaussian_variance(p: &PrivacyParams) -> f64 {
    2.0 * (1.25 / p.delta).ln() * p.sensitivity * p.sensitivity / (p.epsilon * p.epsilon)
}

/// Noise variance actually applied: zero when privacy is disabled.
pub fn effective_variance(p: &PrivacyParams) -> f64 {
    if p.enabled {
        gaussian_variance(p)
    } else {
        0.0
    }
}

/// `n` i.i.d. `N(0, variance)` draws. Zero variance draws nothing.
pub fn sample_noise<R: Rng + ?Sized>(variance: f64, n: usize, rng: &mut R) -> Vec<f64> {
    if variance <= 0.0 {
        return vec![0.0; n];
    }
    let sd = variance.sqrt();
    (0..n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Scales `g` down to norm `u_i / 2` if it exceeds it. The flag reports
/// whether clipping happened.
pub fn clip_gradient(g: &[f64], sensitivity: f64) -> (Vec<f64>, bool) {
    let bound = sensitivity / 2.0;
    let norm = euclidean_norm(g);
    if norm <= bound {
        (g.to_vec(), false)
    } else {
        let scale = bound / norm;
        (g.iter().map(|x| x * scale).collect(), true)
    }
}

/// Guarantee of one noised communication step; parallel composition over
/// nodes leaves it unchanged. `None` when noise is off.
pub fn per_step_guarantee(p: &PrivacyParams) -> Option<(f64, f64)> {
    p.enabled.then_some((p.epsilon, p.delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpend {
    pub rounds_a: u64,
    pub epsilon_total: f64,
    pub delta_total_raw: f64,
    pub delta_total_capped: f64,
}

/// Advanced composition over `a` noised communication rounds:
/// `(sqrt(2a ln(1/delta)) eps + a eps (e^eps - 1), (a + 1) delta)`.
pub fn compose_privacy(a: u64, p: &PrivacyParams) -> PrivacySpend {
    let af = a as f64;
    let eps = p.epsilon;
    let epsilon_total = (2.0 * af * (1.0 / p.delta).ln()).sqrt() * eps + af * eps * eps.exp_m1();
    let delta_total_raw = (af + 1.0) * p.delta;
    PrivacySpend {
        rounds_a: a,
        epsilon_total,
        delta_total_raw,
        delta_total_capped: delta_total_raw.min(1.0),
    }
}

/// Tracks completed communication rounds and the composed spend.
#[derive(Debug, Clone)]
pub struct PrivacyAccountant {
    params: PrivacyParams,
    rounds: u64,
}

impl PrivacyAccountant {
    pub fn new(params: PrivacyParams) -> Self {
        PrivacyAccountant { params, rounds: 0 }
    }

    pub fn set_rounds(&mut self, rounds: u64) {
        debug_assert!(rounds >= self.rounds, "rounds never decrease");
        self.rounds = self.rounds.max(rounds);
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Zero spend when privacy is disabled.
    pub fn spend(&self) -> PrivacySpend {
        if self.params.enabled {
            compose_privacy(self.rounds, &self.params)
        } else {
            PrivacySpend {
                rounds_a: self.rounds,
                epsilon_total: 0.0,
                delta_total_raw: 0.0,
                delta_total_capped: 0.0,
            }
        }
    }
}
