//! zCDP accounting and the randomized primitives: the Gaussian mechanism,
//! report-noisy-max with Gumbel noise, and conversion to (ε, δ)-DP.

use rand::Rng;
use rand::distr::Open01;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative slack allowed when checking a spend against the total budget.
const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub label: String,
    pub rho: f64,
}

/// Running zCDP budget. Spends compose additively and are summed with
/// Neumaier compensation so `spent_rho` matches the exact sum of entries.
#[derive(Debug, Clone, Serialize)]
pub struct PrivacyLedger {
    total_rho: f64,
    delta: f64,
    spent_rho: f64,
    #[serde(skip)]
    compensation: f64,
    entries: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn new(total_rho: f64, delta: f64) -> Result<Self> {
        if !(total_rho.is_finite() && total_rho >= 0.0) {
            return Err(Error::param(format!("total rho must be finite and >= 0, got {total_rho}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self {
            total_rho,
            delta,
            spent_rho: 0.0,
            compensation: 0.0,
            entries: Vec::new(),
        })
    }

    /// Record a spend, rejecting it if the budget would be exceeded.
    pub fn spend(&mut self, label: impl Into<String>, rho: f64) -> Result<()> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::param(format!("spend must be positive, got {rho}")));
        }
        let projected = self.spent_rho + self.compensation + rho;
        if projected > self.total_rho * (1.0 + BUDGET_SLACK) {
            return Err(Error::BudgetExceeded {
                requested: rho,
                spent: self.spent(),
                total: self.total_rho,
            });
        }
        // Neumaier summation
        let t = self.spent_rho + rho;
        if self.spent_rho.abs() >= rho.abs() {
            self.compensation += (self.spent_rho - t) + rho;
        } else {
            self.compensation += (rho - t) + self.spent_rho;
        }
        self.spent_rho = t;
        self.entries.push(LedgerEntry {
            label: label.into(),
            rho,
        });
        Ok(())
    }

    pub fn total_rho(&self) -> f64 {
        self.total_rho
    }

    pub fn spent(&self) -> f64 {
        self.spent_rho + self.compensation
    }

    pub fn remaining(&self) -> f64 {
        (self.total_rho - self.spent()).max(0.0)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// ε of the spent budget at this ledger's δ.
    pub fn epsilon(&self) -> f64 {
        zcdp_to_dp(self.spent(), self.delta).expect("delta validated at construction")
    }

    pub fn report(&self) -> LedgerReport {
        LedgerReport {
            total_rho: self.total_rho,
            spent_rho: self.spent(),
            delta: self.delta,
            epsilon: self.epsilon(),
            entries: self.entries.clone(),
        }
    }
}

/// Serializable summary of a ledger.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerReport {
    pub total_rho: f64,
    pub spent_rho: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub entries: Vec<LedgerEntry>,
}

/// Output of the Gaussian mechanism.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub values: Vec<f64>,
    pub sigma: f64,
    pub rho_spent: f64,
}

/// Noise standard deviation giving ρ-zCDP for L2 sensitivity `l2_sensitivity`.
pub fn gaussian_sigma(l2_sensitivity: f64, rho: f64) -> f64 {
    l2_sensitivity * (1.0 / (2.0 * rho)).sqrt()
}

/// Perturb every coordinate of `answers` with N(0, σ²), σ = Δ·sqrt(1/(2ρ)).
///
/// The caller is responsible for recording `rho` in its ledger.
pub fn gaussian_mechanism<R: Rng + ?Sized>(
    answers: &[f64],
    l2_sensitivity: f64,
    rho: f64,
    rng: &mut R,
) -> Result<NoiseDraw> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param(format!("rho must be positive, got {rho}")));
    }
    if !(l2_sensitivity.is_finite() && l2_sensitivity > 0.0) {
        return Err(Error::param(format!(
            "sensitivity must be positive, got {l2_sensitivity}"
        )));
    }
    if let Some(bad) = answers.iter().find(|a| !a.is_finite()) {
        return Err(Error::param(format!("non-finite answer {bad}")));
    }
    let sigma = gaussian_sigma(l2_sensitivity, rho);
    let values = answers
        .iter()
        .map(|&a| {
            let z: f64 = rng.sample(StandardNormal);
            a + sigma * z
        })
        .collect();
    Ok(NoiseDraw {
        values,
        sigma,
        rho_spent: rho,
    })
}

/// One Gumbel(0, scale) draw by inverse CDF.
pub fn gumbel<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -scale * (-u.ln()).ln()
}

/// Gumbel scale used by report-noisy-max at budget `rho` over `n_rows` rows.
pub fn rnm_scale(rho: f64, n_rows: usize) -> f64 {
    1.0 / ((2.0 * rho).sqrt() * n_rows as f64)
}

/// Index of the largest `errors[i] + Z_i`, Z_i ~ Gumbel(1/(sqrt(2ρ)·n)).
///
/// The output distribution equals the exponential mechanism with scores
/// `errors` and inverse temperature sqrt(2ρ)·n.
pub fn report_noisy_max<R: Rng + ?Sized>(
    errors: &[f64],
    rho: f64,
    n_rows: usize,
    rng: &mut R,
) -> Result<usize> {
    if errors.is_empty() {
        return Err(Error::param("report_noisy_max needs at least one score"));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param(format!("rho must be positive, got {rho}")));
    }
    if n_rows == 0 {
        return Err(Error::param("n_rows must be at least 1"));
    }
    let scale = rnm_scale(rho, n_rows);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &e) in errors.iter().enumerate() {
        let noisy = e + gumbel(scale, rng);
        if noisy > best_score {
            best = i;
            best_score = noisy;
        }
    }
    Ok(best)
}

/// ε such that ρ-zCDP implies (ε, δ)-DP: ρ + 2·sqrt(ρ·ln(1/δ)).
pub fn zcdp_to_dp(rho: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0,1), got {delta}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::param(format!("rho must be >= 0, got {rho}")));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

/// Largest ρ whose (ε, δ) conversion does not exceed `epsilon`, by bisection.
pub fn dp_to_zcdp(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    zcdp_to_dp(0.0, delta)?;
    // ρ ≤ ε always, since the conversion adds a nonnegative term to ρ
    let (mut lo, mut hi) = (0.0_f64, epsilon);
    while hi - lo > 1e-12 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if zcdp_to_dp(mid, delta)? <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Per-call budget of the adaptive loop: ρ / (2·T·S).
pub fn split_budget(rho: f64, epochs: usize, samples: usize) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) || epochs == 0 || samples == 0 {
        return Err(Error::param(format!(
            "split_budget needs positive arguments, got rho={rho}, T={epochs}, S={samples}"
        )));
    }
    Ok(rho / (2.0 * epochs as f64 * samples as f64))
}
