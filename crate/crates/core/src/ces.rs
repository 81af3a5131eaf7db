//! CES demand and its equivalence with the multinomial logit.
//!
//! Maximizing a CES aggregate under a linear budget gives expenditure shares
//! proportional to `(λ p_i)^{ρ/(ρ-1)}`, which is an MNL in utilities
//! `U_i/σ = ρ/(ρ-1) · ln(λ p_i)`. [`ces_demand_oracle`] finds the maximizer
//! by derivative-free search so the closed form can be checked against it.

use crate::equilibrium::{softmax, ChoiceProbabilities, Sigma};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CesProblem {
    rho: f64,
    prices: Vec<f64>,
    budget: f64,
}

impl CesProblem {
    pub fn new(rho: f64, prices: Vec<f64>, budget: f64) -> Result<Self> {
        check_rho(rho)?;
        if prices.is_empty() {
            return Err(Error::domain("CES problem needs at least one good"));
        }
        if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::domain("prices must be finite and > 0"));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::domain(format!("budget must be > 0, got {budget}")));
        }
        Ok(CesProblem {
            rho,
            prices,
            budget,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Exponent `ρ/(ρ-1)` of the price term in the expenditure shares.
    pub fn share_exponent(&self) -> f64 {
        self.rho / (self.rho - 1.0)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("rho must lie in (0, 1), got {rho}")))
    }
}

/// CES aggregate `(Σ X_j^ρ)^{1/ρ}`.
pub fn ces_utility(quantities: &[f64], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if quantities.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::domain("quantities must be finite and >= 0"));
    }
    if quantities.iter().all(|&x| x == 0.0) {
        return Err(Error::domain("quantities are all zero"));
    }
    let inner: f64 = quantities.iter().map(|x| x.powf(rho)).sum();
    Ok(inner.powf(1.0 / rho))
}

/// Closed-form expenditure shares. `lambda` is the budget multiplier; it
/// cancels from the ratio but is kept so the cancellation can be observed.
pub fn mnl_from_prices(prob: &CesProblem, lambda: f64) -> Result<ChoiceProbabilities> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::domain(format!("lambda must be > 0, got {lambda}")));
    }
    let e = prob.share_exponent();
    let log_terms: Vec<f64> = prob
        .prices
        .iter()
        .map(|p| e * (lambda.ln() + p.ln()))
        .collect();
    Ok(softmax(&log_terms))
}

/// Utilities under which `mnl(U, σ)` reproduces [`mnl_from_prices`].
pub fn implied_utilities(prob: &CesProblem, lambda: f64, sigma: Sigma) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::domain(format!("lambda must be > 0, got {lambda}")));
    }
    let e = prob.share_exponent();
    Ok(prob
        .prices
        .iter()
        .map(|p| sigma.get() * e * (lambda * p).ln())
        .collect())
}

const INITIAL_STEP: f64 = 0.25;
const FINAL_STEP: f64 = 1e-12;
const MAX_SWEEPS: usize = 200_000;

/// Maximizes the CES aggregate on the budget line by pairwise coordinate
/// search over expenditure shares, halving the transfer size whenever a full
/// sweep over ordered pairs finds no improvement. Returns quantities `X_i`.
pub fn ces_demand_oracle(prob: &CesProblem) -> Result<Vec<f64>> {
    let n = prob.prices.len();
    let rho = prob.rho;
    // f(w) = Σ a_i w_i^ρ is a monotone transform of U on the budget line.
    let weight: Vec<f64> = prob
        .prices
        .iter()
        .map(|p| (prob.budget / p).powf(rho))
        .collect();
    let mut w = vec![1.0 / n as f64; n];

    let mut step = INITIAL_STEP;
    let mut sweeps = 0;
    while step >= FINAL_STEP {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j || w[j] == 0.0 {
                    continue;
                }
                let amount = step.min(w[j]);
                let gain = weight[i] * power_increment(w[i], amount, rho)
                    + weight[j] * power_increment(w[j], -amount, rho);
                if gain > 0.0 {
                    w[i] += amount;
                    w[j] = if amount == w[j] { 0.0 } else { w[j] - amount };
                    improved = true;
                }
            }
        }
        sweeps += 1;
        if sweeps >= MAX_SWEEPS {
            return Err(Error::Convergence {
                iterations: sweeps,
                residual: kkt_residual(&w, &weight, rho),
            });
        }
        if !improved {
            step *= 0.5;
        }
    }

    let total: f64 = w.iter().sum();
    Ok(w.iter()
        .zip(&prob.prices)
        .map(|(wi, p)| wi / total * prob.budget / p)
        .collect())
}

/// `(w + d)^ρ - w^ρ` without cancellation for small `d`.
fn power_increment(w: f64, d: f64, rho: f64) -> f64 {
    if w == 0.0 {
        return d.max(0.0).powf(rho);
    }
    if w + d <= 0.0 {
        return -w.powf(rho);
    }
    w.powf(rho) * (rho * (d / w).ln_1p()).exp_m1()
}

/// Relative spread of marginal utility per unit of expenditure.
fn kkt_residual(w: &[f64], weight: &[f64], rho: f64) -> f64 {
    let marginal: Vec<f64> = w
        .iter()
        .zip(weight)
        .filter(|(wi, _)| **wi > 0.0)
        .map(|(wi, a)| a * rho * wi.powf(rho - 1.0))
        .collect();
    let hi = marginal.iter().copied().fold(f64::MIN, f64::max);
    let lo = marginal.iter().copied().fold(f64::MAX, f64::min);
    (hi - lo) / hi
}

/// Expenditure shares `p_i X_i / Σ p_j X_j`.
pub fn expenditure_shares(quantities: &[f64], prices: &[f64]) -> Vec<f64> {
    let spend: Vec<f64> = quantities.iter().zip(prices).map(|(x, p)| x * p).collect();
    let total: f64 = spend.iter().sum();
    spend.into_iter().map(|s| s / total).collect()
}
