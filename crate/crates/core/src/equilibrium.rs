//! Equilibrium (non-interacting) discrete choice: binary and multinomial
//! logit, the log-sum representative utility, entropy and average utility.
//!
//! All log-sum-exp evaluations shift by the largest exponent first, so
//! utilities many multiples of `sigma` apart neither overflow nor lose the
//! small probabilities entirely.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Population diversity: the width of the Gumbel utility distributions.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Sigma(f64);

impl Sigma {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Sigma(sigma))
        } else {
            Err(Error::domain(format!(
                "sigma must be finite and > 0, got {sigma}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Mean utilities, one per product. Never empty, always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityVector(Vec<f64>);

impl UtilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_utilities(&values)?;
        Ok(UtilityVector(values))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for UtilityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Choice probabilities on the simplex: each entry in `[0, 1]`, sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities(Vec<f64>);

/// Tolerance on the unit sum accepted by [`ChoiceProbabilities::new`].
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

impl ChoiceProbabilities {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empty probability vector"));
        }
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::domain("probabilities must lie in [0, 1]"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ChoiceProbabilities(values))
    }

    /// Normalizes non-negative weights with a positive total.
    pub(crate) fn from_weights(mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0 && total.is_finite());
        for w in &mut weights {
            *w /= total;
        }
        ChoiceProbabilities(weights)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ChoiceProbabilities {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_utilities(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::domain("empty utility vector"));
    }
    if let Some(u) = values.iter().find(|u| !u.is_finite()) {
        return Err(Error::domain(format!("non-finite utility {u}")));
    }
    Ok(())
}

/// `ln Σ exp(x_i)` with the max-shift. Entries equal to `-inf` contribute
/// nothing; an all `-inf` input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax of `xs`, shifted by the maximum. Entries equal to `-inf` get
/// probability exactly zero.
pub(crate) fn softmax(xs: &[f64]) -> ChoiceProbabilities {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ChoiceProbabilities::from_weights(xs.iter().map(|x| (x - max).exp()).collect())
}

/// Binary logit: probability that option `i` is preferred over `j`.
pub fn binary_logit(u_i: f64, u_j: f64, sigma: Sigma) -> Result<f64> {
    if !u_i.is_finite() || !u_j.is_finite() {
        return Err(Error::domain("non-finite utility in binary logit"));
    }
    Ok(1.0 / (1.0 + (-(u_i - u_j) / sigma.get()).exp()))
}

/// Multinomial logit choice probabilities `exp(U_i/σ) / Σ_j exp(U_j/σ)`.
pub fn mnl(utilities: &[f64], sigma: Sigma) -> Result<ChoiceProbabilities> {
    check_utilities(utilities)?;
    let scaled: Vec<f64> = utilities.iter().map(|u| u / sigma.get()).collect();
    Ok(softmax(&scaled))
}

/// Representative-consumer utility `σ ln Σ_j exp(U_j/σ)` (the log-sum).
pub fn representative_utility_eq(utilities: &[f64], sigma: Sigma) -> Result<f64> {
    check_utilities(utilities)?;
    let s = sigma.get();
    let scaled: Vec<f64> = utilities.iter().map(|u| u / s).collect();
    Ok(s * log_sum_exp(&scaled))
}

/// Shannon entropy `-Σ P_i ln P_i`, with `0 ln 0 = 0`.
pub fn entropy(probs: &ChoiceProbabilities) -> f64 {
    shannon(probs)
}

pub(crate) fn shannon(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Probability-weighted mean utility under MNL weights.
pub fn average_utility_eq(utilities: &[f64], sigma: Sigma) -> Result<f64> {
    let p = mnl(utilities, sigma)?;
    Ok(p.iter().zip(utilities).map(|(p, u)| p * u).sum())
}
