//! Interacting preferences and the share dynamics built on them.
//!
//! Agents only choose products they have seen in use, so the choice
//! probability of product `i` is weighted by its share raised to `α/σ`:
//!
//! ```text
//! P_i = S_i^{α/σ} exp(U_i/σ) / Σ_k S_k^{α/σ} exp(U_k/σ)
//! ```
//!
//! Shares lag preferences through turnover. Three right-hand sides are
//! provided: the turnover ODE ([`shares_rhs`]), the adoption-minus-scrapping
//! replicator form ([`replicator_rhs`]), and the pairwise-exchange
//! Lotka-Volterra form ([`lotka_volterra_rhs`]). All of them conserve total
//! share exactly up to rounding and keep every vertex fixed when `α > 0`.

use std::fmt;
use std::ops::Deref;

use crate::equilibrium::{check_utilities, softmax, ChoiceProbabilities, Sigma};
use crate::error::{Error, Result};

/// Shares below this are replaced by it inside logarithms and divisions.
/// The stored state is never clamped, so a zero share stays exactly zero.
pub const SHARE_FLOOR: f64 = 1e-12;

/// Tolerance on `Σ S_i = 1` for a valid [`ShareVector`].
pub const SHARE_SUM_TOL: f64 = 1e-9;

/// Stable identifier of a product; survives injection and pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProductId(pub u32);

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    pub id: ProductId,
    /// Baseline (non-interacting) utility `U_i⁰`.
    pub utility: f64,
    /// Turnover (consumption or scrapping) timescale `τ_i`.
    pub tau: f64,
    /// Acquisition timescale `t_i`.
    pub t_acq: f64,
}

/// Products plus the population parameters `σ` and `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    ids: Vec<ProductId>,
    utilities: Vec<f64>,
    tau: Vec<f64>,
    t_acq: Vec<f64>,
    sigma: Sigma,
    alpha: f64,
    max_id: u32,
}

impl Market {
    pub fn new(products: Vec<Product>, sigma: Sigma, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::domain(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if products.is_empty() {
            return Err(Error::domain("market needs at least one product"));
        }
        let mut m = Market {
            ids: Vec::with_capacity(products.len()),
            utilities: Vec::with_capacity(products.len()),
            tau: Vec::with_capacity(products.len()),
            t_acq: Vec::with_capacity(products.len()),
            sigma,
            alpha,
            max_id: 0,
        };
        for p in products {
            m.push(p)?;
        }
        Ok(m)
    }

    /// Products numbered `1..=n` sharing one timescale for turnover and
    /// acquisition.
    pub fn uniform(utilities: &[f64], tau: f64, sigma: Sigma, alpha: f64) -> Result<Self> {
        let products = utilities
            .iter()
            .enumerate()
            .map(|(i, &utility)| Product {
                id: ProductId(i as u32 + 1),
                utility,
                tau,
                t_acq: tau,
            })
            .collect();
        Market::new(products, sigma, alpha)
    }

    fn push(&mut self, p: Product) -> Result<()> {
        check_utilities(&[p.utility])?;
        for (name, v) in [("tau", p.tau), ("t_acq", p.t_acq)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "{name} of product {} must be > 0, got {v}",
                    p.id
                )));
            }
        }
        if self.ids.contains(&p.id) {
            return Err(Error::domain(format!("duplicate product id {}", p.id)));
        }
        self.max_id = self.max_id.max(p.id.0);
        self.ids.push(p.id);
        self.utilities.push(p.utility);
        self.tau.push(p.tau);
        self.t_acq.push(p.t_acq);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ProductId] {
        &self.ids
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn t_acq(&self) -> &[f64] {
        &self.t_acq
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Interaction exponent `α/σ`.
    pub fn exponent(&self) -> f64 {
        self.alpha / self.sigma.get()
    }

    pub fn product(&self, index: usize) -> Product {
        Product {
            id: self.ids[index],
            utility: self.utilities[index],
            tau: self.tau[index],
            t_acq: self.t_acq[index],
        }
    }

    pub fn products(&self) -> impl Iterator<Item = Product> + '_ {
        (0..self.len()).map(|i| self.product(i))
    }

    pub fn index_of(&self, id: ProductId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// An id larger than any this market or its ancestors have used, so
    /// pruned ids are never recycled.
    pub fn next_id(&self) -> ProductId {
        ProductId(self.max_id + 1)
    }

    pub fn with_utilities(&self, utilities: Vec<f64>) -> Result<Market> {
        check_utilities(&utilities)?;
        if utilities.len() != self.len() {
            return Err(Error::domain(format!(
                "expected {} utilities, got {}",
                self.len(),
                utilities.len()
            )));
        }
        Ok(Market {
            utilities,
            ..self.clone()
        })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Market> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::domain(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Market {
            alpha,
            ..self.clone()
        })
    }

    pub fn with_product(&self, p: Product) -> Result<Market> {
        let mut m = self.clone();
        m.push(p)?;
        Ok(m)
    }

    /// Keeps the products whose `keep` flag is set.
    pub(crate) fn retain(&self, keep: &[bool]) -> Market {
        let pick = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(x, _)| *x)
                .collect()
        };
        Market {
            ids: self
                .ids
                .iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(x, _)| *x)
                .collect(),
            utilities: pick(&self.utilities),
            tau: pick(&self.tau),
            t_acq: pick(&self.t_acq),
            sigma: self.sigma,
            alpha: self.alpha,
            max_id: self.max_id,
        }
    }
}

/// A point on the probability simplex: the shares of product use.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareVector(Vec<f64>);

impl ShareVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empty share vector"));
        }
        if values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::domain("shares must be finite and >= 0"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOL {
            return Err(Error::domain(format!("shares sum to {sum}, not 1")));
        }
        Ok(ShareVector(values))
    }

    pub fn uniform(n: usize) -> Self {
        ShareVector(vec![1.0 / n as f64; n])
    }

    pub fn vertex(n: usize, k: usize) -> Self {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        ShareVector(v)
    }

    /// Clips negative entries to zero and renormalizes.
    pub fn project(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|s| !s.is_finite()) {
            return Err(Error::domain("non-finite share"));
        }
        let clipped: Vec<f64> = values.into_iter().map(|s| s.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateMarket("all shares are zero".into()));
        }
        Ok(ShareVector(
            clipped.into_iter().map(|s| s / total).collect(),
        ))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn max_share(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_vertex(&self, tol: f64) -> bool {
        self.max_share() > 1.0 - tol
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        l1(&self.0, other)
    }
}

impl Deref for ShareVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn check_dims(s: &[f64], m: &Market) -> Result<()> {
    if s.len() != m.len() {
        return Err(Error::domain(format!(
            "share vector has {} entries but market has {} products",
            s.len(),
            m.len()
        )));
    }
    Ok(())
}

/// Log of the unnormalized preference weight; `-inf` for unknown products.
pub(crate) fn log_weights(s: &[f64], m: &Market) -> Vec<f64> {
    let a = m.exponent();
    let sigma = m.sigma.get();
    s.iter()
        .zip(&m.utilities)
        .map(|(&si, &u)| {
            if a == 0.0 {
                u / sigma
            } else if si > 0.0 {
                a * si.ln() + u / sigma
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

pub(crate) fn prefs_raw(s: &[f64], m: &Market) -> Result<ChoiceProbabilities> {
    let lw = log_weights(s, m);
    if lw.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::domain("non-finite share state"));
    }
    if lw.iter().all(|&x| x == f64::NEG_INFINITY) {
        return Err(Error::DegenerateMarket(
            "no product has positive share".into(),
        ));
    }
    Ok(softmax(&lw))
}

/// Share-weighted choice probabilities. A product with zero share is never
/// chosen while `α > 0`; with `α = 0` this is the plain MNL.
pub fn interacting_preferences(s: &ShareVector, m: &Market) -> Result<ChoiceProbabilities> {
    check_dims(s, m)?;
    prefs_raw(s, m)
}

/// State-dependent mean timescales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAggregates {
    /// `τ̄` with `1/τ̄ = Σ S_i/τ_i`.
    pub tau_bar: f64,
    /// `τ̃` with `1/τ̃ = Σ P_i/τ_i`.
    pub tau_tilde: f64,
    /// `t̄` with `1/t̄ = Σ S_i/t_i`.
    pub t_bar: f64,
}

fn harmonic(weights: &[f64], times: &[f64]) -> f64 {
    1.0 / weights.iter().zip(times).map(|(w, t)| w / t).sum::<f64>()
}

pub fn rate_aggregates(s: &ShareVector, p: &ChoiceProbabilities, m: &Market) -> RateAggregates {
    rates_raw(s, p, m)
}

fn rates_raw(s: &[f64], p: &[f64], m: &Market) -> RateAggregates {
    RateAggregates {
        tau_bar: harmonic(s, &m.tau),
        tau_tilde: harmonic(p, &m.tau),
        t_bar: harmonic(s, &m.t_acq),
    }
}

/// The three share dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    SharesOde,
    Replicator,
    LotkaVolterra,
}

impl Dynamics {
    /// Evaluates `dS/dt`. Intermediate Runge-Kutta stages pass states that
    /// may be slightly off the simplex, so no share validation is done here.
    pub(crate) fn rate(self, s: &[f64], m: &Market) -> Result<Vec<f64>> {
        match self {
            Dynamics::SharesOde => shares_rate(s, m),
            Dynamics::Replicator => replicator_rate(s, m),
            Dynamics::LotkaVolterra => Ok(lotka_volterra_rate(s, m)),
        }
    }
}

/// Turnover dynamics: `dS_i/dt = (1/τ_i) [ (τ̃/τ̄) P_i - S_i ]`.
///
/// Inflow is allocated by preferences and outflow is `S_i/τ_i`; the
/// prefactor `τ̃/τ̄ = Σ S_k/τ_k / Σ P_k/τ_k` makes total inflow equal total
/// outflow.
pub fn shares_rhs(s: &ShareVector, m: &Market) -> Result<Vec<f64>> {
    check_dims(s, m)?;
    shares_rate(s, m)
}

fn shares_rate(s: &[f64], m: &Market) -> Result<Vec<f64>> {
    let p = prefs_raw(s, m)?;
    let r = rates_raw(s, &p, m);
    let prefactor = r.tau_tilde / r.tau_bar;
    Ok(s.iter()
        .zip(p.iter())
        .zip(&m.tau)
        .map(|((si, pi), tau)| (prefactor * pi - si) / tau)
        .collect())
}

/// Replicator form: adoption minus scrapping.
///
/// Scrapping removes `S_i/τ_i`. The freed flux `1/τ̄` is re-allocated in
/// proportion to `P_i/t_i`, so fast-to-acquire products capture more of it.
/// Equivalently `dS_i/dt = S_i (ℱ_i - ℱ̄)` with the per-capita fitness of
/// [`replicator_fitness`] and `ℱ̄ = Σ S_k ℱ_k = 0`. With `t_i = τ_i` this
/// coincides with [`shares_rhs`].
pub fn replicator_rhs(s: &ShareVector, m: &Market) -> Result<Vec<f64>> {
    check_dims(s, m)?;
    replicator_rate(s, m)
}

fn adoption_flows(s: &[f64], m: &Market) -> Result<(Vec<f64>, f64)> {
    let p = prefs_raw(s, m)?;
    let outflow: f64 = s.iter().zip(&m.tau).map(|(si, t)| si / t).sum();
    let drive: Vec<f64> = p.iter().zip(&m.t_acq).map(|(pi, t)| pi / t).collect();
    let total: f64 = drive.iter().sum();
    Ok((
        drive.into_iter().map(|d| outflow * (d / total)).collect(),
        outflow,
    ))
}

fn replicator_rate(s: &[f64], m: &Market) -> Result<Vec<f64>> {
    let (adopt, _) = adoption_flows(s, m)?;
    Ok(adopt
        .iter()
        .zip(s)
        .zip(&m.tau)
        .map(|((a, si), tau)| a - si / tau)
        .collect())
}

/// Per-capita fitness `ℱ_i`: adoption inflow per unit share minus `1/τ_i`.
/// Shares are floored at [`SHARE_FLOOR`] in the division.
pub fn replicator_fitness(s: &ShareVector, m: &Market) -> Result<Vec<f64>> {
    check_dims(s, m)?;
    let (adopt, _) = adoption_flows(s, m)?;
    Ok(adopt
        .iter()
        .zip(s.iter())
        .zip(&m.tau)
        .map(|((a, si), tau)| a / si.max(SHARE_FLOOR) - 1.0 / tau)
        .collect())
}

/// Substitution rates `A_ij = (t̄/t_i)(τ̄/τ_j)` at the given shares.
pub fn substitution_matrix(s: &ShareVector, m: &Market) -> Result<Vec<Vec<f64>>> {
    check_dims(s, m)?;
    Ok(substitution_raw(s, m))
}

fn substitution_raw(s: &[f64], m: &Market) -> Vec<Vec<f64>> {
    let t_bar = harmonic(s, &m.t_acq);
    let tau_bar = harmonic(s, &m.tau);
    m.t_acq
        .iter()
        .map(|ti| {
            m.tau
                .iter()
                .map(|tj| (t_bar / ti) * (tau_bar / tj))
                .collect()
        })
        .collect()
}

/// Pairwise preference `F_ij = e^{d} / (e^{d} + e^{-d})`, `d = (U_i - U_j)/σ`.
/// Increasing in `U_i`, and `F_ij + F_ji = 1`.
pub fn pairwise_preference(u_i: f64, u_j: f64, sigma: Sigma) -> f64 {
    1.0 / (1.0 + (-2.0 * (u_i - u_j) / sigma.get()).exp())
}

/// Pairwise exchange:
/// `dS_i/dt = (1/τ̄) Σ_j S_i^{α/σ} S_j^{α/σ} (A_ij F_ij - A_ji F_ji)`.
pub fn lotka_volterra_rhs(s: &ShareVector, m: &Market) -> Result<Vec<f64>> {
    check_dims(s, m)?;
    Ok(lotka_volterra_rate(s, m))
}

fn lotka_volterra_rate(s: &[f64], m: &Market) -> Vec<f64> {
    let n = s.len();
    let a = m.exponent();
    let sigma = m.sigma;
    let tau_bar = harmonic(s, &m.tau);
    let sub = substitution_raw(s, m);
    let weight: Vec<f64> = s.iter().map(|&x| x.max(0.0).powf(a)).collect();
    let mut rate = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let f_ij = pairwise_preference(m.utilities[i], m.utilities[j], sigma);
            let f_ji = 1.0 - f_ij;
            let flow = weight[i] * weight[j] * (sub[i][j] * f_ij - sub[j][i] * f_ji) / tau_bar;
            rate[i] += flow;
            rate[j] -= flow;
        }
    }
    rate
}

/// Outcome of [`self_consistency_iterate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub shares: ShareVector,
    pub iterations: usize,
    /// The last update moved the state by at most [`FIXED_POINT_TOL`] in L1.
    pub converged: bool,
    /// Largest share exceeds `1 - VERTEX_TOL`.
    pub is_vertex: bool,
    /// L1 size of the last update.
    pub last_step: f64,
}

pub const FIXED_POINT_TOL: f64 = 1e-15;
pub const VERTEX_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Plain iteration of `S ← P(S)`, i.e. a search for shares that equal the
/// preferences they induce. Non-convergence is reported, not raised.
pub fn self_consistency_iterate(
    m: &Market,
    s0: &ShareVector,
    max_iter: usize,
) -> Result<FixedPointReport> {
    check_dims(s0, m)?;
    if s0.iter().any(|&x| x <= 0.0) {
        return Err(Error::Precondition(
            "starting point must be interior".into(),
        ));
    }
    let mut s = s0.0.clone();
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = prefs_raw(&s, m)?.into_vec();
        last_step = l1(&next, &s);
        s = next;
        iterations += 1;
        if last_step <= FIXED_POINT_TOL {
            break;
        }
    }
    let shares = ShareVector(s);
    Ok(FixedPointReport {
        is_vertex: shares.is_vertex(VERTEX_TOL),
        converged: last_step <= FIXED_POINT_TOL,
        last_step,
        iterations,
        shares,
    })
}

/// Interior fixed point of `S = P(S)` for `α < σ`: `S_i ∝ exp(U_i / (σ - α))`.
/// It is the unique interior rest point of [`shares_rhs`] and an attractor.
pub fn interior_fixed_point(m: &Market) -> Result<ShareVector> {
    let gap = m.sigma.get() - m.alpha;
    if gap <= 0.0 {
        return Err(Error::Precondition(format!(
            "interior fixed point needs alpha < sigma (alpha = {}, sigma = {})",
            m.alpha,
            m.sigma.get()
        )));
    }
    let scaled: Vec<f64> = m.utilities.iter().map(|u| u / gap).collect();
    Ok(ShareVector(softmax(&scaled).into_vec()))
}
