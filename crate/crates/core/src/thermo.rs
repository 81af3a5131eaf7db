//! Aggregate quantities of the interacting market, their derivatives, and
//! the path-dependence machinery (line integrals and noise).
//!
//! With weights `w_i = S_i^{α/σ} exp(U_i/σ)` and `Z = Σ w_i` the three
//! aggregates are taken as definitions:
//!
//! ```text
//! Ū   = σ ln Z
//! ⟨U⟩ = Σ P_i U_i,        P_i = w_i / Z
//! 𝕊   = -Σ P_i ln P_i
//! ```
//!
//! They satisfy `σ𝕊 = Ū - ⟨U⟩ - α Σ P_i ln S_i`. The last term vanishes in
//! equilibrium (`α = 0`) and at vertices, so the familiar surplus identity
//! `σ𝕊 = Ū - ⟨U⟩` only holds there; [`AggregateState::surplus_residual`]
//! reports how far off it is elsewhere.
//!
//! Partial derivatives treat every `S_i` and `U_i` as an independent
//! coordinate.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{log_weights, prefs_raw, Market, ShareVector, SHARE_FLOOR};
use crate::equilibrium::{log_sum_exp, mnl, shannon, Sigma};
use crate::error::{Error, Result};
use crate::trajectory::{LogRow, TrajectoryLog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateState {
    /// `𝕊 = -Σ P_i ln P_i`.
    pub entropy: f64,
    /// `⟨U⟩ = Σ P_i U_i`.
    pub average_utility: f64,
    /// `Ū = σ ln Σ S_i^{α/σ} e^{U_i/σ}`.
    pub representative_utility: f64,
    /// `α Σ P_i ln S_i`, the part of `Ū - ⟨U⟩` not carried by the entropy.
    pub share_log_term: f64,
}

impl AggregateState {
    /// `Ū - ⟨U⟩ - σ𝕊`.
    pub fn surplus_residual(&self, sigma: Sigma) -> f64 {
        self.representative_utility - self.average_utility - sigma.get() * self.entropy
    }

    /// `Ū - ⟨U⟩ - σ𝕊 - α Σ P_i ln S_i`; zero up to rounding at every state.
    pub fn generalized_residual(&self, sigma: Sigma) -> f64 {
        self.surplus_residual(sigma) - self.share_log_term
    }
}

pub fn aggregates(s: &ShareVector, m: &Market) -> Result<AggregateState> {
    if s.len() != m.len() {
        return Err(Error::domain("share vector and market sizes differ"));
    }
    aggregate_values(s, m.utilities(), m)
}

/// Aggregates for arbitrary positive coordinates; shares need not sum to 1.
pub(crate) fn aggregate_values(s: &[f64], utilities: &[f64], m: &Market) -> Result<AggregateState> {
    let m = view(m, utilities)?;
    let lw = log_weights(s, &m);
    let p = prefs_raw(s, &m)?;
    let sigma = m.sigma().get();
    let average_utility = p.iter().zip(utilities).map(|(p, u)| p * u).sum();
    let share_log_term = if m.alpha() == 0.0 {
        0.0
    } else {
        m.alpha()
            * p.iter()
                .zip(s)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, s)| p * s.max(SHARE_FLOOR).ln())
                .sum::<f64>()
    };
    Ok(AggregateState {
        entropy: shannon(&p),
        average_utility,
        representative_utility: sigma * log_sum_exp(&lw),
        share_log_term,
    })
}

/// Equilibrium aggregates of the plain MNL at utilities `u`.
pub fn equilibrium_aggregates(u: &[f64], sigma: Sigma) -> Result<AggregateState> {
    let p = mnl(u, sigma)?;
    let scaled: Vec<f64> = u.iter().map(|x| x / sigma.get()).collect();
    Ok(AggregateState {
        entropy: shannon(&p),
        average_utility: p.iter().zip(u).map(|(p, u)| p * u).sum(),
        representative_utility: sigma.get() * log_sum_exp(&scaled),
        share_log_term: 0.0,
    })
}

fn view(m: &Market, utilities: &[f64]) -> Result<Market> {
    if utilities == m.utilities() {
        Ok(m.clone())
    } else {
        m.with_utilities(utilities.to_vec())
    }
}

/// The six first derivatives of the aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub entropy_ds: Vec<f64>,
    pub entropy_du: Vec<f64>,
    pub average_ds: Vec<f64>,
    pub average_du: Vec<f64>,
    pub representative_ds: Vec<f64>,
    pub representative_du: Vec<f64>,
}

impl Partials {
    pub fn named(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("dS/dS_i", &self.entropy_ds),
            ("dS/dU_i", &self.entropy_du),
            ("d<U>/dS_i", &self.average_ds),
            ("d<U>/dU_i", &self.average_du),
            ("dUbar/dS_i", &self.representative_ds),
            ("dUbar/dU_i", &self.representative_du),
        ]
    }
}

/// Analytic partials, obtained by differentiating the definitions:
///
/// ```text
/// ∂Ū/∂U_i   = P_i                      ∂Ū/∂S_i   = α P_i / S_i
/// ∂⟨U⟩/∂U_i = P_i (σ + U_i - ⟨U⟩) / σ  ∂⟨U⟩/∂S_i = (α/σ) P_i (U_i - ⟨U⟩) / S_i
/// ∂𝕊/∂U_i   = -P_i (ln P_i + 𝕊) / σ    ∂𝕊/∂S_i   = -(α/σ) P_i (ln P_i + 𝕊) / S_i
/// ```
///
/// Boundary states are rejected because the share derivatives diverge.
pub fn partials(s: &ShareVector, m: &Market) -> Result<Partials> {
    if s.len() != m.len() {
        return Err(Error::domain("share vector and market sizes differ"));
    }
    if s.iter().any(|&x| x <= SHARE_FLOOR) {
        return Err(Error::domain("partials need an interior share vector"));
    }
    partials_at(s, m.utilities(), m)
}

pub(crate) fn partials_at(s: &[f64], u: &[f64], m: &Market) -> Result<Partials> {
    let mv = view(m, u)?;
    let p = prefs_raw(s, &mv)?;
    let sigma = m.sigma().get();
    let a = m.exponent();
    let avg: f64 = p.iter().zip(u).map(|(p, u)| p * u).sum();
    let ent = shannon(&p);
    let n = s.len();
    let mut out = Partials {
        entropy_ds: Vec::with_capacity(n),
        entropy_du: Vec::with_capacity(n),
        average_ds: Vec::with_capacity(n),
        average_du: Vec::with_capacity(n),
        representative_ds: Vec::with_capacity(n),
        representative_du: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (pi, si, ui) = (p[i], s[i].max(SHARE_FLOOR), u[i]);
        let log_term = if pi > 0.0 { pi.ln() + ent } else { 0.0 };
        out.representative_du.push(pi);
        out.representative_ds.push(m.alpha() * pi / si);
        out.average_du.push(pi * (sigma + ui - avg) / sigma);
        out.average_ds.push(a * pi * (ui - avg) / si);
        out.entropy_du.push(-pi * log_term / sigma);
        out.entropy_ds.push(-a * pi * log_term / si);
    }
    Ok(out)
}

/// Central finite differences of the definitions, with steps `min(h, S_i/2)`
/// for shares and `h·σ` for utilities.
pub fn finite_difference_partials(s: &ShareVector, m: &Market, h: f64) -> Result<Partials> {
    let u = m.utilities();
    let n = s.len();
    let mut out = Partials {
        entropy_ds: vec![0.0; n],
        entropy_du: vec![0.0; n],
        average_ds: vec![0.0; n],
        average_du: vec![0.0; n],
        representative_ds: vec![0.0; n],
        representative_du: vec![0.0; n],
    };
    for i in 0..n {
        let hs = h.min(0.5 * s[i]);
        let (mut sp, mut sm) = (s.to_vec(), s.to_vec());
        sp[i] += hs;
        sm[i] -= hs;
        let (a, b) = (aggregate_values(&sp, u, m)?, aggregate_values(&sm, u, m)?);
        out.entropy_ds[i] = (a.entropy - b.entropy) / (2.0 * hs);
        out.average_ds[i] = (a.average_utility - b.average_utility) / (2.0 * hs);
        out.representative_ds[i] =
            (a.representative_utility - b.representative_utility) / (2.0 * hs);

        let hu = h * m.sigma().get();
        let (mut up, mut um) = (u.to_vec(), u.to_vec());
        up[i] += hu;
        um[i] -= hu;
        let (a, b) = (aggregate_values(s, &up, m)?, aggregate_values(s, &um, m)?);
        out.entropy_du[i] = (a.entropy - b.entropy) / (2.0 * hu);
        out.average_du[i] = (a.average_utility - b.average_utility) / (2.0 * hu);
        out.representative_du[i] =
            (a.representative_utility - b.representative_utility) / (2.0 * hu);
    }
    Ok(out)
}

/// Smallest reference norm used by [`relative_error`]. Near stationary
/// points of an aggregate the exact gradient vanishes while finite
/// differences keep a rounding floor of about `ε_mach / h`.
pub const RELATIVE_SCALE_FLOOR: f64 = 1e-3;

/// Normwise relative error `‖a - b‖∞ / max(‖b‖∞, RELATIVE_SCALE_FLOOR)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(RELATIVE_SCALE_FLOOR);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Mixed-partial symmetry residuals `|∂/∂S_i (∂X/∂U_i) - ∂/∂U_i (∂X/∂S_i)|`
/// for each aggregate X, differentiating the analytic first partials
/// numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossDerivativeReport {
    pub representative: Vec<f64>,
    pub average: Vec<f64>,
    pub entropy: Vec<f64>,
    /// `|∂²Ū/∂S_i∂U_i - (α/σ)(P_i - P_i²)/S_i|`.
    pub representative_closed_form: Vec<f64>,
}

impl CrossDerivativeReport {
    pub fn max_residual(&self) -> f64 {
        self.representative
            .iter()
            .chain(&self.average)
            .chain(&self.entropy)
            .fold(0.0, |m, &x| m.max(x))
    }
}

const MIXED_STEP: f64 = 1e-4;

pub fn cross_derivative_check(s: &ShareVector, m: &Market) -> Result<CrossDerivativeReport> {
    if s.iter().any(|&x| x <= SHARE_FLOOR) {
        return Err(Error::domain(
            "cross derivatives need an interior share vector",
        ));
    }
    let u = m.utilities();
    let n = s.len();
    let base = prefs_raw(s, m)?;
    let mut report = CrossDerivativeReport {
        representative: Vec::with_capacity(n),
        average: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        representative_closed_form: Vec::with_capacity(n),
    };
    for i in 0..n {
        let hs = MIXED_STEP * s[i];
        let (mut sp, mut sm) = (s.to_vec(), s.to_vec());
        sp[i] += hs;
        sm[i] -= hs;
        let (ps, ms) = (partials_at(&sp, u, m)?, partials_at(&sm, u, m)?);

        let hu = MIXED_STEP * u[i].abs().max(1.0) * m.sigma().get();
        let (mut up, mut um) = (u.to_vec(), u.to_vec());
        up[i] += hu;
        um[i] -= hu;
        let (pu, mu) = (partials_at(s, &up, m)?, partials_at(s, &um, m)?);

        let d_s = |a: &[f64], b: &[f64]| (a[i] - b[i]) / (2.0 * hs);
        let d_u = |a: &[f64], b: &[f64]| (a[i] - b[i]) / (2.0 * hu);

        let rep_su = d_s(&ps.representative_du, &ms.representative_du);
        let rep_us = d_u(&pu.representative_ds, &mu.representative_ds);
        report.representative.push((rep_su - rep_us).abs());
        report.average.push(
            (d_s(&ps.average_du, &ms.average_du) - d_u(&pu.average_ds, &mu.average_ds)).abs(),
        );
        report.entropy.push(
            (d_s(&ps.entropy_du, &ms.entropy_du) - d_u(&pu.entropy_ds, &mu.entropy_ds)).abs(),
        );
        let pi = base[i];
        let closed = m.exponent() * (pi - pi * pi) / s[i];
        report
            .representative_closed_form
            .push((rep_su - closed).abs());
    }
    Ok(report)
}

/// Trapezoid panels used along a logged interval in which utilities jump.
pub const JUMP_PANELS: usize = 4096;

/// Line integral of `dŪ = Σ ∂Ū/∂S_i dS_i + ∂Ū/∂U_i dU_i` along the logged
/// path, trapezoidal on the log's own grid. Intervals that contain a utility
/// jump are traversed as a straight chord refined into [`JUMP_PANELS`]
/// panels. All rows must carry the same product set.
pub fn line_integral(log: &TrajectoryLog, m: &Market) -> Result<f64> {
    let first = log
        .first()
        .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    if log.rows.iter().any(|r| r.ids != first.ids) {
        return Err(Error::Precondition(
            "line integral needs a fixed product set along the trajectory".into(),
        ));
    }
    let mut total = 0.0;
    for pair in log.rows.windows(2) {
        total += segment_integral(&pair[0], &pair[1], m)?;
    }
    Ok(total)
}

fn segment_integral(a: &LogRow, b: &LogRow, m: &Market) -> Result<f64> {
    let panels = if a.utilities == b.utilities {
        1
    } else {
        JUMP_PANELS
    };
    let n = a.shares.len();
    let point = |x: f64| -> (Vec<f64>, Vec<f64>) {
        let s = (0..n)
            .map(|i| a.shares[i] + x * (b.shares[i] - a.shares[i]))
            .collect();
        let u = (0..n)
            .map(|i| a.utilities[i] + x * (b.utilities[i] - a.utilities[i]))
            .collect();
        (s, u)
    };
    let ds: Vec<f64> = (0..n)
        .map(|i| (b.shares[i] - a.shares[i]) / panels as f64)
        .collect();
    let du: Vec<f64> = (0..n)
        .map(|i| (b.utilities[i] - a.utilities[i]) / panels as f64)
        .collect();
    let integrand = |x: f64| -> Result<f64> {
        let (s, u) = point(x);
        let g = partials_at(&s, &u, m)?;
        Ok((0..n)
            .map(|i| g.representative_ds[i] * ds[i] + g.representative_du[i] * du[i])
            .sum())
    };
    let mut sum = 0.0;
    let mut left = integrand(0.0)?;
    for k in 1..=panels {
        let right = integrand(k as f64 / panels as f64)?;
        sum += 0.5 * (left + right);
        left = right;
    }
    Ok(sum)
}

/// Tolerance on `(S, U)` coincidence of the first and last rows of a loop.
pub const LOOP_CLOSURE_TOL: f64 = 1e-9;

/// Line integral of `dŪ` around a closed logged loop.
pub fn loop_integral(log: &TrajectoryLog, m: &Market) -> Result<f64> {
    let (first, last) = match (log.first(), log.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Precondition("empty trajectory".into())),
    };
    if first.ids != last.ids {
        return Err(Error::Precondition(
            "loop ends on a different product set".into(),
        ));
    }
    let gap = first
        .shares
        .iter()
        .zip(&last.shares)
        .chain(first.utilities.iter().zip(&last.utilities))
        .fold(0.0f64, |g, (a, b)| g.max((a - b).abs()));
    if gap > LOOP_CLOSURE_TOL {
        return Err(Error::Precondition(format!(
            "trajectory is not closed: endpoints differ by {gap:e}"
        )));
    }
    line_integral(log, m)
}

/// `Ū(end) - Ū(start)` read from the logged state functions.
pub fn state_difference(log: &TrajectoryLog) -> Result<f64> {
    match (log.first(), log.last()) {
        (Some(f), Some(l)) => {
            Ok(l.aggregates.representative_utility - f.aggregates.representative_utility)
        }
        _ => Err(Error::Precondition("empty trajectory".into())),
    }
}

/// Gaussian fluctuations of shares and utilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub amplitude_s: f64,
    pub amplitude_u: f64,
    pub seed: u64,
}

pub type NoiseRng = ChaCha8Rng;

impl NoiseSpec {
    pub fn new(amplitude_s: f64, amplitude_u: f64, seed: u64) -> Result<Self> {
        for a in [amplitude_s, amplitude_u] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::domain(format!(
                    "noise amplitude must be >= 0, got {a}"
                )));
            }
        }
        Ok(NoiseSpec {
            amplitude_s,
            amplitude_u,
            seed,
        })
    }

    pub fn is_silent(&self) -> bool {
        self.amplitude_s == 0.0 && self.amplitude_u == 0.0
    }

    pub fn rng(&self) -> NoiseRng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Applies one draw of noise. Utilities get independent `N(0, amplitude_u²)`
/// kicks. Shares get `N(0, amplitude_s²)` kicks on the products currently
/// in use, made zero-sum by subtracting their mean, then the vector is
/// clipped at zero and renormalized. Unused products stay at zero.
pub fn perturb<R: Rng + ?Sized>(
    s: &ShareVector,
    u: &[f64],
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<(ShareVector, Vec<f64>)> {
    let mut u2 = u.to_vec();
    if spec.amplitude_u > 0.0 {
        let normal =
            Normal::new(0.0, spec.amplitude_u).map_err(|e| Error::domain(e.to_string()))?;
        for x in &mut u2 {
            *x += normal.sample(rng);
        }
    }
    if spec.amplitude_s == 0.0 {
        return Ok((s.clone(), u2));
    }
    let normal = Normal::new(0.0, spec.amplitude_s).map_err(|e| Error::domain(e.to_string()))?;
    let support: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.0).collect();
    if support.len() < 2 {
        return Ok((s.clone(), u2));
    }
    let kicks: Vec<f64> = support.iter().map(|_| normal.sample(rng)).collect();
    let mean = kicks.iter().sum::<f64>() / kicks.len() as f64;
    let mut next = s.to_vec();
    for (&i, k) in support.iter().zip(&kicks) {
        next[i] += k - mean;
    }
    Ok((ShareVector::project(next)?, u2))
}
