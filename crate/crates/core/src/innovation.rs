//! Product entry and exit.
//!
//! A new product enters with a small seed share taken proportionally from
//! the incumbents, so the state moves by exactly `2ε` in L1. Pruning drops
//! products whose share has decayed below a floor.

use crate::dynamics::{Market, Product, ShareVector};
use crate::error::{Error, Result};
use crate::scenario::{integrate, Event, Scenario};
use crate::trajectory::TrajectoryLog;

pub const DEFAULT_SEED_SHARE: f64 = 1e-6;
pub const MAX_SEED_SHARE: f64 = 1e-3;
pub const MAX_PRUNE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationEvent {
    pub time: f64,
    pub utility: f64,
    pub tau: f64,
    pub t_acq: f64,
    pub seed_share: f64,
}

impl InnovationEvent {
    pub fn new(time: f64, utility: f64, tau: f64, t_acq: f64) -> Self {
        InnovationEvent {
            time,
            utility,
            tau,
            t_acq,
            seed_share: DEFAULT_SEED_SHARE,
        }
    }

    pub fn with_seed_share(self, seed_share: f64) -> Self {
        InnovationEvent { seed_share, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.seed_share;
        if !(eps > 0.0 && eps < MAX_SEED_SHARE) {
            return Err(Error::config(
                None,
                format!("seed_share must lie in (0, {MAX_SEED_SHARE}), got {eps}"),
            ));
        }
        if !self.utility.is_finite() {
            return Err(Error::config(None, "innovation utility must be finite"));
        }
        for (name, v) in [("tau", self.tau), ("t_acq", self.t_acq)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    None,
                    format!("innovation {name} must be > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Adds the event's product with share `ε`, scaling every incumbent by
/// `1 - ε`. The new product takes the market's next free id.
pub fn inject_product(
    s: &ShareVector,
    m: &Market,
    ev: &InnovationEvent,
) -> Result<(ShareVector, Market)> {
    ev.validate()?;
    if s.len() != m.len() {
        return Err(Error::domain("share vector and market sizes differ"));
    }
    let eps = ev.seed_share;
    let market = m.with_product(Product {
        id: m.next_id(),
        utility: ev.utility,
        tau: ev.tau,
        t_acq: ev.t_acq,
    })?;
    let mut shares: Vec<f64> = s.iter().map(|x| x * (1.0 - eps)).collect();
    shares.push(eps);
    Ok((ShareVector::new(shares)?, market))
}

/// Removes products with `S_i < floor` and renormalizes the rest.
pub fn prune(s: &ShareVector, m: &Market, floor: f64) -> Result<(ShareVector, Market)> {
    if !(0.0..=MAX_PRUNE_FLOOR).contains(&floor) {
        return Err(Error::config(
            None,
            format!("prune floor must lie in [0, {MAX_PRUNE_FLOOR}], got {floor}"),
        ));
    }
    if s.len() != m.len() {
        return Err(Error::domain("share vector and market sizes differ"));
    }
    let keep: Vec<bool> = s.iter().map(|&x| x >= floor).collect();
    if keep.iter().all(|&k| k) {
        return Ok((s.clone(), m.clone()));
    }
    let kept: Vec<f64> = s
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(x, _)| *x)
        .collect();
    if kept.is_empty() || kept.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateMarket(
            "pruning would remove every product".into(),
        ));
    }
    Ok((ShareVector::project(kept)?, m.retain(&keep)))
}

/// Outcome of running a closed policy loop with and without an innovation.
#[derive(Debug, Clone)]
pub struct PathDependenceReport {
    /// `|Ū(end) - Ū(start)|` for the unmodified loop.
    pub baseline_residual: f64,
    /// The same quantity when the innovation is injected mid-loop.
    pub event_residual: f64,
    /// Signed `Ū(end) - Ū(start)` with the innovation.
    pub event_delta: f64,
    /// Final share of the injected product.
    pub innovation_share: f64,
    /// L1 distance between the loop's end shares with and without the
    /// event, over the incumbents (the innovation counted in full).
    pub end_state_gap: f64,
    pub baseline: TrajectoryLog,
    pub with_event: TrajectoryLog,
}

impl PathDependenceReport {
    pub fn amplification(&self) -> f64 {
        self.event_residual / self.baseline_residual.max(f64::MIN_POSITIVE)
    }
}

/// Runs `base` as given and again with `ev` inserted into its timeline.
///
/// `base` must describe a closed loop: no innovations of its own, and the
/// utilities in force at `t_end` equal the initial ones.
pub fn strong_path_dependence_experiment(
    base: &Scenario,
    ev: InnovationEvent,
) -> Result<PathDependenceReport> {
    ev.validate()?;
    if base
        .events
        .iter()
        .any(|e| matches!(e, Event::Innovation(_)))
    {
        return Err(Error::Precondition(
            "base scenario already contains innovations".into(),
        ));
    }
    if base.final_utilities()? != base.market.utilities() {
        return Err(Error::Precondition(
            "base scenario does not restore its initial utilities".into(),
        ));
    }
    let mut modified = base.clone();
    modified.insert_event(Event::Innovation(ev))?;

    let baseline = integrate(base)?;
    let with_event = integrate(&modified)?;
    let delta = |log: &TrajectoryLog| -> f64 {
        let (a, b) = (log.first().unwrap(), log.last().unwrap());
        b.aggregates.representative_utility - a.aggregates.representative_utility
    };
    let new_id = base.market.next_id();
    let (b_end, e_end) = (baseline.last().unwrap(), with_event.last().unwrap());
    let end_state_gap = e_end
        .ids
        .iter()
        .map(|&id| (e_end.share_of(id) - b_end.share_of(id)).abs())
        .sum();
    Ok(PathDependenceReport {
        baseline_residual: delta(&baseline).abs(),
        event_residual: delta(&with_event).abs(),
        event_delta: delta(&with_event),
        innovation_share: e_end.share_of(new_id),
        end_state_gap,
        baseline,
        with_event,
    })
}
