//! Numerical verification suites behind the `verify-*` subcommands.
//!
//! Each suite returns a [`Report`]: a table of checks, each with the
//! measured value, the limit it is held to and a status. Informational rows
//! carry measurements that are reported without a pass/fail verdict.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ces::{ces_demand_oracle, expenditure_shares, mnl_from_prices, CesProblem};
use crate::dynamics::{
    interior_fixed_point, self_consistency_iterate, Market, Product, ProductId, ShareVector,
    DEFAULT_MAX_ITER,
};
use crate::equilibrium::Sigma;
use crate::error::Result;
use crate::innovation::{strong_path_dependence_experiment, InnovationEvent};
use crate::scenario::{integrate, Engine, Event, Scenario};
use crate::thermo::{
    aggregates, cross_derivative_check, finite_difference_partials, loop_integral, partials,
    relative_error, state_difference,
};
use crate::trajectory::TrajectoryLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: String,
    pub limit: String,
    pub status: Status,
}

impl Check {
    /// Passes when `value < limit`.
    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value: format!("{value:.3e}"),
            limit: format!("< {limit:.0e}"),
            status: if value < limit {
                Status::Pass
            } else {
                Status::Fail
            },
        }
    }

    pub fn holds(
        name: impl Into<String>,
        value: impl Into<String>,
        limit: impl Into<String>,
        ok: bool,
    ) -> Check {
        Check {
            name: name.into(),
            value: value.into(),
            limit: limit.into(),
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    pub fn info(name: impl Into<String>, value: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            value: value.into(),
            limit: "-".into(),
            status: Status::Info,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    fn new(title: &str) -> Report {
        Report {
            title: title.into(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .checks
            .iter()
            .map(|c| c.name.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        let v = self
            .checks
            .iter()
            .map(|c| c.value.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        let l = self
            .checks
            .iter()
            .map(|c| c.limit.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(f, "{}", self.title)?;
        writeln!(
            f,
            "{:<w$}  {:>v$}  {:>l$}  status",
            "check", "value", "limit"
        )?;
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Info => "info",
            };
            writeln!(
                f,
                "{:<w$}  {:>v$}  {:>l$}  {status}",
                c.name, c.value, c.limit
            )?;
        }
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        Ok(())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_interior<R: Rng>(rng: &mut R, n: usize, lo: f64) -> ShareVector {
    ShareVector::project((0..n).map(|_| rng.random_range(lo..1.0)).collect())
        .expect("positive entries")
}

fn products(utilities: &[f64], tau: &[f64], t_acq: &[f64]) -> Vec<Product> {
    (0..utilities.len())
        .map(|i| Product {
            id: ProductId(i as u32 + 1),
            utility: utilities[i],
            tau: tau[i],
            t_acq: t_acq[i],
        })
        .collect()
}

pub const CES_PROBLEMS: usize = 100;
pub const CES_TOL: f64 = 1e-5;

/// Closed-form CES expenditure shares against a direct maximization of the
/// CES aggregate on random problems.
pub fn verify_ces(seed: u64) -> Result<Report> {
    let mut r = Report::new("CES demand vs MNL closed form");
    let mut rng = rng(seed);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..CES_PROBLEMS {
        let n = rng.random_range(2..=6);
        let rho = rng.random_range(0.1..0.9);
        let prices: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let budget = rng.random_range(1.0..10.0);
        let prob = CesProblem::new(rho, prices.clone(), budget)?;
        let oracle = expenditure_shares(&ces_demand_oracle(&prob)?, &prices);
        let lambda = rng.random_range(0.1..10.0);
        let closed = mnl_from_prices(&prob, lambda)?;
        let err = oracle
            .iter()
            .zip(closed.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    r.checks.push(Check::below(
        format!("max |share(search) - share(closed form)| over {CES_PROBLEMS} problems"),
        worst,
        CES_TOL,
    ));
    r.checks.push(Check::holds(
        "runtime",
        format!("{secs:.2} s"),
        "< 30 s",
        secs < 30.0,
    ));
    Ok(r)
}

pub const APPENDIX_B_RUNS: usize = 1000;

/// Monte Carlo of the self-consistency map `S ← P(S)` with `α ≥ σ`.
pub fn verify_appendix_b(seed: u64) -> Result<Report> {
    let mut r = Report::new("Self-consistent shares (S = P(S))");
    let mut rng = rng(seed);
    let mut vertices = 0;
    let mut worst_iter = 0;
    for _ in 0..APPENDIX_B_RUNS {
        let (m, s0) = distinct_utility_market(&mut rng)?;
        let rep = self_consistency_iterate(&m, &s0, DEFAULT_MAX_ITER)?;
        if rep.is_vertex {
            vertices += 1;
        }
        worst_iter = worst_iter.max(rep.iterations);
    }
    r.checks.push(Check::holds(
        "runs converged to a vertex",
        format!("{vertices}/{APPENDIX_B_RUNS}"),
        format!("{APPENDIX_B_RUNS}/{APPENDIX_B_RUNS}"),
        vertices == APPENDIX_B_RUNS,
    ));
    r.checks
        .push(Check::info("most iterations used", worst_iter.to_string()));
    let interior = interior_limit_example()?;
    r.checks.push(Check::info(
        "alpha = sigma/2: L1 from limit to exp(U/(sigma-alpha)) fixed point",
        format!("{interior:.3e}"),
    ));
    r.notes.push(format!(
        "{vertices}/{APPENDIX_B_RUNS} runs converged to a vertex"
    ));
    Ok(r)
}

/// A random market with `α ∈ [σ, 2σ]`, utilities at least `0.3σ` apart and
/// an interior starting point.
pub fn distinct_utility_market<R: Rng>(rng: &mut R) -> Result<(Market, ShareVector)> {
    let n = rng.random_range(2..=6);
    let sigma = rng.random_range(0.3..2.0);
    let alpha = sigma * rng.random_range(1.0..2.0);
    let mut u: Vec<f64> = (0..n)
        .map(|i| sigma * (0.3 * i as f64 + rng.random_range(0.0..0.2)) - sigma)
        .collect();
    u.shuffle(rng);
    let ones = vec![1.0; n];
    let m = Market::new(products(&u, &ones, &ones), Sigma::new(sigma)?, alpha)?;
    Ok((m, random_interior(rng, n, 0.01)))
}

fn interior_limit_example() -> Result<f64> {
    let m = Market::uniform(&[0.4, 0.0, -0.3], 1.0, Sigma::new(1.0)?, 0.5)?;
    let rep = self_consistency_iterate(&m, &ShareVector::uniform(3), DEFAULT_MAX_ITER)?;
    Ok(rep.shares.l1_distance(&interior_fixed_point(&m)?))
}

pub const APPENDIX_C_TRIALS: usize = 50;
pub const APPENDIX_C_TOL: f64 = 0.05;

/// Mean over the time grid of the L1 distance between two logged share
/// paths with the same products, divided by the L1 path length of `reference`.
pub fn relative_trajectory_gap(reference: &TrajectoryLog, other: &TrajectoryLog) -> f64 {
    let gap: f64 = reference
        .rows
        .iter()
        .zip(&other.rows)
        .map(|(a, b)| {
            a.shares
                .iter()
                .zip(&b.shares)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
        })
        .sum::<f64>()
        / reference.len() as f64;
    let path: f64 = reference
        .rows
        .windows(2)
        .map(|w| {
            w[0].shares
                .iter()
                .zip(&w[1].shares)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
        })
        .sum();
    gap / path.max(f64::MIN_POSITIVE)
}

/// Replicator against the pairwise Lotka-Volterra form on random markets
/// with `t_i = τ_i`.
pub fn verify_appendix_c(seed: u64) -> Result<Report> {
    let mut r = Report::new("Replicator vs pairwise Lotka-Volterra");
    let mut rng = rng(seed);
    let mut worst_small = 0.0f64;
    let mut gaps_large = Vec::new();
    for trial in 0..APPENDIX_C_TRIALS {
        let n = rng.random_range(2..=5);
        let spread_small: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let tau: Vec<f64> = if trial % 2 == 0 {
            vec![1.0; n]
        } else {
            (0..n).map(|_| rng.random_range(1.0..3.0)).collect()
        };
        let s0 = random_interior(&mut rng, n, 0.05);
        let mut large = spread_small.clone();
        large[0] = 0.0;
        large[n - 1] = 5.0;
        worst_small = worst_small.max(engine_gap(&spread_small, &tau, &s0)?);
        gaps_large.push(engine_gap(&large, &tau, &s0)?);
    }
    r.checks.push(Check::below(
        format!("max|dU| <= sigma/2: worst relative L1 gap ({APPENDIX_C_TRIALS} markets)"),
        worst_small,
        APPENDIX_C_TOL,
    ));
    let max_large = gaps_large.iter().copied().fold(0.0, f64::max);
    gaps_large.sort_by(f64::total_cmp);
    r.checks.push(Check::info(
        "max|dU| = 5 sigma: median relative L1 gap",
        format!("{:.3e}", gaps_large[gaps_large.len() / 2]),
    ));
    r.checks.push(Check::info(
        "max|dU| = 5 sigma: worst relative L1 gap",
        format!("{max_large:.3e}"),
    ));
    Ok(r)
}

fn engine_gap(u: &[f64], tau: &[f64], s0: &ShareVector) -> Result<f64> {
    let m = Market::new(products(u, tau, tau), Sigma::new(1.0)?, 1.0)?;
    let run = |engine| -> Result<TrajectoryLog> {
        integrate(&Scenario::new(
            m.clone(),
            s0.clone(),
            100.0,
            0.05,
            vec![],
            engine,
            0,
        )?)
    };
    Ok(relative_trajectory_gap(
        &run(Engine::Replicator)?,
        &run(Engine::LotkaVolterra)?,
    ))
}

pub const THERMO_STATES: usize = 200;
pub const PARTIAL_TOL: f64 = 1e-6;
pub const CROSS_TOL: f64 = 1e-4;
pub const ENTROPY_SUM_TOL: f64 = 1e-10;
pub const NOISE_LEVELS: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const NOISE_SEEDS: u64 = 50;
/// Number of time units the tax stays on, and then off, in units of `τ`.
pub const LOOP_PHASE: f64 = 40.0;
pub const LOOP_TAX: f64 = 0.5;

/// Random interior state with `α/σ` drawn from `[alpha_lo, alpha_hi)`.
pub fn random_state<R: Rng>(
    rng: &mut R,
    alpha_lo: f64,
    alpha_hi: f64,
) -> Result<(Market, ShareVector)> {
    let n = rng.random_range(2..=6);
    let sigma = rng.random_range(0.3..2.0);
    let alpha = sigma * rng.random_range(alpha_lo..alpha_hi);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let m = Market::new(products(&u, &tau, &tau), Sigma::new(sigma)?, alpha)?;
    Ok((m, random_interior(rng, n, 0.05)))
}

/// Tax-on/tax-off loop: `U_1` drops by `tax` at `t = 1`, is restored
/// `LOOP_PHASE·τ_max` later, and the run ends after another such phase.
/// Starts at the interior rest point, so `α < σ` is required.
pub fn tax_loop(m: &Market, tax: f64, noise: f64, seed: u64) -> Result<Scenario> {
    let tau = m.tau().iter().copied().fold(0.0, f64::max);
    let t_on = 1.0;
    let t_off = t_on + LOOP_PHASE * tau;
    let t_end = t_off + LOOP_PHASE * tau;
    let id = m.ids()[0];
    let u1 = m.utilities()[0];
    let mut events = Vec::new();
    if noise > 0.0 {
        events.push(Event::Noise {
            time: 0.0,
            amplitude_s: noise,
            amplitude_u: noise,
        });
    }
    events.push(Event::Utility {
        time: t_on,
        product: id,
        utility: u1 - tax,
    });
    events.push(Event::Utility {
        time: t_off,
        product: id,
        utility: u1,
    });
    let dt = 0.02 * m.tau().iter().copied().fold(f64::INFINITY, f64::min);
    Scenario::new(
        m.clone(),
        interior_fixed_point(m)?,
        t_end,
        dt,
        events,
        Engine::SharesOde,
        seed,
    )
}

/// The market used for the noise experiments.
pub fn reference_loop_market() -> Result<Market> {
    Market::uniform(&[0.3, 0.0, -0.2], 1.0, Sigma::new(1.0)?, 0.5)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median `|Ū(end) - Ū(start)|` of the reference tax loop over `seeds`
/// noise realizations at amplitude `eps`.
pub fn noisy_loop_median(eps: f64, seeds: u64) -> Result<f64> {
    let m = reference_loop_market()?;
    let mut res = Vec::new();
    for seed in 0..seeds {
        let log = integrate(&tax_loop(&m, LOOP_TAX, eps, seed)?)?;
        res.push(state_difference(&log)?.abs());
    }
    Ok(median(res))
}

/// Median L1 distance between seed pairs of a neutral market (equal
/// utilities, `α = σ`) under share noise, at the given horizons (units of τ).
pub fn seed_pair_divergence(eps: f64, pairs: u64, horizons: &[f64]) -> Result<Vec<f64>> {
    let m = Market::uniform(&[0.0; 3], 1.0, Sigma::new(1.0)?, 1.0)?;
    let t_end = horizons.iter().copied().fold(0.0, f64::max);
    let noise = vec![Event::Noise {
        time: 0.0,
        amplitude_s: eps,
        amplitude_u: eps,
    }];
    let run = |seed| -> Result<TrajectoryLog> {
        integrate(&Scenario::new(
            m.clone(),
            ShareVector::uniform(3),
            t_end,
            0.05,
            noise.clone(),
            Engine::SharesOde,
            seed,
        )?)
    };
    let mut per_horizon = vec![Vec::new(); horizons.len()];
    for p in 0..pairs {
        let (a, b) = (run(2 * p)?, run(2 * p + 1)?);
        for (k, &h) in horizons.iter().enumerate() {
            let (ra, rb) = (a.row_at(h).unwrap(), b.row_at(h).unwrap());
            per_horizon[k].push(
                ra.shares
                    .iter()
                    .zip(&rb.shares)
                    .map(|(x, y)| (x - y).abs())
                    .sum(),
            );
        }
    }
    Ok(per_horizon.into_iter().map(median).collect())
}

/// Aggregate identities, partial derivatives and path-dependence
/// experiments.
pub fn verify_thermo(seed: u64) -> Result<Report> {
    let mut r = Report::new("Aggregate quantities and path dependence");
    let mut rng = rng(seed);

    let names = [
        "dS/dS_i",
        "dS/dU_i",
        "d<U>/dS_i",
        "d<U>/dU_i",
        "dUbar/dS_i",
        "dUbar/dU_i",
    ];
    let mut worst = [0.0f64; 6];
    let mut entropy_sum = 0.0f64;
    let mut cross = 0.0f64;
    let mut identity = 0.0f64;
    let mut plain = 0.0f64;
    for _ in 0..THERMO_STATES {
        let (m, s) = random_state(&mut rng, 0.0, 1.5)?;
        let a = partials(&s, &m)?;
        let fd = finite_difference_partials(&s, &m, 1e-6)?;
        for (k, ((_, x), (_, y))) in a.named().iter().zip(fd.named().iter()).enumerate() {
            worst[k] = worst[k].max(relative_error(y, x));
        }
        entropy_sum = entropy_sum.max(a.entropy_du.iter().sum::<f64>().abs());
        cross = cross.max(cross_derivative_check(&s, &m)?.max_residual());
        let agg = aggregates(&s, &m)?;
        identity = identity.max(agg.generalized_residual(m.sigma()).abs());
        plain = plain.max(agg.surplus_residual(m.sigma()).abs());
    }
    for (name, w) in names.iter().zip(worst) {
        r.checks.push(Check::below(
            format!("{name}: analytic vs finite differences"),
            w,
            PARTIAL_TOL,
        ));
    }
    r.checks.push(Check::below(
        "|sum_i dS/dU_i|",
        entropy_sum,
        ENTROPY_SUM_TOL,
    ));
    r.checks.push(Check::below(
        "cross-derivative symmetry residual",
        cross,
        CROSS_TOL,
    ));
    r.checks.push(Check::below(
        "|Ubar - <U> - sigma*S - alpha*sum P ln S|",
        identity,
        1e-10,
    ));
    r.checks.push(Check::info(
        "max |Ubar - <U> - sigma*S| off equilibrium",
        format!("{plain:.3e}"),
    ));

    table_report(&mut r, &mut rng)?;
    path_report(&mut r, &mut rng)?;
    Ok(r)
}

/// Compares the printed derivative table, its three identities and the
/// share-sum formula with the derived partials at `α = σ`.
fn table_report<R: Rng>(r: &mut Report, rng: &mut R) -> Result<()> {
    let mut table = [0.0f64; 6];
    let mut ident = [0.0f64; 6];
    let mut sum_formula = 0.0f64;
    for _ in 0..THERMO_STATES {
        let (m0, s) = random_state(rng, 1.0, 1.0 + f64::EPSILON)?;
        let m = m0.with_alpha(m0.sigma().get())?;
        let d = partials(&s, &m)?;
        let sigma = m.sigma().get();
        let p = crate::dynamics::interacting_preferences(&s, &m)?;
        let u = m.utilities();
        let avg: f64 = p.iter().zip(u).map(|(p, u)| p * u).sum();
        let n = s.len();
        let mut printed = vec![vec![0.0; n]; 6];
        for i in 0..n {
            let (pi, si, ui) = (p[i], s[i], u[i]);
            printed[0][i] = pi / (sigma * si) * (sigma + avg - ui);
            printed[1][i] = pi / (sigma * sigma) * (avg - ui);
            printed[2][i] = -pi / (sigma * si * si) * (avg - ui);
            printed[3][i] = pi / sigma * (sigma - avg + ui);
            printed[4][i] = pi;
            printed[5][i] = sigma * pi / si;
        }
        for (k, (_, derived)) in d.named().iter().enumerate() {
            table[k] = table[k].max(relative_error(&printed[k], derived));
        }
        for (k, sides) in identity_sides(&printed, &s, &p, sigma)
            .into_iter()
            .enumerate()
        {
            ident[k] = ident[k].max(relative_error(&sides.0, &sides.1));
        }
        let derived_sides = identity_sides(
            &[
                d.entropy_ds.clone(),
                d.entropy_du.clone(),
                d.average_ds.clone(),
                d.average_du.clone(),
                d.representative_ds.clone(),
                d.representative_du.clone(),
            ],
            &s,
            &p,
            sigma,
        );
        for (k, sides) in derived_sides.into_iter().enumerate() {
            ident[3 + k] = ident[3 + k].max(relative_error(&sides.0, &sides.1));
        }
        let inv: f64 = p.iter().zip(s.iter()).map(|(p, s)| p / s).sum();
        let u_over: f64 = (0..n).map(|i| p[i] * u[i] / s[i]).sum();
        let claimed = inv - u_over / sigma + avg * inv;
        let actual: f64 = d.entropy_ds.iter().sum();
        sum_formula = sum_formula.max((claimed - actual).abs() / actual.abs().max(1e-3));
    }
    let names = [
        "dS/dS_i",
        "dS/dU_i",
        "d<U>/dS_i",
        "d<U>/dU_i",
        "dUbar/dS_i",
        "dUbar/dU_i",
    ];
    for (name, t) in names.iter().zip(table) {
        r.checks.push(Check::info(
            format!("printed table {name} vs derived (rel.)"),
            format!("{t:.3e}"),
        ));
    }
    let ids = [
        "dS/dS_i = -(1/S_i) d<U>/dU_i + 2P_i/S_i",
        "dS/dU_i = -(S_i/sigma) d<U>/dS_i",
        "dUbar/dU_i = (S_i/sigma) dUbar/dS_i",
    ];
    for (k, name) in ids.iter().enumerate() {
        r.checks.push(Check::info(
            format!("identity {name}, printed table (rel.)"),
            format!("{:.3e}", ident[k]),
        ));
        r.checks.push(Check::info(
            format!("identity {name}, derived (rel.)"),
            format!("{:.3e}", ident[3 + k]),
        ));
    }
    r.checks.push(Check::info(
        "sum_i dS/dS_i = <1/S> - <U/S>/sigma + <U><1/S> (rel.)",
        format!("{sum_formula:.3e}"),
    ));
    Ok(())
}

/// Left and right sides of the three printed identities given partials in
/// the order of [`crate::thermo::Partials::named`].
fn identity_sides(d: &[Vec<f64>], s: &[f64], p: &[f64], sigma: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = s.len();
    let first = (0..n)
        .map(|i| -d[3][i] / s[i] + 2.0 * p[i] / s[i])
        .collect();
    let second = (0..n).map(|i| -s[i] / sigma * d[2][i]).collect();
    let third = (0..n).map(|i| s[i] / sigma * d[4][i]).collect();
    vec![
        (d[0].clone(), first),
        (d[1].clone(), second),
        (d[5].clone(), third),
    ]
}

pub const RANDOM_LOOPS: usize = 20;

fn path_report<R: Rng>(r: &mut Report, rng: &mut R) -> Result<()> {
    let mut worst_state = 0.0f64;
    let mut worst_line = 0.0f64;
    for _ in 0..RANDOM_LOOPS {
        let (m, _) = random_state(rng, 0.1, 0.4)?;
        let log = integrate(&tax_loop(&m, LOOP_TAX, 0.0, 0)?)?;
        worst_state = worst_state.max(state_difference(&log)?.abs());
        let scale = log
            .first()
            .unwrap()
            .aggregates
            .representative_utility
            .abs()
            .max(1.0);
        worst_line = worst_line.max(loop_integral(&log, &m)?.abs() / scale);
    }
    r.checks.push(Check::below(
        format!("noiseless tax loops: max |Ubar(end) - Ubar(start)| ({RANDOM_LOOPS} markets)"),
        worst_state,
        1e-9,
    ));
    r.checks.push(Check::below(
        "noiseless tax loops: max |loop integral of dUbar| / max(1,|Ubar|)",
        worst_line,
        1e-6,
    ));

    let m = reference_loop_market()?;
    let base = state_difference(&integrate(&tax_loop(&m, LOOP_TAX, 0.0, 0)?)?)?.abs();
    let scale = aggregates(&interior_fixed_point(&m)?, &m)?
        .representative_utility
        .abs()
        .max(1.0);
    r.checks.push(Check::below(
        "reference loop, no noise: |dUbar| / max(1,|Ubar|)",
        base / scale,
        1e-6,
    ));
    let medians: Vec<f64> = NOISE_LEVELS
        .iter()
        .map(|&e| noisy_loop_median(e, NOISE_SEEDS))
        .collect::<Result<_>>()?;
    let increasing = medians.windows(2).all(|w| w[1] > w[0]) && medians[0] > base;
    r.checks.push(Check::holds(
        format!("noisy loop median |dUbar| over {NOISE_SEEDS} seeds, eps = 1e-4, 1e-3, 1e-2"),
        medians
            .iter()
            .map(|x| format!("{x:.2e}"))
            .collect::<Vec<_>>()
            .join(" < "),
        "strictly increasing",
        increasing,
    ));

    let div = seed_pair_divergence(1e-3, NOISE_SEEDS, &[10.0, 100.0])?;
    r.checks.push(Check::holds(
        "neutral market, eps = 1e-3: median seed-pair L1 at 10 tau vs 100 tau",
        format!("{:.2e} vs {:.2e}", div[0], div[1]),
        "grows",
        div[1] > div[0],
    ));
    let butterfly: Vec<f64> = NOISE_LEVELS
        .iter()
        .map(|&e| seed_pair_divergence(e, 20, &[10.0]).map(|v| v[0]))
        .collect::<Result<_>>()?;
    r.checks.push(Check::holds(
        "seed-pair L1 at 10 tau for eps = 1e-4, 1e-3, 1e-2",
        butterfly
            .iter()
            .map(|x| format!("{x:.2e}"))
            .collect::<Vec<_>>()
            .join(" <= "),
        "non-decreasing",
        butterfly.windows(2).all(|w| w[1] >= w[0]),
    ));

    let sp = strong_path_report()?;
    r.checks.push(Check::holds(
        "attractive innovation mid-loop: residual / baseline",
        format!("{:.3e} / {:.3e}", sp.event_residual, sp.baseline_residual),
        ">= 10x",
        sp.event_residual >= 10.0 * sp.baseline_residual && sp.event_residual > 1e-6,
    ));
    r.checks.push(Check::holds(
        "attractive innovation: L1 gap of loop end states",
        format!("{:.3e}", sp.end_state_gap),
        "> 0.01",
        sp.end_state_gap > 0.01,
    ));
    Ok(())
}

/// The reference loop with an innovation at `max U + σ` injected half way
/// through the tax phase.
pub fn strong_path_report() -> Result<crate::innovation::PathDependenceReport> {
    let m = reference_loop_market()?;
    let base = tax_loop(&m, LOOP_TAX, 0.0, 0)?;
    let u_max = m.utilities().iter().copied().fold(f64::MIN, f64::max);
    let t_mid = 1.0 + 0.5 * LOOP_PHASE;
    let ev = InnovationEvent::new(t_mid, u_max + m.sigma().get(), 1.0, 1.0);
    strong_path_dependence_experiment(&base, ev)
}
