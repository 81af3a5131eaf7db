//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use choice_dynamics::ces::{ces_demand_oracle, expenditure_shares, CesProblem};
use choice_dynamics::config::{parse_str, FIGURE1, FIGURE2};
use choice_dynamics::dynamics::{
    lotka_volterra_rhs, replicator_rhs, self_consistency_iterate, shares_rhs, Market, Product,
    ProductId, ShareVector, DEFAULT_MAX_ITER,
};
use choice_dynamics::equilibrium::{mnl, representative_utility_eq, Sigma};
use choice_dynamics::scenario::{integrate, Engine, Event, Scenario};
use choice_dynamics::thermo::{cross_derivative_check, partials, AggregateState};
use choice_dynamics::trajectory::TrajectoryLog;
use choice_dynamics::verify::{
    distinct_utility_market, reference_loop_market, strong_path_report, tax_loop, verify_thermo,
    Status,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sig(s: f64) -> Sigma {
    Sigma::new(s).unwrap()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&d) / max_abs(b).max(1e-3)
}

fn interior(rng: &mut impl Rng, n: usize) -> ShareVector {
    ShareVector::project((0..n).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

fn random_market(rng: &mut impl Rng, alpha_ratio: (f64, f64), t_eq_tau: bool) -> Market {
    let n = rng.random_range(2..=6);
    let sigma = rng.random_range(0.3..2.0);
    let alpha = sigma * rng.random_range(alpha_ratio.0..alpha_ratio.1);
    let products = (0..n)
        .map(|i| {
            let tau = rng.random_range(0.5..3.0);
            Product {
                id: ProductId(i as u32 + 1),
                utility: rng.random_range(-2.0..2.0),
                tau,
                t_acq: if t_eq_tau {
                    tau
                } else {
                    rng.random_range(0.5..3.0)
                },
            }
        })
        .collect();
    Market::new(products, sig(sigma), alpha).unwrap()
}

fn logit_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let s = rng.random_range(0.05..5.0);
        let p = mnl(&[a, b], sig(s)).unwrap();
        let oracle = 1.0 / (1.0 + (-(a - b) / s).exp());
        worst = worst
            .max((p[0] - oracle).abs())
            .max((p[1] - (1.0 - oracle)).abs());
    }
    ensure(
        worst <= 1e-14,
        format!("max |MNL - binary logit| = {worst:.2e} over 1000 draws"),
    )
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let s = rng.random_range(0.1..3.0);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h = 1e-6 * s;
        let fd: Vec<f64> = (0..n)
            .map(|i| {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[i] += h;
                dn[i] -= h;
                (representative_utility_eq(&up, sig(s)).unwrap()
                    - representative_utility_eq(&dn, sig(s)).unwrap())
                    / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel(&fd, &mnl(&u, sig(s)).unwrap()));
    }
    ensure(
        worst < 1e-6,
        format!("max relative error {worst:.2e} over 200 states"),
    )
}

fn ces_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let rho = rng.random_range(0.1..0.9);
        let prices: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
        let prob = CesProblem::new(rho, prices.clone(), rng.random_range(1.0..100.0)).unwrap();
        let searched = expenditure_shares(&ces_demand_oracle(&prob).unwrap(), &prices);
        let w: Vec<f64> = prices.iter().map(|p| p.powf(rho / (rho - 1.0))).collect();
        let total: f64 = w.iter().sum();
        let closed: Vec<f64> = w.iter().map(|x| x / total).collect();
        worst = worst.max(max_abs(
            &searched
                .iter()
                .zip(&closed)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-5 && secs < 30.0,
        format!("max share error {worst:.2e} over 100 problems in {secs:.2} s"),
    )
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = random_market(&mut rng, (0.0, 2.0), false);
        let s = interior(&mut rng, m.len());
        for f in [shares_rhs, replicator_rhs, lotka_volterra_rhs] {
            worst = worst.max(f(&s, &m).unwrap().iter().sum::<f64>().abs());
        }
    }
    let mut drift = 0.0f64;
    for engine in [Engine::SharesOde, Engine::Replicator, Engine::LotkaVolterra] {
        let m = random_market(&mut rng, (0.2, 1.2), false);
        let s0 = interior(&mut rng, m.len());
        let log =
            integrate(&Scenario::new(m, s0, 1000.0, 0.1, vec![], engine, 0).unwrap()).unwrap();
        for r in &log.rows {
            drift = drift.max((r.shares.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(
        worst < 1e-12 && drift < 1e-9,
        format!("max |sum rhs| = {worst:.2e} on 1000 states, max |sum S - 1| = {drift:.2e} over 1e4 steps"),
    )
}

fn mnl_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let s = rng.random_range(0.3..2.0);
        let tau = rng.random_range(0.5..3.0);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = Market::uniform(&u, tau, sig(s), 0.0).unwrap();
        let sc = Scenario::new(
            m,
            interior(&mut rng, n),
            20.0 * tau,
            0.05 * tau,
            vec![],
            Engine::SharesOde,
            0,
        )
        .unwrap();
        let end = integrate(&sc).unwrap();
        let w: Vec<f64> = u.iter().map(|x| (x / s).exp()).collect();
        let z: f64 = w.iter().sum();
        let oracle: Vec<f64> = w.iter().map(|x| x / z).collect();
        worst = worst.max(l1(&end.last().unwrap().shares, &oracle));
    }
    ensure(
        worst < 1e-4,
        format!("max L1 to MNL after 20 tau = {worst:.2e} over 50 starts"),
    )
}

fn appendix_b() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut hits = 0;
    for _ in 0..1000 {
        let (m, s0) = distinct_utility_market(&mut rng).unwrap();
        let rep = self_consistency_iterate(&m, &s0, DEFAULT_MAX_ITER).unwrap();
        if rep.shares.iter().copied().fold(0.0, f64::max) > 1.0 - 1e-6 {
            hits += 1;
        }
    }
    ensure(
        hits == 1000,
        format!("{hits}/1000 runs converged to a vertex"),
    )
}

fn gap_over_path(a: &TrajectoryLog, b: &TrajectoryLog) -> f64 {
    let gap: f64 = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| l1(&x.shares, &y.shares))
        .sum::<f64>()
        / a.len() as f64;
    let path: f64 = a
        .rows
        .windows(2)
        .map(|w| l1(&w[0].shares, &w[1].shares))
        .sum();
    gap / path
}

fn appendix_c() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (mut small, mut large, mut large_max_l1) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(2..=5);
        let tau: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..3.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let s0 = interior(&mut rng, n);
        let run = |u: &[f64], engine| {
            let products = (0..n)
                .map(|i| Product {
                    id: ProductId(i as u32 + 1),
                    utility: u[i],
                    tau: tau[i],
                    t_acq: tau[i],
                })
                .collect();
            let m = Market::new(products, sig(1.0), 1.0).unwrap();
            integrate(&Scenario::new(m, s0.clone(), 100.0, 0.05, vec![], engine, 0).unwrap())
                .unwrap()
        };
        small = small.max(gap_over_path(
            &run(&u, Engine::Replicator),
            &run(&u, Engine::LotkaVolterra),
        ));
        let mut wide = u.clone();
        wide[0] = 0.0;
        wide[n - 1] = 5.0;
        let (a, b) = (
            run(&wide, Engine::Replicator),
            run(&wide, Engine::LotkaVolterra),
        );
        large = large.max(gap_over_path(&a, &b));
        large_max_l1 = large_max_l1.max(
            a.rows
                .iter()
                .zip(&b.rows)
                .map(|(x, y)| l1(&x.shares, &y.shares))
                .fold(0.0, f64::max),
        );
    }
    ensure(
        small < 0.05,
        format!(
            "worst gap {small:.3e} (< 0.05) for max|dU| <= sigma/2; at 5 sigma: gap {large:.3e}, peak L1 {large_max_l1:.3e} (reported)"
        ),
    )
}

fn numeric_partials(s: &ShareVector, m: &Market) -> [Vec<f64>; 6] {
    let eval = |s: &[f64], u: &[f64]| -> AggregateState {
        let mm = m.with_utilities(u.to_vec()).unwrap();
        aggregates_unnormalized(s, &mm)
    };
    let n = s.len();
    let u = m.utilities().to_vec();
    let mut out: [Vec<f64>; 6] = Default::default();
    for v in out.iter_mut() {
        v.resize(n, 0.0);
    }
    for i in 0..n {
        let hs = 1e-6f64.min(0.5 * s[i]);
        let (mut sp, mut sm) = (s.to_vec(), s.to_vec());
        sp[i] += hs;
        sm[i] -= hs;
        let (a, b) = (eval(&sp, &u), eval(&sm, &u));
        out[0][i] = (a.entropy - b.entropy) / (2.0 * hs);
        out[2][i] = (a.average_utility - b.average_utility) / (2.0 * hs);
        out[4][i] = (a.representative_utility - b.representative_utility) / (2.0 * hs);
        let hu = 1e-6 * m.sigma().get();
        let (mut up, mut um) = (u.clone(), u.clone());
        up[i] += hu;
        um[i] -= hu;
        let (a, b) = (eval(s, &up), eval(s, &um));
        out[1][i] = (a.entropy - b.entropy) / (2.0 * hu);
        out[3][i] = (a.average_utility - b.average_utility) / (2.0 * hu);
        out[5][i] = (a.representative_utility - b.representative_utility) / (2.0 * hu);
    }
    out
}

/// The three definitions evaluated directly, for shares that need not sum to 1.
fn aggregates_unnormalized(s: &[f64], m: &Market) -> AggregateState {
    let sigma = m.sigma().get();
    let a = m.alpha() / sigma;
    let w: Vec<f64> = s
        .iter()
        .zip(m.utilities())
        .map(|(s, u)| s.powf(a) * (u / sigma).exp())
        .collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / z).collect();
    AggregateState {
        entropy: -p
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|x| x * x.ln())
            .sum::<f64>(),
        average_utility: p.iter().zip(m.utilities()).map(|(p, u)| p * u).sum(),
        representative_utility: sigma * z.ln(),
        share_log_term: m.alpha() * p.iter().zip(s).map(|(p, s)| p * s.ln()).sum::<f64>(),
    }
}

fn thermo_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let (mut worst, mut cross, mut entropy_sum) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let m = random_market(&mut rng, (0.0, 1.5), true);
        let s = interior(&mut rng, m.len());
        let d = partials(&s, &m).unwrap();
        let fd = numeric_partials(&s, &m);
        for ((_, analytic), numeric) in d.named().iter().zip(fd.iter()) {
            worst = worst.max(rel(numeric, analytic));
        }
        cross = cross.max(cross_derivative_check(&s, &m).unwrap().max_residual());
        entropy_sum = entropy_sum.max(d.entropy_du.iter().sum::<f64>().abs());
    }
    let report = verify_thermo(1).unwrap();
    let listed = report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("printed table") && c.status == Status::Info)
        .count();
    ensure(
        worst < 1e-6 && cross < 1e-4 && entropy_sum < 1e-10 && listed == 6,
        format!(
            "partials rel. err {worst:.2e}, cross residual {cross:.2e}, |sum dS/dU| {entropy_sum:.2e}, {listed} table entries reported"
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2])
}

fn ubar_change(log: &TrajectoryLog) -> f64 {
    log.last().unwrap().aggregates.representative_utility
        - log.first().unwrap().aggregates.representative_utility
}

fn reversibility() -> Outcome {
    let m = reference_loop_market().unwrap();
    let base_log = integrate(&tax_loop(&m, 0.5, 0.0, 0).unwrap()).unwrap();
    let base = ubar_change(&base_log).abs();
    let scale = base_log
        .first()
        .unwrap()
        .aggregates
        .representative_utility
        .abs()
        .max(1.0);
    let medians: Vec<f64> = [1e-4, 1e-3, 1e-2]
        .iter()
        .map(|&eps| {
            median(
                (0..50)
                    .map(|seed| {
                        ubar_change(&integrate(&tax_loop(&m, 0.5, eps, seed).unwrap()).unwrap())
                            .abs()
                    })
                    .collect(),
            )
        })
        .collect();
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    ensure(
        base < 1e-6 * scale && increasing,
        format!(
            "noiseless |dUbar| = {base:.2e}; noisy medians {:.2e} < {:.2e} < {:.2e}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn strong_path_dependence() -> Outcome {
    let rep = strong_path_report().unwrap();
    let log = integrate(&parse_str(FIGURE2).unwrap()).unwrap();
    let (u0, u_end) = (
        log.first().unwrap().aggregates.representative_utility,
        log.last().unwrap().aggregates.representative_utility,
    );
    ensure(
        rep.event_residual >= 10.0 * rep.baseline_residual && rep.event_residual > 1e-6 && u_end > u0,
        format!(
            "loop residual {:.3e} with innovation vs {:.3e} without; five innovations: Ubar {u0:.3} -> {u_end:.3}",
            rep.event_residual, rep.baseline_residual
        ),
    )
}

fn figure1_shape() -> Outcome {
    let sc = parse_str(FIGURE1).unwrap();
    let neq = integrate(&sc).unwrap();
    let eq = integrate(&Scenario {
        engine: Engine::MnlEquilibrium,
        ..sc.clone()
    })
    .unwrap();
    let step_time = sc.events.iter().map(Event::time).fold(f64::MAX, f64::min);
    let k = neq.rows.iter().position(|r| r.t == step_time).unwrap();
    let last = neq.last().unwrap();
    let u_after = &neq.rows[k].utilities;
    let best = (0..u_after.len())
        .max_by(|&a, &b| u_after[a].total_cmp(&u_after[b]))
        .unwrap();
    let worst = (0..u_after.len())
        .min_by(|&a, &b| u_after[a].total_cmp(&u_after[b]))
        .unwrap();
    let series = |i: usize| neq.share_series(ProductId(i as u32 + 1));
    let (top, bottom) = (series(best), series(worst));
    let monotone =
        top[k..].windows(2).all(|w| w[1] >= w[0]) && bottom[k..].windows(2).all(|w| w[1] <= w[0]);
    let continuous = neq.rows[k..]
        .windows(2)
        .all(|w| l1(&w[0].shares, &w[1].shares) < 0.01);
    let half = 0.5 * (top[k] + last.shares[best]);
    let t_half = neq.rows[k..]
        .iter()
        .find(|r| r.shares[best] >= half)
        .unwrap()
        .t
        - step_time;
    let mnl_rows = &eq.rows;
    let single_step = mnl_rows[k..].iter().all(|r| r.shares == mnl_rows[k].shares)
        && mnl_rows[..k].iter().all(|r| r.shares == mnl_rows[0].shares)
        && l1(&mnl_rows[k - 1].shares, &mnl_rows[k].shares) > 0.0;
    let again = integrate(&sc).unwrap().to_csv_string() == neq.to_csv_string()
        && integrate(&Scenario {
            engine: Engine::MnlEquilibrium,
            ..sc.clone()
        })
        .unwrap()
        .to_csv_string()
            == eq.to_csv_string();
    ensure(
        monotone && continuous && t_half > 0.0 && single_step && again,
        format!(
            "NEQ monotone {monotone}, continuous {continuous}, half-reallocation after {t_half:.2}; MNL single step {single_step}; bit-identical reruns {again}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("Logit consistency", logit_consistency),
        ("Gradient oracle", gradient_oracle),
        ("CES-MNL equivalence", ces_equivalence),
        ("Conservation", conservation),
        ("MNL recovery", mnl_recovery),
        ("Appendix B degeneracy", appendix_b),
        ("Appendix C regime", appendix_c),
        ("Thermo identities", thermo_identities),
        ("Reversibility baseline", reversibility),
        ("Strong path dependence", strong_path_dependence),
        ("Figure-1 shape", figure1_shape),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
