use choice_dynamics::config::{parse_str, FIGURE1, FIGURE2};
use choice_dynamics::dynamics::{shares_rhs, Market, Product, ProductId, ShareVector};
use choice_dynamics::equilibrium::{mnl, Sigma};
use choice_dynamics::innovation::{strong_path_dependence_experiment, InnovationEvent};
use choice_dynamics::scenario::{integrate, Engine, Event, Overrides, Scenario};
use choice_dynamics::trajectory::TrajectoryLog;
use choice_dynamics::verify::{relative_trajectory_gap, tax_loop};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(s: f64) -> Sigma {
    Sigma::new(s).unwrap()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn random_shares(rng: &mut impl Rng, n: usize) -> ShareVector {
    ShareVector::project((0..n).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

#[test]
fn constant_alpha_zero_run_stays_at_mnl() {
    let u = [0.4, -0.2, 0.1];
    let m = Market::uniform(&u, 2.0, sig(0.7), 0.0).unwrap();
    let p = mnl(&u, sig(0.7)).unwrap();
    let s0 = ShareVector::new(p.to_vec()).unwrap();
    let log =
        integrate(&Scenario::new(m, s0, 20.0, 0.1, vec![], Engine::SharesOde, 0).unwrap()).unwrap();
    for r in &log.rows {
        assert!(l1(&r.shares, &p) < 1e-14);
    }
}

#[test]
fn mnl_recovery_from_random_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(2..6);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let sigma = rng.random_range(0.5..2.0);
        let tau = rng.random_range(0.5..3.0);
        let m = Market::uniform(&u, tau, sig(sigma), 0.0).unwrap();
        let s0 = random_shares(&mut rng, n);
        let sc =
            Scenario::new(m, s0, 20.0 * tau, 0.05 * tau, vec![], Engine::SharesOde, 0).unwrap();
        let end = integrate(&sc).unwrap();
        let target = mnl(&u, sig(sigma)).unwrap();
        assert!(l1(&end.last().unwrap().shares, &target) < 1e-4);
    }
}

/// First logged time at which `‖S − P‖₁ < 1e-3`.
fn relaxation_time(log: &TrajectoryLog) -> f64 {
    log.rows
        .iter()
        .find(|r| l1(&r.shares, &r.prefs) < 1e-3)
        .map(|r| r.t)
        .expect("relaxes")
}

#[test]
fn shorter_turnover_relaxes_faster() {
    let u = [0.5, 0.0, -0.4];
    let s0 = ShareVector::new(vec![0.05, 0.15, 0.8]).unwrap();
    let time_for = |tau: f64| {
        let m = Market::uniform(&u, tau, sig(1.0), 0.0).unwrap();
        let sc = Scenario::new(
            m,
            s0.clone(),
            20.0 * tau,
            0.01 * tau,
            vec![],
            Engine::SharesOde,
            0,
        )
        .unwrap();
        relaxation_time(&integrate(&sc).unwrap())
    };
    let mut prev = time_for(4.0);
    for tau in [2.0, 1.0, 0.5, 0.25] {
        let t = time_for(tau);
        assert!(t > 0.0 && t <= 0.5 * prev, "tau {tau}: {t} vs {prev}");
        prev = t;
    }
}

#[test]
fn long_runs_stay_on_the_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for engine in [Engine::SharesOde, Engine::Replicator, Engine::LotkaVolterra] {
        let n = 5;
        let products = (0..n)
            .map(|i| Product {
                id: ProductId(i as u32 + 1),
                utility: rng.random_range(-1.0..1.0),
                tau: rng.random_range(0.5..3.0),
                t_acq: rng.random_range(0.5..3.0),
            })
            .collect();
        let m = Market::new(products, sig(0.8), 0.6).unwrap();
        let sc = Scenario::new(
            m,
            random_shares(&mut rng, n),
            500.0,
            0.05,
            vec![],
            engine,
            0,
        )
        .unwrap();
        let log = integrate(&sc).unwrap();
        assert_eq!(log.len(), 10_001);
        for r in &log.rows {
            assert!((r.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.shares.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn popularity_reinforces_at_strong_interaction() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let sigma = rng.random_range(0.3..2.0);
        let alpha = sigma * rng.random_range(1.0..2.0);
        let m = Market::uniform(&[0.2, 0.2], 1.5, sig(sigma), alpha).unwrap();
        let big = rng.random_range(0.5..1.0);
        let s = ShareVector::new(vec![big, 1.0 - big]).unwrap();
        assert!(shares_rhs(&s, &m).unwrap()[0] >= -1e-15);
    }
}

#[test]
fn shares_ode_and_lotka_volterra_agree_for_small_gaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let n = rng.random_range(2..5);
        let products = (0..n)
            .map(|i| {
                let tau = rng.random_range(1.0..3.0);
                Product {
                    id: ProductId(i as u32 + 1),
                    utility: rng.random_range(0.0..0.5),
                    tau,
                    t_acq: tau,
                }
            })
            .collect();
        let m = Market::new(products, sig(1.0), 1.0).unwrap();
        let s0 = random_shares(&mut rng, n);
        let run = |e| {
            integrate(&Scenario::new(m.clone(), s0.clone(), 100.0, 0.05, vec![], e, 0).unwrap())
                .unwrap()
        };
        assert!(
            relative_trajectory_gap(&run(Engine::SharesOde), &run(Engine::LotkaVolterra)) < 0.05
        );
    }
}

#[test]
fn halving_dt_barely_moves_the_terminal_state() {
    for src in [FIGURE1, FIGURE2] {
        let sc = parse_str(src).unwrap();
        let fine = sc
            .with_overrides(Overrides {
                dt: Some(sc.dt / 2.0),
                ..Default::default()
            })
            .unwrap();
        let a = integrate(&sc).unwrap();
        let b = integrate(&fine).unwrap();
        let (ra, rb) = (a.last().unwrap(), b.last().unwrap());
        assert_eq!(ra.ids, rb.ids);
        assert!(
            l1(&ra.shares, &rb.shares) < 1e-6,
            "{}",
            l1(&ra.shares, &rb.shares)
        );
    }
}

#[test]
fn trajectories_are_continuous_between_events() {
    let sc = parse_str(FIGURE1).unwrap();
    let log = integrate(&sc).unwrap();
    let events: Vec<f64> = sc.events.iter().map(|e| e.time()).collect();
    let mut max_rate: f64 = 0.0;
    for r in &log.rows {
        let m = Market::uniform(&r.utilities, 5.0, sig(1.0), 1.0).unwrap();
        let rate = shares_rhs(&ShareVector::new(r.shares.clone()).unwrap(), &m).unwrap();
        max_rate = max_rate.max(rate.iter().map(|x| x.abs()).sum());
    }
    for w in log.rows.windows(2) {
        let h = w[1].t - w[0].t;
        let jump = l1(&w[0].shares, &w[1].shares);
        if !events.contains(&w[1].t) {
            assert!(jump <= h * max_rate * 1.01 + 1e-15);
        }
    }
}

#[test]
fn figure1_shapes() {
    let sc = parse_str(FIGURE1).unwrap();
    let neq = integrate(&sc).unwrap();
    let mnl_log = integrate(&Scenario {
        engine: Engine::MnlEquilibrium,
        ..sc.clone()
    })
    .unwrap();
    let k20 = neq.rows.iter().position(|r| r.t == 20.0).unwrap();

    // Before the step both engines are flat.
    for r in &neq.rows[..=k20] {
        assert!(l1(&r.shares, &neq.rows[0].shares) < 1e-14);
    }
    let top = neq.share_series(ProductId(1));
    let bottom = neq.share_series(ProductId(4));
    assert!(top[k20..].windows(2).all(|w| w[1] >= w[0]));
    assert!(bottom[k20..].windows(2).all(|w| w[1] <= w[0]));
    let half = 0.5 * (top[k20] + top.last().unwrap());
    let k_half = (k20..top.len()).find(|&k| top[k] >= half).unwrap();
    assert!(neq.rows[k_half].t - 20.0 > 10.0 * sc.dt);

    // The MNL run moves in one row and is constant on both sides.
    let m = mnl_log.share_series(ProductId(1));
    assert!(m[..k20].iter().all(|&x| x == m[0]));
    assert!(m[k20..].iter().all(|&x| x == m[k20]));
    assert!((m[k20] - m[0]).abs() > 0.1);
}

#[test]
fn figure2_representative_utility_rises_with_each_diffusion() {
    let sc = parse_str(FIGURE2).unwrap();
    let log = integrate(&sc).unwrap();
    let ubar = |t: f64| log.row_at(t).unwrap().aggregates.representative_utility;
    let u0 = ubar(0.0);
    let checkpoints = [59.95, 99.95, 139.95, 179.95, 260.0];
    let mut prev = u0;
    for t in checkpoints {
        assert!(ubar(t) > prev + 0.4, "t = {t}");
        prev = ubar(t);
    }
    assert!(ubar(260.0) > u0);
    assert_eq!(log.product_ids().len(), 6);
}

#[test]
fn attractive_innovation_takes_off() {
    let m = Market::uniform(&[0.0, 0.3], 1.0, sig(1.0), 1.0).unwrap();
    let s0 = ShareVector::new(vec![0.5, 0.5]).unwrap();
    let ev = Event::Innovation(InnovationEvent::new(5.0, 3.3, 1.0, 1.0));
    let log = integrate(&Scenario::new(m, s0, 60.0, 0.05, vec![ev], Engine::SharesOde, 0).unwrap())
        .unwrap();
    assert!(log.last().unwrap().share_of(ProductId(3)) > 0.5);
}

#[test]
fn takeoff_is_monotone_until_the_innovation_leads() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = rng.random_range(2..5);
        let sigma = rng.random_range(0.5..1.5);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u_max = u.iter().copied().fold(f64::MIN, f64::max);
        let products = (0..n)
            .map(|i| {
                let tau = rng.random_range(0.5..2.0);
                Product {
                    id: ProductId(i as u32 + 1),
                    utility: u[i],
                    tau,
                    t_acq: tau,
                }
            })
            .collect();
        let m = Market::new(products, sig(sigma), sigma).unwrap();
        let tau_new = rng.random_range(0.5..2.0);
        let ev = InnovationEvent::new(
            1.0,
            u_max + sigma * rng.random_range(0.2..1.0),
            tau_new,
            tau_new,
        );
        let sc = Scenario::new(
            m,
            random_shares(&mut rng, n),
            400.0,
            0.05,
            vec![Event::Innovation(ev)],
            Engine::SharesOde,
            0,
        )
        .unwrap();
        let log = integrate(&sc).unwrap();
        let id = ProductId(n as u32 + 1);
        let start = log.rows.iter().position(|r| r.t == 1.0).unwrap();
        let lead = (start..log.len())
            .find(|&k| {
                let r = &log.rows[k];
                r.ids
                    .iter()
                    .filter(|&&i| i != id)
                    .all(|&i| r.share_of(id) > r.share_of(i))
            })
            .expect("innovation takes the lead");
        let s = log.share_series(id);
        assert!(s[start..=lead].windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn innovation_makes_the_loop_irreversible() {
    let m = Market::uniform(&[0.3, 0.0, -0.2], 1.0, sig(1.0), 0.5).unwrap();
    let base = tax_loop(&m, 0.5, 0.0, 0).unwrap();
    let ev = InnovationEvent::new(21.0, 1.3, 1.0, 1.0);
    let rep = strong_path_dependence_experiment(&base, ev).unwrap();
    assert!(rep.baseline_residual < 1e-9);
    assert!(rep.event_delta > 1e-3);
    assert!(rep.innovation_share > 0.01);
    let start = rep.with_event.first().unwrap();
    let end = rep.with_event.last().unwrap();
    let ids = end.ids.clone();
    let a = rep.with_event.shares_on(start, &ids);
    let b = rep.with_event.shares_on(end, &ids);
    assert!(l1(&a, &b) > 0.01);
}

#[test]
fn unattractive_innovation_fails() {
    let m = Market::uniform(&[0.2, 0.2, 0.2], 1.0, sig(1.0), 1.0).unwrap();
    let events = vec![
        Event::Utility {
            time: 1.0,
            product: ProductId(1),
            utility: -0.3,
        },
        Event::Utility {
            time: 41.0,
            product: ProductId(1),
            utility: 0.2,
        },
    ];
    let base = Scenario::new(
        m,
        ShareVector::uniform(3),
        81.0,
        0.05,
        events,
        Engine::SharesOde,
        0,
    )
    .unwrap();
    let ev = InnovationEvent::new(21.0, 0.2 - 5.0, 1.0, 1.0);
    let rep = strong_path_dependence_experiment(&base, ev).unwrap();
    assert!(rep.innovation_share < 1e-12);
    assert!(rep.baseline_residual < 1e-12);
    assert!(rep.event_residual < 1e-12);
    let s = rep.with_event.share_series(ProductId(4));
    let k = s.iter().position(|&x| x > 0.0).unwrap();
    assert!(s[k..].windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn experiment_rejects_open_loops() {
    let m = Market::uniform(&[0.2, 0.0], 1.0, sig(1.0), 0.5).unwrap();
    let events = vec![Event::Utility {
        time: 1.0,
        product: ProductId(1),
        utility: -0.3,
    }];
    let base = Scenario::new(
        m,
        ShareVector::uniform(2),
        10.0,
        0.05,
        events,
        Engine::SharesOde,
        0,
    )
    .unwrap();
    assert!(
        strong_path_dependence_experiment(&base, InnovationEvent::new(2.0, 1.0, 1.0, 1.0)).is_err()
    );
}

#[test]
fn determinism_with_noise() {
    let sc = parse_str(FIGURE1).unwrap();
    let mut noisy = sc.clone();
    noisy
        .insert_event(Event::Noise {
            time: 0.0,
            amplitude_s: 1e-3,
            amplitude_u: 1e-3,
        })
        .unwrap();
    let a = integrate(&noisy).unwrap().to_csv_string();
    let b = integrate(&noisy).unwrap().to_csv_string();
    assert_eq!(a, b);
    assert_ne!(a, integrate(&sc).unwrap().to_csv_string());
}
