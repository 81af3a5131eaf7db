//! Scenarios and their time integration.
//!
//! A scenario fixes the market, the starting shares, a timeline of events
//! and the engine that moves the state between them. [`integrate`] runs it
//! with classic fixed-step RK4. The step grid is cut at every event time so
//! events land exactly on step boundaries; each span between boundaries is
//! covered by equal steps no longer than `dt`.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{interacting_preferences, Dynamics, Market, ProductId, ShareVector};
use crate::equilibrium::mnl;
use crate::error::{Error, Result};
use crate::innovation::{inject_product, prune, InnovationEvent};
use crate::thermo::{aggregates, equilibrium_aggregates, perturb, NoiseSpec};
use crate::trajectory::{LogRow, TrajectoryLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    SharesOde,
    Replicator,
    LotkaVolterra,
    /// Instantaneous equilibrium: shares equal `mnl(U(t), σ)` at every row.
    MnlEquilibrium,
}

impl Engine {
    pub const ALL: [Engine; 4] = [
        Engine::SharesOde,
        Engine::Replicator,
        Engine::LotkaVolterra,
        Engine::MnlEquilibrium,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Engine::SharesOde => "shares-ode",
            Engine::Replicator => "replicator",
            Engine::LotkaVolterra => "lotka-volterra",
            Engine::MnlEquilibrium => "mnl-equilibrium",
        }
    }

    pub fn dynamics(self) -> Option<Dynamics> {
        match self {
            Engine::SharesOde => Some(Dynamics::SharesOde),
            Engine::Replicator => Some(Dynamics::Replicator),
            Engine::LotkaVolterra => Some(Dynamics::LotkaVolterra),
            Engine::MnlEquilibrium => None,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Engine::ALL.iter().map(|e| e.name()).collect();
                Error::config(
                    None,
                    format!(
                        "unknown engine `{s}` (expected one of {})",
                        names.join(", ")
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    /// Sets the utility of an existing product.
    Utility {
        time: f64,
        product: ProductId,
        utility: f64,
    },
    Innovation(InnovationEvent),
    /// Switches noise on with the given amplitudes; zero amplitudes switch
    /// it off. Amplitudes are per unit time: each step of length `h` draws
    /// with scale `amplitude·√h`.
    Noise {
        time: f64,
        amplitude_s: f64,
        amplitude_u: f64,
    },
    Prune {
        time: f64,
        floor: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::Utility { time, .. } | Event::Noise { time, .. } | Event::Prune { time, .. } => {
                time
            }
            Event::Innovation(ev) => ev.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub market: Market,
    pub initial_shares: ShareVector,
    pub t_end: f64,
    pub dt: f64,
    pub events: Vec<Event>,
    pub engine: Engine,
    pub seed: u64,
}

/// Where a validation failure sits, so file readers can point at a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Location {
    Global,
    Shares,
    Event(usize),
}

/// Command-line overrides of scenario values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

impl Scenario {
    pub fn new(
        market: Market,
        initial_shares: ShareVector,
        t_end: f64,
        dt: f64,
        events: Vec<Event>,
        engine: Engine,
        seed: u64,
    ) -> Result<Self> {
        let sc = Scenario {
            market,
            initial_shares,
            t_end,
            dt,
            events,
            engine,
            seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(_, msg)| Error::config(None, msg))
    }

    pub(crate) fn check(&self) -> std::result::Result<(), (Location, String)> {
        let global = |msg: String| Err((Location::Global, msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return global(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return global(format!(
                "t_end must be >= dt, got t_end = {} and dt = {}",
                self.t_end, self.dt
            ));
        }
        if self.initial_shares.len() != self.market.len() {
            return Err((
                Location::Shares,
                format!(
                    "{} initial shares for {} products",
                    self.initial_shares.len(),
                    self.market.len()
                ),
            ));
        }
        let mut known: Vec<ProductId> = self.market.ids().to_vec();
        let mut next = self.market.next_id().0;
        let mut last = 0.0;
        for (k, ev) in self.events.iter().enumerate() {
            let at = |msg: String| Err((Location::Event(k), msg));
            let t = ev.time();
            if !(t.is_finite() && (0.0..=self.t_end).contains(&t)) {
                return at(format!(
                    "event time {t} outside [0, t_end = {}]",
                    self.t_end
                ));
            }
            if t < last {
                return at(format!("events are not sorted by time ({t} after {last})"));
            }
            last = t;
            match *ev {
                Event::Utility {
                    product, utility, ..
                } => {
                    if !known.contains(&product) {
                        return at(format!("utility event for unknown product {product}"));
                    }
                    if !utility.is_finite() {
                        return at("utility must be finite".into());
                    }
                }
                Event::Innovation(inn) => {
                    if let Err(e) = inn.validate() {
                        return at(strip_config(e));
                    }
                    known.push(ProductId(next));
                    next += 1;
                }
                Event::Noise {
                    amplitude_s,
                    amplitude_u,
                    ..
                } => {
                    if let Err(e) = NoiseSpec::new(amplitude_s, amplitude_u, 0) {
                        return at(strip_config(e));
                    }
                }
                Event::Prune { floor, .. } => {
                    if !(0.0..=crate::innovation::MAX_PRUNE_FLOOR).contains(&floor) {
                        return at(format!(
                            "prune floor must lie in [0, {}], got {floor}",
                            crate::innovation::MAX_PRUNE_FLOOR
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn with_overrides(&self, o: Overrides) -> Result<Scenario> {
        let mut sc = self.clone();
        if let Some(seed) = o.seed {
            sc.seed = seed;
        }
        if let Some(dt) = o.dt {
            sc.dt = dt;
        }
        if let Some(t_end) = o.t_end {
            sc.t_end = t_end;
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Inserts an event after any existing events at the same time.
    pub fn insert_event(&mut self, ev: Event) -> Result<()> {
        let at = self.events.partition_point(|e| e.time() <= ev.time());
        self.events.insert(at, ev);
        if let Err(e) = self.validate() {
            self.events.remove(at);
            return Err(e);
        }
        Ok(())
    }

    /// Utilities of the initial products after every utility event.
    pub fn final_utilities(&self) -> Result<Vec<f64>> {
        let mut u = self.market.utilities().to_vec();
        for ev in &self.events {
            if let Event::Utility {
                product, utility, ..
            } = *ev
            {
                if let Some(i) = self.market.index_of(product) {
                    u[i] = utility;
                }
            }
        }
        Ok(u)
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config { message, .. } => message,
        other => other.to_string(),
    }
}

/// Mutable state of one run.
struct Run {
    market: Market,
    shares: ShareVector,
    /// Utilities driving the next step; differs from the market's only while
    /// utility noise is on.
    driving: Vec<f64>,
    noise: Option<(f64, f64)>,
}

impl Run {
    fn apply(&mut self, ev: &Event) -> Result<()> {
        match *ev {
            Event::Utility {
                product, utility, ..
            } => {
                let i = self.market.index_of(product).ok_or_else(|| {
                    Error::config(
                        None,
                        format!(
                            "product {product} is not in the market at t = {}",
                            ev.time()
                        ),
                    )
                })?;
                let mut u = self.market.utilities().to_vec();
                u[i] = utility;
                self.market = self.market.with_utilities(u)?;
            }
            Event::Innovation(inn) => {
                let (s, m) = inject_product(&self.shares, &self.market, &inn)?;
                self.shares = s;
                self.market = m;
            }
            Event::Noise {
                amplitude_s,
                amplitude_u,
                ..
            } => {
                self.noise =
                    (amplitude_s > 0.0 || amplitude_u > 0.0).then_some((amplitude_s, amplitude_u));
            }
            Event::Prune { floor, .. } => {
                let (s, m) = prune(&self.shares, &self.market, floor)?;
                self.shares = s;
                self.market = m;
            }
        }
        self.driving = self.market.utilities().to_vec();
        Ok(())
    }

    fn row(&self, t: f64, engine: Engine) -> Result<LogRow> {
        let (shares, prefs, aggregates) = match engine {
            Engine::MnlEquilibrium => {
                let p = mnl(self.market.utilities(), self.market.sigma())?.into_vec();
                let agg = equilibrium_aggregates(self.market.utilities(), self.market.sigma())?;
                (p.clone(), p, agg)
            }
            _ => (
                self.shares.to_vec(),
                interacting_preferences(&self.shares, &self.market)?.into_vec(),
                aggregates(&self.shares, &self.market)?,
            ),
        };
        Ok(LogRow {
            t,
            ids: self.market.ids().to_vec(),
            shares,
            prefs,
            utilities: self.market.utilities().to_vec(),
            aggregates,
        })
    }
}

fn rk4(dynamics: Dynamics, s: &[f64], m: &Market, h: f64) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        a.iter().zip(k).map(|(x, y)| x + c * y).collect()
    };
    let k1 = dynamics.rate(s, m)?;
    let k2 = dynamics.rate(&axpy(s, &k1, 0.5 * h), m)?;
    let k3 = dynamics.rate(&axpy(s, &k2, 0.5 * h), m)?;
    let k4 = dynamics.rate(&axpy(s, &k3, h), m)?;
    Ok((0..s.len())
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates the scenario and logs one row per step, starting at `t = 0`.
/// Each row records the state after all events at its time.
pub fn integrate(sc: &Scenario) -> Result<TrajectoryLog> {
    sc.validate()?;
    let mut rng = NoiseSpec::new(0.0, 0.0, sc.seed)?.rng();
    let mut run = Run {
        market: sc.market.clone(),
        shares: sc.initial_shares.clone(),
        driving: sc.market.utilities().to_vec(),
        noise: None,
    };
    let mut pending = sc.events.iter().peekable();
    while let Some(ev) = pending.next_if(|e| e.time() == 0.0) {
        run.apply(ev)?;
    }
    let mut log = TrajectoryLog::default();
    log.rows.push(run.row(0.0, sc.engine)?);

    let mut t0 = 0.0;
    while t0 < sc.t_end {
        let boundary = pending.peek().map_or(sc.t_end, |e| e.time().min(sc.t_end));
        let steps = ((boundary - t0) / sc.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = (boundary - t0) / steps as f64;
        for k in 1..=steps {
            let t = if k == steps {
                boundary
            } else {
                t0 + k as f64 * h
            };
            let t_prev = log.rows.last().map_or(0.0, |r| r.t);
            if let Some(dynamics) = sc.engine.dynamics() {
                step(&mut run, dynamics, h, &mut rng).map_err(|e| Error::Integration {
                    t_last_valid: t_prev,
                    t_failed: t,
                    message: e.to_string(),
                })?;
            }
            if k == steps {
                while let Some(ev) = pending.next_if(|e| e.time() == boundary) {
                    run.apply(ev)?;
                }
            }
            log.rows.push(run.row(t, sc.engine)?);
        }
        t0 = boundary;
    }
    Ok(log)
}

fn step(
    run: &mut Run,
    dynamics: Dynamics,
    h: f64,
    rng: &mut crate::thermo::NoiseRng,
) -> Result<()> {
    let driving = if run.driving == run.market.utilities() {
        run.market.clone()
    } else {
        run.market.with_utilities(run.driving.clone())?
    };
    let next = rk4(dynamics, &run.shares, &driving, h)?;
    if let Some(i) = next.iter().position(|x| !x.is_finite()) {
        return Err(Error::domain(format!("share {i} became {}", next[i])));
    }
    let mut shares = ShareVector::project(next)?;
    if let Some((amp_s, amp_u)) = run.noise {
        let spec = NoiseSpec::new(amp_s * h.sqrt(), amp_u * h.sqrt(), 0)?;
        let (s, u) = perturb(&shares, run.market.utilities(), &spec, rng)?;
        shares = s;
        run.driving = u;
    }
    run.shares = shares;
    Ok(())
}
