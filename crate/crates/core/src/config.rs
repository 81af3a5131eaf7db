//! Scenario files.
//!
//! Scenarios are stored as TOML. Top-level keys set the run, each
//! `[[products]]` table adds a product with its starting share, and the
//! optional `[[events]]` tables form the timeline in time order:
//!
//! ```toml
//! format_version = 1
//! engine = "shares-ode"
//! t_end = 60.0
//! dt = 0.05
//! seed = 1
//! sigma = 1.0
//! alpha = 1.0
//!
//! [[products]]
//! id = 1
//! utility = 0.0
//! tau = 5.0
//! t_acq = 5.0
//! share = 0.5
//!
//! [[products]]
//! id = 2
//! utility = 0.0
//! tau = 5.0
//! t_acq = 5.0
//! share = 0.5
//!
//! [[events]]
//! time = 20.0
//! kind = "utility"
//! product = 1
//! utility = 0.5
//! ```
//!
//! Event kinds and their keys:
//!
//! | kind         | keys                                              |
//! |--------------|---------------------------------------------------|
//! | `utility`    | `product`, `utility`                              |
//! | `innovation` | `utility`, `tau`, `t_acq`, `seed_share` (1e-6)    |
//! | `noise`      | `amplitude_s`, `amplitude_u` (both 0 = off)       |
//! | `prune`      | `floor`                                           |
//!
//! Unknown keys are rejected. [`to_toml`] writes the canonical layout, and
//! reading then writing a canonical file reproduces it byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::dynamics::{Market, Product, ProductId, ShareVector};
use crate::equilibrium::Sigma;
use crate::error::{Error, Result};
use crate::innovation::{InnovationEvent, DEFAULT_SEED_SHARE};
use crate::scenario::{Engine, Event, Location, Scenario};

pub const FORMAT_VERSION: u32 = 1;

/// Four products with equal utilities until `t = 20`, then distinct ones.
pub const FIGURE1: &str = include_str!("../scenarios/figure1.scn");
/// One incumbent followed by five innovations, each `σ/2` better.
pub const FIGURE2: &str = include_str!("../scenarios/figure2.scn");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format_version: Spanned<u32>,
    engine: Spanned<String>,
    t_end: Spanned<f64>,
    dt: Spanned<f64>,
    seed: u64,
    sigma: Spanned<f64>,
    alpha: Spanned<f64>,
    products: Vec<RawProduct>,
    #[serde(default)]
    events: Vec<RawEvent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProduct {
    id: Spanned<u32>,
    utility: f64,
    tau: f64,
    t_acq: f64,
    share: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    time: Spanned<f64>,
    kind: String,
    product: Option<u32>,
    utility: Option<f64>,
    tau: Option<f64>,
    t_acq: Option<f64>,
    seed_share: Option<f64>,
    amplitude_s: Option<f64>,
    amplitude_u: Option<f64>,
    floor: Option<f64>,
}

#[derive(Serialize)]
struct OutScenario {
    format_version: u32,
    engine: String,
    t_end: f64,
    dt: f64,
    seed: u64,
    sigma: f64,
    alpha: f64,
    products: Vec<OutProduct>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    events: Vec<OutEvent>,
}

#[derive(Serialize)]
struct OutProduct {
    id: u32,
    utility: f64,
    tau: f64,
    t_acq: f64,
    share: f64,
}

#[derive(Serialize, Default)]
struct OutEvent {
    time: f64,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    product: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    utility: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_acq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_share: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    floor: Option<f64>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(None, format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

pub fn parse_str(src: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of(src, s.start));
        Error::config(line, e.message().to_string())
    })?;
    let line = |span: std::ops::Range<usize>| Some(line_of(src, span.start));

    if *raw.format_version.get_ref() != FORMAT_VERSION {
        return Err(Error::config(
            line(raw.format_version.span()),
            format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                raw.format_version.get_ref()
            ),
        ));
    }
    let engine: Engine = raw
        .engine
        .get_ref()
        .parse()
        .map_err(|e| relocate(e, line(raw.engine.span())))?;
    let sigma =
        Sigma::new(*raw.sigma.get_ref()).map_err(|e| relocate(e, line(raw.sigma.span())))?;
    if raw.products.is_empty() {
        return Err(Error::config(
            None,
            "at least one [[products]] table is required",
        ));
    }
    let products = raw
        .products
        .iter()
        .map(|p| Product {
            id: ProductId(*p.id.get_ref()),
            utility: p.utility,
            tau: p.tau,
            t_acq: p.t_acq,
        })
        .collect::<Vec<_>>();
    let first_id_line = line(raw.products[0].id.span());
    let market = Market::new(products, sigma, *raw.alpha.get_ref())
        .map_err(|e| relocate(e, first_id_line))?;

    let share_line = line(raw.products[0].share.span());
    let shares: Vec<f64> = raw.products.iter().map(|p| *p.share.get_ref()).collect();
    let initial_shares = ShareVector::new(shares).map_err(|e| relocate(e, share_line))?;

    let events = raw
        .events
        .iter()
        .map(|ev| convert_event(ev).map_err(|msg| Error::config(line(ev.time.span()), msg)))
        .collect::<Result<Vec<_>>>()?;

    let sc = Scenario {
        market,
        initial_shares,
        t_end: *raw.t_end.get_ref(),
        dt: *raw.dt.get_ref(),
        events,
        engine,
        seed: raw.seed,
    };
    sc.check().map_err(|(loc, msg)| {
        let at = match loc {
            Location::Global if msg.starts_with("dt") => line(raw.dt.span()),
            Location::Global => line(raw.t_end.span()),
            Location::Shares => share_line,
            Location::Event(k) => line(raw.events[k].time.span()),
        };
        Error::config(at, msg)
    })?;
    Ok(sc)
}

fn relocate(e: Error, line: Option<usize>) -> Error {
    match e {
        Error::Config { message, .. } => Error::config(line, message),
        other => Error::config(line, other.to_string()),
    }
}

fn convert_event(ev: &RawEvent) -> std::result::Result<Event, String> {
    let time = *ev.time.get_ref();
    let allowed: &[&str] = match ev.kind.as_str() {
        "utility" => &["product", "utility"],
        "innovation" => &["utility", "tau", "t_acq", "seed_share"],
        "noise" => &["amplitude_s", "amplitude_u"],
        "prune" => &["floor"],
        other => return Err(format!("unknown event kind `{other}`")),
    };
    let present = [
        ("product", ev.product.is_some()),
        ("utility", ev.utility.is_some()),
        ("tau", ev.tau.is_some()),
        ("t_acq", ev.t_acq.is_some()),
        ("seed_share", ev.seed_share.is_some()),
        ("amplitude_s", ev.amplitude_s.is_some()),
        ("amplitude_u", ev.amplitude_u.is_some()),
        ("floor", ev.floor.is_some()),
    ];
    if let Some((key, _)) = present.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        return Err(format!(
            "key `{key}` does not apply to `{}` events",
            ev.kind
        ));
    }
    fn need<T: Copy>(v: Option<T>, key: &str, kind: &str) -> std::result::Result<T, String> {
        v.ok_or_else(|| format!("`{kind}` event is missing `{key}`"))
    }
    let kind = ev.kind.as_str();
    Ok(match kind {
        "utility" => Event::Utility {
            time,
            product: ProductId(need(ev.product, "product", kind)?),
            utility: need(ev.utility, "utility", kind)?,
        },
        "innovation" => Event::Innovation(InnovationEvent {
            time,
            utility: need(ev.utility, "utility", kind)?,
            tau: need(ev.tau, "tau", kind)?,
            t_acq: need(ev.t_acq, "t_acq", kind)?,
            seed_share: ev.seed_share.unwrap_or(DEFAULT_SEED_SHARE),
        }),
        "noise" => Event::Noise {
            time,
            amplitude_s: need(ev.amplitude_s, "amplitude_s", kind)?,
            amplitude_u: need(ev.amplitude_u, "amplitude_u", kind)?,
        },
        _ => Event::Prune {
            time,
            floor: need(ev.floor, "floor", kind)?,
        },
    })
}

/// Canonical TOML text of a scenario.
pub fn to_toml(sc: &Scenario) -> Result<String> {
    let m = &sc.market;
    let out = OutScenario {
        format_version: FORMAT_VERSION,
        engine: sc.engine.name().to_string(),
        t_end: sc.t_end,
        dt: sc.dt,
        seed: sc.seed,
        sigma: m.sigma().get(),
        alpha: m.alpha(),
        products: m
            .products()
            .zip(sc.initial_shares.iter())
            .map(|(p, &share)| OutProduct {
                id: p.id.0,
                utility: p.utility,
                tau: p.tau,
                t_acq: p.t_acq,
                share,
            })
            .collect(),
        events: sc.events.iter().map(out_event).collect(),
    };
    toml::to_string(&out).map_err(|e| Error::config(None, e.to_string()))
}

fn out_event(ev: &Event) -> OutEvent {
    match *ev {
        Event::Utility {
            time,
            product,
            utility,
        } => OutEvent {
            time,
            kind: "utility",
            product: Some(product.0),
            utility: Some(utility),
            ..Default::default()
        },
        Event::Innovation(inn) => OutEvent {
            time: inn.time,
            kind: "innovation",
            utility: Some(inn.utility),
            tau: Some(inn.tau),
            t_acq: Some(inn.t_acq),
            seed_share: Some(inn.seed_share),
            ..Default::default()
        },
        Event::Noise {
            time,
            amplitude_s,
            amplitude_u,
        } => OutEvent {
            time,
            kind: "noise",
            amplitude_s: Some(amplitude_s),
            amplitude_u: Some(amplitude_u),
            ..Default::default()
        },
        Event::Prune { time, floor } => OutEvent {
            time,
            kind: "prune",
            floor: Some(floor),
            ..Default::default()
        },
    }
}
