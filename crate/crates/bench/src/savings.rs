//! Communication of federated CM + HLL + DFT against shipping raw tuples.
//!
//! Every site runs the generator with its own seed over its own streams. Event time drives a
//! simulated clock; at each period boundary the responsible site starts one
//! federated round per synopsis and the shared ledger records every frame.

use std::time::Duration;

use sde_core::federation::PeriodicScheduler;
use sde_core::model::WindowSpec;
use sde_core::{Params, Query, Result, Scope, SdeError, SimFederation, SynopsisKind, SynopsisSpec};
use serde::{Deserialize, Serialize};

use crate::generator::{generate, GeneratorConfig};

pub const RESPONSIBLE: &str = "site0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsConfig {
    pub sites: usize,
    pub period_ms: u64,
    pub rounds: u64,
    pub workers: usize,
    pub generator: GeneratorConfig,
}

impl SavingsConfig {
    pub fn new(sites: usize, seed: u64) -> SavingsConfig {
        let period_ms = 300_000;
        let rounds = 1;
        SavingsConfig {
            sites,
            period_ms,
            rounds,
            workers: 1,
            generator: GeneratorConfig {
                n_streams: 50,
                duration_ms: period_ms * rounds,
                level1_rate: 1.0,
                seed,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub sites: usize,
    pub rounds: u64,
    pub frames: u64,
    pub actual_bytes: u64,
    pub raw_bytes: u64,
    pub ratio: f64,
}

pub fn synopses(dataset: &str) -> Vec<(SynopsisSpec, Query)> {
    let cm = SynopsisSpec::new(
        "fed-cm",
        SynopsisKind::CountMin,
        dataset,
        Scope::WholeSource,
        Params::new().with("epsilon", 0.002).with("delta", 0.01).with("seed", 1),
    );
    let hll = SynopsisSpec::new(
        "fed-hll",
        SynopsisKind::HyperLogLog,
        dataset,
        Scope::WholeSource,
        Params::new().with("m", 10).with("seed", 2),
    )
    .with_key_field(1);
    let dft = SynopsisSpec::new(
        "fed-dft",
        SynopsisKind::Dft,
        dataset,
        Scope::WholeSource,
        Params::new().with("threshold", 0.9).with("coefficients", 8).with("windowSize", 64),
    )
    .with_value_fields(vec![0])
    .with_window(WindowSpec::count(64, 1));
    vec![
        (cm, Query::Frequency { item: "S0000".into() }),
        (hll, Query::Distinct),
        (dft, Query::Series { stream: None }),
    ]
}

pub fn run_savings(cfg: &SavingsConfig) -> Result<SavingsRow> {
    if cfg.sites == 0 || cfg.period_ms == 0 {
        return Err(SdeError::Config("need at least one site and a positive period".into()));
    }
    let fed = SimFederation::new(cfg.sites, cfg.workers, Duration::from_secs(30))?;
    let specs = synopses(&cfg.generator.dataset);
    for (s, _) in &specs {
        fed.build_all(s, RESPONSIBLE)?;
    }
    let responsible = fed.by_id(RESPONSIBLE).expect("site0 exists").clone();
    let start = cfg.generator.start_ms;
    let mut schedulers: Vec<PeriodicScheduler> = specs
        .iter()
        .map(|(s, q)| {
            PeriodicScheduler::new(
                responsible.clone(),
                &s.synopsis_id,
                q.clone(),
                Duration::from_millis(cfg.period_ms),
                start,
            )
        })
        .collect();
    let mut gens = fed
        .sites()
        .iter()
        .enumerate()
        .map(|(i, _)| {
            generate(GeneratorConfig {
                seed: cfg.generator.seed.wrapping_add(i as u64 * 7919),
                first_stream: i * cfg.generator.n_streams,
                duration_ms: cfg.period_ms * cfg.rounds,
                ..cfg.generator.clone()
            })
            .map(|g| g.peekable())
        })
        .collect::<Result<Vec<_>>>()?;
    for round in 1..=cfg.rounds {
        let boundary = start + round * cfg.period_ms;
        for (site, g) in fed.sites().iter().zip(gens.iter_mut()) {
            while let Some(r) = g.next_if(|r| r.event_time < boundary) {
                site.engine().ingest(r)?;
            }
        }
        fed.flush();
        for s in &mut schedulers {
            s.tick(boundary)?;
            let r = s
                .wait(Duration::from_secs(30))
                .ok_or_else(|| SdeError::Config("federated round timed out".into()))?;
            if let Some(e) = &r.error {
                return Err(SdeError::Config(format!("federated round failed: {}", e.message)));
            }
        }
    }
    let actual = fed.ledger.total_bytes();
    let raw = fed.ledger.distinct_raw_bytes();
    Ok(SavingsRow {
        sites: cfg.sites,
        rounds: cfg.rounds,
        frames: fed.ledger.total_frames(),
        actual_bytes: actual,
        raw_bytes: raw,
        ratio: if raw == 0 { f64::INFINITY } else { actual as f64 / raw as f64 },
    })
}
