//! Pairwise correlation workflow under the four execution strategies.
//!
//! Every tick each stream contributes its joined price to a window of
//! `window_ticks` values. Naive and ParallelOnly correlate every pair of
//! usable windows. The synopsis strategies feed the prices into a DFT
//! synopsis, read back its grid buckets and correlate only pairs that share
//! or touch a bucket; the exact check on those candidates makes the output
//! identical to brute force.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use sde_core::protocol::Request;
use sde_core::synopses::DftGrid;
use sde_core::{
    Engine, EngineConfig, EstimateValue, Params, Query, Result, Scalar, Scope, SdeError, StreamRecord,
    SynopsisKind, SynopsisSpec,
};
use sde_core::model::WindowSpec;
use serde::{Deserialize, Serialize};

use crate::generator::{generate, GeneratorConfig};
use crate::workflow::{pearson, stream_index, Rings, TickJoiner, TICK_MS, WINDOW_TICKS};
use crate::{pool, Strategy, StrategyResult};

pub const JOINED: &str = "joined";
const SYNOPSIS: &str = "corr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub strategy: Strategy,
    pub workers: usize,
    pub threshold: f64,
    pub coefficients: usize,
    /// Coefficients spanning the bucket grid.
    pub grid_coefficients: usize,
    pub window_ticks: usize,
    pub tick_ms: u64,
    /// Ticks evaluated after the first window fills.
    pub eval_ticks: usize,
    pub generator: GeneratorConfig,
}

impl CorrelationConfig {
    pub fn new(strategy: Strategy, n_streams: usize, workers: usize, seed: u64) -> Self {
        let window_ticks = WINDOW_TICKS;
        let eval_ticks = 20;
        let tick_ms = TICK_MS;
        CorrelationConfig {
            strategy,
            workers,
            threshold: 0.9,
            coefficients: 8,
            grid_coefficients: 2,
            window_ticks,
            tick_ms,
            eval_ticks,
            generator: GeneratorConfig {
                n_streams,
                duration_ms: (window_ticks + eval_ticks) as u64 * tick_ms - 1,
                level1_rate: 0.4,
                bids_per_trade: 2.0,
                seed,
                ..Default::default()
            },
        }
    }

    pub fn n_streams(&self) -> usize {
        self.generator.n_streams
    }

    fn validate(&self) -> Result<()> {
        self.strategy.check_workers(self.workers)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SdeError::Config("threshold must lie in (0, 1)".into()));
        }
        if self.grid_coefficients == 0 || self.grid_coefficients > self.coefficients {
            return Err(SdeError::Config("grid coefficients must lie in [1, coefficients]".into()));
        }
        if self.window_ticks < 4 || 2 * self.coefficients >= self.window_ticks {
            return Err(SdeError::Config("window too short for the coefficient count".into()));
        }
        self.generator.validate()
    }
}

/// Result plus the pairs emitted at each evaluated tick.
#[derive(Debug, Clone)]
pub struct CorrelationRun {
    pub result: StrategyResult,
    /// `(tick, pairs)` with `a < b` stream indices, sorted.
    pub emitted: Vec<(u64, Vec<(usize, usize)>)>,
}

pub fn records(cfg: &GeneratorConfig) -> Result<Vec<StreamRecord>> {
    Ok(generate(cfg.clone())?.collect())
}

/// Every tick's joined tuples for a config, for oracles.
pub fn joined_ticks(cfg: &CorrelationConfig) -> Result<Vec<Vec<crate::workflow::JoinedTick>>> {
    let recs = records(&cfg.generator)?;
    Ok(crate::workflow::join_all(&recs, cfg.n_streams(), cfg.generator.start_ms, cfg.tick_ms))
}

pub fn dft_spec(cfg: &CorrelationConfig, parallelism: u32) -> SynopsisSpec {
    SynopsisSpec::new(
        SYNOPSIS,
        SynopsisKind::Dft,
        JOINED,
        Scope::WholeSource,
        Params::new()
            .with("threshold", cfg.threshold)
            .with("coefficients", cfg.coefficients as u64)
            .with("windowSize", cfg.window_ticks as u64)
            .with("gridCoefficients", cfg.grid_coefficients as u64),
    )
    .with_parallelism(parallelism)
    .with_value_fields(vec![0])
    .with_window(WindowSpec::count(cfg.window_ticks as u64, 1))
}

struct Synopsis {
    engine: Engine,
    grid: DftGrid,
}

impl Synopsis {
    fn start(cfg: &CorrelationConfig) -> Result<Synopsis> {
        let engine = Engine::start(EngineConfig::default().with_site("bench").with_workers(cfg.workers));
        let r = engine.handle(Request::build("corr-build", dft_spec(cfg, cfg.workers as u32)));
        if let Some(e) = r.error {
            return Err(SdeError::Config(format!("DFT build failed: {}", e.message)));
        }
        let grid = DftGrid::new((1.0 - cfg.threshold).sqrt(), cfg.grid_coefficients)?;
        Ok(Synopsis { engine, grid })
    }

    fn buckets(&self, tick: u64) -> Result<BTreeMap<u64, Vec<usize>>> {
        let r = self.engine.handle(Request::query(
            format!("corr-{tick}"),
            SYNOPSIS,
            Query::Series { stream: None },
        ));
        if let Some(e) = r.error {
            return Err(SdeError::Config(format!("series query failed: {}", e.message)));
        }
        let Some(EstimateValue::Series(entries)) = r.value else {
            return Err(SdeError::Config("series query returned no table".into()));
        };
        let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for e in entries {
            if let (Some(b), Some(i)) = (e.bucket, stream_index(&e.stream)) {
                out.entry(b).or_default().push(i);
            }
        }
        Ok(out)
    }

    /// Same-bucket and adjacent-bucket pairs.
    fn candidates(&self, buckets: &BTreeMap<u64, Vec<usize>>) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (&b, members) in buckets {
            for (x, &i) in members.iter().enumerate() {
                for &j in &members[x + 1..] {
                    out.push((i.min(j), i.max(j)));
                }
            }
            for nb in self.grid.neighbourhood(b) {
                if nb <= b {
                    continue;
                }
                if let Some(other) = buckets.get(&nb) {
                    for &i in members {
                        for &j in other {
                            out.push((i.min(j), i.max(j)));
                        }
                    }
                }
            }
        }
        out
    }
}

fn all_pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |a| (a + 1..m).map(move |b| (a, b)))
}

pub fn run_correlation(cfg: &CorrelationConfig) -> Result<CorrelationRun> {
    cfg.validate()?;
    let recs = records(&cfg.generator)?;
    run_on(cfg, &recs)
}

/// Runs the workflow over pre-generated records; only this part is timed.
pub fn run_on(cfg: &CorrelationConfig, recs: &[StreamRecord]) -> Result<CorrelationRun> {
    cfg.validate()?;
    let n = cfg.n_streams();
    let strategy = cfg.strategy;
    let pool = pool(cfg.workers)?;
    let parallel = matches!(strategy, Strategy::ParallelOnly | Strategy::SynopsisPlusParallel);
    let started = Instant::now();
    let synopsis = if strategy.uses_synopsis() {
        Some(Synopsis::start(cfg)?)
    } else {
        None
    };
    let mut joiner = TickJoiner::new(n, cfg.generator.start_ms, cfg.tick_ms);
    let mut rings = Rings::new(n, cfg.window_ticks);
    let mut closed = Vec::new();
    let mut emitted = Vec::new();
    let mut compared = 0u64;
    let threshold = cfg.threshold;

    let mut evaluate = |ticks: Vec<crate::workflow::JoinedTick>, rings: &mut Rings| -> Result<()> {
        let Some(tick) = ticks.first().map(|t| t.tick) else {
            return Ok(());
        };
        for t in &ticks {
            rings.push(t.stream, t.price);
        }
        if let Some(s) = &synopsis {
            for t in &ticks {
                s.engine.ingest(StreamRecord::new(
                    JOINED,
                    crate::generator::stream_id(t.stream),
                    t.tick * cfg.tick_ms,
                    vec![Scalar::Num(t.price), Scalar::Num(t.bids as f64)],
                ))?;
            }
        }
        if (tick as usize) + 1 < cfg.window_ticks {
            return Ok(());
        }
        let mut pairs: Vec<(usize, usize)> = match &synopsis {
            None => {
                let usable = rings.usable();
                let m = usable.len();
                compared += (m * m.saturating_sub(1) / 2) as u64;
                let check = |(a, b): (usize, usize)| {
                    (pearson(&usable[a].1, &usable[b].1) >= threshold).then(|| (usable[a].0, usable[b].0))
                };
                if parallel {
                    pool.install(|| {
                        (0..m)
                            .into_par_iter()
                            .flat_map_iter(|a| (a + 1..m).filter_map(move |b| check((a, b))))
                            .collect()
                    })
                } else {
                    all_pairs(m).filter_map(check).collect()
                }
            }
            Some(s) => {
                let cands = s.candidates(&s.buckets(tick)?);
                compared += cands.len() as u64;
                let check = |&(a, b): &(usize, usize)| pearson(&rings.window(a), &rings.window(b)) >= threshold;
                if parallel {
                    pool.install(|| cands.into_par_iter().filter(|p| check(p)).collect())
                } else {
                    cands.into_iter().filter(check).collect()
                }
            }
        };
        pairs.sort_unstable();
        emitted.push((tick, pairs));
        Ok(())
    };

    for r in recs {
        joiner.push(r, &mut closed);
        for ticks in closed.drain(..) {
            evaluate(ticks, &mut rings)?;
        }
    }
    evaluate(joiner.close(), &mut rings)?;
    let wall = started.elapsed();
    let mut result = StrategyResult::timed(strategy, n, cfg.workers, recs.len() as u64, wall);
    result.evaluations = emitted.len() as u64;
    result.pairs_compared = compared;
    result.pairs_emitted = emitted.iter().map(|(_, p)| p.len() as u64).sum();
    Ok(CorrelationRun { result, emitted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strategy: Strategy, n: usize, workers: usize) -> CorrelationConfig {
        let mut c = CorrelationConfig::new(strategy, n, workers, 11);
        c.eval_ticks = 4;
        c.generator.duration_ms = (c.window_ticks + c.eval_ticks) as u64 * c.tick_ms - 1;
        c
    }

    #[test]
    fn naive_with_workers_is_a_config_error() {
        assert!(matches!(run_correlation(&cfg(Strategy::Naive, 10, 2)), Err(SdeError::Config(_))));
    }

    #[test]
    fn strategies_agree_on_small_input() {
        let base = run_correlation(&cfg(Strategy::Naive, 30, 1)).unwrap();
        assert_eq!(base.emitted.len(), 5);
        assert_eq!(base.result.pairs_compared, 5 * 30 * 29 / 2);
        for (s, w) in [(Strategy::ParallelOnly, 2), (Strategy::SynopsisOnly, 1), (Strategy::SynopsisPlusParallel, 2)] {
            let run = run_correlation(&cfg(s, 30, w)).unwrap();
            assert_eq!(run.emitted, base.emitted, "{s}");
        }
    }

    #[test]
    fn pair_counts_are_reproducible() {
        let a = run_correlation(&cfg(Strategy::SynopsisOnly, 20, 1)).unwrap();
        let b = run_correlation(&cfg(Strategy::SynopsisOnly, 20, 1)).unwrap();
        assert_eq!(a.result.pairs_compared, b.result.pairs_compared);
        assert_eq!(a.emitted, b.emitted);
    }
}
