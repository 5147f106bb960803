//! Stream-mining variant of the workflow: k-means over per-tick feature points.
//!
//! Each joined tuple becomes a 2-d point near its sector's centre, offset by
//! its scaled log return and its standardized bid count. Naive and
//! ParallelOnly rerun k-means over every point seen so far; the synopsis
//! strategies keep a coreset in the engine and cluster only that.

use std::f64::consts::PI;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sde_core::protocol::Request;
use sde_core::synopses::{dist2, kmeans_cost};
use sde_core::synopses::WeightedPoint;
use sde_core::{
    Engine, EngineConfig, EstimateValue, Params, Query, Result, Scalar, Scope, SdeError, StreamRecord,
    SynopsisKind, SynopsisSpec,
};
use serde::{Deserialize, Serialize};

use crate::generator::{sector_of, stream_id, GeneratorConfig};
use crate::workflow::{JoinedTick, TickJoiner, TICK_MS};
use crate::{pool, Strategy, StrategyResult};

pub const POINTS: &str = "points";
const SYNOPSIS: &str = "clusters";
const SECTOR_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub strategy: Strategy,
    pub workers: usize,
    pub k: usize,
    pub bucket_size: usize,
    pub tick_ms: u64,
    pub ticks: usize,
    /// Re-cluster every this many ticks.
    pub eval_every: usize,
    pub lloyd_iters: usize,
    pub restarts: usize,
    pub generator: GeneratorConfig,
}

impl ClusteringConfig {
    pub fn new(strategy: Strategy, n_streams: usize, workers: usize, seed: u64) -> Self {
        let ticks = 30;
        ClusteringConfig {
            strategy,
            workers,
            k: 4,
            bucket_size: 10,
            tick_ms: TICK_MS,
            ticks,
            eval_every: 1,
            lloyd_iters: 20,
            restarts: 3,
            generator: GeneratorConfig {
                n_streams,
                duration_ms: ticks as u64 * TICK_MS - 1,
                level1_rate: 0.4,
                seed,
                ..Default::default()
            },
        }
    }

    fn validate(&self) -> Result<()> {
        self.strategy.check_workers(self.workers)?;
        if self.k == 0 || self.k > self.generator.n_streams {
            return Err(SdeError::Config(format!(
                "k = {} must lie in [1, n_streams = {}]",
                self.k, self.generator.n_streams
            )));
        }
        if self.bucket_size < self.k {
            return Err(SdeError::Config("bucket size must be at least k".into()));
        }
        if self.eval_every == 0 || self.restarts == 0 {
            return Err(SdeError::Config("eval_every and restarts must be positive".into()));
        }
        self.generator.validate()
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringRun {
    pub result: StrategyResult,
    pub centers: Vec<Vec<f64>>,
    pub points: Vec<WeightedPoint>,
    /// Largest coreset returned by the engine.
    pub max_coreset: usize,
}

pub fn sector_center(sector: usize, sectors: usize) -> [f64; 2] {
    let a = 2.0 * PI * sector as f64 / sectors as f64;
    [SECTOR_RADIUS * a.cos(), SECTOR_RADIUS * a.sin()]
}

/// Feature point of one joined tuple.
pub fn feature(t: &JoinedTick, cfg: &GeneratorConfig, tick_ms: u64) -> [f64; 2] {
    let c = sector_center(sector_of(t.stream, cfg.sectors), cfg.sectors);
    let secs = tick_ms as f64 / 1000.0;
    let vol = (cfg.sector_vol.powi(2) + cfg.idio_vol.powi(2)).sqrt() * secs.sqrt();
    let lambda = (cfg.bids_per_trade * cfg.level1_rate * secs).max(1e-9);
    [c[0] + t.ret / vol, c[1] + (t.bids as f64 - lambda) / lambda.sqrt()]
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    centers
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dist2(p, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
        .unwrap_or(0)
}

fn seed_centers(points: &[WeightedPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let w: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let first = WeightedIndex::new(&w).map(|d| d.sample(rng)).unwrap_or(0);
    let mut centers = vec![points[first].coords.clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(&p.coords, &centers[0])).collect();
    while centers.len() < k {
        let weights: Vec<f64> = points.iter().zip(&d2).map(|(p, d)| p.weight * d).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(d) => d.sample(rng),
            Err(_) => break,
        };
        let c = points[next].coords.clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(&p.coords, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd_step(points: &[WeightedPoint], centers: &[Vec<f64>], parallel: bool) -> Vec<Vec<f64>> {
    let dim = centers[0].len();
    let zero = || (vec![vec![0.0; dim]; centers.len()], vec![0.0; centers.len()]);
    let fold = |mut acc: (Vec<Vec<f64>>, Vec<f64>), p: &WeightedPoint| {
        let j = nearest(&p.coords, centers);
        for (s, x) in acc.0[j].iter_mut().zip(&p.coords) {
            *s += p.weight * x;
        }
        acc.1[j] += p.weight;
        acc
    };
    let combine = |mut a: (Vec<Vec<f64>>, Vec<f64>), b: (Vec<Vec<f64>>, Vec<f64>)| {
        for (x, y) in a.0.iter_mut().zip(&b.0) {
            for (s, t) in x.iter_mut().zip(y) {
                *s += t;
            }
        }
        for (s, t) in a.1.iter_mut().zip(&b.1) {
            *s += t;
        }
        a
    };
    let (sums, weights) = if parallel {
        points.par_iter().fold(zero, fold).reduce(zero, combine)
    } else {
        points.iter().fold(zero(), fold)
    };
    sums.into_iter()
        .zip(weights)
        .zip(centers)
        .map(|((s, w), old)| {
            if w > 0.0 {
                s.into_iter().map(|x| x / w).collect()
            } else {
                old.clone()
            }
        })
        .collect()
}

/// Weighted k-means++ followed by Lloyd iterations; best of `restarts`.
pub fn kmeans(points: &[WeightedPoint], k: usize, iters: usize, restarts: usize, seed: u64, parallel: bool) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers = seed_centers(points, k, &mut rng);
        for _ in 0..iters {
            let next = lloyd_step(points, &centers, parallel);
            let moved = next.iter().zip(&centers).any(|(a, b)| dist2(a, b) > 1e-18);
            centers = next;
            if !moved {
                break;
            }
        }
        let cost = if parallel {
            points.par_iter().map(|p| p.weight * dist2(&p.coords, &centers[nearest(&p.coords, &centers)])).sum()
        } else {
            kmeans_cost(points, &centers)
        };
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, centers));
        }
    }
    best.map(|(_, c)| c).unwrap_or_default()
}

fn coreset_spec(cfg: &ClusteringConfig) -> SynopsisSpec {
    SynopsisSpec::new(
        SYNOPSIS,
        SynopsisKind::CoreSetTree,
        POINTS,
        Scope::WholeSource,
        Params::new()
            .with("bucketSize", cfg.bucket_size as u64)
            .with("dimensions", 2u64)
            .with("seed", cfg.generator.seed),
    )
    .with_parallelism(cfg.workers as u32)
    .with_value_fields(vec![0, 1])
}

pub fn run_clustering(cfg: &ClusteringConfig) -> Result<ClusteringRun> {
    cfg.validate()?;
    let recs = crate::correlation::records(&cfg.generator)?;
    run_on(cfg, &recs)
}

pub fn run_on(cfg: &ClusteringConfig, recs: &[StreamRecord]) -> Result<ClusteringRun> {
    cfg.validate()?;
    let n = cfg.generator.n_streams;
    let strategy = cfg.strategy;
    let parallel = matches!(strategy, Strategy::ParallelOnly | Strategy::SynopsisPlusParallel);
    let pool = pool(cfg.workers)?;
    let started = Instant::now();
    let engine = if strategy.uses_synopsis() {
        let e = Engine::start(EngineConfig::default().with_site("bench").with_workers(cfg.workers));
        if let Some(err) = e.handle(Request::build("clusters-build", coreset_spec(cfg))).error {
            return Err(SdeError::Config(format!("coreset build failed: {}", err.message)));
        }
        Some(e)
    } else {
        None
    };
    let mut joiner = TickJoiner::new(n, cfg.generator.start_ms, cfg.tick_ms);
    let mut points: Vec<WeightedPoint> = Vec::new();
    let mut centers = Vec::new();
    let mut evaluations = 0u64;
    let mut max_coreset = 0usize;
    let mut closed = Vec::new();

    let mut on_tick = |ticks: Vec<JoinedTick>, points: &mut Vec<WeightedPoint>| -> Result<()> {
        let Some(tick) = ticks.first().map(|t| t.tick) else {
            return Ok(());
        };
        for t in &ticks {
            let p = feature(t, &cfg.generator, cfg.tick_ms);
            match &engine {
                Some(e) => e.ingest(StreamRecord::new(
                    POINTS,
                    stream_id(t.stream),
                    t.tick * cfg.tick_ms,
                    vec![Scalar::Num(p[0]), Scalar::Num(p[1])],
                ))?,
                None => points.push(WeightedPoint { weight: 1.0, coords: p.to_vec() }),
            }
        }
        if !(tick as usize + 1).is_multiple_of(cfg.eval_every) {
            return Ok(());
        }
        let seed = cfg.generator.seed ^ tick;
        centers = match &engine {
            Some(e) => {
                let r = e.handle(Request::query(format!("cs-{tick}"), SYNOPSIS, Query::Coreset));
                let coreset = match (r.value, r.error) {
                    (Some(EstimateValue::Points(p)), _) => p,
                    (_, Some(err)) => return Err(SdeError::Config(format!("coreset query failed: {}", err.message))),
                    _ => Vec::new(),
                };
                max_coreset = max_coreset.max(coreset.len());
                kmeans(&coreset, cfg.k, cfg.lloyd_iters, cfg.restarts, seed, false)
            }
            None if parallel => pool.install(|| kmeans(points, cfg.k, cfg.lloyd_iters, cfg.restarts, seed, true)),
            None => kmeans(points, cfg.k, cfg.lloyd_iters, cfg.restarts, seed, false),
        };
        evaluations += 1;
        Ok(())
    };

    for r in recs {
        joiner.push(r, &mut closed);
        for t in closed.drain(..) {
            on_tick(t, &mut points)?;
        }
    }
    on_tick(joiner.close(), &mut points)?;
    let wall = started.elapsed();

    // Quality is measured outside the timed section.
    let all: Vec<WeightedPoint> = crate::workflow::join_all(recs, n, cfg.generator.start_ms, cfg.tick_ms)
        .iter()
        .flatten()
        .map(|t| WeightedPoint {
            weight: 1.0,
            coords: feature(t, &cfg.generator, cfg.tick_ms).to_vec(),
        })
        .collect();
    let reference = kmeans(&all, cfg.k, 50, 5, cfg.generator.seed, false);
    let mut result = StrategyResult::timed(strategy, n, cfg.workers, recs.len() as u64, wall);
    result.evaluations = evaluations;
    result.cost_ratio = Some(kmeans_cost(&all, &centers) / kmeans_cost(&all, &reference));
    Ok(ClusteringRun {
        result,
        centers,
        points: all,
        max_coreset,
    })
}
