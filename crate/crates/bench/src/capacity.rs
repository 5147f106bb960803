//! SDEaaS versus one dedicated job per synopsis.
//!
//! A `JobCluster` models a deployment without the service: each synopsis is
//! its own job holding one of `slot_budget` task slots, reading its own copy
//! of the source and keeping a private state. The SDEaaS side builds every
//! synopsis inside one engine that reads the source once. Both sides consume
//! the raw NDJSON lines of the data channel, so every job parses every tuple.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use sde_core::model::WindowSpec;
use sde_core::protocol::Request;
use sde_core::{
    Engine, EngineConfig, FieldMap, Params, Result, Scope, SdeError, SketchState, StreamRecord, SynopsisKind,
    SynopsisSpec,
};
use serde::{Deserialize, Serialize};

use crate::generator::{generate, stream_id, GeneratorConfig};

pub const DEFAULT_SLOT_BUDGET: usize = 40;

pub fn cm_params(seed: u64) -> Params {
    Params::new().with("epsilon", 0.01).with("delta", 0.01).with("seed", seed)
}

/// CountMin on one stream keyed by the volume field.
pub fn single_stream_cm(stream: &str, dataset: &str) -> SynopsisSpec {
    SynopsisSpec::new(
        format!("cm-{stream}"),
        SynopsisKind::CountMin,
        dataset,
        Scope::SingleStream(stream.to_string()),
        cm_params(1),
    )
    .with_key_field(1)
}

/// One CountMin per stream of the source, keyed by the volume field.
pub fn per_stream_cm(id: &str, dataset: &str, parallelism: u32) -> SynopsisSpec {
    SynopsisSpec::new(id, SynopsisKind::CountMin, dataset, Scope::PerStream, cm_params(1))
        .with_key_field(1)
        .with_parallelism(parallelism)
        .with_window(WindowSpec::none())
}

pub struct JobCluster {
    slot_budget: usize,
    jobs: Vec<SynopsisSpec>,
}

pub struct JobsRun {
    pub states: Vec<(String, SketchState)>,
    pub wall: Duration,
    /// Source tuples read, counted once however many jobs read them.
    pub tuples: u64,
}

impl JobCluster {
    pub fn new(slot_budget: usize) -> JobCluster {
        JobCluster {
            slot_budget,
            jobs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Takes a slot for a new job, or refuses once the budget is spent.
    pub fn submit(&mut self, spec: SynopsisSpec) -> Result<usize> {
        if self.jobs.len() >= self.slot_budget {
            return Err(SdeError::Config(format!(
                "all {} task slots are taken; synopsis #{} refused",
                self.slot_budget,
                self.jobs.len() + 1
            )));
        }
        SketchState::new(spec.kind.clone(), spec.params.clone())?;
        self.jobs.push(spec);
        Ok(self.jobs.len())
    }

    /// Runs every job on its own thread over the whole source.
    pub fn run(&self, source: Arc<Vec<String>>) -> Result<JobsRun> {
        let started = Instant::now();
        let handles: Vec<_> = self
            .jobs
            .iter()
            .cloned()
            .map(|spec| {
                let source = source.clone();
                thread::spawn(move || -> Result<(String, SketchState)> {
                    let mut state = SketchState::new(spec.kind.clone(), spec.params.clone())?;
                    let fields = FieldMap::new(spec.key_field, spec.value_fields.clone());
                    for line in source.iter() {
                        let rec: StreamRecord =
                            serde_json::from_str(line).map_err(|e| SdeError::Parse { offset: e.column(), message: e.to_string() })?;
                        if rec.dataset_id != spec.dataset_id {
                            continue;
                        }
                        if let Scope::SingleStream(s) = &spec.scope {
                            if *s != rec.stream_id {
                                continue;
                            }
                        }
                        state.add_record(&rec, &fields)?;
                    }
                    Ok((spec.synopsis_id, state))
                })
            })
            .collect();
        let mut states = Vec::with_capacity(handles.len());
        for h in handles {
            states.push(h.join().map_err(|_| SdeError::Config("job panicked".into()))??);
        }
        Ok(JobsRun {
            states,
            wall: started.elapsed(),
            tuples: source.len() as u64,
        })
    }
}

/// Builds `specs` in `engine`, feeds the source once and waits until absorbed.
pub fn run_sdeaas(engine: &Engine, specs: &[SynopsisSpec], source: &[String]) -> Result<Duration> {
    let started = Instant::now();
    for s in specs {
        let r = engine.handle(Request::build(format!("build-{}", s.synopsis_id), s.clone()));
        if let Some(e) = r.error {
            return Err(SdeError::Config(format!("build of {} failed: {}", s.synopsis_id, e.message)));
        }
    }
    for line in source {
        engine.ingest_line(line)?;
    }
    engine.flush();
    Ok(started.elapsed())
}

/// Data-channel lines of a record sequence.
pub fn lines(recs: impl IntoIterator<Item = StreamRecord>) -> Vec<String> {
    recs.into_iter()
        .map(|r| serde_json::to_string(&r).expect("records serialize"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub synopses: usize,
    pub tuples: u64,
    pub sdeaas_throughput: f64,
    /// `None` where the job cluster refused to run that many synopses.
    pub jobs_throughput: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    pub counts: Vec<usize>,
    pub slot_budget: usize,
    pub workers: usize,
    pub generator: GeneratorConfig,
}

impl CapacityConfig {
    pub fn new(max_synopses: usize, workers: usize, seed: u64) -> CapacityConfig {
        let counts = [1, 10, 20, 40, 100, 500, 1000]
            .into_iter()
            .filter(|n| *n <= max_synopses)
            .collect();
        CapacityConfig {
            counts,
            slot_budget: DEFAULT_SLOT_BUDGET,
            workers,
            generator: GeneratorConfig {
                n_streams: max_synopses.max(1),
                duration_ms: 20_000,
                level1_rate: 0.5,
                seed,
                ..Default::default()
            },
        }
    }
}

/// One row per synopsis count: n single-stream CountMins on streams 0..n.
pub fn run_capacity(cfg: &CapacityConfig) -> Result<Vec<CapacityRow>> {
    let source = Arc::new(lines(generate(cfg.generator.clone())?));
    let dataset = cfg.generator.dataset.as_str();
    let mut rows = Vec::new();
    for &n in &cfg.counts {
        if n > cfg.generator.n_streams {
            return Err(SdeError::Config(format!("{n} synopses need {n} streams")));
        }
        let specs: Vec<SynopsisSpec> = (0..n).map(|i| single_stream_cm(&stream_id(i), dataset)).collect();
        let engine = Engine::start(EngineConfig::default().with_site("capacity").with_workers(cfg.workers));
        let wall = run_sdeaas(&engine, &specs, &source)?;
        drop(engine);
        let mut cluster = JobCluster::new(cfg.slot_budget);
        let admitted = specs.into_iter().try_for_each(|s| cluster.submit(s).map(|_| ()));
        let jobs_throughput = match admitted {
            Ok(()) => {
                let run = cluster.run(source.clone())?;
                Some(run.tuples as f64 / run.wall.as_secs_f64().max(1e-9))
            }
            Err(_) => None,
        };
        rows.push(CapacityRow {
            synopses: n,
            tuples: source.len() as u64,
            sdeaas_throughput: source.len() as f64 / wall.as_secs_f64().max(1e-9),
            jobs_throughput,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sde_core::{Query, Scalar};

    fn recs() -> Vec<StreamRecord> {
        (0..300u64)
            .map(|t| {
                StreamRecord::new("d", stream_id((t % 3) as usize), t, vec![Scalar::Num(100.0), Scalar::Num((t % 7) as f64)])
            })
            .collect()
    }

    #[test]
    fn slot_budget_refuses_the_next_job() {
        let mut c = JobCluster::new(40);
        for i in 0..40 {
            assert_eq!(c.submit(single_stream_cm(&stream_id(i), "d")).unwrap(), i + 1);
        }
        let err = c.submit(single_stream_cm("S0040", "d")).unwrap_err();
        assert!(err.to_string().contains("#41"), "{err}");
        assert_eq!(c.len(), 40);
    }

    #[test]
    fn jobs_and_engine_agree() {
        let src = Arc::new(lines(recs()));
        let mut c = JobCluster::new(3);
        let specs: Vec<SynopsisSpec> = (0..3).map(|i| single_stream_cm(&stream_id(i), "d")).collect();
        for s in &specs {
            c.submit(s.clone()).unwrap();
        }
        let run = c.run(src.clone()).unwrap();
        let engine = Engine::start(EngineConfig::default().with_workers(2));
        run_sdeaas(&engine, &specs, &src).unwrap();
        for (id, state) in &run.states {
            let q = Query::Frequency { item: "3".into() };
            assert_eq!(engine.query(id, q.clone()).unwrap(), state.estimate(&q).unwrap());
        }
    }

    #[test]
    fn table_marks_refusals() {
        let mut cfg = CapacityConfig::new(50, 1, 3);
        cfg.counts = vec![10, 50];
        cfg.generator.duration_ms = 4_000;
        let rows = run_capacity(&cfg).unwrap();
        assert!(rows[0].jobs_throughput.is_some());
        assert!(rows[1].jobs_throughput.is_none());
        assert!(rows.iter().all(|r| r.sdeaas_throughput > 0.0));
    }
}
