//! Workload generator and scalability harness for the synopses data engine.

pub mod capacity;
pub mod clustering;
pub mod correlation;
pub mod generator;
pub mod report;
pub mod savings;
pub mod workflow;

use std::fmt;
use std::str::FromStr;

use sde_core::SdeError;
use serde::{Deserialize, Serialize};

pub use generator::{generate, Generator, GeneratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Naive,
    ParallelOnly,
    SynopsisOnly,
    SynopsisPlusParallel,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Naive,
        Strategy::ParallelOnly,
        Strategy::SynopsisOnly,
        Strategy::SynopsisPlusParallel,
    ];

    pub fn uses_synopsis(self) -> bool {
        matches!(self, Strategy::SynopsisOnly | Strategy::SynopsisPlusParallel)
    }

    /// Naive is sequential by definition.
    pub fn check_workers(self, workers: usize) -> sde_core::Result<()> {
        if workers == 0 {
            return Err(SdeError::Config("workers must be at least 1".into()));
        }
        if self == Strategy::Naive && workers > 1 {
            return Err(SdeError::Config(format!(
                "Naive runs sequentially; got {workers} workers"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Naive => "Naive",
            Strategy::ParallelOnly => "ParallelOnly",
            Strategy::SynopsisOnly => "SynopsisOnly",
            Strategy::SynopsisPlusParallel => "SynopsisPlusParallel",
        })
    }
}

impl FromStr for Strategy {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Ok(match k.as_str() {
            "naive" => Strategy::Naive,
            "parallelonly" | "parallel" => Strategy::ParallelOnly,
            "synopsisonly" | "synopsis" | "dft" | "coreset" => Strategy::SynopsisOnly,
            "synopsisplusparallel" | "synopsisparallel" | "both" => Strategy::SynopsisPlusParallel,
            _ => return Err(SdeError::Config(format!("unknown strategy `{s}`"))),
        })
    }
}

/// One measured run of a workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub streams: usize,
    pub workers: usize,
    pub tuples: u64,
    pub wall_ms: f64,
    /// Tuples per second.
    pub throughput: f64,
    pub evaluations: u64,
    pub pairs_compared: u64,
    pub pairs_emitted: u64,
    /// Clustering only: final cost on full data over the full k-means cost.
    pub cost_ratio: Option<f64>,
}

impl StrategyResult {
    pub(crate) fn timed(strategy: Strategy, streams: usize, workers: usize, tuples: u64, wall: std::time::Duration) -> Self {
        let secs = wall.as_secs_f64().max(1e-9);
        StrategyResult {
            strategy,
            streams,
            workers,
            tuples,
            wall_ms: secs * 1000.0,
            throughput: tuples as f64 / secs,
            evaluations: 0,
            pairs_compared: 0,
            pairs_emitted: 0,
            cost_ratio: None,
        }
    }
}

pub(crate) fn pool(workers: usize) -> sde_core::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SdeError::Config(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("synopsis+parallel".parse::<Strategy>().unwrap(), Strategy::SynopsisPlusParallel);
        assert!("fast".parse::<Strategy>().is_err());
    }

    #[test]
    fn naive_is_sequential() {
        assert!(Strategy::Naive.check_workers(1).is_ok());
        assert!(matches!(Strategy::Naive.check_workers(2), Err(SdeError::Config(_))));
        assert!(Strategy::ParallelOnly.check_workers(4).is_ok());
    }
}
