use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sde_bench::capacity::{run_capacity, CapacityConfig};
use sde_bench::clustering::{self, ClusteringConfig};
use sde_bench::correlation::{self, CorrelationConfig};
use sde_bench::report::write_csv;
use sde_bench::savings::{run_savings, SavingsConfig};
use sde_bench::Strategy;
use sde_core::channels::{bind, send_requests, serve_data, serve_output, serve_requests, serve_union, Handler};
use sde_core::federation::TcpTransport;
use sde_core::{format_request, CommLedger, Engine, EngineConfig, FederatedSite, Request, SiteConfig};

#[derive(Parser)]
#[command(name = "sde", version, about = "Synopses data engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an engine with its data, request, output and union channels.
    Serve(ServeArgs),
    /// Send every line of an NDJSON request file and print the responses.
    Request {
        file: PathBuf,
        #[arg(long, env = "SDE_REQUEST_ADDR", default_value = "127.0.0.1:9002")]
        addr: String,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
    /// Print the status report of a running engine.
    Status {
        #[arg(long, env = "SDE_REQUEST_ADDR", default_value = "127.0.0.1:9002")]
        addr: String,
    },
    /// Run a harness experiment and write its results as CSV.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, env = "SDE_DATA", default_value = ":9001")]
    data: String,
    #[arg(long, env = "SDE_REQUEST", default_value = ":9002")]
    request: String,
    #[arg(long, env = "SDE_OUTPUT", default_value = ":9003")]
    output: String,
    #[arg(long, env = "SDE_UNION", default_value = ":9004")]
    union: String,
    #[arg(long, env = "SDE_WORKERS", default_value_t = 4)]
    workers: usize,
    #[arg(long, env = "SDE_SITE_ID", default_value = "local")]
    site_id: String,
    /// `site_id address` per line.
    #[arg(long, env = "SDE_PEERS")]
    peers: Option<PathBuf>,
    #[arg(long, env = "SDE_MAILBOX", default_value_t = 1024)]
    mailbox: usize,
    /// Seconds the responsible site waits for federated parts.
    #[arg(long, env = "SDE_FEDERATION_TIMEOUT", default_value_t = 30)]
    federation_timeout: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Correlation,
    Clustering,
    Capacity,
    Federation,
}

#[derive(clap::Args)]
struct BenchArgs {
    experiment: Experiment,
    #[arg(long, env = "SDE_BENCH_STREAMS", default_value_t = 50)]
    streams: usize,
    #[arg(long, env = "SDE_BENCH_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Every strategy when absent. Naive and SynopsisOnly run with one worker.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, env = "SDE_BENCH_SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ticks evaluated after the window fills (correlation) or ticks run (clustering).
    #[arg(long)]
    ticks: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    #[arg(long, default_value_t = 8)]
    coefficients: usize,
    #[arg(long)]
    grid_coefficients: Option<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    bucket_size: usize,
    /// Each source record is replayed this many times.
    #[arg(long, default_value_t = 1)]
    clone: usize,
    /// Site counts for the federation experiment.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    sites: Vec<usize>,
    #[arg(long, default_value_t = 40)]
    slot_budget: usize,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Serve(a) => serve(a),
        Cmd::Request { file, addr, timeout_secs } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let lines: Vec<String> = text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
            print_responses(&addr, &lines, Duration::from_secs(timeout_secs))
        }
        Cmd::Status { addr } => {
            let line = format_request(&Request::status("cli-status"));
            print_responses(&addr, &[line], Duration::from_secs(10))
        }
        Cmd::Bench(a) => bench(a),
    }
}

fn print_responses(addr: &str, lines: &[String], timeout: Duration) -> Result<()> {
    let responses = send_requests(addr, lines, timeout)?;
    let mut out = io::stdout().lock();
    for r in responses {
        writeln!(out, "{}", sde_core::format_response(&r))?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = match &a.peers {
        Some(p) => SiteConfig::load(&a.site_id, p)?,
        None => SiteConfig::new(&a.site_id),
    };
    let engine = Arc::new(Engine::start(
        EngineConfig::default()
            .with_site(&a.site_id)
            .with_workers(a.workers)
            .with_mailbox(a.mailbox),
    ));
    let transport = Arc::new(TcpTransport::new(config.peers.clone()));
    let site = FederatedSite::start(
        engine.clone(),
        config,
        transport,
        Arc::new(CommLedger::new()),
        Duration::from_secs(a.federation_timeout),
    )?;
    let _data = serve_data(bind(&a.data)?, engine.clone())?;
    let _requests = serve_requests(bind(&a.request)?, Arc::new(site.clone()) as Arc<dyn Handler>)?;
    let _output = serve_output(bind(&a.output)?, engine.clone())?;
    let _union = serve_union(bind(&a.union)?, site.union_sender())?;
    log::info!(
        "site {} serving data {} requests {} output {} union {}",
        a.site_id,
        _data.local_addr(),
        _requests.local_addr(),
        _output.local_addr(),
        _union.local_addr()
    );
    loop {
        std::thread::park();
    }
}

fn strategies(a: &BenchArgs) -> Vec<Strategy> {
    match a.strategy {
        Some(s) => vec![s],
        None => Strategy::ALL.to_vec(),
    }
}

fn workers_for(s: Strategy, workers: usize) -> usize {
    if matches!(s, Strategy::Naive | Strategy::SynopsisOnly) {
        1
    } else {
        workers
    }
}

fn cloned(mut recs: Vec<sde_core::StreamRecord>, factor: usize) -> Vec<sde_core::StreamRecord> {
    if factor > 1 {
        recs = recs
            .into_iter()
            .flat_map(|r| std::iter::repeat_n(r, factor))
            .collect();
    }
    recs
}

fn emit<T: serde::Serialize>(out: &Option<PathBuf>, rows: &[T]) -> Result<()> {
    match out {
        Some(p) => {
            write_csv(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?, rows)?;
            log::info!("wrote {} rows to {}", rows.len(), p.display());
        }
        None => write_csv(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.clone == 0 {
        bail!("--clone must be at least 1");
    }
    match a.experiment {
        Experiment::Correlation => {
            let mut rows = Vec::new();
            for s in strategies(&a) {
                let mut cfg = CorrelationConfig::new(s, a.streams, workers_for(s, a.workers), a.seed);
                cfg.threshold = a.threshold;
                cfg.coefficients = a.coefficients;
                if let Some(g) = a.grid_coefficients {
                    cfg.grid_coefficients = g;
                }
                if let Some(t) = a.ticks {
                    cfg.eval_ticks = t;
                    cfg.generator.duration_ms = (cfg.window_ticks + t) as u64 * cfg.tick_ms - 1;
                }
                let recs = cloned(correlation::records(&cfg.generator)?, a.clone);
                let run = correlation::run_on(&cfg, &recs)?;
                log::info!("{s}: {:.0} tuples/s", run.result.throughput);
                rows.push(run.result);
            }
            emit(&a.out, &rows)
        }
        Experiment::Clustering => {
            let mut rows = Vec::new();
            for s in strategies(&a) {
                let mut cfg = ClusteringConfig::new(s, a.streams, workers_for(s, a.workers), a.seed);
                cfg.k = a.k;
                cfg.bucket_size = a.bucket_size;
                if let Some(t) = a.ticks {
                    cfg.ticks = t;
                    cfg.generator.duration_ms = t as u64 * cfg.tick_ms - 1;
                }
                let recs = cloned(correlation::records(&cfg.generator)?, a.clone);
                let run = clustering::run_on(&cfg, &recs)?;
                log::info!("{s}: {:.0} tuples/s", run.result.throughput);
                rows.push(run.result);
            }
            emit(&a.out, &rows)
        }
        Experiment::Capacity => {
            let mut cfg = CapacityConfig::new(a.streams, a.workers, a.seed);
            cfg.slot_budget = a.slot_budget;
            emit(&a.out, &run_capacity(&cfg)?)
        }
        Experiment::Federation => {
            let mut rows = Vec::new();
            for &n in &a.sites {
                let mut cfg = SavingsConfig::new(n, a.seed);
                cfg.generator.n_streams = a.streams;
                let row = run_savings(&cfg)?;
                log::info!("{n} sites: ratio {:.4}", row.ratio);
                rows.push(row);
            }
            emit(&a.out, &rows)
        }
    }
}
