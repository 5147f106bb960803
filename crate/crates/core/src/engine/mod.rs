//! The always-running engine.
//!
//! Two paths meet here. The request path (`handle`) builds, stops and queries
//! synopses and only ever talks to shards through their control mailboxes.
//! The data path (`ingest`) routes each record to the interested shards'
//! bounded data mailboxes and blocks when they are full. A fixed pool of
//! worker threads runs the shards.

mod shard;
mod window;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};

use crate::error::{Result, SdeError};
use crate::hash::stable_hash;
use crate::model::{Partitioning, Scope, StreamRecord, SynopsisKind, SynopsisSpec, WindowMode};
use crate::protocol::{
    parse_request_detailed, EngineCounters, Request, Response, StatusEntry, StatusReport, Verb,
};
use crate::synopses::{
    EstimateValue, FieldMap, PluginFactory, PluginRegistry, Query, SketchState,
};

use shard::{
    close_lane_loop, worker_loop, CtlMsg, DataMsg, Job, LaneMsg, OutputHub, ShardCell, WindowPartial,
};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub site_id: String,
    pub workers: usize,
    /// Data messages buffered per shard before ingestion blocks.
    pub mailbox_capacity: usize,
    /// Longest a query waits for its shards.
    pub query_timeout: Duration,
    pub plugins: PluginRegistry,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            site_id: "local".into(),
            workers: 4,
            mailbox_capacity: 1024,
            query_timeout: Duration::from_secs(30),
            plugins: {
                let reg = PluginRegistry::new();
                crate::synopses::stock::register_stock(&reg);
                reg
            },
        }
    }
}

impl EngineConfig {
    pub fn with_site(mut self, site: &str) -> Self {
        self.site_id = site.to_string();
        self
    }

    pub fn with_workers(mut self, w: usize) -> Self {
        self.workers = w;
        self
    }

    pub fn with_mailbox(mut self, cap: usize) -> Self {
        self.mailbox_capacity = cap;
        self
    }
}

/// Where an estimate goes once produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    /// Single-shard local answer, straight to the output channel.
    Output,
    /// Another site synthesizes the answer; ship state over the union channel.
    Union { site: String },
    /// Partials are merged here: local shards, or this site is responsible.
    LocalMerge,
}

pub fn splitter_route(spec: &SynopsisSpec, local_site: &str) -> Route {
    match &spec.federation {
        Some(f) if f.responsible_site != local_site => Route::Union {
            site: f.responsible_site.clone(),
        },
        Some(_) => Route::LocalMerge,
        None if spec.shard_count() > 1 => Route::LocalMerge,
        None => Route::Output,
    }
}

/// Immutable description of a live synopsis plus counters shared by its shards.
pub(crate) struct SynopsisInfo {
    pub spec: SynopsisSpec,
    pub build_request_id: String,
    pub template: SketchState,
    pub fields: FieldMap,
    pub stopped: AtomicBool,
    pub emit_seq: AtomicU64,
    pub current_pane: AtomicU64,
    pub raw_bytes: AtomicU64,
    pub late: AtomicU64,
}

#[derive(Default)]
struct RouteState {
    watermark: Option<u64>,
    seq: u64,
    last_pane: Option<u64>,
    rr: u64,
}

struct Entry {
    info: Arc<SynopsisInfo>,
    shards: Vec<Arc<ShardCell>>,
    route: Mutex<RouteState>,
}

#[derive(Default)]
struct Registry {
    by_id: HashMap<String, Arc<Entry>>,
    /// Copy-on-write so ingestion never holds the lock while blocking.
    by_dataset: HashMap<String, Arc<Vec<Arc<Entry>>>>,
}

#[derive(Default)]
struct Counters {
    records_in: AtomicU64,
    records_unrouted: AtomicU64,
    records_late: AtomicU64,
    requests: AtomicU64,
    malformed: AtomicU64,
    unknown_fields: AtomicU64,
    emissions: AtomicU64,
    responses: AtomicU64,
}

/// State shared with worker threads.
pub(crate) struct Ctx {
    site_id: String,
    run_queues: Vec<Sender<Job>>,
    close_tx: Sender<LaneMsg>,
    hub: OutputHub,
    counters: Counters,
}

impl Ctx {
    pub fn schedule(&self, cell: &Arc<ShardCell>) {
        if cell.try_schedule() {
            let _ = self.run_queues[cell.worker].send(Job::Run(cell.clone()));
        }
    }

    pub fn close_lane(&self, p: WindowPartial) {
        let _ = self.close_tx.send(LaneMsg::Partial(p));
    }

    fn next_response_id(&self) -> String {
        let n = self.counters.responses.fetch_add(1, Ordering::Relaxed);
        format!("{}-{n}", self.site_id)
    }

    /// Continuous emission for `info`.
    pub fn emit(&self, info: &SynopsisInfo, value: Result<EstimateValue>) {
        let seq = info.emit_seq.fetch_add(1, Ordering::SeqCst);
        let id = self.next_response_id();
        let mut r = match value {
            Ok(v) => Response::ok(id, &info.build_request_id, &self.site_id).with_value(v),
            Err(e) => Response::error(id, &info.build_request_id, &self.site_id, &e),
        }
        .with_synopsis(&info.spec.synopsis_id, &info.spec.params);
        r.seq = Some(seq);
        self.counters.emissions.fetch_add(1, Ordering::Relaxed);
        self.hub.publish(r);
    }
}

struct Inner {
    ctx: Arc<Ctx>,
    config: EngineConfig,
    registry: RwLock<Registry>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Drop for Inner {
    fn drop(&mut self) {
        for q in &self.ctx.run_queues {
            let _ = q.send(Job::Exit);
        }
        let _ = self.ctx.close_tx.send(LaneMsg::Exit);
        for h in self.workers.lock().map(|mut w| std::mem::take(&mut *w)).unwrap_or_default() {
            let _ = h.join();
        }
    }
}

/// Cloneable handle to a running engine.
#[derive(Clone)]
pub struct Engine {
    inner: Arc<Inner>,
}

impl Engine {
    pub fn start(config: EngineConfig) -> Engine {
        let w = config.workers.max(1);
        let (close_tx, close_rx) = unbounded();
        let mut queues = Vec::with_capacity(w);
        let mut receivers = Vec::with_capacity(w);
        for _ in 0..w {
            let (tx, rx) = unbounded();
            queues.push(tx);
            receivers.push(rx);
        }
        let ctx = Arc::new(Ctx {
            site_id: config.site_id.clone(),
            run_queues: queues,
            close_tx,
            hub: OutputHub::default(),
            counters: Counters::default(),
        });
        let mut handles = Vec::with_capacity(w);
        for (i, rx) in receivers.into_iter().enumerate() {
            let c = ctx.clone();
            handles.push(
                std::thread::Builder::new()
                    .name(format!("sde-worker-{i}"))
                    .spawn(move || worker_loop(rx, c))
                    .expect("spawn worker"),
            );
        }
        let lane_ctx = ctx.clone();
        handles.push(
            std::thread::Builder::new()
                .name("sde-close-lane".into())
                .spawn(move || close_lane_loop(close_rx, lane_ctx))
                .expect("spawn close lane"),
        );
        Engine {
            inner: Arc::new(Inner {
                ctx,
                config: EngineConfig {
                    workers: w,
                    ..config
                },
                registry: RwLock::new(Registry::default()),
                workers: Mutex::new(handles),
            }),
        }
    }

    pub fn site_id(&self) -> &str {
        &self.inner.config.site_id
    }

    pub fn plugins(&self) -> &PluginRegistry {
        &self.inner.config.plugins
    }

    /// Makes a new kind available to Build and Load without a restart.
    pub fn register_plugin(&self, name: &str, factory: Arc<dyn PluginFactory>) -> Result<()> {
        self.inner.config.plugins.register(name, factory)
    }

    /// Stream of continuous emissions and forwarded answers.
    pub fn subscribe(&self) -> Receiver<Response> {
        self.inner.ctx.hub.subscribe()
    }

    pub fn publish(&self, r: Response) {
        self.inner.ctx.hub.publish(r);
    }

    pub fn next_response_id(&self) -> String {
        self.inner.ctx.next_response_id()
    }

    // ---- request path ----

    /// Parses and executes one request line. Never panics on bad input.
    pub fn handle_line(&self, line: &str) -> Response {
        self.inner.ctx.counters.requests.fetch_add(1, Ordering::Relaxed);
        match parse_request_detailed(line) {
            Ok(p) => {
                if !p.unknown_fields.is_empty() {
                    self.inner
                        .ctx
                        .counters
                        .unknown_fields
                        .fetch_add(p.unknown_fields.len() as u64, Ordering::Relaxed);
                }
                self.execute(p.request)
            }
            Err(e) => {
                self.inner.ctx.counters.malformed.fetch_add(1, Ordering::Relaxed);
                Response::error(self.next_response_id(), &request_id_hint(line), self.site_id(), &e)
            }
        }
    }

    pub fn handle(&self, req: Request) -> Response {
        self.inner.ctx.counters.requests.fetch_add(1, Ordering::Relaxed);
        self.execute(req)
    }

    fn execute(&self, req: Request) -> Response {
        let site = self.site_id().to_string();
        let id = self.next_response_id();
        let result = match req.verb {
            Verb::Build | Verb::Load => match req.spec.clone() {
                Some(spec) => self
                    .build(&req.request_id, spec, req.verb == Verb::Load)
                    .map(|e| {
                        let mut r = Response::ok(id.clone(), &req.request_id, &site)
                            .with_synopsis(&e.synopsis_id, &e.param);
                        r.status_report = Some(StatusReport {
                            synopses: vec![e],
                            ..self.report_header()
                        });
                        r
                    }),
                None => Err(SdeError::schema("synopsisID", "Build needs a synopsis description")),
            },
            Verb::Stop => {
                let target = req.target.clone().unwrap_or_default();
                self.stop(&target).map(|params| {
                    Response::ok(id.clone(), &req.request_id, &site).with_synopsis(&target, &params)
                })
            }
            Verb::AdHocQuery => self.adhoc(&req).map(|(params, v)| {
                Response::ok(id.clone(), &req.request_id, &site)
                    .with_synopsis(req.target.as_deref().unwrap_or_default(), &params)
                    .with_value(v)
            }),
            Verb::Status => {
                let mut r = Response::ok(id.clone(), &req.request_id, &site);
                r.status_report = Some(self.status());
                Ok(r)
            }
        };
        result.unwrap_or_else(|e| {
            let mut r = Response::error(id, &req.request_id, &site, &e);
            r.synopsis_id = req.target.clone();
            r
        })
    }

    pub fn build(&self, request_id: &str, mut spec: SynopsisSpec, load: bool) -> Result<StatusEntry> {
        spec.validate()?;
        if load && !matches!(spec.kind, SynopsisKind::Plugin(_)) {
            return Err(SdeError::schema("kind", "Load activates plugin kinds"));
        }
        if let SynopsisKind::Plugin(name) = &spec.kind {
            if self.plugins().get(name).is_none() {
                return Err(SdeError::UnknownKind(name.clone()));
            }
        }
        inject_window_size(&mut spec)?;
        let template = SketchState::with_plugins(spec.kind.clone(), spec.params.clone(), self.plugins())?;
        if let Some(q) = &spec.continuous_query {
            if !matches!(q, Query::InnerProduct { .. }) {
                template.estimate(q)?;
            }
        }
        let fields = FieldMap::new(spec.key_field, spec.value_fields.clone());
        let info = Arc::new(SynopsisInfo {
            spec,
            build_request_id: request_id.to_string(),
            template,
            fields,
            stopped: AtomicBool::new(false),
            emit_seq: AtomicU64::new(0),
            current_pane: AtomicU64::new(0),
            raw_bytes: AtomicU64::new(0),
            late: AtomicU64::new(0),
        });
        let workers = self.inner.config.workers;
        let base = stable_hash(&info.spec.synopsis_id) as usize;
        let shards = (0..info.spec.shard_count())
            .map(|s| {
                Arc::new(ShardCell::new(
                    info.clone(),
                    s,
                    (base.wrapping_add(s as usize)) % workers,
                    self.inner.config.mailbox_capacity,
                ))
            })
            .collect();
        let entry = Arc::new(Entry {
            info: info.clone(),
            shards,
            route: Mutex::new(RouteState::default()),
        });
        {
            let mut reg = self.inner.registry.write().expect("registry poisoned");
            let id = &info.spec.synopsis_id;
            if reg.by_id.contains_key(id) {
                return Err(SdeError::DuplicateId(id.clone()));
            }
            reg.by_id.insert(id.clone(), entry.clone());
            let slot = reg.by_dataset.entry(info.spec.dataset_id.clone()).or_default();
            let mut v = (**slot).clone();
            v.push(entry.clone());
            *slot = Arc::new(v);
        }
        Ok(self.entry_status(&entry))
    }

    /// Removes the routing entry, then tells every shard to drop its state.
    /// Returns the stopped synopsis' parameters.
    pub fn stop(&self, id: &str) -> Result<crate::model::Params> {
        let entry = {
            let mut reg = self.inner.registry.write().expect("registry poisoned");
            let entry = reg
                .by_id
                .remove(id)
                .ok_or_else(|| SdeError::UnknownSynopsis(id.to_string()))?;
            let ds = &entry.info.spec.dataset_id;
            if let Some(slot) = reg.by_dataset.get_mut(ds) {
                let v: Vec<Arc<Entry>> =
                    slot.iter().filter(|e| !Arc::ptr_eq(e, &entry)).cloned().collect();
                if v.is_empty() {
                    reg.by_dataset.remove(ds);
                } else {
                    *slot = Arc::new(v);
                }
            }
            entry
        };
        entry.info.stopped.store(true, Ordering::SeqCst);
        for cell in &entry.shards {
            cell.send_ctl(CtlMsg::Stop, &self.inner.ctx);
        }
        Ok(entry.info.spec.params.clone())
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>> {
        self.inner
            .registry
            .read()
            .expect("registry poisoned")
            .by_id
            .get(id)
            .cloned()
            .ok_or_else(|| SdeError::UnknownSynopsis(id.to_string()))
    }

    pub fn spec(&self, id: &str) -> Result<SynopsisSpec> {
        Ok(self.entry(id)?.info.spec.clone())
    }

    /// Consistent state of synopsis `id`: one shard for single-stream scope,
    /// one stream's state for per-stream scope (all streams merged if
    /// `stream` is absent), and all shards merged for whole-source scope.
    /// Fails with "unknown synopsis" rather than merging a partial set.
    pub fn snapshot(&self, id: &str, stream: Option<&str>) -> Result<SketchState> {
        let entry = self.entry(id)?;
        self.snapshot_entry(&entry, stream)
    }

    fn snapshot_entry(&self, entry: &Entry, stream: Option<&str>) -> Result<SketchState> {
        let spec = &entry.info.spec;
        let cells: Vec<&Arc<ShardCell>> = match (&spec.scope, stream) {
            (Scope::PerStream, Some(s)) => vec![&entry.shards[spec.shard_for_stream(s) as usize]],
            _ => entry.shards.iter().collect(),
        };
        let (tx, rx) = bounded(cells.len());
        for c in &cells {
            c.request_snapshot(stream.map(str::to_string), tx.clone(), &self.inner.ctx);
        }
        drop(tx);
        let deadline = std::time::Instant::now() + self.inner.config.query_timeout;
        let mut parts = Vec::with_capacity(cells.len());
        for _ in 0..cells.len() {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match rx.recv_timeout(left) {
                Ok(r) => parts.push(r?),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(SdeError::Protocol(format!(
                        "query on `{}` timed out after {:?}",
                        spec.synopsis_id, self.inner.config.query_timeout
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => return Err(SdeError::Shutdown),
            }
        }
        if parts.len() == 1 {
            return Ok(parts.pop().expect("one part"));
        }
        // Deterministic merge order regardless of reply order.
        parts.sort_by_key(crate::codec::encode_state);
        let mut out = entry.info.template.clone();
        for p in &parts {
            out.merge(p)?;
        }
        Ok(out)
    }

    fn adhoc(&self, req: &Request) -> Result<(crate::model::Params, EstimateValue)> {
        let id = req
            .target
            .as_deref()
            .ok_or_else(|| SdeError::schema("synopsisID", "missing synopsisID"))?;
        let q = req
            .query
            .as_ref()
            .ok_or_else(|| SdeError::schema("query", "AdHocQuery needs a query"))?;
        let entry = self.entry(id)?;
        let params = entry.info.spec.params.clone();
        // Reject impossible queries before touching any shard.
        if !matches!(q, Query::InnerProduct { .. }) {
            entry.info.template.estimate(q)?;
        }
        let state = self.snapshot_entry(&entry, req.stream.as_deref())?;
        let value = match q {
            Query::InnerProduct { with } => {
                let other = self.snapshot(with, req.stream.as_deref())?;
                EstimateValue::Scalar(state.inner_product(&other)?)
            }
            q => state.estimate(q)?,
        };
        Ok((params, value))
    }

    pub fn query(&self, id: &str, q: Query) -> Result<EstimateValue> {
        self.adhoc(&Request::query("", id, q)).map(|(_, v)| v)
    }

    pub fn query_stream(&self, id: &str, stream: &str, q: Query) -> Result<EstimateValue> {
        self.adhoc(&Request::query("", id, q).with_stream(stream)).map(|(_, v)| v)
    }

    fn report_header(&self) -> StatusReport {
        let c = &self.inner.ctx.counters;
        StatusReport {
            site_id: self.site_id().to_string(),
            workers: self.inner.config.workers,
            plugins: self.plugins().names(),
            synopses: Vec::new(),
            counters: EngineCounters {
                records_in: c.records_in.load(Ordering::Relaxed),
                records_unrouted: c.records_unrouted.load(Ordering::Relaxed),
                records_late: c.records_late.load(Ordering::Relaxed),
                requests: c.requests.load(Ordering::Relaxed),
                malformed_requests: c.malformed.load(Ordering::Relaxed),
                unknown_fields: c.unknown_fields.load(Ordering::Relaxed),
                emissions: c.emissions.load(Ordering::Relaxed),
            },
        }
    }

    /// Live registry snapshot. Reads counters only; never waits on shards.
    pub fn status(&self) -> StatusReport {
        let mut entries: Vec<Arc<Entry>> = self
            .inner
            .registry
            .read()
            .expect("registry poisoned")
            .by_id
            .values()
            .cloned()
            .collect();
        entries.sort_by(|a, b| a.info.spec.synopsis_id.cmp(&b.info.spec.synopsis_id));
        StatusReport {
            synopses: entries.iter().map(|e| self.entry_status(e)).collect(),
            ..self.report_header()
        }
    }

    fn entry_status(&self, e: &Entry) -> StatusEntry {
        let spec = &e.info.spec;
        let shard_items: Vec<u64> = e.shards.iter().map(|c| c.items.load(Ordering::Relaxed)).collect();
        StatusEntry {
            synopsis_id: spec.synopsis_id.clone(),
            kind: spec.kind.clone(),
            dataset_id: spec.dataset_id.clone(),
            param: spec.params.clone(),
            scope: spec.scope.clone(),
            parallelism: spec.parallelism,
            partitioning: spec.partitioning,
            window: spec.window.clone(),
            continuous: spec.continuous,
            federated: spec.federation.is_some(),
            responsible_site: spec.federation.as_ref().map(|f| f.responsible_site.clone()),
            items_seen: shard_items.iter().sum(),
            shards: e.shards.len() as u32,
            states: e.shards.iter().map(|c| c.states.load(Ordering::Relaxed)).sum(),
            shard_items,
            rejected: e.shards.iter().map(|c| c.rejected.load(Ordering::Relaxed)).sum(),
            late: e.info.late.load(Ordering::Relaxed)
                + e.shards.iter().map(|c| c.late.load(Ordering::Relaxed)).sum::<u64>(),
        }
    }

    /// Data messages waiting in synopsis `id`'s mailboxes.
    pub fn backlog(&self, id: &str) -> Result<usize> {
        Ok(self.entry(id)?.shards.iter().map(|c| c.backlog()).sum())
    }

    /// Raw record bytes routed to `id` since the previous call.
    pub fn take_raw_bytes(&self, id: &str) -> Result<u64> {
        Ok(self.entry(id)?.info.raw_bytes.swap(0, Ordering::SeqCst))
    }

    // ---- data path ----

    pub fn ingest_line(&self, line: &str) -> Result<()> {
        let rec: StreamRecord = serde_json::from_str(line).map_err(|e| SdeError::Parse {
            offset: e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        self.ingest(rec)
    }

    /// Delivers a record to every interested shard. Blocks while a target
    /// mailbox is full.
    pub fn ingest(&self, rec: StreamRecord) -> Result<()> {
        rec.validate()?;
        let ctx = &self.inner.ctx;
        ctx.counters.records_in.fetch_add(1, Ordering::Relaxed);
        let routes = self
            .inner
            .registry
            .read()
            .expect("registry poisoned")
            .by_dataset
            .get(&rec.dataset_id)
            .cloned();
        let Some(routes) = routes else {
            ctx.counters.records_unrouted.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        };
        let rec = Arc::new(rec);
        let mut raw_len = None;
        let mut delivered = false;
        for entry in routes.iter() {
            delivered |= self.route(entry, &rec, &mut raw_len);
        }
        if !delivered {
            ctx.counters.records_unrouted.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    fn route(&self, entry: &Entry, rec: &Arc<StreamRecord>, raw_len: &mut Option<u64>) -> bool {
        let spec = &entry.info.spec;
        if let Scope::SingleStream(s) = &spec.scope {
            if *s != rec.stream_id {
                return false;
            }
        }
        if entry.info.stopped.load(Ordering::Relaxed) {
            return false;
        }
        let ctx = &self.inner.ctx;
        let mut st = entry.route.lock().expect("route lock poisoned");
        let window = &spec.window;
        if window.mode == WindowMode::TimeSliding {
            if let Some(w) = st.watermark {
                if rec.event_time + window.allowed_lateness < w {
                    entry.info.late.fetch_add(1, Ordering::Relaxed);
                    ctx.counters.records_late.fetch_add(1, Ordering::Relaxed);
                    return true;
                }
            }
            st.watermark = Some(st.watermark.unwrap_or(0).max(rec.event_time));
        }
        let seq = st.seq;
        st.seq += 1;
        let pane = match window.mode {
            WindowMode::TimeSliding => Some(rec.event_time / window.slide),
            WindowMode::CountSliding if spec.scope == Scope::WholeSource => Some(seq / window.slide),
            _ => None,
        };
        if let Some(p) = pane {
            entry.info.current_pane.fetch_max(p, Ordering::SeqCst);
            if spec.continuous && spec.scope == Scope::WholeSource {
                match st.last_pane {
                    Some(last) if p > last => {
                        for cell in &entry.shards {
                            cell.send_data(DataMsg::Close { pane: last }, ctx);
                        }
                        st.last_pane = Some(p);
                    }
                    None => st.last_pane = Some(p),
                    _ => {}
                }
            }
        }
        let shard = match (&spec.scope, spec.partitioning) {
            (Scope::SingleStream(_), _) => 0,
            (Scope::WholeSource, Partitioning::RoundRobin) => {
                let s = st.rr % spec.parallelism as u64;
                st.rr += 1;
                s as u32
            }
            _ => spec.shard_for_stream(&rec.stream_id),
        };
        entry.shards[shard as usize].send_data(
            DataMsg::Record {
                rec: rec.clone(),
                pane,
            },
            ctx,
        );
        drop(st);
        if spec.federation.is_some() {
            let n = *raw_len.get_or_insert_with(|| rec.encoded_len() as u64);
            entry.info.raw_bytes.fetch_add(n, Ordering::Relaxed);
        }
        true
    }

    /// Waits until every mailbox is empty and every shard is idle.
    pub fn flush(&self) {
        let entries: Vec<Arc<Entry>> = self
            .inner
            .registry
            .read()
            .expect("registry poisoned")
            .by_id
            .values()
            .cloned()
            .collect();
        for e in entries {
            // A snapshot with the current target waits for every enqueued message.
            for cell in &e.shards {
                let (tx, rx) = bounded(1);
                cell.request_snapshot(None, tx, &self.inner.ctx);
                let _ = rx.recv_timeout(self.inner.config.query_timeout);
            }
        }
    }
}

/// Exact-window kinds take their tuple window from a CountSliding spec.
fn inject_window_size(spec: &mut SynopsisSpec) -> Result<()> {
    if !spec.kind.exact_window() {
        return Ok(());
    }
    let Some(len) = spec.count_window() else { return Ok(()) };
    match spec.params.opt_u64("windowSize")? {
        Some(n) if n != len => Err(SdeError::param(
            "windowSize",
            format!("conflicts with window.length {len}"),
        )),
        Some(_) => Ok(()),
        None => {
            spec.params.0.insert("windowSize".into(), len.into());
            Ok(())
        }
    }
}

/// Best-effort request id from a line that failed validation.
fn request_id_hint(line: &str) -> String {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("request_id").and_then(|x| x.as_str()).map(str::to_string))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests;
