//! Shards, their mailboxes and the worker pool that runs them.
//!
//! A shard owns the state of one partition of one synopsis. It has a bounded
//! data mailbox and an unbounded control mailbox. Whenever a message arrives
//! the shard is put on its worker's run queue (at most once, guarded by
//! `scheduled`); the worker drains control messages first and then a bounded
//! slice of data, so a slow shard delays others on the same worker by at most
//! one slice.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};

use crate::error::{Result, SdeError};
use crate::model::{Scope, StreamRecord, WindowMode};
use crate::protocol::Response;
use crate::synopses::{Query, SketchState};

use super::window::{Offer, Windowed};
use super::{Ctx, SynopsisInfo};

const SLICE_MESSAGES: usize = 512;
const SLICE_TIME: Duration = Duration::from_millis(2);

pub(crate) enum DataMsg {
    Record { rec: Arc<StreamRecord>, pane: Option<u64> },
    /// The window ending with `pane` closed; report it to the close lane.
    Close { pane: u64 },
}

pub(crate) enum CtlMsg {
    Snapshot {
        /// Data messages that must be applied before answering.
        target: u64,
        stream: Option<String>,
        reply: Sender<Result<SketchState>>,
    },
    Stop,
}

pub(crate) enum Job {
    Run(Arc<ShardCell>),
    Exit,
}

pub(crate) enum LaneMsg {
    Partial(WindowPartial),
    Exit,
}

pub(crate) struct WindowPartial {
    pub info: Arc<SynopsisInfo>,
    pub pane: u64,
    pub shard: u32,
    pub state: Result<SketchState>,
}

enum Body {
    Whole(Windowed),
    PerStream(HashMap<String, Windowed>),
}

struct Deferred {
    target: u64,
    stream: Option<String>,
    reply: Sender<Result<SketchState>>,
}

struct Inner {
    /// `None` once stopped.
    body: Option<Body>,
    deferred: Vec<Deferred>,
}

pub(crate) struct ShardCell {
    pub info: Arc<SynopsisInfo>,
    pub index: u32,
    pub worker: usize,
    data_tx: Sender<DataMsg>,
    data_rx: Receiver<DataMsg>,
    ctl_tx: Sender<CtlMsg>,
    ctl_rx: Receiver<CtlMsg>,
    scheduled: AtomicBool,
    enqueued: AtomicU64,
    processed: AtomicU64,
    pub items: AtomicU64,
    pub rejected: AtomicU64,
    pub late: AtomicU64,
    pub states: AtomicU64,
    inner: Mutex<Inner>,
}

impl ShardCell {
    pub fn new(info: Arc<SynopsisInfo>, index: u32, worker: usize, capacity: usize) -> ShardCell {
        let (data_tx, data_rx) = bounded(capacity.max(1));
        let (ctl_tx, ctl_rx) = unbounded();
        let body = match info.spec.scope {
            Scope::PerStream => Body::PerStream(HashMap::new()),
            _ => Body::Whole(Windowed::new(&info.template, &info.spec.window)),
        };
        let whole = matches!(body, Body::Whole(_));
        ShardCell {
            info,
            index,
            worker,
            data_tx,
            data_rx,
            ctl_tx,
            ctl_rx,
            scheduled: AtomicBool::new(false),
            enqueued: AtomicU64::new(0),
            processed: AtomicU64::new(0),
            items: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            late: AtomicU64::new(0),
            states: AtomicU64::new(whole as u64),
            inner: Mutex::new(Inner {
                body: Some(body),
                deferred: Vec::new(),
            }),
        }
    }

    /// Blocks while the mailbox is full.
    pub fn send_data(self: &Arc<Self>, msg: DataMsg, ctx: &Ctx) {
        if self.data_tx.send(msg).is_ok() {
            self.enqueued.fetch_add(1, Ordering::SeqCst);
            ctx.schedule(self);
        }
    }

    pub fn send_ctl(self: &Arc<Self>, msg: CtlMsg, ctx: &Ctx) {
        let _ = self.ctl_tx.send(msg);
        ctx.schedule(self);
    }

    /// Asks for a consistent copy of this shard's state after every data
    /// message enqueued so far has been applied.
    pub fn request_snapshot(
        self: &Arc<Self>,
        stream: Option<String>,
        reply: Sender<Result<SketchState>>,
        ctx: &Ctx,
    ) {
        let target = self.enqueued.load(Ordering::SeqCst);
        self.send_ctl(
            CtlMsg::Snapshot {
                target,
                stream,
                reply,
            },
            ctx,
        );
    }

    pub fn try_schedule(&self) -> bool {
        !self.scheduled.swap(true, Ordering::SeqCst)
    }

    fn has_work(&self) -> bool {
        !self.ctl_rx.is_empty() || !self.data_rx.is_empty()
    }

    pub fn backlog(&self) -> usize {
        self.data_rx.len()
    }

    /// One scheduling turn on a worker thread.
    pub fn run(self: &Arc<Self>, ctx: &Ctx) {
        {
            let mut inner = self.inner.lock().expect("shard lock poisoned");
            while let Ok(msg) = self.ctl_rx.try_recv() {
                self.control(&mut inner, msg);
            }
            let start = Instant::now();
            for _ in 0..SLICE_MESSAGES {
                let Ok(msg) = self.data_rx.try_recv() else { break };
                self.data(&mut inner, msg, ctx);
                self.processed.fetch_add(1, Ordering::SeqCst);
                if !inner.deferred.is_empty() {
                    self.release_deferred(&mut inner);
                }
                if start.elapsed() > SLICE_TIME {
                    break;
                }
            }
        }
        self.scheduled.store(false, Ordering::SeqCst);
        if self.has_work() {
            ctx.schedule(self);
        }
    }

    fn control(&self, inner: &mut Inner, msg: CtlMsg) {
        match msg {
            CtlMsg::Stop => {
                inner.body = None;
                for d in inner.deferred.drain(..) {
                    let _ = d.reply.send(Err(self.unknown()));
                }
                while self.data_rx.try_recv().is_ok() {
                    self.processed.fetch_add(1, Ordering::SeqCst);
                }
            }
            CtlMsg::Snapshot {
                target,
                stream,
                reply,
            } => {
                if self.processed.load(Ordering::SeqCst) >= target || inner.body.is_none() {
                    let _ = reply.send(self.snapshot(inner, stream.as_deref()));
                } else {
                    inner.deferred.push(Deferred {
                        target,
                        stream,
                        reply,
                    });
                }
            }
        }
    }

    fn release_deferred(&self, inner: &mut Inner) {
        let done = self.processed.load(Ordering::SeqCst);
        let (ready, waiting): (Vec<_>, Vec<_>) =
            inner.deferred.drain(..).partition(|d| d.target <= done);
        inner.deferred = waiting;
        for d in ready {
            let _ = d.reply.send(self.snapshot(inner, d.stream.as_deref()));
        }
    }

    fn unknown(&self) -> SdeError {
        SdeError::UnknownSynopsis(self.info.spec.synopsis_id.clone())
    }

    /// Pane a query should read up to: router-assigned panes are global,
    /// per-state count panes are each state's own.
    fn query_pane(&self) -> Option<u64> {
        let spec = &self.info.spec;
        match spec.window.mode {
            WindowMode::TimeSliding => Some(self.info.current_pane.load(Ordering::SeqCst)),
            WindowMode::CountSliding if spec.scope == Scope::WholeSource => {
                Some(self.info.current_pane.load(Ordering::SeqCst))
            }
            _ => None,
        }
    }

    fn snapshot(&self, inner: &Inner, stream: Option<&str>) -> Result<SketchState> {
        let template = &self.info.template;
        let upto = self.query_pane();
        match inner.body.as_ref().ok_or_else(|| self.unknown())? {
            Body::Whole(w) => w.snapshot(template, upto),
            Body::PerStream(map) => match stream {
                Some(s) => match map.get(s) {
                    Some(w) => w.snapshot(template, upto),
                    None => Ok(template.clone()),
                },
                None => {
                    let mut keys: Vec<&String> = map.keys().collect();
                    keys.sort();
                    let mut out = template.clone();
                    for k in keys {
                        out.merge(&map[k].snapshot(template, upto)?)?;
                    }
                    Ok(out)
                }
            },
        }
    }

    fn data(&self, inner: &mut Inner, msg: DataMsg, ctx: &Ctx) {
        let Some(body) = inner.body.as_mut() else { return };
        let info = &self.info;
        match msg {
            DataMsg::Close { pane } => {
                let state = match body {
                    Body::Whole(w) => w.snapshot(&info.template, Some(pane)),
                    Body::PerStream(_) => Err(SdeError::Protocol(
                        "window close on a per-stream synopsis".into(),
                    )),
                };
                ctx.close_lane(WindowPartial {
                    info: info.clone(),
                    pane,
                    shard: self.index,
                    state,
                });
            }
            DataMsg::Record { rec, pane } => {
                let w = match body {
                    Body::Whole(w) => w,
                    Body::PerStream(map) => {
                        if !map.contains_key(&rec.stream_id) {
                            self.states.fetch_add(1, Ordering::Relaxed);
                            map.insert(
                                rec.stream_id.clone(),
                                Windowed::new(&info.template, &info.spec.window),
                            );
                        }
                        map.get_mut(&rec.stream_id).expect("just inserted")
                    }
                };
                match w.offer(&info.template, &rec, &info.fields, pane) {
                    Ok(Offer::Added) => {
                        self.items.fetch_add(1, Ordering::Relaxed);
                        if info.spec.continuous && info.spec.scope != Scope::WholeSource {
                            self.emit_update(w, &rec, ctx);
                        }
                    }
                    Ok(Offer::Late) => {
                        self.late.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        self.rejected.fetch_add(1, Ordering::Relaxed);
                        log::debug!("{}: {e}", info.spec.synopsis_id);
                    }
                }
            }
        }
    }

    fn emit_update(&self, w: &Windowed, rec: &StreamRecord, ctx: &Ctx) {
        let info = &self.info;
        let query = match &info.spec.continuous_query {
            Some(q) => q.clone(),
            None => {
                let item = match info.fields.key {
                    Some(i) => rec.values.get(i).map(|v| v.canonical()).unwrap_or_default(),
                    None => rec.stream_id.clone(),
                };
                Query::default_for(&info.spec.kind, &item, &rec.stream_id)
            }
        };
        let value = w.estimate(&info.template, self.query_pane(), &query);
        ctx.emit(info, value);
    }
}

/// Runs shards until told to exit.
pub(crate) fn worker_loop(rx: Receiver<Job>, ctx: Arc<Ctx>) {
    while let Ok(Job::Run(cell)) = rx.recv() {
        cell.run(&ctx);
    }
}

/// Collects per-shard window partials and emits one merged estimate per
/// closed window.
pub(crate) fn close_lane_loop(rx: Receiver<LaneMsg>, ctx: Arc<Ctx>) {
    let mut pending: HashMap<(String, u64), Vec<(u32, Result<SketchState>)>> = HashMap::new();
    while let Ok(LaneMsg::Partial(p)) = rx.recv() {
        let info = p.info.clone();
        if info.stopped.load(Ordering::SeqCst) {
            continue;
        }
        let key = (info.spec.synopsis_id.clone(), p.pane);
        let parts = pending.entry(key.clone()).or_default();
        parts.push((p.shard, p.state));
        if parts.len() < info.spec.shard_count() as usize {
            continue;
        }
        let mut parts = pending.remove(&key).unwrap_or_default();
        parts.sort_by_key(|(s, _)| *s);
        let merged = parts.into_iter().try_fold(info.template.clone(), |mut acc, (_, s)| {
            acc.merge(&s?)?;
            Ok::<_, SdeError>(acc)
        });
        let query = info
            .spec
            .continuous_query
            .clone()
            .unwrap_or_else(|| Query::default_for(&info.spec.kind, "", ""));
        ctx.emit(&info, merged.and_then(|s| s.estimate(&query)));
    }
}

/// Fan-out of responses to every output subscriber.
#[derive(Default)]
pub(crate) struct OutputHub {
    subscribers: Mutex<Vec<Sender<Response>>>,
}

impl OutputHub {
    pub fn subscribe(&self) -> Receiver<Response> {
        let (tx, rx) = unbounded();
        self.subscribers.lock().expect("hub lock").push(tx);
        rx
    }

    pub fn publish(&self, r: Response) {
        let mut subs = self.subscribers.lock().expect("hub lock");
        subs.retain(|s| s.send(r.clone()).is_ok());
    }
}
