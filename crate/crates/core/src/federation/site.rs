use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{CommLedger, SiteConfig, Transport, UnionFrame, ABSENT_KIND, REQUEST_KIND};
use crate::engine::Engine;
use crate::error::{Result, SdeError};
use crate::protocol::{format_request, parse_request, parse_request_detailed, Request, Response, Verb};
use crate::synopses::{Query, SketchState};

/// A merge waiting for frames at the responsible site.
struct Pending {
    synopsis: String,
    query: Option<Query>,
    expected: BTreeSet<String>,
    parts: BTreeMap<String, SketchState>,
    absent: BTreeSet<String>,
    deadline: Instant,
    waiters: Vec<Sender<Response>>,
}

struct SiteInner {
    engine: Arc<Engine>,
    config: SiteConfig,
    transport: Arc<dyn Transport>,
    ledger: Arc<CommLedger>,
    pending: Mutex<HashMap<String, Pending>>,
    timeout: Duration,
    inbox: Sender<String>,
}

struct Listener {
    stop: Arc<AtomicBool>,
    handle: Mutex<Option<JoinHandle<()>>>,
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.lock().expect("listener poisoned").take() {
            let _ = h.join();
        }
    }
}

/// An engine plus its union channel.
#[derive(Clone)]
pub struct FederatedSite {
    inner: Arc<SiteInner>,
    _listener: Arc<Listener>,
}

impl FederatedSite {
    /// Starts the union listener. Lines sent to `union_sender()` are
    /// processed in arrival order on one thread.
    pub fn start(
        engine: Arc<Engine>,
        config: SiteConfig,
        transport: Arc<dyn Transport>,
        ledger: Arc<CommLedger>,
        timeout: Duration,
    ) -> Result<FederatedSite> {
        if engine.site_id() != config.site_id {
            return Err(SdeError::Config(format!(
                "engine site `{}` differs from federation site `{}`",
                engine.site_id(),
                config.site_id
            )));
        }
        let (tx, rx) = unbounded();
        let inner = Arc::new(SiteInner {
            engine,
            config,
            transport,
            ledger,
            pending: Mutex::new(HashMap::new()),
            timeout,
            inbox: tx,
        });
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let inner = inner.clone();
            let stop = stop.clone();
            std::thread::Builder::new()
                .name(format!("union-{}", inner.config.site_id))
                .spawn(move || listen(&inner, &rx, &stop))
                .map_err(|e| SdeError::Io(e.to_string()))?
        };
        Ok(FederatedSite {
            inner,
            _listener: Arc::new(Listener {
                stop,
                handle: Mutex::new(Some(handle)),
            }),
        })
    }

    pub fn site_id(&self) -> &str {
        &self.inner.config.site_id
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.inner.engine
    }

    pub fn config(&self) -> &SiteConfig {
        &self.inner.config
    }

    pub fn ledger(&self) -> &Arc<CommLedger> {
        &self.inner.ledger
    }

    pub fn union_sender(&self) -> Sender<String> {
        self.inner.inbox.clone()
    }

    /// Request-channel entry point. Federated queries are coordinated here;
    /// everything else goes to the local engine.
    pub fn handle_line(&self, line: &str) -> Response {
        match parse_request_detailed(line) {
            Ok(p) => self.handle(p.request),
            Err(_) => self.inner.engine.handle_line(line),
        }
    }

    pub fn handle(&self, mut req: Request) -> Response {
        let engine = &self.inner.engine;
        match req.verb {
            Verb::Build | Verb::Load => {
                if let Some(f) = req.spec.as_mut().and_then(|s| s.federation.as_mut()) {
                    if let Err(e) = self.inner.config.check_responsible(&f.responsible_site) {
                        return Response::error(engine.next_response_id(), &req.request_id, self.site_id(), &e);
                    }
                    f.site_id = self.site_id().to_string();
                }
                engine.handle(req)
            }
            Verb::AdHocQuery if self.is_federated(&req) => self.federated_query(req),
            _ => engine.handle(req),
        }
    }

    fn is_federated(&self, req: &Request) -> bool {
        req.target
            .as_deref()
            .and_then(|t| self.inner.engine.spec(t).ok())
            .is_some_and(|s| s.federation.is_some())
    }

    /// Runs one federated query from this site. Waits for the answer when
    /// this site is responsible; otherwise returns `forwarded` and the
    /// answer appears on the responsible site's output channel.
    pub fn federated_query(&self, req: Request) -> Response {
        let id = self.inner.engine.next_response_id();
        let rid = req.request_id.clone();
        let site = self.site_id().to_string();
        match self.start_round(req) {
            Ok(Some(rx)) => rx
                .recv_timeout(self.inner.timeout + Duration::from_secs(1))
                .unwrap_or_else(|_| {
                    let missing = self.inner.config.all_sites();
                    Response::error(id, &rid, &site, &SdeError::PartialFederation { missing })
                }),
            Ok(None) => Response::forwarded(id, &rid, &site),
            Err(e) => Response::error(id, &rid, &site, &e),
        }
    }

    /// Starts a round without waiting. Returns the answer channel when this
    /// site is responsible.
    pub fn start_round(&self, mut req: Request) -> Result<Option<Receiver<Response>>> {
        let inner = &self.inner;
        let target = req
            .target
            .clone()
            .ok_or_else(|| SdeError::schema("synopsisID", "missing synopsisID"))?;
        let query = req
            .query
            .clone()
            .ok_or_else(|| SdeError::schema("query", "AdHocQuery needs a query"))?;
        let spec = inner.engine.spec(&target)?;
        let fed = spec
            .federation
            .as_ref()
            .ok_or_else(|| SdeError::Config(format!("synopsis `{target}` is not federated")))?;
        let responsible = req
            .responsible_site
            .clone()
            .unwrap_or_else(|| fed.responsible_site.clone());
        inner.config.check_responsible(&responsible)?;
        if matches!(query, Query::InnerProduct { .. }) {
            return Err(SdeError::Config("inner products are not federated".into()));
        }
        SketchState::with_plugins(spec.kind.clone(), spec.params.clone(), inner.engine.plugins())?
            .estimate(&query)?;
        req.responsible_site = Some(responsible.clone());

        let rx = if responsible == inner.config.site_id {
            let (tx, rx) = unbounded();
            inner.with_pending(&req.request_id, &target, |p| {
                p.query = Some(query.clone());
                p.waiters.push(tx);
            });
            Some(rx)
        } else {
            None
        };
        let line = format_request(&req);
        let envelope =
            UnionFrame::raw(&inner.config.site_id, &req.request_id, REQUEST_KIND, line.as_bytes()).to_line();
        for peer in inner.config.peers.keys() {
            match inner.transport.send(peer, &envelope) {
                Ok(n) => inner.ledger.record_frame(&target, &inner.config.site_id, peer, n),
                Err(e) => {
                    log::warn!("federated request {} not delivered to {peer}: {e}", req.request_id);
                    if rx.is_some() {
                        inner.mark_absent(&req.request_id, &target, peer);
                    }
                }
            }
        }
        inner.contribute(&req)?;
        Ok(rx)
    }

    pub fn pending_rounds(&self) -> usize {
        self.inner.pending.lock().expect("pending poisoned").len()
    }
}

impl SiteInner {
    fn with_pending(&self, key: &str, synopsis: &str, f: impl FnOnce(&mut Pending)) {
        let done = {
            let mut pending = self.pending.lock().expect("pending poisoned");
            let p = pending.entry(key.to_string()).or_insert_with(|| Pending {
                synopsis: synopsis.to_string(),
                query: None,
                expected: self.config.all_sites().into_iter().collect(),
                parts: BTreeMap::new(),
                absent: BTreeSet::new(),
                deadline: Instant::now() + self.timeout,
                waiters: Vec::new(),
            });
            f(p);
            let complete = p.query.is_some()
                && p.expected.iter().all(|s| p.parts.contains_key(s) || p.absent.contains(s));
            if complete {
                pending.remove(key)
            } else {
                None
            }
        };
        if let Some(p) = done {
            self.finish(key, p);
        }
    }

    fn mark_absent(&self, key: &str, synopsis: &str, site: &str) {
        self.with_pending(key, synopsis, |p| {
            p.absent.insert(site.to_string());
        });
    }

    /// Ships this site's state for the request, or keeps it if responsible.
    fn contribute(&self, req: &Request) -> Result<()> {
        let target = req.target.as_deref().unwrap_or_default();
        let responsible = req.responsible_site.as_deref().unwrap_or_default();
        let me = self.config.site_id.as_str();
        let state = self.engine.snapshot(target, req.stream.as_deref());
        let raw = self.engine.take_raw_bytes(target).unwrap_or(0);
        if responsible == me {
            match state {
                Ok(s) => self.with_pending(&req.request_id, target, |p| {
                    p.parts.insert(me.to_string(), s.to_series_table());
                }),
                Err(e) => {
                    log::warn!("local state for {target} unavailable: {e}");
                    self.mark_absent(&req.request_id, target, me);
                }
            }
            return Ok(());
        }
        let frame = match &state {
            Ok(s) => UnionFrame::state(me, &req.request_id, s),
            Err(e) => UnionFrame::raw(me, &req.request_id, ABSENT_KIND, e.to_string().as_bytes()),
        };
        let n = self.transport.send(responsible, &frame.to_line())?;
        self.ledger.record_frame(target, me, responsible, n);
        if let Ok(spec) = self.engine.spec(target) {
            self.ledger.record_raw(target, &spec.dataset_id, me, responsible, raw);
        }
        Ok(())
    }

    fn on_line(&self, line: &str) {
        let frame = match UnionFrame::from_line(line) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("dropping malformed union line: {e}");
                return;
            }
        };
        match frame.kind.as_str() {
            REQUEST_KIND => {
                let req = frame
                    .payload()
                    .ok()
                    .and_then(|b| String::from_utf8(b).ok())
                    .ok_or_else(|| SdeError::Codec("request payload".into()))
                    .and_then(|s| parse_request(&s));
                match req {
                    Ok(req) => {
                        let target = req.target.clone().unwrap_or_default();
                        if req.responsible_site.as_deref() == Some(&self.config.site_id) {
                            if let Some(q) = req.query.clone() {
                                self.with_pending(&req.request_id, &target, |p| p.query = Some(q));
                            }
                        }
                        if let Err(e) = self.contribute(&req) {
                            log::warn!("contribution to {} failed: {e}", req.request_id);
                        }
                    }
                    Err(e) => log::warn!("bad federated request from {}: {e}", frame.origin),
                }
            }
            ABSENT_KIND => {
                let syn = self.pending_synopsis(&frame.merge_key);
                self.mark_absent(&frame.merge_key, &syn, &frame.origin);
            }
            _ => {
                let syn = self.pending_synopsis(&frame.merge_key);
                match frame.decode_state(self.engine.plugins()) {
                    Ok(s) => self.with_pending(&frame.merge_key, &syn, |p| {
                        p.parts.insert(frame.origin.clone(), s);
                    }),
                    Err(e) => {
                        log::warn!("undecodable frame from {}: {e}", frame.origin);
                        self.mark_absent(&frame.merge_key, &syn, &frame.origin);
                    }
                }
            }
        }
    }

    fn pending_synopsis(&self, key: &str) -> String {
        self.pending
            .lock()
            .expect("pending poisoned")
            .get(key)
            .map(|p| p.synopsis.clone())
            .unwrap_or_default()
    }

    fn finish(&self, key: &str, p: Pending) {
        let resp_id = self.engine.next_response_id();
        let me = &self.config.site_id;
        let result = if p.absent.is_empty() {
            merge_parts(&p).and_then(|(state, q)| state.estimate(&q))
        } else {
            Err(SdeError::PartialFederation {
                missing: p.absent.iter().cloned().collect(),
            })
        };
        let resp = match result {
            Ok(v) => {
                let params = self
                    .engine
                    .spec(&p.synopsis)
                    .map(|s| s.params)
                    .unwrap_or_default();
                Response::ok(resp_id, key, me)
                    .with_synopsis(&p.synopsis, &params)
                    .with_value(v)
            }
            Err(e) => {
                let mut r = Response::error(resp_id, key, me, &e);
                r.synopsis_id = Some(p.synopsis.clone());
                r
            }
        };
        self.engine.publish(resp.clone());
        for w in p.waiters {
            let _ = w.send(resp.clone());
        }
    }

    fn sweep(&self) {
        let now = Instant::now();
        let expired: Vec<(String, Pending)> = {
            let mut pending = self.pending.lock().expect("pending poisoned");
            let keys: Vec<String> = pending
                .iter()
                .filter(|(_, p)| p.deadline <= now)
                .map(|(k, _)| k.clone())
                .collect();
            keys.into_iter()
                .filter_map(|k| pending.remove(&k).map(|p| (k, p)))
                .collect()
        };
        for (key, mut p) in expired {
            let missing: Vec<String> = p
                .expected
                .iter()
                .filter(|s| !p.parts.contains_key(*s))
                .cloned()
                .collect();
            p.absent.extend(missing);
            self.finish(&key, p);
        }
    }
}

/// Merges the parts in site order so the answer does not depend on which
/// site is responsible or on arrival order.
fn merge_parts(p: &Pending) -> Result<(SketchState, Query)> {
    let q = p.query.clone().ok_or_else(|| SdeError::Protocol("round without query".into()))?;
    let mut parts = p.parts.values();
    let first = parts
        .next()
        .ok_or_else(|| SdeError::PartialFederation { missing: p.expected.iter().cloned().collect() })?;
    let mut out = first.empty_like();
    out.merge(first)?;
    for s in parts {
        out.merge(s)?;
    }
    Ok((out, q))
}

fn listen(inner: &SiteInner, rx: &Receiver<String>, stop: &AtomicBool) {
    while !stop.load(Ordering::SeqCst) {
        match rx.recv_timeout(Duration::from_millis(20)) {
            Ok(line) => inner.on_line(&line),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        inner.sweep();
    }
}
