//! The four NDJSON endpoints: data, request, output and union, over TCP
//! sockets or over files for replay.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{RecvTimeoutError, Sender};

use crate::engine::Engine;
use crate::error::{Result, SdeError};
use crate::federation::FederatedSite;
use crate::protocol::{format_response, Response};

/// Anything that answers request lines.
pub trait Handler: Send + Sync {
    fn handle_line(&self, line: &str) -> Response;
}

impl Handler for Engine {
    fn handle_line(&self, line: &str) -> Response {
        Engine::handle_line(self, line)
    }
}

impl Handler for FederatedSite {
    fn handle_line(&self, line: &str) -> Response {
        FederatedSite::handle_line(self, line)
    }
}

fn io(e: std::io::Error) -> SdeError {
    SdeError::Io(e.to_string())
}

/// Binds `addr`, accepting `:9001` as shorthand for all interfaces.
pub fn bind(addr: &str) -> Result<TcpListener> {
    let addr = if addr.starts_with(':') {
        format!("0.0.0.0{addr}")
    } else {
        addr.to_string()
    };
    TcpListener::bind(&addr).map_err(|e| SdeError::Io(format!("bind {addr}: {e}")))
}

/// One listening endpoint. Dropping it stops accepting; open connections
/// end when their peer closes.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    lines: Arc<AtomicU64>,
}

impl Server {
    fn spawn<F>(listener: TcpListener, name: &str, on_conn: F) -> Result<Server>
    where
        F: Fn(TcpStream, Arc<AtomicU64>) + Send + Sync + 'static,
    {
        let addr = listener.local_addr().map_err(io)?;
        listener.set_nonblocking(true).map_err(io)?;
        let stop = Arc::new(AtomicBool::new(false));
        let lines = Arc::new(AtomicU64::new(0));
        let on_conn = Arc::new(on_conn);
        let accept = {
            let stop = stop.clone();
            let lines = lines.clone();
            let name = name.to_string();
            std::thread::Builder::new()
                .name(format!("{name}-accept"))
                .spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match listener.accept() {
                            Ok((s, peer)) => {
                                log::debug!("{name}: connection from {peer}");
                                let _ = s.set_nonblocking(false);
                                let f = on_conn.clone();
                                let lines = lines.clone();
                                let _ = std::thread::Builder::new()
                                    .name(format!("{name}-conn"))
                                    .spawn(move || f(s, lines));
                            }
                            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                                std::thread::sleep(Duration::from_millis(10))
                            }
                            Err(e) => {
                                log::warn!("{name}: accept failed: {e}");
                                std::thread::sleep(Duration::from_millis(50))
                            }
                        }
                    }
                })
                .map_err(io)?
        };
        Ok(Server {
            addr,
            stop,
            accept: Some(accept),
            lines,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Lines received on all connections so far.
    pub fn lines(&self) -> u64 {
        self.lines.load(Ordering::SeqCst)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn for_each_line(s: &TcpStream, lines: &AtomicU64, mut f: impl FnMut(&str) -> bool) {
    let reader = BufReader::new(s);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        lines.fetch_add(1, Ordering::Relaxed);
        if !f(&line) {
            break;
        }
    }
}

/// Records in, nothing out. Bad lines are logged and skipped.
pub fn serve_data(listener: TcpListener, engine: Arc<Engine>) -> Result<Server> {
    Server::spawn(listener, "data", move |s, lines| {
        for_each_line(&s, &lines, |line| {
            if let Err(e) = engine.ingest_line(line) {
                log::warn!("data: {e}");
            }
            true
        })
    })
}

/// Requests in, one response line back per request on the same connection.
pub fn serve_requests(listener: TcpListener, handler: Arc<dyn Handler>) -> Result<Server> {
    Server::spawn(listener, "request", move |s, lines| {
        let Ok(w) = s.try_clone() else { return };
        let mut w = BufWriter::new(w);
        for_each_line(&s, &lines, |line| {
            let r = handler.handle_line(line);
            writeln!(w, "{}", format_response(&r)).and_then(|_| w.flush()).is_ok()
        })
    })
}

/// Every published response (continuous emissions, federated answers) to
/// every connected reader.
pub fn serve_output(listener: TcpListener, engine: Arc<Engine>) -> Result<Server> {
    Server::spawn(listener, "output", move |s, _| {
        let rx = engine.subscribe();
        let mut w = BufWriter::new(s);
        loop {
            match rx.recv_timeout(Duration::from_millis(200)) {
                Ok(r) => {
                    if writeln!(w, "{}", format_response(&r)).and_then(|_| w.flush()).is_err() {
                        break;
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    // Detect a closed reader.
                    if w.flush().is_err() {
                        break;
                    }
                }
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
    })
}

/// Union envelopes in, handed to the site's merge lane.
pub fn serve_union(listener: TcpListener, inbox: Sender<String>) -> Result<Server> {
    let inbox = Mutex::new(inbox);
    Server::spawn(listener, "union", move |s, lines| {
        let tx = inbox.lock().expect("union inbox").clone();
        for_each_line(&s, &lines, |line| tx.send(line.to_string()).is_ok())
    })
}

/// Feeds a file of records through the data path. Returns accepted records.
pub fn replay_data(path: &Path, engine: &Engine) -> Result<u64> {
    let f = std::fs::File::open(path).map_err(|e| SdeError::Io(format!("{}: {e}", path.display())))?;
    let mut n = 0;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match engine.ingest_line(&line) {
            Ok(()) => n += 1,
            Err(e) => log::warn!("{}: {e}", path.display()),
        }
    }
    Ok(n)
}

/// Runs a file of requests and writes one response line each to `out`.
pub fn replay_requests(path: &Path, handler: &dyn Handler, out: &mut dyn Write) -> Result<Vec<Response>> {
    let text = std::fs::read_to_string(path).map_err(|e| SdeError::Io(format!("{}: {e}", path.display())))?;
    let mut all = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let r = handler.handle_line(line);
        writeln!(out, "{}", format_response(&r)).map_err(io)?;
        all.push(r);
    }
    Ok(all)
}

/// Sends request lines to a request endpoint and reads one response each.
pub fn send_requests(addr: &str, lines: &[String], timeout: Duration) -> Result<Vec<Response>> {
    let s = TcpStream::connect(addr).map_err(|e| SdeError::Unreachable(format!("{addr}: {e}")))?;
    s.set_read_timeout(Some(timeout)).map_err(io)?;
    let mut w = BufWriter::new(s.try_clone().map_err(io)?);
    let mut r = BufReader::new(s);
    let mut out = Vec::with_capacity(lines.len());
    for line in lines {
        writeln!(w, "{line}").and_then(|_| w.flush()).map_err(io)?;
        let mut buf = String::new();
        if r.read_line(&mut buf).map_err(io)? == 0 {
            return Err(SdeError::Io(format!("{addr} closed the connection")));
        }
        out.push(crate::protocol::parse_response(buf.trim_end())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;
    use crate::protocol::Status;

    #[test]
    fn tcp_round_trip_over_all_endpoints() {
        let engine = Arc::new(Engine::start(EngineConfig::default().with_site("tcp")));
        let req = serve_requests(bind("127.0.0.1:0").unwrap(), engine.clone()).unwrap();
        let data = serve_data(bind("127.0.0.1:0").unwrap(), engine.clone()).unwrap();
        let out = serve_output(bind("127.0.0.1:0").unwrap(), engine.clone()).unwrap();
        let out_conn = TcpStream::connect(out.local_addr()).unwrap();
        out_conn.set_read_timeout(Some(Duration::from_secs(5))).unwrap();

        let build = r#"{"v":1,"request_id":"b1","verb":"Build","synopsisID":"cm","kind":"CountMin","datasetKey":"d","streamID":"A","param":{"epsilon":0.01,"delta":0.01},"continuous":true}"#;
        let r = send_requests(&req.local_addr().to_string(), &[build.to_string()], Duration::from_secs(5)).unwrap();
        assert_eq!(r[0].status, Status::Ok, "{:?}", r[0]);

        // Wait for the output reader to be subscribed before emitting.
        std::thread::sleep(Duration::from_millis(100));
        let mut d = TcpStream::connect(data.local_addr()).unwrap();
        for t in 0..3 {
            writeln!(d, r#"{{"datasetKey":"d","streamID":"A","timestamp":{t},"values":[1]}}"#).unwrap();
        }
        d.flush().unwrap();
        let mut lines = BufReader::new(out_conn).lines();
        let mut seqs = Vec::new();
        for _ in 0..3 {
            let r = crate::protocol::parse_response(&lines.next().unwrap().unwrap()).unwrap();
            seqs.push(r.seq.unwrap());
        }
        seqs.sort();
        assert_eq!(seqs, vec![0, 1, 2]);
        assert_eq!(data.lines(), 3);
    }

    #[test]
    fn file_replay() {
        let dir = tempfile::tempdir().unwrap();
        let reqs = dir.path().join("req.ndjson");
        let recs = dir.path().join("data.ndjson");
        std::fs::write(
            &reqs,
            r#"{"v":1,"request_id":"b","verb":"Build","synopsisID":"h","kind":"HyperLogLog","datasetKey":"d","param":{"m":8}}
{"v":1,"request_id":"bad","verb":"Build"}
"#,
        )
        .unwrap();
        std::fs::write(
            &recs,
            "{\"datasetKey\":\"d\",\"streamID\":\"x\",\"timestamp\":1,\"values\":[1]}\nnot json\n",
        )
        .unwrap();
        let engine = Engine::start(EngineConfig::default());
        let mut out = Vec::new();
        let rs = replay_requests(&reqs, &engine, &mut out).unwrap();
        assert_eq!(rs.len(), 2);
        assert!(rs[0].is_ok());
        assert_eq!(rs[1].status, Status::Error);
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
        assert_eq!(replay_data(&recs, &engine).unwrap(), 1);
    }
}
