use std::io::Write;
use std::net::TcpListener;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

fn sde() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sde"))
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let st = sde()
        .args(["bench", "correlation", "--streams", "20", "--workers", "2", "--ticks", "3", "--seed", "4", "--out"])
        .arg(&out)
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("strategy,streams,workers,tuples"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("Naive,20,1,"));
    assert!(rows[3].starts_with("SynopsisPlusParallel,20,2,"));
}

#[test]
fn unknown_strategy_fails() {
    let st = sde()
        .args(["bench", "clustering", "--streams", "10", "--strategy", "warp"])
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(!st.success());
}

#[test]
fn serve_then_request_and_status() {
    let ports: Vec<u16> = (0..4).map(|_| free_port()).collect();
    let addr = |p: u16| format!("127.0.0.1:{p}");
    let child = sde()
        .args(["serve", "--site-id", "cli0", "--workers", "2"])
        .args(["--data", &addr(ports[0]), "--request", &addr(ports[1])])
        .args(["--output", &addr(ports[2]), "--union", &addr(ports[3])])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let _guard = Killed(child);
    let deadline = Instant::now() + Duration::from_secs(10);
    while std::net::TcpStream::connect(addr(ports[1])).is_err() {
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    }
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.ndjson");
    std::fs::write(
        &req,
        concat!(
            r#"{"v":1,"request_id":"b1","verb":"Build","synopsisID":"h","kind":"HyperLogLog","datasetKey":"d","param":{"m":8}}"#,
            "\n",
            r#"{"v":1,"request_id":"q1","verb":"AdHocQuery","synopsisID":"h","query":{"type":"distinct"}}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = sde().args(["request", "--addr", &addr(ports[1])]).arg(&req).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines.iter().all(|l| l.contains(r#""status":"ok""#)), "{text}");

    let mut data = std::net::TcpStream::connect(addr(ports[0])).unwrap();
    for i in 0..50 {
        writeln!(data, r#"{{"datasetKey":"d","streamID":"s{i}","timestamp":{i},"values":[1]}}"#).unwrap();
    }
    drop(data);
    let query = dir.path().join("q.ndjson");
    std::fs::write(
        &query,
        r#"{"v":1,"request_id":"q2","verb":"AdHocQuery","synopsisID":"h","query":{"type":"distinct"}}"#,
    )
    .unwrap();
    loop {
        let out = sde().args(["request", "--addr", &addr(ports[1])]).arg(&query).output().unwrap();
        let text = String::from_utf8(out.stdout).unwrap();
        if !text.contains(r#""value":0.0"#) {
            assert!(text.contains(r#""type":"scalar""#), "{text}");
            break;
        }
        assert!(Instant::now() < deadline + Duration::from_secs(10), "data never arrived");
        std::thread::sleep(Duration::from_millis(50));
    }
    let out = sde().args(["status", "--addr", &addr(ports[1])]).output().unwrap();
    assert!(out.status.success());
    let status = String::from_utf8(out.stdout).unwrap();
    assert!(status.contains(r#""status_report""#) && status.contains(r#""h""#), "{status}");
}
