//! Golden files for the request protocol. Run with `SDE_BLESS=1` to rewrite
//! the expected outputs after an intentional format change.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use sde_core::federation::{CommLedger, FederatedSite, InMemoryNetwork, SiteConfig};
use sde_core::protocol::{format_response, parse_request, parse_response, Status, Verb};
use sde_core::{format_request, Engine, EngineConfig, Query, Scalar, StreamRecord};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn lines(name: &str) -> Vec<String> {
    std::fs::read_to_string(golden(name))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

fn bless() -> bool {
    std::env::var_os("SDE_BLESS").is_some()
}

fn check(name: &str, got: &[String]) {
    if bless() {
        std::fs::write(golden(name), got.join("\n") + "\n").unwrap();
        return;
    }
    let want = lines(name);
    assert_eq!(want.len(), got.len(), "{name}: line count");
    for (i, (w, g)) in want.iter().zip(got).enumerate() {
        assert_eq!(w, g, "{name}: line {}", i + 1);
    }
}

fn site() -> FederatedSite {
    let engine = Arc::new(Engine::start(
        EngineConfig::default().with_site("site0").with_workers(2),
    ));
    FederatedSite::start(
        engine,
        SiteConfig::new("site0"),
        Arc::new(InMemoryNetwork::new()),
        Arc::new(CommLedger::new()),
        Duration::from_secs(5),
    )
    .unwrap()
}

fn records() -> Vec<StreamRecord> {
    let names = ["AAPL", "MSFT", "IBM", "ORCL"];
    (0..400u64)
        .map(|t| {
            let s = names[(t * 7 % 11 % 4) as usize];
            let price = 100.0 + ((t * 13) % 17) as f64;
            StreamRecord::new(
                "trades",
                s,
                t * 1000,
                vec![Scalar::Num(price), Scalar::Text(format!("u{}", t % 23))],
            )
        })
        .collect()
}

#[test]
fn request_lines_are_canonical() {
    let input = lines("requests.ndjson");
    let verbs: std::collections::BTreeSet<&str> = input
        .iter()
        .map(|l| parse_request(l).unwrap().verb.name())
        .collect();
    for v in [Verb::Build, Verb::Stop, Verb::Load, Verb::AdHocQuery, Verb::Status] {
        assert!(verbs.contains(v.name()), "no golden line for {}", v.name());
    }
    let formatted: Vec<String> = input
        .iter()
        .map(|l| format_request(&parse_request(l).unwrap()))
        .collect();
    check("requests.ndjson", &formatted);
    for l in &formatted {
        assert_eq!(format_request(&parse_request(l).unwrap()), *l);
    }
}

#[test]
fn responses_match_golden() {
    let site = site();
    let mut out = Vec::new();
    let mut fed = false;
    for line in lines("requests.ndjson") {
        let verb = parse_request(&line).unwrap().verb;
        if !fed && !matches!(verb, Verb::Build | Verb::Load) {
            for r in records() {
                site.engine().ingest(r).unwrap();
            }
            site.engine().flush();
            fed = true;
        }
        let r = site.handle_line(&line);
        let text = format_response(&r);
        assert_eq!(parse_response(&text).unwrap(), r);
        out.push(text);
    }
    check("responses.ndjson", &out);
}

#[test]
fn malformed_requests_get_errors_and_change_nothing() {
    let site = site();
    let build = r#"{"v":1,"request_id":"b","verb":"Build","synopsisID":"cm","kind":"CountMin","datasetKey":"trades","param":{"epsilon":0.01,"delta":0.01,"seed":3},"parallelism":2}"#;
    assert!(site.handle_line(build).is_ok());
    for r in records() {
        site.engine().ingest(r).unwrap();
    }
    let probe = |site: &FederatedSite| {
        let q = site
            .engine()
            .query("cm", Query::Frequency { item: "IBM".into() })
            .unwrap();
        let mut st = site.engine().status();
        st.counters = Default::default();
        (q, st)
    };
    let before = probe(&site);
    let mut out = Vec::new();
    for line in lines("malformed.ndjson") {
        let r = site.handle_line(&line);
        assert_eq!(r.status, Status::Error, "{line}");
        let e = r.error.as_ref().unwrap();
        out.push(format!("{} {}", e.code, e.message));
    }
    check("malformed_errors.txt", &out);
    assert_eq!(probe(&site), before);
}
