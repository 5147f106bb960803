use std::sync::Arc;
use std::time::Duration;

use super::*;
use crate::engine::{Engine, EngineConfig};
use crate::model::{Params, Scalar, Scope, StreamRecord, SynopsisKind, SynopsisSpec};
use crate::protocol::{Request, Response, Status};
use crate::synopses::{EstimateValue, Payload, Query};

fn sim(n: usize) -> SimFederation {
    SimFederation::new(n, 1, Duration::from_secs(5)).unwrap()
}

fn spec(id: &str, kind: SynopsisKind, params: Params) -> SynopsisSpec {
    SynopsisSpec::new(id, kind, "feed", Scope::WholeSource, params.with("seed", 7))
}

fn cm(id: &str) -> SynopsisSpec {
    spec(id, SynopsisKind::CountMin, Params::new().with("epsilon", 0.01).with("delta", 0.05))
}

fn feed(site: &FederatedSite, items: impl Iterator<Item = String>) {
    for (t, item) in items.enumerate() {
        site.engine()
            .ingest(StreamRecord::new("feed", &item, t as u64, vec![Scalar::Num(1.0)]))
            .unwrap();
    }
}

fn ask(site: &FederatedSite, rid: &str, id: &str, q: Query) -> Response {
    site.handle(Request::query(rid, id, q))
}

#[test]
fn peers_file_parses_and_rejects_garbage() {
    let cfg = SiteConfig::from_peers("b", "# sites\na 10.0.0.1:9004\nb 0.0.0.0:9004\n\nc host:1 # east\n").unwrap();
    assert_eq!(cfg.union_addr.as_deref(), Some("0.0.0.0:9004"));
    assert_eq!(cfg.peers.len(), 2);
    assert_eq!(cfg.all_sites(), vec!["a", "b", "c"]);
    assert!(cfg.check_responsible("c").is_ok());
    assert!(cfg.check_responsible("z").is_err());
    assert!(parse_peers("a\n").is_err());
    assert!(parse_peers("a x y\n").is_err());
    assert!(parse_peers("a x\na y\n").is_err());
}

#[test]
fn frames_round_trip_and_check_length() {
    let f = UnionFrame::raw("s0", "r1", "HyperLogLog", &[1, 2, 3, 250]);
    let line = f.to_line();
    assert!(line.starts_with(r#"{"origin":"s0","mergeKey":"r1","kind":"HyperLogLog","payload_b64":"#));
    let back = UnionFrame::from_line(&line).unwrap();
    assert_eq!(back, f);
    assert_eq!(back.payload().unwrap(), vec![1, 2, 3, 250]);
    let mut bad = f;
    bad.bytes = 5;
    assert!(bad.payload().is_err());
}

#[test]
fn three_site_hll_union_cardinality() {
    let fed = sim(3);
    let m = 10;
    fed.build_all(&spec("h", SynopsisKind::HyperLogLog, Params::new().with("m", m)), "site0")
        .unwrap();
    for (i, s) in fed.sites().iter().enumerate() {
        feed(s, (0..10_000).map(|j| format!("i{i}-{j}")));
    }
    let r = ask(fed.site(0), "q1", "h", Query::Distinct);
    assert_eq!(r.status, Status::Ok, "{r:?}");
    let est = r.value.unwrap().as_f64().unwrap();
    let rel = (est - 30_000.0).abs() / 30_000.0;
    assert!(rel <= 2.0 / (2f64.powi(m)).sqrt(), "estimate {est}");
}

#[test]
fn two_site_fm_merge_is_bitwise_or() {
    let fed = sim(2);
    fed.build_all(&spec("fm", SynopsisKind::FmSketch, Params::new().with("bitmapSize", 32)), "site1")
        .unwrap();
    feed(fed.site(0), (0..300).map(|j| format!("a{j}")));
    feed(fed.site(1), (0..500).map(|j| format!("b{j}")));
    let s0 = fed.site(0).engine().snapshot("fm", None).unwrap();
    let s1 = fed.site(1).engine().snapshot("fm", None).unwrap();
    let (Payload::Fm(a), Payload::Fm(b)) = (&s0.payload, &s1.payload) else {
        panic!("not FM")
    };
    let or: Vec<u64> = a.bitmaps().iter().zip(b.bitmaps()).map(|(x, y)| x | y).collect();
    let mut merged = s0.clone();
    merged.merge(&s1).unwrap();
    let Payload::Fm(m) = &merged.payload else { unreachable!() };
    assert_eq!(m.bitmaps(), &or[..]);

    let r = ask(fed.site(1), "q", "fm", Query::Distinct);
    assert_eq!(r.value, Some(merged.estimate(&Query::Distinct).unwrap()));
}

#[test]
fn single_site_federation_matches_local_answer() {
    let fed = sim(1);
    fed.build_all(&cm("c"), "site0").unwrap();
    feed(fed.site(0), (0..2000).map(|j| format!("k{}", j % 37)));
    let q = Query::Frequency { item: "k5".into() };
    let local = fed.site(0).engine().query("c", q.clone()).unwrap();
    let r = ask(fed.site(0), "q", "c", q);
    assert_eq!(r.value, Some(local));
    assert_eq!(fed.ledger.total_frames(), 0);
}

#[test]
fn answer_does_not_depend_on_responsible_site() {
    let fed = sim(3);
    fed.build_all(&cm("c"), "site0").unwrap();
    for (i, s) in fed.sites().iter().enumerate() {
        feed(s, (0..3000).map(|j| format!("k{}", (j * (i + 1)) % 101)));
    }
    let q = Query::Frequency { item: "k7".into() };
    let answers: Vec<Option<EstimateValue>> = (0..3)
        .map(|i| {
            let site = format!("site{i}");
            let req = Request::query(format!("q{i}"), "c", q.clone()).with_responsible_site(&site);
            let r = fed.site(i).handle(req);
            assert_eq!(r.status, Status::Ok, "{r:?}");
            r.value
        })
        .collect();
    assert_eq!(answers[0], answers[1]);
    assert_eq!(answers[1], answers[2]);
    // Exact counts equal the sum over sites, so the merged CM is at least that.
    let truth: u64 = (0..3)
        .map(|i| (0..3000).filter(|j| (j * (i + 1)) % 101 == 7).count() as u64)
        .sum();
    assert!(answers[0].as_ref().unwrap().as_f64().unwrap() >= truth as f64);
}

#[test]
fn ten_sites_send_nine_frames_to_the_responsible() {
    let fed = sim(10);
    fed.build_all(&cm("c"), "site3").unwrap();
    let r = ask(fed.site(3), "q", "c", Query::Frequency { item: "x".into() });
    assert_eq!(r.status, Status::Ok);
    assert_eq!(fed.ledger.frames_into("site3"), 9);
    // Ledger bytes are the bytes the network carried.
    assert_eq!(fed.ledger.total_bytes(), fed.network.bytes_written());
}

#[test]
fn forwarded_query_is_answered_on_the_responsible_output() {
    let fed = sim(3);
    fed.build_all(&cm("c"), "site2").unwrap();
    let out = fed.site(2).engine().subscribe();
    let r = ask(fed.site(0), "fq", "c", Query::Frequency { item: "x".into() });
    assert_eq!(r.status, Status::Forwarded);
    let answer = out.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!(answer.request_id, "fq");
    assert_eq!(answer.site_id, "site2");
    assert_eq!(answer.status, Status::Ok);
}

#[test]
fn missing_site_is_named() {
    let fed = sim(3);
    fed.build_all(&cm("c"), "site0").unwrap();
    fed.network.set_down("site2", true);
    let r = ask(fed.site(0), "q", "c", Query::Frequency { item: "x".into() });
    assert_eq!(r.error_code(), Some("partial_federation"));
    assert!(r.error.unwrap().message.contains("site2"));
}

#[test]
fn site_without_the_synopsis_is_reported_absent() {
    let fed = sim(2);
    let s = cm("c").with_federation("site0", "site0");
    assert!(fed.site(0).handle(Request::build("b", s)).is_ok());
    let r = ask(fed.site(0), "q", "c", Query::Frequency { item: "x".into() });
    assert_eq!(r.error_code(), Some("partial_federation"));
    assert!(r.error.unwrap().message.contains("site1"));
}

#[test]
fn unreachable_responsible_is_an_error_for_the_requester() {
    let fed = sim(2);
    fed.build_all(&cm("c"), "site0").unwrap();
    fed.network.set_down("site0", true);
    let r = ask(fed.site(1), "q", "c", Query::Frequency { item: "x".into() });
    assert_eq!(r.error_code(), Some("unreachable"));
}

#[test]
fn unknown_responsible_is_rejected_at_build() {
    let fed = sim(2);
    let s = cm("c").with_federation("site0", "elsewhere");
    let r = fed.site(0).handle(Request::build("b", s));
    assert_eq!(r.error_code(), Some("config_error"));
    assert!(fed.site(0).engine().status().synopses.is_empty());
}

#[test]
fn periodic_rounds_accumulate_with_constant_hll_frames() {
    let fed = sim(3);
    fed.build_all(&spec("h", SynopsisKind::HyperLogLog, Params::new().with("m", 3)), "site0")
        .unwrap();
    let clock = SimClock::new(0);
    let period = Duration::from_secs(300);
    let mut sched = PeriodicScheduler::new(fed.site(0).clone(), "h", Query::Distinct, period, clock.now());
    let mut sizes = Vec::new();
    for round in 0..3 {
        feed(fed.site(1), (0..100 * (round + 1)).map(|j| format!("r{round}-{j}")));
        let before = fed.ledger.link("h", "site1", "site0").bytes;
        assert_eq!(sched.tick(clock.advance(300_000)).unwrap(), 1);
        assert_eq!(sched.wait(Duration::from_secs(5)).unwrap().status, Status::Ok);
        sizes.push(fed.ledger.link("h", "site1", "site0").bytes - before);
    }
    assert_eq!(sched.rounds(), 3);
    for pair in [("site1", "site0"), ("site2", "site0"), ("site0", "site1"), ("site0", "site2")] {
        assert_eq!(fed.ledger.link("h", pair.0, pair.1).frames, 3, "{pair:?}");
    }
    assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{sizes:?}");
    let raw = fed.ledger.link("h", "site1", "site0").raw_bytes;
    assert!(raw > 0);
}

#[test]
fn overlapping_rounds_coalesce() {
    let fed = SimFederation::new(2, 1, Duration::from_millis(400)).unwrap();
    fed.build_all(&cm("c"), "site0").unwrap();
    // Requests reach site1 but its frames cannot come back.
    fed.network.set_down("site0", true);
    let clock = SimClock::new(0);
    let mut sched = PeriodicScheduler::new(
        fed.site(0).clone(),
        "c",
        Query::Frequency { item: "x".into() },
        Duration::from_secs(300),
        0,
    );
    assert_eq!(sched.tick(clock.advance(300_000)).unwrap(), 1);
    assert_eq!(sched.tick(clock.advance(600_000)).unwrap(), 0);
    assert_eq!(sched.coalesced(), 2);
    let r = sched.wait(Duration::from_secs(5)).unwrap();
    assert_eq!(r.error_code(), Some("partial_federation"));
    assert_eq!(fed.site(0).pending_rounds(), 0);
    fed.network.set_down("site0", false);
    assert_eq!(sched.tick(clock.advance(300_000)).unwrap(), 1);
    assert_eq!(sched.wait(Duration::from_secs(5)).unwrap().status, Status::Ok);
}

#[test]
fn dft_federates_coefficient_tables() {
    let fed = sim(2);
    let s = spec(
        "d",
        SynopsisKind::Dft,
        Params::new().with("threshold", 0.9).with("coefficients", 4).with("windowSize", 16),
    )
    .with_value_fields(vec![0]);
    fed.build_all(&s, "site0").unwrap();
    for (i, site) in fed.sites().iter().enumerate() {
        for t in 0..32u64 {
            for k in 0..3 {
                let v = ((t * (k + 2) + i as u64) % 13) as f64;
                site.engine()
                    .ingest(StreamRecord::new("feed", format!("s{i}-{k}"), t, vec![Scalar::Num(v)]))
                    .unwrap();
            }
        }
    }
    let r = ask(fed.site(0), "q", "d", Query::Series { stream: None });
    match r.value {
        Some(EstimateValue::Series(entries)) => assert_eq!(entries.len(), 6),
        other => panic!("{other:?}"),
    }
    let link = fed.ledger.link("d", "site1", "site0");
    assert!(link.bytes < link.raw_bytes * 2, "{link:?}");
}

#[test]
fn engine_site_must_match_config() {
    let engine = Arc::new(Engine::start(EngineConfig::default().with_site("x")));
    let res = FederatedSite::start(
        engine,
        SiteConfig::new("y"),
        Arc::new(InMemoryNetwork::new()),
        Arc::new(CommLedger::new()),
        Duration::from_secs(1),
    );
    assert!(res.is_err());
}
