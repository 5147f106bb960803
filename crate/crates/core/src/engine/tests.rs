use super::*;
use crate::model::{Params, Scalar, WindowSpec};
use crate::protocol::Status;

fn engine() -> Engine {
    Engine::start(EngineConfig::default().with_site("t").with_workers(3).with_mailbox(64))
}

fn cm_spec(id: &str, scope: Scope, p: u32) -> SynopsisSpec {
    SynopsisSpec::new(
        id,
        SynopsisKind::CountMin,
        "trades",
        scope,
        Params::new().with("epsilon", 0.01).with("delta", 0.01),
    )
    .with_parallelism(p)
}

fn rec(stream: &str, t: u64) -> StreamRecord {
    StreamRecord::new("trades", stream, t, vec![Scalar::Num(1.0)])
}

fn freq(e: &Engine, id: &str, item: &str) -> f64 {
    e.query(id, Query::Frequency { item: item.into() })
        .unwrap()
        .as_f64()
        .unwrap()
}

#[test]
fn build_ingest_query_observes_data() {
    let e = engine();
    e.build("b", cm_spec("cm", Scope::WholeSource, 4), false).unwrap();
    for i in 0..1000u64 {
        e.ingest(rec(&format!("s{}", i % 10), i)).unwrap();
    }
    // No flush: queries wait for everything enqueued before them.
    assert_eq!(freq(&e, "cm", "s3"), 100.0);
    let st = e.status();
    assert_eq!(st.synopses[0].shards, 4);
    assert_eq!(st.synopses[0].items_seen, 1000);
}

#[test]
fn duplicate_build_is_rejected_and_registry_unchanged() {
    let e = engine();
    e.build("b", cm_spec("cm", Scope::WholeSource, 2), false).unwrap();
    let err = e.build("b2", cm_spec("cm", Scope::WholeSource, 3), false).unwrap_err();
    assert_eq!(err, SdeError::DuplicateId("cm".into()));
    assert_eq!(e.status().synopses[0].shards, 2);
}

#[test]
fn stop_then_query_is_unknown() {
    let e = engine();
    e.build("b", cm_spec("a", Scope::WholeSource, 2), false).unwrap();
    e.build("b", cm_spec("b", Scope::WholeSource, 2), false).unwrap();
    e.ingest(rec("x", 0)).unwrap();
    e.stop("a").unwrap();
    assert!(matches!(
        e.query("a", Query::Frequency { item: "x".into() }),
        Err(SdeError::UnknownSynopsis(_))
    ));
    e.ingest(rec("x", 1)).unwrap();
    assert_eq!(freq(&e, "b", "x"), 2.0);
    assert!(matches!(e.stop("a"), Err(SdeError::UnknownSynopsis(_))));
}

#[test]
fn round_robin_balances_shards() {
    let e = engine();
    e.build(
        "b",
        cm_spec("rr", Scope::WholeSource, 4).with_partitioning(Partitioning::RoundRobin),
        false,
    )
    .unwrap();
    for i in 0..10_001u64 {
        e.ingest(rec("same", i)).unwrap();
    }
    e.flush();
    let items = &e.status().synopses[0].shard_items;
    for &n in items {
        assert!((2500..=2501).contains(&n), "{items:?}");
    }
}

#[test]
fn per_stream_states_are_created_lazily() {
    let e = engine();
    e.build("b", cm_spec("ps", Scope::PerStream, 3), false).unwrap();
    for i in 0..500u64 {
        e.ingest(rec(&format!("s{}", i % 50), i)).unwrap();
    }
    e.flush();
    assert_eq!(e.status().synopses[0].states, 50);
    let v = e
        .query_stream("ps", "s7", Query::Frequency { item: "s7".into() })
        .unwrap();
    assert_eq!(v.as_f64(), Some(10.0));
    let v = e
        .query_stream("ps", "never", Query::Frequency { item: "s7".into() })
        .unwrap();
    assert_eq!(v.as_f64(), Some(0.0));
}

#[test]
fn single_stream_only_sees_its_stream() {
    let e = engine();
    e.build("b", cm_spec("one", Scope::SingleStream("A".into()), 5), false)
        .unwrap();
    for s in ["A", "B", "A", "C"] {
        e.ingest(rec(s, 0)).unwrap();
    }
    assert_eq!(freq(&e, "one", "A"), 2.0);
    assert_eq!(e.status().synopses[0].parallelism, 1);
}

#[test]
fn late_records_are_dropped_and_counted() {
    let e = engine();
    e.build(
        "b",
        cm_spec("w", Scope::WholeSource, 1).with_window(WindowSpec::time(1000, 100, 50)),
        false,
    )
    .unwrap();
    e.ingest(rec("a", 500)).unwrap();
    e.ingest(rec("a", 460)).unwrap();
    e.ingest(rec("a", 449)).unwrap();
    assert_eq!(freq(&e, "w", "a"), 2.0);
    assert_eq!(e.status().synopses[0].late, 1);
    assert_eq!(e.status().counters.records_late, 1);
}

#[test]
fn continuous_per_update_emits_once_per_record() {
    let e = engine();
    let out = e.subscribe();
    e.build(
        "b7",
        cm_spec("c", Scope::SingleStream("A".into()), 1).with_continuous(None),
        false,
    )
    .unwrap();
    for i in 0..100 {
        e.ingest(rec("A", i)).unwrap();
    }
    e.flush();
    let got: Vec<Response> = out.try_iter().collect();
    assert_eq!(got.len(), 100);
    let mut seqs: Vec<u64> = got.iter().map(|r| r.seq.unwrap()).collect();
    seqs.sort();
    assert_eq!(seqs, (0..100).collect::<Vec<_>>());
    assert!(got.iter().all(|r| r.request_id == "b7"));
    let last = got.iter().find(|r| r.seq == Some(99)).unwrap();
    assert_eq!(last.value, Some(EstimateValue::Scalar(100.0)));
}

#[test]
fn continuous_whole_source_emits_merged_window_on_close() {
    let e = engine();
    let out = e.subscribe();
    e.build(
        "bw",
        cm_spec("cw", Scope::WholeSource, 3)
            .with_window(WindowSpec::count(20, 10))
            .with_continuous(Some(Query::Frequency { item: "k".into() })),
        false,
    )
    .unwrap();
    for i in 0..45u64 {
        e.ingest(rec(if i % 2 == 0 { "k" } else { "other" }, i)).unwrap();
    }
    e.flush();
    std::thread::sleep(Duration::from_millis(100));
    let mut got: Vec<Response> = out.try_iter().collect();
    got.sort_by_key(|r| r.seq);
    // Windows closing after tuples 10, 20, 30, 40.
    let vals: Vec<f64> = got.iter().map(|r| r.value.as_ref().unwrap().as_f64().unwrap()).collect();
    assert_eq!(vals, vec![5.0, 10.0, 10.0, 10.0]);
}

#[test]
fn red_path_errors_do_not_touch_state() {
    let e = engine();
    e.build("b", cm_spec("cm", Scope::WholeSource, 2), false).unwrap();
    e.ingest(rec("x", 0)).unwrap();
    for bad in ["{", "{}", r#"{"v":1,"verb":"Stop","request_id":"z"}"#, "null"] {
        let r = e.handle_line(bad);
        assert_eq!(r.status, Status::Error, "{bad}");
    }
    assert_eq!(freq(&e, "cm", "x"), 1.0);
    assert_eq!(e.status().counters.malformed_requests, 4);
}

#[test]
fn query_mismatch_and_unknown_are_typed() {
    let e = engine();
    e.build("b", cm_spec("cm", Scope::WholeSource, 2), false).unwrap();
    let r = e.handle(Request::query("q", "cm", Query::Distinct));
    assert_eq!(r.error_code(), Some("query_mismatch"));
    let r = e.handle(Request::query("q", "nope", Query::Distinct));
    assert_eq!(r.error_code(), Some("unknown_synopsis"));
}

#[test]
fn dft_window_comes_from_count_window() {
    let e = engine();
    let spec = SynopsisSpec::new(
        "d",
        SynopsisKind::Dft,
        "trades",
        Scope::WholeSource,
        Params::new().with("threshold", 0.9).with("coefficients", 2),
    )
    .with_parallelism(2)
    .with_value_fields(vec![0])
    .with_window(WindowSpec::count(16, 1));
    e.build("b", spec, false).unwrap();
    assert_eq!(e.spec("d").unwrap().params.u64("windowSize").unwrap(), 16);
    for i in 0..40u64 {
        for s in ["a", "b", "c"] {
            let v = ((i * 7 + s.len() as u64 * 3) % 11) as f64;
            e.ingest(StreamRecord::new("trades", s, i, vec![Scalar::Num(v)])).unwrap();
        }
    }
    match e.query("d", Query::Series { stream: None }).unwrap() {
        EstimateValue::Series(entries) => assert_eq!(entries.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn splitter_cases() {
    let single = cm_spec("g", Scope::SingleStream("A".into()), 1);
    assert_eq!(splitter_route(&single, "s0"), Route::Output);
    let whole = cm_spec("g", Scope::WholeSource, 4);
    assert_eq!(splitter_route(&whole, "s0"), Route::LocalMerge);
    let fed = whole.clone().with_federation("s0", "s1");
    assert_eq!(splitter_route(&fed, "s0"), Route::Union { site: "s1".into() });
    assert_eq!(splitter_route(&fed, "s1"), Route::LocalMerge);
}

#[test]
fn engine_shuts_down_cleanly() {
    let e = engine();
    e.build("b", cm_spec("cm", Scope::WholeSource, 4), false).unwrap();
    for i in 0..200 {
        e.ingest(rec("a", i)).unwrap();
    }
    drop(e);
}

#[test]
fn load_activates_registered_plugins_only() {
    let e = engine();
    let plug = |id: &str, name: &str| {
        SynopsisSpec::new(id, SynopsisKind::Plugin(name.into()), "trades", Scope::WholeSource, Params::new())
            .with_parallelism(2)
    };
    let r = e.handle(Request::load("l1", plug("x", "exactCount")));
    assert!(r.is_ok(), "{r:?}");
    let r = e.handle(Request::load("l2", plug("y", "missing")));
    assert_eq!(r.error_code(), Some("unknown_kind"));
    let r = e.handle(Request::load("l3", cm_spec("z", Scope::WholeSource, 1)));
    assert_eq!(r.status, Status::Error);
    for s in ["a", "b", "a"] {
        e.ingest(rec(s, 0)).unwrap();
    }
    assert_eq!(freq(&e, "x", "a"), 2.0);
    assert_eq!(e.status().synopses.len(), 1);
}
