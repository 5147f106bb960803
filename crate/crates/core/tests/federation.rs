use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use sde_core::channels::{bind, serve_requests, serve_union, send_requests, Handler};
use sde_core::federation::{CommLedger, FederatedSite, SimFederation, SiteConfig, TcpTransport};
use sde_core::protocol::Status;
use sde_core::{
    Engine, EngineConfig, Params, Query, Request, Scalar, Scope, StreamRecord, SynopsisKind, SynopsisSpec,
};

fn hll() -> SynopsisSpec {
    SynopsisSpec::new("h", SynopsisKind::HyperLogLog, "d", Scope::WholeSource, Params::new().with("m", 8))
        .with_parallelism(2)
}

fn feed(engine: &Engine, prefix: &str, n: usize) {
    for i in 0..n {
        engine
            .ingest(StreamRecord::new("d", format!("{prefix}{i}"), i as u64, vec![Scalar::Num(1.0)]))
            .unwrap();
    }
}

#[test]
fn two_sites_over_tcp() {
    let ids = ["east", "west"];
    let listeners: Vec<_> = ids.iter().map(|_| bind("127.0.0.1:0").unwrap()).collect();
    let addrs: Vec<String> = listeners.iter().map(|l| l.local_addr().unwrap().to_string()).collect();
    let peers = format!("{} {}\n{} {}\n", ids[0], addrs[0], ids[1], addrs[1]);
    let mut sites = Vec::new();
    let mut servers = Vec::new();
    for (id, l) in ids.iter().zip(listeners) {
        let cfg = SiteConfig::from_peers(id, &peers).unwrap();
        let engine = Arc::new(Engine::start(EngineConfig::default().with_site(id).with_workers(2)));
        let transport = Arc::new(TcpTransport::new(cfg.peers.clone()));
        let site = FederatedSite::start(engine, cfg, transport, Arc::new(CommLedger::new()), Duration::from_secs(5))
            .unwrap();
        servers.push(serve_union(l, site.union_sender()).unwrap());
        sites.push(site);
    }
    for s in &sites {
        let r = s.handle(Request::build("b", hll().with_federation(s.site_id(), "west")));
        assert!(r.is_ok(), "{r:?}");
    }
    feed(sites[0].engine(), "e", 3000);
    feed(sites[1].engine(), "w", 2000);

    // Oracle: merge the two local states directly.
    let mut merged = sites[0].engine().snapshot("h", None).unwrap();
    merged.merge(&sites[1].engine().snapshot("h", None).unwrap()).unwrap();
    let want = merged.estimate(&Query::Distinct).unwrap();

    let req_server = serve_requests(bind("127.0.0.1:0").unwrap(), Arc::new(sites[1].clone()) as Arc<dyn Handler>)
        .unwrap();
    let line = sde_core::format_request(&Request::query("fq", "h", Query::Distinct));
    let got = send_requests(&req_server.local_addr().to_string(), &[line], Duration::from_secs(10)).unwrap();
    assert_eq!(got[0].status, Status::Ok, "{:?}", got[0]);
    assert_eq!(got[0].value, Some(want));
    let link = sites[0].ledger().link("h", "east", "west");
    assert_eq!(link.frames, 1);
    assert!(link.raw_bytes > 10 * link.bytes, "{link:?}");
    assert!(servers[1].lines() >= 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn merge_location_does_not_change_the_answer(
        sizes in prop::collection::vec(0usize..800, 3),
        item in 0usize..50,
    ) {
        let fed = SimFederation::new(3, 1, Duration::from_secs(5)).unwrap();
        let cm = SynopsisSpec::new(
            "cm",
            SynopsisKind::CountMin,
            "d",
            Scope::WholeSource,
            Params::new().with("epsilon", 0.02).with("delta", 0.05),
        );
        fed.build_all(&cm, "site0").unwrap();
        fed.build_all(&hll(), "site0").unwrap();
        for (i, n) in sizes.iter().enumerate() {
            for t in 0..*n {
                fed.site(i).engine()
                    .ingest(StreamRecord::new("d", format!("i{}", (t * (i + 1)) % 97), t as u64, vec![Scalar::Num(1.0)]))
                    .unwrap();
            }
        }
        for (id, q) in [("cm", Query::Frequency { item: format!("i{item}") }), ("h", Query::Distinct)] {
            let mut answers = Vec::new();
            for r in 0..3 {
                let site = format!("site{r}");
                let req = Request::query(format!("{id}-{r}"), id, q.clone()).with_responsible_site(&site);
                let resp = fed.site(r).handle(req);
                prop_assert_eq!(resp.status, Status::Ok);
                answers.push(resp.value);
            }
            prop_assert_eq!(&answers[0], &answers[1]);
            prop_assert_eq!(&answers[1], &answers[2]);
        }
        prop_assert_eq!(fed.ledger.total_bytes(), fed.network.bytes_written());
    }
}

#[test]
fn plugin_states_merge_across_sites() {
    let fed = SimFederation::new(3, 1, Duration::from_secs(5)).unwrap();
    let s = SynopsisSpec::new("x", SynopsisKind::Plugin("exactCount".into()), "d", Scope::WholeSource, Params::new());
    fed.build_all(&s, "site1").unwrap();
    for (i, site) in fed.sites().iter().enumerate() {
        feed(site.engine(), "k", 10 * (i + 1));
    }
    let r = fed.site(1).handle(Request::query("q", "x", Query::Frequency { item: "k3".into() }));
    assert_eq!(r.value.and_then(|v| v.as_f64()), Some(3.0));
    let r = fed.site(1).handle(Request::query("q2", "x", Query::Custom { body: serde_json::Value::Null }));
    assert_eq!(r.value.and_then(|v| v.as_f64()), Some(60.0));
}
