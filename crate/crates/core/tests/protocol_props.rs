use proptest::prelude::*;
use sde_core::protocol::{format_response, parse_response, Response, Status};
use sde_core::synopses::ItemCount;
use sde_core::{
    format_request, parse_request, EstimateValue, Params, Partitioning, Query, Request, Scope,
    SynopsisKind, SynopsisSpec, WindowSpec,
};

fn kind_params() -> impl Strategy<Value = (SynopsisKind, Params)> {
    prop_oneof![
        (0.001f64..0.5, 0.001f64..0.5).prop_map(|(e, d)| (
            SynopsisKind::CountMin,
            Params::new().with("epsilon", e).with("delta", d)
        )),
        (1u64..16).prop_map(|m| (SynopsisKind::HyperLogLog, Params::new().with("m", m))),
        (100u64..10_000).prop_map(|n| (
            SynopsisKind::BloomFilter,
            Params::new().with("elements", n).with("fpr", 0.01)
        )),
        (0.001f64..0.2).prop_map(|e| (SynopsisKind::GkQuantiles, Params::new().with("epsilon", e))),
        Just((SynopsisKind::Plugin("exactCount".into()), Params::new())),
    ]
}

fn window() -> impl Strategy<Value = WindowSpec> {
    prop_oneof![
        Just(WindowSpec::none()),
        (1u64..100, 1u64..100).prop_map(|(a, b)| WindowSpec::count(a.max(b), a.min(b))),
        (1u64..100_000, 1u64..100_000, 0u64..5000)
            .prop_map(|(a, b, l)| WindowSpec::time(a.max(b), a.min(b), l)),
    ]
}

fn spec() -> impl Strategy<Value = SynopsisSpec> {
    (
        "[a-z][a-z0-9_]{0,10}",
        kind_params(),
        "[a-z]{1,8}",
        prop_oneof![
            Just(Scope::WholeSource),
            Just(Scope::PerStream),
            "[A-Z]{1,5}".prop_map(Scope::SingleStream)
        ],
        1u32..16,
        prop::bool::ANY,
        window(),
        prop::option::of(0usize..4),
        prop::option::of(("s[0-9]", "s[0-9]")),
    )
        .prop_map(|(id, (kind, params), ds, scope, p, rr, w, key, fed)| {
            let mut s = SynopsisSpec::new(&id, kind, &ds, scope, params.with("seed", 5))
                .with_parallelism(p)
                .with_partitioning(if rr { Partitioning::RoundRobin } else { Partitioning::KeyHash })
                .with_window(w);
            if let Some(k) = key {
                s = s.with_key_field(k);
            }
            if let Some((a, b)) = fed {
                s = s.with_federation(&a, &b);
            }
            s
        })
        .prop_filter_map("invalid combination", |mut s| s.validate().ok().map(|_| s))
}

fn query() -> impl Strategy<Value = Query> {
    prop_oneof![
        "[a-zA-Z0-9 ]{0,12}".prop_map(|item| Query::Frequency { item }),
        Just(Query::Distinct),
        Just(Query::SelfJoin),
        (0.0f64..=1.0).prop_map(|phi| Query::Quantile { phi }),
        prop::option::of("[A-Z]{1,4}").prop_map(|stream| Query::Series { stream }),
    ]
}

fn request() -> impl Strategy<Value = Request> {
    prop_oneof![
        ("r[0-9]{1,6}", spec()).prop_map(|(id, s)| {
            if matches!(s.kind, SynopsisKind::Plugin(_)) {
                Request::load(id, s)
            } else {
                Request::build(id, s)
            }
        }),
        ("r[0-9]{1,6}", "[a-z]{1,8}").prop_map(|(id, t)| Request::stop(id, t)),
        ("r[0-9]{1,6}", "[a-z]{1,8}", query(), prop::option::of("[A-Z]{1,4}"), prop::option::of("s[0-9]"))
            .prop_map(|(id, t, q, stream, resp)| {
                let mut r = Request::query(id, t, q);
                r.stream = stream;
                r.responsible_site = resp;
                r
            }),
        "r[0-9]{1,6}".prop_map(Request::status),
    ]
}

fn value() -> impl Strategy<Value = EstimateValue> {
    prop_oneof![
        (-1e12f64..1e12).prop_map(EstimateValue::Scalar),
        prop::bool::ANY.prop_map(EstimateValue::Bool),
        prop::collection::vec(-1e6f64..1e6, 0..8).prop_map(EstimateValue::List),
        prop::collection::vec(("[a-z]{1,4}", 0u64..1000), 0..5).prop_map(|v| EstimateValue::Counts(
            v.into_iter().map(|(item, count)| ItemCount { item, count }).collect()
        )),
        Just(EstimateValue::Empty),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn requests_round_trip(req in request()) {
        let line = format_request(&req);
        let back = parse_request(&line).unwrap();
        prop_assert_eq!(format_request(&back), line);
        prop_assert_eq!(&back.spec, &req.spec);
        prop_assert_eq!(back.verb, req.verb);
        prop_assert_eq!(&back.query, &req.query);
    }

    #[test]
    fn responses_round_trip(v in value(), rid in "[a-z0-9-]{1,10}", seq in prop::option::of(0u64..1000)) {
        let mut r = Response::ok("s-1".into(), &rid, "s").with_value(v);
        r.seq = seq;
        let line = format_response(&r);
        prop_assert_eq!(parse_response(&line).unwrap(), r);
    }

    #[test]
    fn parse_never_panics(s in "\\PC{0,200}") {
        let _ = parse_request(&s);
    }
}

#[test]
fn non_finite_values_never_reach_the_wire() {
    for v in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        let r = Response::ok("x".into(), "r", "s").with_value(EstimateValue::Scalar(v));
        assert_eq!(r.status, Status::Degenerate);
        let line = format_response(&r);
        assert!(!line.contains("NaN") && !line.contains("inf"), "{line}");
        parse_response(&line).unwrap();
    }
}
