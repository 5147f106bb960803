mod common;

use proptest::prelude::*;
use sde_core::codec::{decode_state, encode_state};
use sde_core::synopses::PluginRegistry;
use sde_core::{Scalar, SketchState, StreamRecord};

fn record(i: usize, item: u32, v: f64) -> StreamRecord {
    StreamRecord::new(
        "d",
        format!("s{item}"),
        i as u64,
        vec![Scalar::Num(v), Scalar::Num((v * 3.0).sin())],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partitioned_then_merged_equals_single_pass(
        items in prop::collection::vec(0u32..300, 1..600),
        assign in prop::collection::vec(0usize..8, 600),
        parts in 2usize..=8,
    ) {
        for (kind, params) in common::distributive() {
            let fields = sde_core::FieldMap::new(None, vec![]);
            let mut whole = SketchState::new(kind.clone(), params.clone()).unwrap();
            let mut split: Vec<SketchState> = (0..parts).map(|_| whole.clone()).collect();
            for (i, &it) in items.iter().enumerate() {
                let r = record(i, it, 1.0);
                whole.add_record(&r, &fields).unwrap();
                split[assign[i] % parts].add_record(&r, &fields).unwrap();
            }
            let mut merged = split[0].clone();
            for s in &split[1..] {
                merged.merge(s).unwrap();
            }
            prop_assert_eq!(encode_state(&merged), encode_state(&whole), "{}", kind);
        }
    }

    #[test]
    fn every_kind_round_trips_its_frame(
        values in prop::collection::vec((0u32..20, -50.0f64..50.0), 0..200),
    ) {
        let reg = PluginRegistry::new();
        for (kind, params, fields) in common::all_kinds() {
            let mut s = SketchState::new(kind.clone(), params).unwrap();
            for (i, &(it, v)) in values.iter().enumerate() {
                let _ = s.add_record(&record(i, it, v), &fields);
            }
            let bytes = encode_state(&s);
            let back = decode_state(&bytes, &reg).unwrap();
            prop_assert_eq!(encode_state(&back), bytes, "{}", kind);
            prop_assert_eq!(back.items_seen, s.items_seen);
        }
    }

    #[test]
    fn different_seeds_do_not_merge(seed in 1u64..1000) {
        for (kind, params) in common::distributive() {
            let a = SketchState::new(kind.clone(), params.clone().with("seed", seed)).unwrap();
            let mut b = SketchState::new(kind.clone(), params.with("seed", seed + 1)).unwrap();
            prop_assert!(!a.mergeable(&b));
            prop_assert!(b.merge(&a).is_err());
        }
    }
}
