// Shared helpers for the integration tests.
#![allow(dead_code)]

use sde_core::{FieldMap, Params, SynopsisKind};

/// A valid parameter set and field mapping for every built-in kind.
pub fn all_kinds() -> Vec<(SynopsisKind, Params, FieldMap)> {
    let items = FieldMap::new(None, vec![]);
    let first = FieldMap::new(None, vec![0]);
    vec![
        (SynopsisKind::CountMin, Params::new().with("epsilon", 0.01).with("delta", 0.01), items.clone()),
        (SynopsisKind::BloomFilter, Params::new().with("elements", 1000).with("fpr", 0.01), items.clone()),
        (SynopsisKind::FmSketch, Params::new().with("bitmapSize", 32).with("epsilon", 0.2).with("delta", 0.2), items.clone()),
        (SynopsisKind::HyperLogLog, Params::new().with("m", 8), items.clone()),
        (SynopsisKind::AmsSketch, Params::new().with("epsilon", 0.1).with("delta", 0.1), items.clone()),
        (SynopsisKind::Dft, Params::new().with("threshold", 0.9).with("coefficients", 3).with("windowSize", 16), first.clone()),
        (SynopsisKind::Rhp, Params::new().with("bitmapSize", 64).with("windowSize", 16), first.clone()),
        (SynopsisKind::LossyCounting, Params::new().with("epsilon", 0.01), items.clone()),
        (SynopsisKind::StickySampling, Params::new().with("support", 0.1).with("epsilon", 0.01).with("delta", 0.1), items.clone()),
        (SynopsisKind::ChainSampler, Params::new().with("sampleSize", 8).with("windowSize", 50), first.clone()),
        (SynopsisKind::GkQuantiles, Params::new().with("epsilon", 0.01), first),
        (SynopsisKind::CoreSetTree, Params::new().with("bucketSize", 10).with("dimensions", 2), FieldMap::new(None, vec![0, 1])),
    ]
}

/// Kinds whose merge is element-wise.
pub fn distributive() -> Vec<(SynopsisKind, Params)> {
    all_kinds()
        .into_iter()
        .filter(|(k, _, _)| k.distributive())
        .map(|(k, p, _)| (k, p))
        .collect()
}
