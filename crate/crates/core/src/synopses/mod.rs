//! The synopsis library.
//!
//! Every kind implements the same three operations: `add` absorbs one update,
//! `estimate` answers a kind-specific [`Query`], and `merge` folds another
//! state built with the same kind, parameters and seeds into this one.

mod ams;
mod bloom;
mod chain;
mod coreset;
mod countmin;
mod dft;
mod fm;
mod gk;
mod hll;
mod lossy;
mod plugin;
mod rhp;
mod sticky;
pub mod stock;

pub use ams::Ams;
pub use bloom::Bloom;
pub use chain::ChainSampler;
pub use coreset::{dist2, kmeans_cost, CoreSetTree};
pub use countmin::CountMin;
pub use dft::{coefficient_distance2, dft_bucketize, dft_coefficients, Dft, DftGrid, COEFF_BOUND};
pub use fm::Fm;
pub use gk::Gk;
pub use hll::Hll;
pub use lossy::LossyCounting;
pub use plugin::{PluginFactory, PluginRegistry, PluginSynopsis};
pub use rhp::{hamming, rhp_signature, signature_similarity, Rhp};
pub use sticky::StickySampling;

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::derive_seeds;
use crate::model::{Params, Scalar, StreamRecord, SynopsisKind};

/// Kind-specific query payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Query {
    Frequency { item: String },
    Contains { item: String },
    Distinct,
    SelfJoin,
    /// Inner product with another AMS synopsis built with the same parameters.
    InnerProduct { with: String },
    Quantile { phi: f64 },
    FrequentItems {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<f64>,
    },
    Sample,
    Coreset,
    /// Per-stream coefficients (DFT) or signatures (RHP); all streams if `stream` is absent.
    Series {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stream: Option<String>,
    },
    /// Cosine similarity of two streams' signatures (RHP).
    Similarity { a: String, b: String },
    Custom {
        #[serde(default)]
        body: serde_json::Value,
    },
}

impl Query {
    pub fn name(&self) -> &'static str {
        match self {
            Query::Frequency { .. } => "frequency",
            Query::Contains { .. } => "contains",
            Query::Distinct => "distinct",
            Query::SelfJoin => "selfJoin",
            Query::InnerProduct { .. } => "innerProduct",
            Query::Quantile { .. } => "quantile",
            Query::FrequentItems { .. } => "frequentItems",
            Query::Sample => "sample",
            Query::Coreset => "coreset",
            Query::Series { .. } => "series",
            Query::Similarity { .. } => "similarity",
            Query::Custom { .. } => "custom",
        }
    }

    /// Query evaluated for continuous emission when the spec names none.
    pub fn default_for(kind: &SynopsisKind, item: &str, stream: &str) -> Query {
        match kind {
            SynopsisKind::CountMin | SynopsisKind::LossyCounting | SynopsisKind::StickySampling => {
                Query::Frequency {
                    item: item.to_string(),
                }
            }
            SynopsisKind::BloomFilter => Query::Contains {
                item: item.to_string(),
            },
            SynopsisKind::FmSketch | SynopsisKind::HyperLogLog => Query::Distinct,
            SynopsisKind::AmsSketch => Query::SelfJoin,
            SynopsisKind::Dft | SynopsisKind::Rhp => Query::Series {
                stream: Some(stream.to_string()),
            },
            SynopsisKind::ChainSampler => Query::Sample,
            SynopsisKind::GkQuantiles => Query::Quantile { phi: 0.5 },
            SynopsisKind::CoreSetTree => Query::Coreset,
            SynopsisKind::Plugin(_) => Query::Custom {
                body: serde_json::Value::Null,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub stream: String,
    /// Normalized coefficients `[re, im]` for F = 1..=c.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signature: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<u64>,
    /// Set when the window is constant or not yet full.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCount {
    pub item: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub weight: f64,
    pub coords: Vec<f64>,
}

/// Result of an estimate. The shape depends on the kind and the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "camelCase")]
pub enum EstimateValue {
    Scalar(f64),
    Bool(bool),
    List(Vec<f64>),
    /// Complex coefficients as `[re, im]` pairs.
    Coefficients(Vec<[f64; 2]>),
    Signature { bits: u32, words: Vec<u64> },
    Bucketed { value: Box<EstimateValue>, bucket: u64 },
    Series(Vec<SeriesEntry>),
    Counts(Vec<ItemCount>),
    Sample(Vec<Scalar>),
    Points(Vec<WeightedPoint>),
    Custom(serde_json::Value),
    Degenerate(String),
    Empty,
}

impl EstimateValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            EstimateValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, EstimateValue::Degenerate(_))
    }
}

/// Which record fields feed a synopsis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldMap {
    /// Item identity; `None` uses the stream id.
    pub key: Option<usize>,
    pub values: Vec<usize>,
}

impl FieldMap {
    pub fn new(key: Option<usize>, values: Vec<usize>) -> Self {
        FieldMap { key, values }
    }
}

/// One unit of input, already extracted from a record.
#[derive(Debug, Clone)]
pub enum Update<'a> {
    Item(&'a str),
    Weighted(&'a str, i64),
    Value(f64),
    Series(&'a str, f64),
    Element(Scalar),
    Point(&'a [f64]),
    Record(&'a StreamRecord, &'a FieldMap),
}

impl Update<'_> {
    fn shape(&self) -> &'static str {
        match self {
            Update::Item(_) => "item",
            Update::Weighted(..) => "weighted item",
            Update::Value(_) => "value",
            Update::Series(..) => "series value",
            Update::Element(_) => "element",
            Update::Point(_) => "point",
            Update::Record(..) => "record",
        }
    }
}

fn wrong_update(kind: &SynopsisKind, u: &Update) -> SdeError {
    SdeError::Record(format!("{kind} cannot absorb a {}", u.shape()))
}

pub(crate) fn mismatch(kind: &SynopsisKind, q: &Query) -> SdeError {
    SdeError::QueryMismatch {
        kind: kind.to_string(),
        query: q.name().to_string(),
    }
}

#[derive(Debug)]
pub enum Payload {
    CountMin(CountMin),
    Bloom(Bloom),
    Fm(Fm),
    Hll(Hll),
    Ams(Ams),
    Dft(Dft),
    Rhp(Rhp),
    Lossy(LossyCounting),
    Sticky(StickySampling),
    Chain(ChainSampler),
    Gk(Gk),
    CoreSet(CoreSetTree),
    Plugin(Box<dyn PluginSynopsis>),
}

impl Clone for Payload {
    fn clone(&self) -> Self {
        match self {
            Payload::CountMin(x) => Payload::CountMin(x.clone()),
            Payload::Bloom(x) => Payload::Bloom(x.clone()),
            Payload::Fm(x) => Payload::Fm(x.clone()),
            Payload::Hll(x) => Payload::Hll(x.clone()),
            Payload::Ams(x) => Payload::Ams(x.clone()),
            Payload::Dft(x) => Payload::Dft(x.clone()),
            Payload::Rhp(x) => Payload::Rhp(x.clone()),
            Payload::Lossy(x) => Payload::Lossy(x.clone()),
            Payload::Sticky(x) => Payload::Sticky(x.clone()),
            Payload::Chain(x) => Payload::Chain(x.clone()),
            Payload::Gk(x) => Payload::Gk(x.clone()),
            Payload::CoreSet(x) => Payload::CoreSet(x.clone()),
            Payload::Plugin(x) => Payload::Plugin(x.clone_box()),
        }
    }
}

impl PartialEq for Payload {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Payload::CountMin(a), Payload::CountMin(b)) => a == b,
            (Payload::Bloom(a), Payload::Bloom(b)) => a == b,
            (Payload::Fm(a), Payload::Fm(b)) => a == b,
            (Payload::Hll(a), Payload::Hll(b)) => a == b,
            (Payload::Ams(a), Payload::Ams(b)) => a == b,
            (Payload::Dft(a), Payload::Dft(b)) => a == b,
            (Payload::Rhp(a), Payload::Rhp(b)) => a == b,
            (Payload::Lossy(a), Payload::Lossy(b)) => a == b,
            (Payload::Sticky(a), Payload::Sticky(b)) => a == b,
            (Payload::Chain(a), Payload::Chain(b)) => a == b,
            (Payload::Gk(a), Payload::Gk(b)) => a == b,
            (Payload::CoreSet(a), Payload::CoreSet(b)) => a == b,
            (Payload::Plugin(a), Payload::Plugin(b)) => a.encode() == b.encode(),
            _ => false,
        }
    }
}

impl Payload {
    pub(crate) fn encode(&self, w: &mut Writer) {
        match self {
            Payload::CountMin(x) => x.encode(w),
            Payload::Bloom(x) => x.encode(w),
            Payload::Fm(x) => x.encode(w),
            Payload::Hll(x) => x.encode(w),
            Payload::Ams(x) => x.encode(w),
            Payload::Dft(x) => x.encode(w),
            Payload::Rhp(x) => x.encode(w),
            Payload::Lossy(x) => x.encode(w),
            Payload::Sticky(x) => x.encode(w),
            Payload::Chain(x) => x.encode(w),
            Payload::Gk(x) => x.encode(w),
            Payload::CoreSet(x) => x.encode(w),
            Payload::Plugin(x) => w.buf.extend_from_slice(&x.encode()),
        }
    }

    pub(crate) fn decode(
        template: &Payload,
        r: &mut Reader,
        params: &Params,
        plugins: &PluginRegistry,
    ) -> Result<Payload> {
        Ok(match template {
            Payload::CountMin(t) => Payload::CountMin(t.decode(r)?),
            Payload::Bloom(t) => Payload::Bloom(t.decode(r)?),
            Payload::Fm(t) => Payload::Fm(t.decode(r)?),
            Payload::Hll(t) => Payload::Hll(t.decode(r)?),
            Payload::Ams(t) => Payload::Ams(t.decode(r)?),
            Payload::Dft(t) => Payload::Dft(t.decode(r)?),
            Payload::Rhp(t) => Payload::Rhp(t.decode(r)?),
            Payload::Lossy(t) => Payload::Lossy(t.decode(r)?),
            Payload::Sticky(t) => Payload::Sticky(t.decode(r)?),
            Payload::Chain(t) => Payload::Chain(t.decode(r)?),
            Payload::Gk(t) => Payload::Gk(t.decode(r)?),
            Payload::CoreSet(t) => Payload::CoreSet(t.decode(r)?),
            Payload::Plugin(t) => {
                let name = t.kind_name().to_string();
                let factory = plugins
                    .get(&name)
                    .ok_or_else(|| SdeError::UnknownKind(name.clone()))?;
                let rest = r.take_rest();
                Payload::Plugin(factory.decode(params, rest)?)
            }
        })
    }
}

/// Kind-specific summary state plus the metadata needed to merge and ship it.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchState {
    pub kind: SynopsisKind,
    pub params: Params,
    pub seeds: Vec<u64>,
    pub items_seen: u64,
    pub payload: Payload,
}

impl SketchState {
    /// Empty state of a built-in kind.
    pub fn new(kind: SynopsisKind, params: Params) -> Result<Self> {
        Self::with_plugins(kind, params, &PluginRegistry::new())
    }

    pub fn with_plugins(kind: SynopsisKind, params: Params, plugins: &PluginRegistry) -> Result<Self> {
        let master = params.seed()?;
        let seeds_for = |n: usize| derive_seeds(master, n);
        let (seeds, payload) = match &kind {
            SynopsisKind::CountMin => {
                let (w, d) = CountMin::dims(&params)?;
                let s = seeds_for(d);
                (s.clone(), Payload::CountMin(CountMin::new(w, d, s)))
            }
            SynopsisKind::BloomFilter => {
                let s = seeds_for(2);
                (s.clone(), Payload::Bloom(Bloom::from_params(&params, s)?))
            }
            SynopsisKind::FmSketch => {
                let s = seeds_for(1);
                (s.clone(), Payload::Fm(Fm::from_params(&params, s[0])?))
            }
            SynopsisKind::HyperLogLog => {
                let s = seeds_for(1);
                (s.clone(), Payload::Hll(Hll::from_params(&params, s[0])?))
            }
            SynopsisKind::AmsSketch => {
                let (w, d) = Ams::dims(&params)?;
                let s = seeds_for(1 + 6 * d);
                (s.clone(), Payload::Ams(Ams::new(w, d, &s)))
            }
            SynopsisKind::Dft => (Vec::new(), Payload::Dft(Dft::from_params(&params)?)),
            SynopsisKind::Rhp => {
                let s = seeds_for(1);
                (s.clone(), Payload::Rhp(Rhp::from_params(&params, s[0])?))
            }
            SynopsisKind::LossyCounting => {
                (Vec::new(), Payload::Lossy(LossyCounting::from_params(&params)?))
            }
            SynopsisKind::StickySampling => {
                let s = seeds_for(1);
                (s.clone(), Payload::Sticky(StickySampling::from_params(&params, s[0])?))
            }
            SynopsisKind::ChainSampler => {
                let s = seeds_for(1);
                (s.clone(), Payload::Chain(ChainSampler::from_params(&params, s[0])?))
            }
            SynopsisKind::GkQuantiles => (Vec::new(), Payload::Gk(Gk::from_params(&params)?)),
            SynopsisKind::CoreSetTree => {
                let s = seeds_for(1);
                (s.clone(), Payload::CoreSet(CoreSetTree::from_params(&params, s[0])?))
            }
            SynopsisKind::Plugin(name) => {
                let factory = plugins
                    .get(name)
                    .ok_or_else(|| SdeError::UnknownKind(name.clone()))?;
                let s = seeds_for(factory.seed_count());
                let p = factory.create(&params, &s)?;
                (s, Payload::Plugin(p))
            }
        };
        Ok(SketchState {
            kind,
            params,
            seeds,
            items_seen: 0,
            payload,
        })
    }

    /// Fresh empty state with the same kind, parameters and seeds.
    pub fn empty_like(&self) -> SketchState {
        let mut s = self.clone();
        s.items_seen = 0;
        s.payload = match &self.payload {
            Payload::Plugin(p) => Payload::Plugin(p.empty()),
            _ => {
                SketchState::new(self.kind.clone(), self.params.clone())
                    .expect("params already validated")
                    .payload
            }
        };
        s
    }

    pub fn mergeable(&self, other: &SketchState) -> bool {
        self.kind == other.kind && self.params == other.params && self.seeds == other.seeds
    }

    /// Pulls the update this kind needs out of a record. Fails without side effects.
    pub fn add_record(&mut self, rec: &StreamRecord, fields: &FieldMap) -> Result<()> {
        let item_owned;
        let item: &str = match fields.key {
            Some(i) => {
                item_owned = rec.field(i)?.canonical();
                &item_owned
            }
            None => &rec.stream_id,
        };
        let value_index = fields.values.first().copied().unwrap_or(0);
        match &self.kind {
            SynopsisKind::CountMin | SynopsisKind::AmsSketch if !fields.values.is_empty() => {
                let v = rec.number(value_index)?;
                if v.fract() != 0.0 || v.abs() > (1u64 << 53) as f64 {
                    return Err(SdeError::Record(format!(
                        "weight field {value_index} must be integral, got {v}"
                    )));
                }
                self.add(Update::Weighted(item, v as i64))
            }
            SynopsisKind::CountMin
            | SynopsisKind::AmsSketch
            | SynopsisKind::BloomFilter
            | SynopsisKind::FmSketch
            | SynopsisKind::HyperLogLog
            | SynopsisKind::LossyCounting
            | SynopsisKind::StickySampling => self.add(Update::Item(item)),
            SynopsisKind::Dft | SynopsisKind::Rhp => {
                let v = rec.number(value_index)?;
                self.add(Update::Series(&rec.stream_id, v))
            }
            SynopsisKind::GkQuantiles => {
                let v = rec.number(value_index)?;
                self.add(Update::Value(v))
            }
            SynopsisKind::ChainSampler => {
                let e = match fields.values.first() {
                    Some(&i) => rec.field(i)?.clone(),
                    None => Scalar::Text(item.to_string()),
                };
                self.add(Update::Element(e))
            }
            SynopsisKind::CoreSetTree => {
                let point = fields
                    .values
                    .iter()
                    .map(|&i| rec.number(i))
                    .collect::<Result<Vec<f64>>>()?;
                self.add(Update::Point(&point))
            }
            SynopsisKind::Plugin(_) => self.add(Update::Record(rec, fields)),
        }
    }

    /// Absorbs one update. On error the state is unchanged.
    pub fn add(&mut self, u: Update) -> Result<()> {
        let kind = &self.kind;
        match (&mut self.payload, &u) {
            (Payload::CountMin(s), Update::Item(i)) => s.add(i.as_bytes(), 1),
            (Payload::CountMin(s), Update::Weighted(i, c)) => {
                if *c < 0 {
                    return Err(SdeError::Record("negative weight".into()));
                }
                s.add(i.as_bytes(), *c as u64)
            }
            (Payload::Bloom(s), Update::Item(i)) => s.insert(i.as_bytes()),
            (Payload::Fm(s), Update::Item(i)) => s.add(i.as_bytes()),
            (Payload::Hll(s), Update::Item(i)) => s.add(i.as_bytes()),
            (Payload::Ams(s), Update::Item(i)) => s.add(i.as_bytes(), 1),
            (Payload::Ams(s), Update::Weighted(i, c)) => s.add(i.as_bytes(), *c),
            (Payload::Dft(s), Update::Series(stream, v)) => s.add(stream, *v)?,
            (Payload::Rhp(s), Update::Series(stream, v)) => s.add(stream, *v)?,
            (Payload::Lossy(s), Update::Item(i)) => s.add(i),
            (Payload::Sticky(s), Update::Item(i)) => s.add(i),
            (Payload::Chain(s), Update::Element(e)) => s.add(e.clone()),
            (Payload::Chain(s), Update::Item(i)) => s.add(Scalar::Text(i.to_string())),
            (Payload::Gk(s), Update::Value(v)) => {
                if !v.is_finite() {
                    return Err(SdeError::Record("value is not finite".into()));
                }
                s.insert(*v)
            }
            (Payload::CoreSet(s), Update::Point(p)) => s.add(p)?,
            (Payload::Plugin(s), u) => s.add(u)?,
            (_, u) => return Err(wrong_update(kind, u)),
        }
        self.items_seen += 1;
        Ok(())
    }

    pub fn estimate(&self, q: &Query) -> Result<EstimateValue> {
        let kind = &self.kind;
        match (&self.payload, q) {
            (Payload::CountMin(s), Query::Frequency { item }) => {
                Ok(EstimateValue::Scalar(s.frequency(item.as_bytes()) as f64))
            }
            (Payload::Bloom(s), Query::Contains { item }) => {
                Ok(EstimateValue::Bool(s.contains(item.as_bytes())))
            }
            (Payload::Fm(s), Query::Distinct) => Ok(EstimateValue::Scalar(s.estimate())),
            (Payload::Hll(s), Query::Distinct) => Ok(EstimateValue::Scalar(s.estimate())),
            (Payload::Ams(s), Query::SelfJoin) => Ok(EstimateValue::Scalar(s.self_join())),
            (Payload::Dft(s), Query::Series { stream }) => Ok(s.series(stream.as_deref())),
            (Payload::Rhp(s), Query::Series { stream }) => Ok(s.series(stream.as_deref())),
            (Payload::Rhp(s), Query::Similarity { a, b }) => s.similarity(a, b),
            (Payload::Lossy(s), Query::Frequency { item }) => {
                Ok(EstimateValue::Scalar(s.frequency(item) as f64))
            }
            (Payload::Lossy(s), Query::FrequentItems { support }) => {
                s.frequent(*support).map(EstimateValue::Counts)
            }
            (Payload::Sticky(s), Query::Frequency { item }) => {
                Ok(EstimateValue::Scalar(s.frequency(item) as f64))
            }
            (Payload::Sticky(s), Query::FrequentItems { support }) => {
                s.frequent(*support).map(EstimateValue::Counts)
            }
            (Payload::Chain(s), Query::Sample) => Ok(EstimateValue::Sample(s.sample())),
            (Payload::Gk(s), Query::Quantile { phi }) => {
                if !(0.0..=1.0).contains(phi) {
                    return Err(SdeError::param("phi", "must lie in [0, 1]"));
                }
                Ok(s
                    .quantile(*phi)
                    .map(EstimateValue::Scalar)
                    .unwrap_or(EstimateValue::Empty))
            }
            (Payload::CoreSet(s), Query::Coreset) => Ok(EstimateValue::Points(s.coreset())),
            (Payload::Plugin(s), q) => s.estimate(q),
            (_, q) => Err(mismatch(kind, q)),
        }
    }

    /// Inner product of two AMS states built with identical parameters and seeds.
    pub fn inner_product(&self, other: &SketchState) -> Result<f64> {
        self.check_mergeable(other)?;
        match (&self.payload, &other.payload) {
            (Payload::Ams(a), Payload::Ams(b)) => Ok(a.inner_product(b)),
            _ => Err(mismatch(
                &self.kind,
                &Query::InnerProduct {
                    with: String::new(),
                },
            )),
        }
    }

    fn check_mergeable(&self, other: &SketchState) -> Result<()> {
        if self.mergeable(other) {
            return Ok(());
        }
        Err(SdeError::Merge {
            left: format!("{} {} seeds={:?}", self.kind, self.params.canonical_json(), self.seeds),
            right: format!("{} {} seeds={:?}", other.kind, other.params.canonical_json(), other.seeds),
        })
    }

    /// Folds `other` into `self`.
    pub fn merge(&mut self, other: &SketchState) -> Result<()> {
        self.check_mergeable(other)?;
        if other.items_seen == 0 && other.payload_is_empty() {
            return Ok(());
        }
        if self.items_seen == 0 && self.payload_is_empty() {
            self.payload = other.payload.clone();
            self.items_seen = other.items_seen;
            return Ok(());
        }
        match (&mut self.payload, &other.payload) {
            (Payload::CountMin(a), Payload::CountMin(b)) => a.merge(b),
            (Payload::Bloom(a), Payload::Bloom(b)) => a.merge(b),
            (Payload::Fm(a), Payload::Fm(b)) => a.merge(b),
            (Payload::Hll(a), Payload::Hll(b)) => a.merge(b),
            (Payload::Ams(a), Payload::Ams(b)) => a.merge(b),
            (Payload::Dft(a), Payload::Dft(b)) => a.merge(b)?,
            (Payload::Rhp(a), Payload::Rhp(b)) => a.merge(b)?,
            (Payload::Lossy(a), Payload::Lossy(b)) => a.merge(b),
            (Payload::Sticky(a), Payload::Sticky(b)) => a.merge(b),
            (Payload::Chain(a), Payload::Chain(b)) => a.merge(b),
            (Payload::Gk(a), Payload::Gk(b)) => a.merge(b),
            (Payload::CoreSet(a), Payload::CoreSet(b)) => a.merge(b),
            (Payload::Plugin(a), Payload::Plugin(b)) => a.merge(b.as_ref())?,
            _ => unreachable!("mergeable states share a payload variant"),
        }
        self.items_seen += other.items_seen;
        Ok(())
    }

    fn payload_is_empty(&self) -> bool {
        match &self.payload {
            Payload::Dft(d) => d.is_empty(),
            Payload::Rhp(r) => r.is_empty(),
            _ => true,
        }
    }

    /// Replaces per-stream windows with their coefficient or signature
    /// tables. Used before shipping DFT/RHP states to another site.
    pub fn to_series_table(&self) -> SketchState {
        let mut s = self.clone();
        match &mut s.payload {
            Payload::Dft(d) => d.tabulate(),
            Payload::Rhp(r) => r.tabulate(),
            _ => {}
        }
        s
    }

    /// Approximate in-memory footprint of the payload in bytes.
    pub fn encoded_len(&self) -> usize {
        crate::codec::encode_state(self).len()
    }
}

/// `ceil(x)` as usize for positive sizing formulas.
pub(crate) fn ceil_usize(x: f64) -> usize {
    x.ceil().max(1.0) as usize
}
