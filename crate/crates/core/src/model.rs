//! Shared domain types: records, synopsis specifications and partition keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Result, SdeError};
use crate::hash::{stable_hash, DEFAULT_SEED};

/// A single field of a record: a number or a string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Num(v) => Some(*v),
            Scalar::Text(_) => None,
        }
    }

    /// Canonical text form used when the scalar is hashed as an item.
    /// Numbers use the shortest round-trip rendering, so `5` and `5.0` agree.
    pub fn canonical(&self) -> String {
        match self {
            Scalar::Num(v) => format!("{v}"),
            Scalar::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Num(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Text(v.to_string())
    }
}

/// One timestamped tuple of a named stream within a named data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    #[serde(rename = "datasetKey")]
    pub dataset_id: String,
    #[serde(rename = "streamID")]
    pub stream_id: String,
    #[serde(rename = "timestamp")]
    pub event_time: u64,
    pub values: Vec<Scalar>,
}

impl StreamRecord {
    pub fn new(
        dataset_id: impl Into<String>,
        stream_id: impl Into<String>,
        event_time: u64,
        values: Vec<Scalar>,
    ) -> Self {
        StreamRecord {
            dataset_id: dataset_id.into(),
            stream_id: stream_id.into(),
            event_time,
            values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_id.is_empty() {
            return Err(SdeError::Record("empty datasetKey".into()));
        }
        if self.stream_id.is_empty() {
            return Err(SdeError::Record("empty streamID".into()));
        }
        if self.values.is_empty() {
            return Err(SdeError::Record("record carries no values".into()));
        }
        Ok(())
    }

    pub fn field(&self, index: usize) -> Result<&Scalar> {
        self.values.get(index).ok_or_else(|| {
            SdeError::Record(format!(
                "field index {index} out of range ({} values)",
                self.values.len()
            ))
        })
    }

    pub fn number(&self, index: usize) -> Result<f64> {
        match self.field(index)? {
            Scalar::Num(v) if v.is_finite() => Ok(*v),
            Scalar::Num(_) => Err(SdeError::Record(format!("field {index} is not finite"))),
            Scalar::Text(s) => Err(SdeError::Record(format!(
                "field {index} is not numeric: {s:?}"
            ))),
        }
    }

    /// Encoded size of the record on the data channel.
    pub fn encoded_len(&self) -> usize {
        serde_json::to_string(self).map(|s| s.len() + 1).unwrap_or(0)
    }
}

/// Synopsis families known to the engine. Anything else is a plugin name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SynopsisKind {
    CountMin,
    BloomFilter,
    FmSketch,
    HyperLogLog,
    AmsSketch,
    Dft,
    Rhp,
    LossyCounting,
    StickySampling,
    ChainSampler,
    GkQuantiles,
    CoreSetTree,
    Plugin(String),
}

impl SynopsisKind {
    pub const BUILTIN: [SynopsisKind; 12] = [
        SynopsisKind::CountMin,
        SynopsisKind::BloomFilter,
        SynopsisKind::FmSketch,
        SynopsisKind::HyperLogLog,
        SynopsisKind::AmsSketch,
        SynopsisKind::Dft,
        SynopsisKind::Rhp,
        SynopsisKind::LossyCounting,
        SynopsisKind::StickySampling,
        SynopsisKind::ChainSampler,
        SynopsisKind::GkQuantiles,
        SynopsisKind::CoreSetTree,
    ];

    pub fn name(&self) -> &str {
        match self {
            SynopsisKind::CountMin => "CountMin",
            SynopsisKind::BloomFilter => "BloomFilter",
            SynopsisKind::FmSketch => "FMSketch",
            SynopsisKind::HyperLogLog => "HyperLogLog",
            SynopsisKind::AmsSketch => "AMSSketch",
            SynopsisKind::Dft => "DFT",
            SynopsisKind::Rhp => "RHP",
            SynopsisKind::LossyCounting => "LossyCounting",
            SynopsisKind::StickySampling => "StickySampling",
            SynopsisKind::ChainSampler => "ChainSampler",
            SynopsisKind::GkQuantiles => "GKQuantiles",
            SynopsisKind::CoreSetTree => "CoreSetTree",
            SynopsisKind::Plugin(name) => name,
        }
    }

    pub fn from_name(name: &str) -> SynopsisKind {
        Self::BUILTIN
            .iter()
            .find(|k| k.name() == name)
            .cloned()
            .unwrap_or_else(|| SynopsisKind::Plugin(name.to_string()))
    }

    /// Kinds that keep an exact tuple window themselves instead of panes.
    pub fn exact_window(&self) -> bool {
        matches!(
            self,
            SynopsisKind::Dft | SynopsisKind::Rhp | SynopsisKind::ChainSampler
        )
    }

    /// Kinds that keep one independent sub-state per stream inside a shard.
    pub fn per_stream_internally(&self) -> bool {
        matches!(self, SynopsisKind::Dft | SynopsisKind::Rhp)
    }

    /// Kinds whose merge is element-wise and bit-exact.
    pub fn distributive(&self) -> bool {
        matches!(
            self,
            SynopsisKind::CountMin
                | SynopsisKind::BloomFilter
                | SynopsisKind::FmSketch
                | SynopsisKind::HyperLogLog
                | SynopsisKind::AmsSketch
        )
    }
}

impl fmt::Display for SynopsisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for SynopsisKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SynopsisKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Ok(SynopsisKind::from_name(&name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "stream")]
pub enum Scope {
    SingleStream(String),
    #[serde(rename = "PerStreamOfSource", alias = "PerStream")]
    PerStream,
    WholeSource,
}

impl Scope {
    pub fn label(&self) -> &'static str {
        match self {
            Scope::SingleStream(_) => "SingleStream",
            Scope::PerStream => "PerStreamOfSource",
            Scope::WholeSource => "WholeSource",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WindowMode {
    #[default]
    None,
    TimeSliding,
    CountSliding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct WindowSpec {
    pub mode: WindowMode,
    #[serde(default)]
    pub length: u64,
    #[serde(default)]
    pub slide: u64,
    #[serde(default, rename = "allowedLateness")]
    pub allowed_lateness: u64,
}

impl WindowSpec {
    pub fn none() -> Self {
        WindowSpec::default()
    }

    pub fn time(length_ms: u64, slide_ms: u64, allowed_lateness: u64) -> Self {
        WindowSpec {
            mode: WindowMode::TimeSliding,
            length: length_ms,
            slide: slide_ms,
            allowed_lateness,
        }
    }

    pub fn count(length: u64, slide: u64) -> Self {
        WindowSpec {
            mode: WindowMode::CountSliding,
            length,
            slide,
            allowed_lateness: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == WindowMode::None {
            return Ok(());
        }
        if self.length == 0 {
            return Err(SdeError::param("window.length", "must be positive"));
        }
        if self.slide == 0 {
            return Err(SdeError::param("window.slide", "must be positive"));
        }
        if self.slide > self.length {
            return Err(SdeError::param("window.slide", "must not exceed window.length"));
        }
        Ok(())
    }

    /// Number of slide panes that make up one window.
    pub fn panes(&self) -> u64 {
        self.length.div_ceil(self.slide.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Partitioning {
    #[default]
    KeyHash,
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederationSpec {
    #[serde(rename = "siteId", default)]
    pub site_id: String,
    #[serde(rename = "responsibleSite")]
    pub responsible_site: String,
}

/// Kind-specific parameters, kept as JSON values in key order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(pub BTreeMap<String, Value>);

impl Params {
    pub fn new() -> Self {
        Params(BTreeMap::new())
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| SdeError::param(key, "expected a number")),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| SdeError::param(key, "missing"))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => {
                if let Some(u) = v.as_u64() {
                    return Ok(Some(u));
                }
                match v.as_f64() {
                    Some(f) if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 => {
                        Ok(Some(f as u64))
                    }
                    _ => Err(SdeError::param(key, "expected a non-negative integer")),
                }
            }
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.opt_u64(key)?
            .ok_or_else(|| SdeError::param(key, "missing"))
    }

    /// `x` with `x` strictly inside (0, 1).
    pub fn unit_interval(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v > 0.0 && v < 1.0 {
            Ok(v)
        } else {
            Err(SdeError::param(key, format!("must lie in (0, 1), got {v}")))
        }
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.opt_u64("seed")?.unwrap_or(DEFAULT_SEED))
    }

    /// Sorted-key JSON, used in state frames.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.0).expect("params serialize")
    }
}

/// Full description of one maintained synopsis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynopsisSpec {
    pub synopsis_id: String,
    pub kind: SynopsisKind,
    pub dataset_id: String,
    pub scope: Scope,
    /// Field holding the item identity; `None` uses the record's stream id.
    pub key_field: Option<usize>,
    pub value_fields: Vec<usize>,
    pub params: Params,
    pub parallelism: u32,
    pub partitioning: Partitioning,
    pub window: WindowSpec,
    pub continuous: bool,
    /// Query evaluated on every continuous emission; kind default if absent.
    pub continuous_query: Option<crate::synopses::Query>,
    pub federation: Option<FederationSpec>,
}

impl SynopsisSpec {
    pub fn new(
        synopsis_id: impl Into<String>,
        kind: SynopsisKind,
        dataset_id: impl Into<String>,
        scope: Scope,
        params: Params,
    ) -> Self {
        SynopsisSpec {
            synopsis_id: synopsis_id.into(),
            kind,
            dataset_id: dataset_id.into(),
            scope,
            key_field: None,
            value_fields: Vec::new(),
            params,
            parallelism: 1,
            partitioning: Partitioning::KeyHash,
            window: WindowSpec::none(),
            continuous: false,
            continuous_query: None,
            federation: None,
        }
    }

    pub fn with_parallelism(mut self, p: u32) -> Self {
        self.parallelism = p;
        self
    }

    pub fn with_partitioning(mut self, p: Partitioning) -> Self {
        self.partitioning = p;
        self
    }

    pub fn with_key_field(mut self, f: usize) -> Self {
        self.key_field = Some(f);
        self
    }

    pub fn with_value_fields(mut self, f: Vec<usize>) -> Self {
        self.value_fields = f;
        self
    }

    pub fn with_window(mut self, w: WindowSpec) -> Self {
        self.window = w;
        self
    }

    pub fn with_continuous(mut self, q: Option<crate::synopses::Query>) -> Self {
        self.continuous = true;
        self.continuous_query = q;
        self
    }

    pub fn with_federation(mut self, site_id: &str, responsible: &str) -> Self {
        self.federation = Some(FederationSpec {
            site_id: site_id.to_string(),
            responsible_site: responsible.to_string(),
        });
        self
    }

    /// Structural validation; kind parameters are checked by the synopsis library.
    pub fn validate(&mut self) -> Result<()> {
        if self.synopsis_id.is_empty() {
            return Err(SdeError::schema("synopsisID", "must not be empty"));
        }
        if self.dataset_id.is_empty() {
            return Err(SdeError::schema("datasetKey", "must not be empty"));
        }
        if self.parallelism == 0 {
            return Err(SdeError::param("parallelism", "must be at least 1"));
        }
        if let Scope::SingleStream(s) = &self.scope {
            if s.is_empty() {
                return Err(SdeError::schema("streamID", "must not be empty"));
            }
            self.parallelism = 1;
        }
        self.window.validate()?;
        if self.kind.per_stream_internally()
            && self.scope == Scope::WholeSource
            && self.partitioning == Partitioning::RoundRobin
        {
            return Err(SdeError::param(
                "partitioning",
                "per-stream kinds need KeyHash partitioning to keep each stream on one shard",
            ));
        }
        if self.kind.exact_window() && self.window.mode == WindowMode::TimeSliding {
            return Err(SdeError::param(
                "window.mode",
                format!("{} keeps a tuple window; use CountSliding", self.kind),
            ));
        }
        if self.continuous
            && self.scope == Scope::WholeSource
            && self.window.mode == WindowMode::None
        {
            return Err(SdeError::param(
                "continuous",
                "continuous WholeSource synopses emit on window close and need a window",
            ));
        }
        if let Some(f) = &self.federation {
            if f.responsible_site.is_empty() {
                return Err(SdeError::schema(
                    "federation.responsibleSite",
                    "federated synopses need a responsible site",
                ));
            }
        }
        Ok(())
    }

    /// Number of shards this synopsis is split into.
    pub fn shard_count(&self) -> u32 {
        match self.scope {
            Scope::SingleStream(_) => 1,
            _ => self.parallelism,
        }
    }

    /// Tuple window used by exact-window kinds, if any.
    pub fn count_window(&self) -> Option<u64> {
        match self.window.mode {
            WindowMode::CountSliding => Some(self.window.length),
            _ => None,
        }
    }

    /// Shard owning `stream_id` under key-hash routing. Data and query paths
    /// both call this, so they always agree.
    pub fn shard_for_stream(&self, stream_id: &str) -> u32 {
        match self.scope {
            Scope::SingleStream(_) => 0,
            _ => (stable_hash(stream_id) % self.parallelism as u64) as u32,
        }
    }
}

/// Routing key produced at registration time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionKey {
    pub synopsis_id: String,
    pub shard: u32,
    /// Stream the key belongs to for per-stream scopes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<String>,
}

pub fn make_partition_keys(
    spec: &SynopsisSpec,
    observed_streams: &BTreeSet<String>,
) -> Vec<PartitionKey> {
    let id = &spec.synopsis_id;
    match &spec.scope {
        Scope::SingleStream(s) => vec![PartitionKey {
            synopsis_id: id.clone(),
            shard: 0,
            stream: Some(s.clone()),
        }],
        Scope::PerStream => observed_streams
            .iter()
            .map(|s| PartitionKey {
                synopsis_id: id.clone(),
                shard: spec.shard_for_stream(s),
                stream: Some(s.clone()),
            })
            .collect(),
        Scope::WholeSource => (0..spec.parallelism)
            .map(|shard| PartitionKey {
                synopsis_id: id.clone(),
                shard,
                stream: None,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scope: Scope, p: u32) -> SynopsisSpec {
        SynopsisSpec::new("s", SynopsisKind::CountMin, "d", scope, Params::new()).with_parallelism(p)
    }

    #[test]
    fn whole_source_gets_one_key_per_shard() {
        let keys = make_partition_keys(&spec(Scope::WholeSource, 4), &BTreeSet::new());
        let shards: Vec<u32> = keys.iter().map(|k| k.shard).collect();
        assert_eq!(shards, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_stream_gets_one_key() {
        let mut s = spec(Scope::SingleStream("AAPL".into()), 3);
        s.validate().unwrap();
        let keys = make_partition_keys(&s, &BTreeSet::new());
        assert_eq!(keys.len(), 1);
        assert_eq!(keys[0].shard, 0);
        assert_eq!(s.parallelism, 1);
    }

    #[test]
    fn per_stream_keys_follow_the_hash() {
        let observed: BTreeSet<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let s = spec(Scope::PerStream, 4);
        let keys = make_partition_keys(&s, &observed);
        assert_eq!(keys.len(), 3);
        for k in &keys {
            let id = k.stream.as_deref().unwrap();
            // Independent recomputation of the routing rule.
            let expect = (xxhash_rust::xxh64::xxh64(id.as_bytes(), 0) % 4) as u32;
            assert_eq!(k.shard, expect);
        }
        assert_eq!(keys, make_partition_keys(&s, &observed));
    }

    #[test]
    fn scalar_canonical_forms() {
        assert_eq!(Scalar::Num(5.0).canonical(), "5");
        assert_eq!(Scalar::Num(0.25).canonical(), "0.25");
        assert_eq!(Scalar::Text("x".into()).canonical(), "x");
    }

    #[test]
    fn window_validation() {
        assert!(WindowSpec::time(10, 20, 0).validate().is_err());
        assert!(WindowSpec::time(0, 0, 0).validate().is_err());
        assert!(WindowSpec::time(300_000, 60_000, 0).validate().is_ok());
        assert_eq!(WindowSpec::time(300_000, 60_000, 0).panes(), 5);
        assert_eq!(WindowSpec::count(10, 3).panes(), 4);
    }

    #[test]
    fn record_validation() {
        assert!(StreamRecord::new("", "a", 0, vec![1.0.into()]).validate().is_err());
        assert!(StreamRecord::new("d", "", 0, vec![1.0.into()]).validate().is_err());
        assert!(StreamRecord::new("d", "a", 0, vec![]).validate().is_err());
        let r = StreamRecord::new("d", "a", 0, vec!["x".into(), 2.0.into()]);
        assert!(r.number(0).is_err());
        assert_eq!(r.number(1).unwrap(), 2.0);
        assert!(r.number(5).is_err());
    }

    #[test]
    fn exact_window_kinds_reject_time_windows() {
        let mut s = SynopsisSpec::new("d", SynopsisKind::Dft, "x", Scope::PerStream, Params::new())
            .with_window(WindowSpec::time(100, 10, 0));
        assert!(matches!(s.validate(), Err(SdeError::Param { .. })));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SynopsisKind::BUILTIN.iter() {
            assert_eq!(&SynopsisKind::from_name(k.name()), k);
        }
        assert_eq!(
            SynopsisKind::from_name("noop"),
            SynopsisKind::Plugin("noop".into())
        );
    }
}
