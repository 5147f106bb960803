//! Newline-delimited JSON request/response protocol.
//!
//! Requests are parsed by hand from a `serde_json::Value` so that every schema
//! problem names the offending field. Responses serialize through a struct
//! whose field order is the wire order.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, SdeError};
use crate::model::{
    FederationSpec, Params, Partitioning, Scope, SynopsisKind, SynopsisSpec, WindowMode, WindowSpec,
};
use crate::synopses::{EstimateValue, Query};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verb {
    Build,
    Stop,
    Load,
    AdHocQuery,
    Status,
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Build => "Build",
            Verb::Stop => "Stop",
            Verb::Load => "Load",
            Verb::AdHocQuery => "AdHocQuery",
            Verb::Status => "Status",
        }
    }

    fn from_name(s: &str) -> Option<Verb> {
        [Verb::Build, Verb::Stop, Verb::Load, Verb::AdHocQuery, Verb::Status]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub request_id: String,
    pub verb: Verb,
    pub target: Option<String>,
    /// Full synopsis description for Build and Load.
    pub spec: Option<SynopsisSpec>,
    pub query: Option<Query>,
    /// Stream addressed by a query on a per-stream synopsis.
    pub stream: Option<String>,
    pub responsible_site: Option<String>,
}

impl Request {
    pub fn build(request_id: impl Into<String>, spec: SynopsisSpec) -> Request {
        Request {
            request_id: request_id.into(),
            verb: Verb::Build,
            target: Some(spec.synopsis_id.clone()),
            spec: Some(spec),
            query: None,
            stream: None,
            responsible_site: None,
        }
    }

    pub fn load(request_id: impl Into<String>, spec: SynopsisSpec) -> Request {
        Request {
            verb: Verb::Load,
            ..Request::build(request_id, spec)
        }
    }

    pub fn stop(request_id: impl Into<String>, synopsis_id: impl Into<String>) -> Request {
        Request {
            request_id: request_id.into(),
            verb: Verb::Stop,
            target: Some(synopsis_id.into()),
            spec: None,
            query: None,
            stream: None,
            responsible_site: None,
        }
    }

    pub fn query(request_id: impl Into<String>, synopsis_id: impl Into<String>, q: Query) -> Request {
        Request {
            request_id: request_id.into(),
            verb: Verb::AdHocQuery,
            target: Some(synopsis_id.into()),
            spec: None,
            query: Some(q),
            stream: None,
            responsible_site: None,
        }
    }

    pub fn status(request_id: impl Into<String>) -> Request {
        Request {
            request_id: request_id.into(),
            verb: Verb::Status,
            target: None,
            spec: None,
            query: None,
            stream: None,
            responsible_site: None,
        }
    }

    pub fn with_stream(mut self, stream: impl Into<String>) -> Request {
        self.stream = Some(stream.into());
        self
    }

    pub fn with_responsible_site(mut self, site: impl Into<String>) -> Request {
        self.responsible_site = Some(site.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
    Degenerate,
    /// Accepted here; the final answer appears on another site's output channel.
    Forwarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&SdeError> for ErrorBody {
    fn from(e: &SdeError) -> Self {
        ErrorBody {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEntry {
    #[serde(rename = "synopsisID")]
    pub synopsis_id: String,
    pub kind: SynopsisKind,
    #[serde(rename = "datasetKey")]
    pub dataset_id: String,
    pub param: Params,
    pub scope: Scope,
    pub parallelism: u32,
    pub partitioning: Partitioning,
    pub window: WindowSpec,
    pub continuous: bool,
    pub federated: bool,
    #[serde(rename = "responsibleSite", default, skip_serializing_if = "Option::is_none")]
    pub responsible_site: Option<String>,
    pub items_seen: u64,
    pub shards: u32,
    /// Per-stream states created so far (one per shard for other scopes).
    pub states: u64,
    pub shard_items: Vec<u64>,
    pub rejected: u64,
    pub late: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineCounters {
    pub records_in: u64,
    pub records_unrouted: u64,
    pub records_late: u64,
    pub requests: u64,
    pub malformed_requests: u64,
    pub unknown_fields: u64,
    pub emissions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub site_id: String,
    pub workers: usize,
    pub plugins: Vec<String>,
    pub synopses: Vec<StatusEntry>,
    pub counters: EngineCounters,
}

/// One answer line. Field order here is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u64,
    pub response_id: String,
    pub request_id: String,
    #[serde(rename = "synopsisID", default, skip_serializing_if = "Option::is_none")]
    pub synopsis_id: Option<String>,
    pub status: Status,
    #[serde(rename = "param", default, skip_serializing_if = "Option::is_none")]
    pub params_echo: Option<Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<EstimateValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status_report: Option<StatusReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    pub site_id: String,
    /// Sequence number of a continuous emission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl Response {
    fn base(response_id: String, request_id: &str, site_id: &str, status: Status) -> Response {
        Response {
            v: PROTOCOL_VERSION,
            response_id,
            request_id: request_id.to_string(),
            synopsis_id: None,
            status,
            params_echo: None,
            value: None,
            status_report: None,
            error: None,
            site_id: site_id.to_string(),
            seq: None,
        }
    }

    pub fn ok(response_id: String, request_id: &str, site_id: &str) -> Response {
        Self::base(response_id, request_id, site_id, Status::Ok)
    }

    pub fn error(response_id: String, request_id: &str, site_id: &str, e: &SdeError) -> Response {
        let mut r = Self::base(response_id, request_id, site_id, Status::Error);
        r.error = Some(e.into());
        r
    }

    pub fn forwarded(response_id: String, request_id: &str, site_id: &str) -> Response {
        Self::base(response_id, request_id, site_id, Status::Forwarded)
    }

    /// Attaches an estimate. Degenerate or non-finite values switch the
    /// status so that no NaN ever reaches the wire.
    pub fn with_value(mut self, value: EstimateValue) -> Response {
        let value = if is_finite(&value) {
            value
        } else {
            EstimateValue::Degenerate("estimate is not finite".into())
        };
        if value.is_degenerate() && self.status == Status::Ok {
            self.status = Status::Degenerate;
        }
        self.value = Some(value);
        self
    }

    pub fn with_synopsis(mut self, id: &str, params: &Params) -> Response {
        self.synopsis_id = Some(id.to_string());
        self.params_echo = Some(params.clone());
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn error_code(&self) -> Option<&str> {
        self.error.as_ref().map(|e| e.code.as_str())
    }
}

fn is_finite(v: &EstimateValue) -> bool {
    match v {
        EstimateValue::Scalar(x) => x.is_finite(),
        EstimateValue::List(xs) => xs.iter().all(|x| x.is_finite()),
        EstimateValue::Coefficients(cs) => cs.iter().flatten().all(|x| x.is_finite()),
        EstimateValue::Bucketed { value, .. } => is_finite(value),
        EstimateValue::Series(es) => es
            .iter()
            .all(|e| e.coefficients.iter().flatten().all(|x| x.is_finite())),
        EstimateValue::Sample(xs) => xs.iter().all(|x| x.as_f64().is_none_or(f64::is_finite)),
        EstimateValue::Points(ps) => ps
            .iter()
            .all(|p| p.weight.is_finite() && p.coords.iter().all(|x| x.is_finite())),
        _ => true,
    }
}

pub fn format_response(r: &Response) -> String {
    serde_json::to_string(r).expect("responses always serialize")
}

pub fn parse_response(line: &str) -> Result<Response> {
    serde_json::from_str(line).map_err(|e| parse_error(line, &e))
}

fn parse_error(line: &str, e: &serde_json::Error) -> SdeError {
    // serde_json reports 1-based line and byte column.
    let line_start: usize = line
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum();
    SdeError::Parse {
        offset: line_start + e.column().saturating_sub(1),
        message: e.to_string(),
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "v",
    "request_id",
    "verb",
    "synopsisID",
    "kind",
    "datasetKey",
    "scope",
    "streamID",
    "keyIndex",
    "valueIndexes",
    "param",
    "parallelism",
    "partitioning",
    "window",
    "continuous",
    "query",
    "federation",
    "responsibleSite",
];

/// A parsed request plus the names of fields that were ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub request: Request,
    pub unknown_fields: Vec<String>,
}

/// Parses one request line, logging ignored fields.
pub fn parse_request(line: &str) -> Result<Request> {
    let parsed = parse_request_detailed(line)?;
    for f in &parsed.unknown_fields {
        log::warn!("request {}: ignoring unknown field `{f}`", parsed.request.request_id);
    }
    Ok(parsed.request)
}

pub fn parse_request_detailed(line: &str) -> Result<Parsed> {
    let value: Value = serde_json::from_str(line).map_err(|e| parse_error(line, &e))?;
    let obj = value
        .as_object()
        .ok_or_else(|| SdeError::schema("", "request must be a JSON object"))?;
    let f = Fields(obj);

    let verb_name = f
        .str("verb")?
        .ok_or_else(|| SdeError::schema("verb", "missing verb"))?;
    let verb = Verb::from_name(verb_name).ok_or_else(|| {
        SdeError::schema(
            "verb",
            format!("unknown verb `{verb_name}` (Build, Stop, Load, AdHocQuery, Status)"),
        )
    })?;
    match obj.get("v") {
        None => return Err(SdeError::schema("v", "missing protocol version")),
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(SdeError::schema(
                "v",
                format!("unsupported protocol version {v}"),
            ))
        }
    }
    let request_id = f
        .str("request_id")?
        .filter(|s| !s.is_empty())
        .ok_or_else(|| SdeError::schema("request_id", "missing request_id"))?
        .to_string();
    let target = f.str("synopsisID")?.map(str::to_string);
    let stream = f.str("streamID")?.map(str::to_string);
    let responsible_site = f.str("responsibleSite")?.map(str::to_string);
    let query = match obj.get("query") {
        None | Some(Value::Null) => None,
        Some(q) => Some(
            serde_json::from_value::<Query>(q.clone())
                .map_err(|e| SdeError::schema("query", e.to_string()))?,
        ),
    };

    let mut request = Request {
        request_id,
        verb,
        target: target.clone(),
        spec: None,
        query: None,
        stream: None,
        responsible_site,
    };
    match verb {
        Verb::Build | Verb::Load => {
            let mut spec = parse_spec(&f, query)?;
            if verb == Verb::Load && !matches!(spec.kind, SynopsisKind::Plugin(_)) {
                return Err(SdeError::schema(
                    "kind",
                    format!("Load activates plugin kinds; {} is built in, use Build", spec.kind),
                ));
            }
            spec.validate()?;
            request.spec = Some(spec);
        }
        Verb::Stop => {
            require_target(&target)?;
        }
        Verb::AdHocQuery => {
            require_target(&target)?;
            request.query =
                Some(query.ok_or_else(|| SdeError::schema("query", "AdHocQuery needs a query"))?);
            request.stream = stream;
        }
        Verb::Status => {}
    }
    let unknown_fields = obj
        .keys()
        .filter(|k| !KNOWN_FIELDS.contains(&k.as_str()))
        .cloned()
        .collect();
    Ok(Parsed {
        request,
        unknown_fields,
    })
}

fn require_target(target: &Option<String>) -> Result<()> {
    match target {
        Some(t) if !t.is_empty() => Ok(()),
        _ => Err(SdeError::schema("synopsisID", "missing synopsisID")),
    }
}

struct Fields<'a>(&'a Map<String, Value>);

impl<'a> Fields<'a> {
    fn get(&self, k: &str) -> Option<&'a Value> {
        self.0.get(k).filter(|v| !v.is_null())
    }

    fn str(&self, k: &str) -> Result<Option<&'a str>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(SdeError::schema(k, "expected a string")),
        }
    }

    fn u64(&self, k: &str) -> Result<Option<u64>> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| SdeError::schema(k, "expected a non-negative integer")),
        }
    }

    fn bool(&self, k: &str) -> Result<Option<bool>> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| SdeError::schema(k, "expected true or false")),
        }
    }

    fn required_str(&self, k: &str) -> Result<&'a str> {
        self.str(k)?
            .filter(|s| !s.is_empty())
            .ok_or_else(|| SdeError::schema(k, format!("missing {k}")))
    }
}

fn parse_spec(f: &Fields, query: Option<Query>) -> Result<SynopsisSpec> {
    let id = f.required_str("synopsisID")?;
    let kind = SynopsisKind::from_name(f.required_str("kind")?);
    let dataset = f.required_str("datasetKey")?;
    let stream = f.str("streamID")?;
    let scope = match (f.str("scope")?, stream) {
        (Some("SingleStream"), Some(s)) | (None, Some(s)) => Scope::SingleStream(s.to_string()),
        (Some("SingleStream"), None) => {
            return Err(SdeError::schema("streamID", "SingleStream scope needs a streamID"))
        }
        (Some("PerStreamOfSource" | "PerStream"), _) => Scope::PerStream,
        (Some("WholeSource"), _) | (None, None) => Scope::WholeSource,
        (Some(other), _) => {
            return Err(SdeError::schema(
                "scope",
                format!("unknown scope `{other}` (SingleStream, PerStreamOfSource, WholeSource)"),
            ))
        }
    };
    let params = match f.get("param") {
        None => Params::new(),
        Some(Value::Object(m)) => Params(m.clone().into_iter().collect()),
        Some(_) => return Err(SdeError::schema("param", "expected an object")),
    };
    let mut spec = SynopsisSpec::new(id, kind, dataset, scope, params);
    if let Some(k) = f.u64("keyIndex")? {
        spec.key_field = Some(k as usize);
    }
    if let Some(v) = f.get("valueIndexes") {
        let arr = v
            .as_array()
            .ok_or_else(|| SdeError::schema("valueIndexes", "expected an array of indices"))?;
        spec.value_fields = arr
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|i| i as usize)
                    .ok_or_else(|| SdeError::schema("valueIndexes", "expected an array of indices"))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(p) = f.u64("parallelism")? {
        spec.parallelism = u32::try_from(p)
            .map_err(|_| SdeError::schema("parallelism", "too large"))?;
    }
    spec.partitioning = match f.str("partitioning")? {
        None | Some("KeyHash") => Partitioning::KeyHash,
        Some("RoundRobin") => Partitioning::RoundRobin,
        Some(other) => {
            return Err(SdeError::schema(
                "partitioning",
                format!("unknown partitioning `{other}` (KeyHash, RoundRobin)"),
            ))
        }
    };
    if let Some(w) = f.get("window") {
        spec.window = parse_window(w)?;
    }
    spec.continuous = f.bool("continuous")?.unwrap_or(false);
    spec.continuous_query = query;
    if let Some(fed) = f.get("federation") {
        spec.federation = Some(
            serde_json::from_value::<FederationSpec>(fed.clone())
                .map_err(|e| SdeError::schema("federation", e.to_string()))?,
        );
    }
    Ok(spec)
}

fn parse_window(v: &Value) -> Result<WindowSpec> {
    let obj = v
        .as_object()
        .ok_or_else(|| SdeError::schema("window", "expected an object"))?;
    let f = Fields(obj);
    let mode = match f.str("mode")? {
        None | Some("None") => WindowMode::None,
        Some("TimeSliding") => WindowMode::TimeSliding,
        Some("CountSliding") => WindowMode::CountSliding,
        Some(other) => {
            return Err(SdeError::schema(
                "window.mode",
                format!("unknown window mode `{other}`"),
            ))
        }
    };
    let num = |k: &str| -> Result<u64> {
        f.u64(k)
            .map_err(|_| SdeError::schema(format!("window.{k}"), "expected a non-negative integer"))
            .map(|x| x.unwrap_or(0))
    };
    Ok(WindowSpec {
        mode,
        length: num("length")?,
        slide: num("slide")?,
        allowed_lateness: num("allowedLateness")?,
    })
}

/// Wire image of a request, in field order.
#[derive(Serialize)]
struct WireRequest<'a> {
    v: u64,
    request_id: &'a str,
    verb: &'static str,
    #[serde(rename = "synopsisID", skip_serializing_if = "Option::is_none")]
    synopsis_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<&'a str>,
    #[serde(rename = "datasetKey", skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scope: Option<&'static str>,
    #[serde(rename = "streamID", skip_serializing_if = "Option::is_none")]
    stream: Option<&'a str>,
    #[serde(rename = "keyIndex", skip_serializing_if = "Option::is_none")]
    key_index: Option<usize>,
    #[serde(rename = "valueIndexes", skip_serializing_if = "Option::is_none")]
    value_indexes: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    param: Option<&'a Params>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parallelism: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partitioning: Option<Partitioning>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<&'a WindowSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continuous: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    query: Option<&'a Query>,
    #[serde(skip_serializing_if = "Option::is_none")]
    federation: Option<&'a FederationSpec>,
    #[serde(rename = "responsibleSite", skip_serializing_if = "Option::is_none")]
    responsible_site: Option<&'a str>,
}

pub fn format_request(r: &Request) -> String {
    let mut w = WireRequest {
        v: PROTOCOL_VERSION,
        request_id: &r.request_id,
        verb: r.verb.name(),
        synopsis_id: r.target.as_deref(),
        kind: None,
        dataset: None,
        scope: None,
        stream: r.stream.as_deref(),
        key_index: None,
        value_indexes: None,
        param: None,
        parallelism: None,
        partitioning: None,
        window: None,
        continuous: None,
        query: r.query.as_ref(),
        federation: None,
        responsible_site: r.responsible_site.as_deref(),
    };
    if let Some(spec) = &r.spec {
        w.synopsis_id = Some(&spec.synopsis_id);
        w.kind = Some(spec.kind.name());
        w.dataset = Some(&spec.dataset_id);
        w.scope = Some(spec.scope.label());
        if let Scope::SingleStream(s) = &spec.scope {
            w.stream = Some(s);
        }
        w.key_index = spec.key_field;
        if !spec.value_fields.is_empty() {
            w.value_indexes = Some(&spec.value_fields);
        }
        w.param = Some(&spec.params);
        w.parallelism = Some(spec.parallelism);
        w.partitioning = Some(spec.partitioning);
        if spec.window.mode != WindowMode::None {
            w.window = Some(&spec.window);
        }
        if spec.continuous {
            w.continuous = Some(true);
        }
        w.query = spec.continuous_query.as_ref();
        w.federation = spec.federation.as_ref();
    }
    serde_json::to_string(&w).expect("requests always serialize")
}
