//! Synopses data engine: a long-running service that builds, maintains,
//! queries, merges and federates approximate stream summaries on request.

pub mod channels;
pub mod codec;
pub mod engine;
pub mod error;
pub mod federation;
pub mod hash;
pub mod model;
pub mod protocol;
pub mod synopses;

pub use error::{Result, SdeError};
pub use model::{
    make_partition_keys, FederationSpec, Params, PartitionKey, Partitioning, Scalar, Scope,
    StreamRecord, SynopsisKind, SynopsisSpec, WindowMode, WindowSpec,
};
pub use synopses::{EstimateValue, FieldMap, Query, SketchState};
pub use engine::{splitter_route, Engine, EngineConfig, Route};
pub use protocol::{format_request, format_response, parse_request, parse_response, Request, Response, Verb};
pub use federation::{CommLedger, FederatedSite, SimFederation, SiteConfig, UnionFrame};
