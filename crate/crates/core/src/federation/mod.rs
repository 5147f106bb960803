//! Multi-site operation: union channels between engines, merging at the
//! responsible site, and accounting of the bytes that cross sites.
//!
//! A federated query is broadcast to every site as a `__request__` envelope.
//! Each site ships its local state for the target synopsis to the responsible
//! site, which merges exactly one frame per site and answers on its output
//! channel.

mod ledger;
mod schedule;
mod sim;
mod site;
mod transport;

pub use ledger::{CommLedger, LinkStats};
pub use schedule::{PeriodicScheduler, SimClock};
pub use sim::SimFederation;
pub use site::FederatedSite;
pub use transport::{InMemoryNetwork, TcpTransport, Transport};

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_state, encode_state};
use crate::error::{Result, SdeError};
use crate::synopses::{PluginRegistry, SketchState};

pub const REQUEST_KIND: &str = "__request__";
/// Sent instead of a state when a site cannot contribute.
pub const ABSENT_KIND: &str = "__absent__";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteConfig {
    pub site_id: String,
    /// Every other site, by id.
    pub peers: BTreeMap<String, String>,
    pub union_addr: Option<String>,
}

impl SiteConfig {
    pub fn new(site_id: &str) -> SiteConfig {
        SiteConfig {
            site_id: site_id.to_string(),
            peers: BTreeMap::new(),
            union_addr: None,
        }
    }

    pub fn with_peer(mut self, id: &str, addr: &str) -> SiteConfig {
        self.peers.insert(id.to_string(), addr.to_string());
        self
    }

    /// Builds the config from a peers file. The entry for `site_id` itself,
    /// if present, becomes the union listener address.
    pub fn from_peers(site_id: &str, text: &str) -> Result<SiteConfig> {
        let mut cfg = SiteConfig::new(site_id);
        for (id, addr) in parse_peers(text)? {
            if id == site_id {
                cfg.union_addr = Some(addr);
            } else {
                cfg.peers.insert(id, addr);
            }
        }
        Ok(cfg)
    }

    pub fn load(site_id: &str, path: &Path) -> Result<SiteConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| SdeError::Io(e.to_string()))?;
        Self::from_peers(site_id, &text)
    }

    /// All sites of the federation in id order, this one included.
    pub fn all_sites(&self) -> Vec<String> {
        let mut v: Vec<String> = self.peers.keys().cloned().collect();
        v.push(self.site_id.clone());
        v.sort();
        v
    }

    pub fn resolves(&self, site: &str) -> bool {
        site == self.site_id || self.peers.contains_key(site)
    }

    pub fn check_responsible(&self, site: &str) -> Result<()> {
        if self.resolves(site) {
            Ok(())
        } else {
            Err(SdeError::Config(format!(
                "responsible site `{site}` is neither `{}` nor a known peer",
                self.site_id
            )))
        }
    }
}

/// Parses `site_id address` lines. Blank lines and `#` comments are skipped.
pub fn parse_peers(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(id), Some(addr), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(SdeError::Config(format!(
                "peers line {}: expected `site_id address`",
                n + 1
            )));
        };
        if out.iter().any(|(i, _)| i == id) {
            return Err(SdeError::Config(format!("peers line {}: duplicate site `{id}`", n + 1)));
        }
        out.push((id.to_string(), addr.to_string()));
    }
    Ok(out)
}

/// One envelope on the union channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionFrame {
    pub origin: String,
    #[serde(rename = "mergeKey")]
    pub merge_key: String,
    pub kind: String,
    pub payload_b64: String,
    /// Length of the decoded payload.
    pub bytes: u64,
}

impl UnionFrame {
    pub fn raw(origin: &str, merge_key: &str, kind: &str, payload: &[u8]) -> UnionFrame {
        UnionFrame {
            origin: origin.to_string(),
            merge_key: merge_key.to_string(),
            kind: kind.to_string(),
            payload_b64: B64.encode(payload),
            bytes: payload.len() as u64,
        }
    }

    /// Serializes a state for shipping. DFT and RHP ship their coefficient
    /// or signature tables instead of raw windows.
    pub fn state(origin: &str, merge_key: &str, state: &SketchState) -> UnionFrame {
        let (kind, bytes) = if state.kind.per_stream_internally() {
            (
                format!("{}:series", state.kind.name()),
                encode_state(&state.to_series_table()),
            )
        } else {
            (state.kind.name().to_string(), encode_state(state))
        };
        Self::raw(origin, merge_key, &kind, &bytes)
    }

    pub fn is_control(&self) -> bool {
        self.kind.starts_with("__")
    }

    pub fn payload(&self) -> Result<Vec<u8>> {
        let bytes = B64
            .decode(&self.payload_b64)
            .map_err(|e| SdeError::Codec(format!("bad base64 payload: {e}")))?;
        if bytes.len() as u64 != self.bytes {
            return Err(SdeError::Codec(format!(
                "payload is {} bytes, envelope says {}",
                bytes.len(),
                self.bytes
            )));
        }
        Ok(bytes)
    }

    pub fn decode_state(&self, plugins: &PluginRegistry) -> Result<SketchState> {
        decode_state(&self.payload()?, plugins)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn from_line(line: &str) -> Result<UnionFrame> {
        serde_json::from_str(line).map_err(|e| SdeError::Parse {
            offset: e.column().saturating_sub(1),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests;
