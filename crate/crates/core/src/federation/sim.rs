use std::sync::Arc;
use std::time::Duration;

use super::{CommLedger, FederatedSite, InMemoryNetwork, SiteConfig};
use crate::engine::{Engine, EngineConfig};
use crate::error::{Result, SdeError};
use crate::model::SynopsisSpec;
use crate::protocol::Request;

/// N engines in one process joined by in-memory union channels and one
/// shared ledger.
pub struct SimFederation {
    pub network: Arc<InMemoryNetwork>,
    pub ledger: Arc<CommLedger>,
    sites: Vec<FederatedSite>,
}

impl SimFederation {
    /// Sites are named `site0`, `site1`, ...
    pub fn new(n_sites: usize, workers: usize, timeout: Duration) -> Result<SimFederation> {
        let ids: Vec<String> = (0..n_sites).map(|i| format!("site{i}")).collect();
        let network = Arc::new(InMemoryNetwork::new());
        let ledger = Arc::new(CommLedger::new());
        let mut sites = Vec::with_capacity(n_sites);
        for id in &ids {
            let mut cfg = SiteConfig::new(id);
            for peer in ids.iter().filter(|p| *p != id) {
                cfg = cfg.with_peer(peer, &format!("mem://{peer}"));
            }
            let engine = Arc::new(Engine::start(
                EngineConfig::default().with_site(id).with_workers(workers),
            ));
            let site = FederatedSite::start(engine, cfg, network.clone(), ledger.clone(), timeout)?;
            network.attach(id, site.union_sender());
            sites.push(site);
        }
        Ok(SimFederation {
            network,
            ledger,
            sites,
        })
    }

    pub fn site(&self, i: usize) -> &FederatedSite {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[FederatedSite] {
        &self.sites
    }

    pub fn by_id(&self, id: &str) -> Option<&FederatedSite> {
        self.sites.iter().find(|s| s.site_id() == id)
    }

    /// Builds `spec` on every site with `responsible` synthesizing answers.
    pub fn build_all(&self, spec: &SynopsisSpec, responsible: &str) -> Result<()> {
        for site in &self.sites {
            let spec = spec.clone().with_federation(site.site_id(), responsible);
            let r = site.handle(Request::build(format!("build-{}", spec.synopsis_id), spec));
            if !r.is_ok() {
                return Err(SdeError::Config(format!(
                    "build on {} failed: {:?}",
                    site.site_id(),
                    r.error
                )));
            }
        }
        Ok(())
    }

    /// Waits until every site has absorbed what it was sent.
    pub fn flush(&self) {
        for s in &self.sites {
            s.engine().flush();
        }
    }
}
