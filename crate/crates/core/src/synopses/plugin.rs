//! Runtime registry for synopsis kinds supplied by the embedding program.

use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::error::{Result, SdeError};
use crate::model::{Params, SynopsisKind};

use super::{EstimateValue, Query, Update};

/// A synopsis implementation living outside the built-in library.
pub trait PluginSynopsis: Send + Sync + fmt::Debug {
    fn kind_name(&self) -> &str;
    fn add(&mut self, update: &Update) -> Result<()>;
    fn estimate(&self, query: &Query) -> Result<EstimateValue>;
    /// `other` is always a state of the same plugin built with the same parameters.
    fn merge(&mut self, other: &dyn PluginSynopsis) -> Result<()>;
    fn encode(&self) -> Vec<u8>;
    fn empty(&self) -> Box<dyn PluginSynopsis>;
    fn clone_box(&self) -> Box<dyn PluginSynopsis>;
    fn as_any(&self) -> &dyn Any;
}

pub trait PluginFactory: Send + Sync {
    fn seed_count(&self) -> usize {
        1
    }
    fn create(&self, params: &Params, seeds: &[u64]) -> Result<Box<dyn PluginSynopsis>>;
    fn decode(&self, params: &Params, bytes: &[u8]) -> Result<Box<dyn PluginSynopsis>>;
}

/// Shared, cloneable handle; registration is allowed while engines are running.
#[derive(Clone, Default)]
pub struct PluginRegistry {
    inner: Arc<RwLock<HashMap<String, Arc<dyn PluginFactory>>>>,
}

impl fmt::Debug for PluginRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, name: &str, factory: Arc<dyn PluginFactory>) -> Result<()> {
        if name.is_empty() {
            return Err(SdeError::param("name", "must not be empty"));
        }
        if !matches!(SynopsisKind::from_name(name), SynopsisKind::Plugin(_)) {
            return Err(SdeError::DuplicatePlugin(name.to_string()));
        }
        let mut map = self.inner.write().expect("plugin registry poisoned");
        if map.contains_key(name) {
            return Err(SdeError::DuplicatePlugin(name.to_string()));
        }
        map.insert(name.to_string(), factory);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn PluginFactory>> {
        self.inner
            .read()
            .expect("plugin registry poisoned")
            .get(name)
            .cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .inner
            .read()
            .expect("plugin registry poisoned")
            .keys()
            .cloned()
            .collect();
        v.sort();
        v
    }
}
