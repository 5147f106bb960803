//! Plugins shipped with the engine and activated by name with `Load`.
//!
//! `exactCount` keeps an exact item → count table and merges by summing.
//! `slow` counts records but sleeps `delayMicros` per record; it exists to
//! saturate the data path on purpose.

use std::any::Any;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use crate::codec::{Reader, Writer};
use crate::error::{Result, SdeError};
use crate::model::Params;

use super::{EstimateValue, PluginFactory, PluginRegistry, PluginSynopsis, Query, Update};

pub const EXACT_COUNT: &str = "exactCount";
pub const SLOW: &str = "slow";

/// Registers every stock plugin, skipping names already taken.
pub fn register_stock(reg: &PluginRegistry) {
    let _ = reg.register(EXACT_COUNT, Arc::new(ExactCountFactory));
    let _ = reg.register(SLOW, Arc::new(SlowFactory));
}

fn item_of(u: &Update) -> Result<String> {
    Ok(match u {
        Update::Item(i) | Update::Weighted(i, _) | Update::Series(i, _) => i.to_string(),
        Update::Record(rec, fields) => match fields.key {
            Some(k) => rec.field(k)?.canonical(),
            None => rec.stream_id.clone(),
        },
        Update::Element(s) => s.canonical(),
        Update::Value(v) => v.to_string(),
        Update::Point(_) => return Err(SdeError::Record("exactCount cannot absorb points".into())),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactCount {
    counts: BTreeMap<String, u64>,
}

impl PluginSynopsis for ExactCount {
    fn kind_name(&self) -> &str {
        EXACT_COUNT
    }

    fn add(&mut self, u: &Update) -> Result<()> {
        let item = item_of(u)?;
        *self.counts.entry(item).or_default() += 1;
        Ok(())
    }

    fn estimate(&self, q: &Query) -> Result<EstimateValue> {
        let v = match q {
            Query::Frequency { item } => self.counts.get(item).copied().unwrap_or(0),
            Query::Distinct => self.counts.len() as u64,
            Query::Custom { .. } => self.counts.values().sum(),
            q => return Err(super::mismatch(&crate::model::SynopsisKind::Plugin(EXACT_COUNT.into()), q)),
        };
        Ok(EstimateValue::Scalar(v as f64))
    }

    fn merge(&mut self, other: &dyn PluginSynopsis) -> Result<()> {
        let other = other
            .as_any()
            .downcast_ref::<ExactCount>()
            .ok_or_else(|| SdeError::Merge {
                left: EXACT_COUNT.into(),
                right: other.kind_name().into(),
            })?;
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_default() += v;
        }
        Ok(())
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.len(self.counts.len());
        for (k, v) in &self.counts {
            w.str(k);
            w.u64(*v);
        }
        w.finish()
    }

    fn empty(&self) -> Box<dyn PluginSynopsis> {
        Box::new(ExactCount::default())
    }

    fn clone_box(&self) -> Box<dyn PluginSynopsis> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

struct ExactCountFactory;

impl PluginFactory for ExactCountFactory {
    fn seed_count(&self) -> usize {
        0
    }

    fn create(&self, _: &Params, _: &[u64]) -> Result<Box<dyn PluginSynopsis>> {
        Ok(Box::new(ExactCount::default()))
    }

    fn decode(&self, _: &Params, bytes: &[u8]) -> Result<Box<dyn PluginSynopsis>> {
        let mut r = Reader::new(bytes);
        let n = r.len(9)?;
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let k = r.str()?;
            counts.insert(k, r.u64()?);
        }
        r.expect_end()?;
        Ok(Box::new(ExactCount { counts }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slow {
    delay: Duration,
    seen: u64,
}

impl PluginSynopsis for Slow {
    fn kind_name(&self) -> &str {
        SLOW
    }

    fn add(&mut self, _: &Update) -> Result<()> {
        std::thread::sleep(self.delay);
        self.seen += 1;
        Ok(())
    }

    fn estimate(&self, _: &Query) -> Result<EstimateValue> {
        Ok(EstimateValue::Scalar(self.seen as f64))
    }

    fn merge(&mut self, other: &dyn PluginSynopsis) -> Result<()> {
        let other = other.as_any().downcast_ref::<Slow>().ok_or_else(|| SdeError::Merge {
            left: SLOW.into(),
            right: other.kind_name().into(),
        })?;
        self.seen += other.seen;
        Ok(())
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.seen);
        w.finish()
    }

    fn empty(&self) -> Box<dyn PluginSynopsis> {
        Box::new(Slow {
            delay: self.delay,
            seen: 0,
        })
    }

    fn clone_box(&self) -> Box<dyn PluginSynopsis> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

struct SlowFactory;

fn delay(params: &Params) -> Result<Duration> {
    Ok(Duration::from_micros(params.opt_u64("delayMicros")?.unwrap_or(1000)))
}

impl PluginFactory for SlowFactory {
    fn seed_count(&self) -> usize {
        0
    }

    fn create(&self, params: &Params, _: &[u64]) -> Result<Box<dyn PluginSynopsis>> {
        Ok(Box::new(Slow {
            delay: delay(params)?,
            seen: 0,
        }))
    }

    fn decode(&self, params: &Params, bytes: &[u8]) -> Result<Box<dyn PluginSynopsis>> {
        let mut r = Reader::new(bytes);
        let seen = r.u64()?;
        r.expect_end()?;
        Ok(Box::new(Slow {
            delay: delay(params)?,
            seen,
        }))
    }
}
