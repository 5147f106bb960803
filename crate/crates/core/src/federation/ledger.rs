use std::collections::BTreeMap;
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    /// Envelope bytes written, newline included.
    pub bytes: u64,
    pub frames: u64,
    /// Encoded size of the raw tuples the sender summarized since its
    /// previous shipment.
    pub raw_bytes: u64,
}

type LinkKey = (String, String, String);

/// Cumulative traffic per (synopsis, from, to).
#[derive(Debug, Default)]
pub struct CommLedger {
    links: Mutex<BTreeMap<LinkKey, LinkStats>>,
    /// Raw bytes per (dataset, from, to, synopsis).
    raw: Mutex<BTreeMap<(String, String, String, String), u64>>,
}

fn key(syn: &str, from: &str, to: &str) -> LinkKey {
    (syn.to_string(), from.to_string(), to.to_string())
}

impl CommLedger {
    pub fn new() -> CommLedger {
        CommLedger::default()
    }

    pub fn record_frame(&self, synopsis: &str, from: &str, to: &str, bytes: u64) {
        let mut links = self.links.lock().expect("ledger poisoned");
        let l = links.entry(key(synopsis, from, to)).or_default();
        l.bytes += bytes;
        l.frames += 1;
    }

    pub fn record_raw(&self, synopsis: &str, dataset: &str, from: &str, to: &str, bytes: u64) {
        self.links
            .lock()
            .expect("ledger poisoned")
            .entry(key(synopsis, from, to))
            .or_default()
            .raw_bytes += bytes;
        *self
            .raw
            .lock()
            .expect("ledger poisoned")
            .entry((dataset.into(), from.into(), to.into(), synopsis.into()))
            .or_default() += bytes;
    }

    pub fn link(&self, synopsis: &str, from: &str, to: &str) -> LinkStats {
        self.links
            .lock()
            .expect("ledger poisoned")
            .get(&key(synopsis, from, to))
            .copied()
            .unwrap_or_default()
    }

    pub fn links(&self) -> Vec<((String, String, String), LinkStats)> {
        self.links
            .lock()
            .expect("ledger poisoned")
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }

    pub fn total_bytes(&self) -> u64 {
        self.links.lock().expect("ledger poisoned").values().map(|l| l.bytes).sum()
    }

    pub fn total_frames(&self) -> u64 {
        self.links.lock().expect("ledger poisoned").values().map(|l| l.frames).sum()
    }

    /// Frames received by `to`, all synopses.
    pub fn frames_into(&self, to: &str) -> u64 {
        self.links
            .lock()
            .expect("ledger poisoned")
            .iter()
            .filter(|((_, _, t), _)| t == to)
            .map(|(_, l)| l.frames)
            .sum()
    }

    /// Raw bytes summed over synopses. Counts a tuple once per synopsis.
    pub fn total_raw_bytes(&self) -> u64 {
        self.raw.lock().expect("ledger poisoned").values().sum()
    }

    /// Raw bytes with each dataset counted once per site pair: the cost of
    /// shipping the tuples themselves, which every synopsis could share.
    pub fn distinct_raw_bytes(&self) -> u64 {
        let raw = self.raw.lock().expect("ledger poisoned");
        let mut per_link: BTreeMap<(&str, &str, &str), u64> = BTreeMap::new();
        for ((ds, from, to, _), &b) in raw.iter() {
            let e = per_link.entry((ds, from, to)).or_default();
            *e = (*e).max(b);
        }
        per_link.values().sum()
    }
}
