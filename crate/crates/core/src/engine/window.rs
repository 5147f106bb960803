//! Per-state window bookkeeping.
//!
//! Counting sketches cannot delete, so sliding windows over them keep one
//! sub-sketch per slide pane and evict whole panes. Kinds that keep their own
//! tuple window (DFT, RHP, chain sampling) and unwindowed synopses use a
//! single plain state.

use std::collections::VecDeque;

use crate::error::Result;
use crate::model::{StreamRecord, WindowMode, WindowSpec};
use crate::synopses::{FieldMap, SketchState};

#[derive(Debug, Clone)]
pub(crate) enum Windowed {
    Plain(SketchState),
    Paned {
        panes: VecDeque<(u64, SketchState)>,
        /// Panes per window.
        span: u64,
        slide: u64,
        /// Accepted tuples, used for per-state count windows.
        count: u64,
    },
}

/// Outcome of offering a record to a windowed state.
#[derive(Debug, PartialEq, Eq)]
pub(crate) enum Offer {
    Added,
    /// Its pane was already evicted.
    Late,
}

impl Windowed {
    pub fn new(template: &SketchState, window: &WindowSpec) -> Windowed {
        if window.mode == WindowMode::None || template.kind.exact_window() {
            Windowed::Plain(template.clone())
        } else {
            Windowed::Paned {
                panes: VecDeque::new(),
                span: window.panes(),
                slide: window.slide,
                count: 0,
            }
        }
    }

    /// `pane` comes from the router for time windows and whole-source count
    /// windows; per-state count windows derive it from their own count.
    pub fn offer(
        &mut self,
        template: &SketchState,
        rec: &StreamRecord,
        fields: &FieldMap,
        pane: Option<u64>,
    ) -> Result<Offer> {
        match self {
            Windowed::Plain(s) => s.add_record(rec, fields).map(|_| Offer::Added),
            Windowed::Paned {
                panes,
                span,
                slide,
                count,
            } => {
                let pane = pane.unwrap_or(*count / *slide);
                if let Some(&(newest, _)) = panes.back() {
                    if pane + *span <= newest {
                        return Ok(Offer::Late);
                    }
                }
                let pos = panes.iter().rposition(|(p, _)| *p <= pane);
                let idx = match pos {
                    Some(i) if panes[i].0 == pane => i,
                    Some(i) => {
                        panes.insert(i + 1, (pane, template.clone()));
                        i + 1
                    }
                    None => {
                        panes.push_front((pane, template.clone()));
                        0
                    }
                };
                let res = panes[idx].1.add_record(rec, fields);
                if res.is_err() && panes[idx].1.items_seen == 0 {
                    panes.remove(idx);
                }
                res?;
                *count += 1;
                let newest = panes.back().map(|p| p.0).unwrap_or(pane);
                while panes.front().is_some_and(|(p, _)| p + *span <= newest) {
                    panes.pop_front();
                }
                Ok(Offer::Added)
            }
        }
    }

    /// Newest pane this state has seen.
    pub fn latest_pane(&self) -> Option<u64> {
        match self {
            Windowed::Plain(_) => None,
            Windowed::Paned { panes, .. } => panes.back().map(|p| p.0),
        }
    }

    /// State covering the window that ends with pane `upto` (the newest pane
    /// if `None`).
    pub fn snapshot(&self, template: &SketchState, upto: Option<u64>) -> Result<SketchState> {
        match self {
            Windowed::Plain(s) => Ok(s.clone()),
            Windowed::Paned { panes, span, .. } => {
                let mut out = template.clone();
                let Some(end) = upto.or_else(|| self.latest_pane()) else {
                    return Ok(out);
                };
                for (p, s) in panes {
                    if *p <= end && p + span > end {
                        out.merge(s)?;
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn estimate(
        &self,
        template: &SketchState,
        upto: Option<u64>,
        q: &crate::synopses::Query,
    ) -> Result<crate::synopses::EstimateValue> {
        match self {
            Windowed::Plain(s) => s.estimate(q),
            _ => self.snapshot(template, upto)?.estimate(q),
        }
    }

    #[cfg(test)]
    pub fn items_seen(&self) -> u64 {
        match self {
            Windowed::Plain(s) => s.items_seen,
            Windowed::Paned { count, .. } => *count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Params, Scalar, SynopsisKind};
    use crate::synopses::Query;

    fn cm() -> SketchState {
        SketchState::new(
            SynopsisKind::CountMin,
            Params::new().with("epsilon", 0.01).with("delta", 0.01),
        )
        .unwrap()
    }

    fn rec(t: u64, item: &str) -> StreamRecord {
        StreamRecord::new("d", item, t, vec![Scalar::Num(1.0)])
    }

    fn freq(w: &Windowed, t: &SketchState, item: &str, upto: Option<u64>) -> f64 {
        w.snapshot(t, upto)
            .unwrap()
            .estimate(&Query::Frequency { item: item.into() })
            .unwrap()
            .as_f64()
            .unwrap()
    }

    #[test]
    fn time_panes_evict_whole_slides() {
        let t = cm();
        let spec = WindowSpec::time(300, 100, 0);
        let mut w = Windowed::new(&t, &spec);
        let f = FieldMap::default();
        for ts in (0..600).step_by(10) {
            w.offer(&t, &rec(ts, "a"), &f, Some(ts / 100)).unwrap();
        }
        // Panes 3, 4, 5 hold ten tuples each.
        assert_eq!(freq(&w, &t, "a", None), 30.0);
        assert_eq!(freq(&w, &t, "a", Some(4)), 20.0);
        assert_eq!(w.offer(&t, &rec(5, "a"), &f, Some(0)).unwrap(), Offer::Late);
    }

    #[test]
    fn per_state_count_window() {
        let t = cm();
        let mut w = Windowed::new(&t, &WindowSpec::count(10, 5));
        let f = FieldMap::default();
        for i in 0..23u64 {
            w.offer(&t, &rec(i, "a"), &f, None).unwrap();
        }
        // Panes 3 (tuples 15..20) and 4 (20..23).
        assert_eq!(freq(&w, &t, "a", None), 8.0);
        assert_eq!(w.items_seen(), 23);
    }

    #[test]
    fn exact_window_kinds_stay_plain() {
        let t = SketchState::new(
            SynopsisKind::ChainSampler,
            Params::new().with("sampleSize", 3).with("windowSize", 10),
        )
        .unwrap();
        assert!(matches!(
            Windowed::new(&t, &WindowSpec::count(10, 1)),
            Windowed::Plain(_)
        ));
    }
}
