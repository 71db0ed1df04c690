//! Compact per-stay event storage used between ingestion and modelling.
//!
//! Item IDs and text values are interned into [`Symbols`]; a [`StayEvent`]
//! is 32 bytes so that whole desk-scale cohorts fit in memory.

use std::collections::HashMap;
use std::num::NonZeroU32;

use crate::types::{EventSource, IcdVersion, StayId};

/// Interned string handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sym(NonZeroU32);

#[derive(Debug, Clone, Default)]
pub struct Symbols {
    names: Vec<String>,
    index: HashMap<String, Sym>,
}

impl Symbols {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> Sym {
        if let Some(&sym) = self.index.get(s) {
            return sym;
        }
        self.names.push(s.to_string());
        let sym = Sym(NonZeroU32::new(self.names.len() as u32).expect("symbol table overflow"));
        self.index.insert(s.to_string(), sym);
        sym
    }

    pub fn get(&self, s: &str) -> Option<Sym> {
        self.index.get(s).copied()
    }

    pub fn resolve(&self, sym: Sym) -> &str {
        &self.names[sym.0.get() as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sym, &str)> {
        self.names.iter().enumerate().map(|(i, n)| {
            (Sym(NonZeroU32::new(i as u32 + 1).expect("nonzero")), n.as_str())
        })
    }
}

/// One event relative to its stay's ICU admission time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StayEvent {
    hour: f64,
    value: f64,
    pub item: Sym,
    pub text: Option<Sym>,
    pub source: EventSource,
    pub icd_version: Option<IcdVersion>,
}

impl StayEvent {
    pub fn timed(source: EventSource, item: Sym, hour: f64, value: Option<f64>) -> Self {
        Self {
            hour,
            value: value.unwrap_or(f64::NAN),
            item,
            text: None,
            source,
            icd_version: None,
        }
    }

    pub fn with_text(mut self, text: Option<Sym>) -> Self {
        self.text = text;
        self
    }

    pub fn diagnosis(code: Sym, version: IcdVersion) -> Self {
        Self {
            hour: f64::NAN,
            value: f64::NAN,
            item: code,
            text: None,
            source: EventSource::Diagnosis,
            icd_version: Some(version),
        }
    }

    /// Hours since intime; `None` for stay-level facts (diagnoses).
    pub fn hour(&self) -> Option<f64> {
        (!self.hour.is_nan()).then_some(self.hour)
    }

    pub fn value(&self) -> Option<f64> {
        (!self.value.is_nan()).then_some(self.value)
    }

    pub fn shifted(mut self, hours: f64) -> Self {
        self.hour += hours;
        self
    }
}

/// All retained events of one stay, timed events ascending, then diagnoses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StayTimeline {
    pub stay_id: Option<StayId>,
    pub events: Vec<StayEvent>,
}

impl StayTimeline {
    pub fn new(stay_id: StayId, mut events: Vec<StayEvent>) -> Self {
        sort_events(&mut events);
        Self {
            stay_id: Some(stay_id),
            events,
        }
    }

    pub fn timed(&self) -> impl Iterator<Item = &StayEvent> {
        self.events.iter().filter(|e| e.hour().is_some())
    }

    pub fn diagnoses(&self) -> impl Iterator<Item = &StayEvent> {
        self.events
            .iter()
            .filter(|e| e.source == EventSource::Diagnosis)
    }
}

/// Stable sort by hour with untimed events last.
pub fn sort_events(events: &mut [StayEvent]) {
    events.sort_by(|a, b| match (a.hour(), b.hour()) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_stable() {
        let mut s = Symbols::new();
        let a = s.intern("220045");
        let b = s.intern("646");
        assert_eq!(s.intern("220045"), a);
        assert_ne!(a, b);
        assert_eq!(s.resolve(b), "646");
        assert_eq!(s.get("nope"), None);
    }

    #[test]
    fn event_is_compact() {
        assert!(std::mem::size_of::<StayEvent>() <= 32);
    }

    #[test]
    fn diagnoses_sort_last() {
        let mut s = Symbols::new();
        let hr = s.intern("hr");
        let dx = s.intern("E11");
        let tl = StayTimeline::new(
            StayId(1),
            vec![
                StayEvent::diagnosis(dx, IcdVersion::Icd10),
                StayEvent::timed(EventSource::Chart, hr, 3.0, Some(1.0)),
                StayEvent::timed(EventSource::Chart, hr, 1.0, None),
            ],
        );
        assert_eq!(tl.events[0].hour(), Some(1.0));
        assert_eq!(tl.events[0].value(), None);
        assert_eq!(tl.events[2].source, EventSource::Diagnosis);
        assert_eq!(tl.timed().count(), 2);
        assert_eq!(tl.diagnoses().count(), 1);
    }
}
