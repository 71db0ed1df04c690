use std::collections::HashMap;

use super::Aggregation;
use crate::cohort::{WindowAnchor, WINDOW_HOURS};
use crate::ingest::ItemRegistry;
use crate::timeline::{StayEvent, Sym, Symbols};
use crate::types::EventSource;

/// Registry entries keyed by interned item symbol.
#[derive(Debug, Clone, Default)]
pub struct FeatureIndex {
    map: HashMap<Sym, (usize, Aggregation, EventSource)>,
    n_features: usize,
}

impl FeatureIndex {
    pub fn new(registry: &ItemRegistry, symbols: &Symbols) -> Self {
        let map = registry
            .item_ids()
            .filter_map(|id| {
                let e = registry.get(id)?;
                Some((symbols.get(id)?, (e.feature_index, e.aggregation, e.source)))
            })
            .collect();
        Self {
            map,
            n_features: registry.n_features(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn lookup(&self, ev: &StayEvent) -> Option<(usize, Aggregation)> {
        let &(f, agg, source) = self.map.get(&ev.item)?;
        (source == ev.source).then_some((f, agg))
    }
}

/// 24 x F hourly aggregates for one window, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyMatrix {
    pub n_features: usize,
    pub values: Vec<Option<f64>>,
    pub pad_hours: usize,
}

impl HourlyMatrix {
    pub fn empty(n_features: usize, pad_hours: usize) -> Self {
        Self {
            n_features,
            values: vec![None; WINDOW_HOURS * n_features],
            pad_hours,
        }
    }

    pub fn get(&self, hour: usize, feature: usize) -> Option<f64> {
        self.values[hour * self.n_features + feature]
    }

    pub fn present(&self, hour: usize, feature: usize) -> bool {
        self.get(hour, feature).is_some()
    }
}

/// Mean features average valued events; sum features add values, counting
/// unvalued events (orders, text observations) as 1.
pub fn aggregate_hourly<'a>(
    events: impl IntoIterator<Item = &'a StayEvent>,
    index: &FeatureIndex,
    anchor: &WindowAnchor,
) -> HourlyMatrix {
    let f_count = index.n_features;
    let mut sums = vec![0.0; WINDOW_HOURS * f_count];
    let mut counts = vec![0u32; WINDOW_HOURS * f_count];
    let mut aggs = vec![Aggregation::Mean; f_count];
    for ev in events {
        let Some(t) = ev.hour() else { continue };
        let Some(row) = anchor.row_of(t) else { continue };
        let Some((f, agg)) = index.lookup(ev) else { continue };
        let contribution = match agg {
            Aggregation::Mean => match ev.value() {
                Some(v) => v,
                None => continue,
            },
            Aggregation::Sum => ev.value().unwrap_or(1.0),
        };
        aggs[f] = agg;
        let k = row * f_count + f;
        sums[k] += contribution;
        counts[k] += 1;
    }
    let values = (0..WINDOW_HOURS * f_count)
        .map(|k| {
            (counts[k] > 0).then(|| match aggs[k % f_count] {
                Aggregation::Mean => sums[k] / counts[k] as f64,
                Aggregation::Sum => sums[k],
            })
        })
        .collect();
    HourlyMatrix {
        n_features: f_count,
        values,
        pad_hours: anchor.pad_hours(),
    }
}
