use std::collections::HashMap;

use super::IngestError;
use crate::features::{Aggregation, FeatureSetSpec};
use crate::types::EventSource;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    /// Position of the high-level feature in the spec's hourly list.
    pub feature_index: usize,
    pub feature_name: String,
    pub aggregation: Aggregation,
    pub source: EventSource,
}

/// Item ID to high-level hourly feature lookup.
#[derive(Debug, Clone, Default)]
pub struct ItemRegistry {
    entries: HashMap<String, RegistryEntry>,
    n_features: usize,
}

impl ItemRegistry {
    pub fn get(&self, item_id: &str) -> Option<&RegistryEntry> {
        self.entries.get(item_id)
    }

    /// Lookup that also checks the event came from the feature's table.
    pub fn lookup(&self, source: EventSource, item_id: &str) -> Option<&RegistryEntry> {
        self.entries.get(item_id).filter(|e| e.source == source)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Map every item ID of a spec's hourly features to its high-level feature.
pub fn build_item_registry(spec: &FeatureSetSpec) -> Result<ItemRegistry, IngestError> {
    let mut entries: HashMap<String, RegistryEntry> = HashMap::new();
    for (feature_index, feature) in spec.hourly.iter().enumerate() {
        for item in &feature.items {
            let entry = RegistryEntry {
                feature_index,
                feature_name: feature.name.clone(),
                aggregation: feature.aggregation,
                source: feature.source,
            };
            if let Some(prev) = entries.insert(item.clone(), entry) {
                return Err(IngestError::Registry(format!(
                    "item {item} is mapped to both {:?} and {:?}",
                    prev.feature_name, feature.name
                )));
            }
        }
    }
    Ok(ItemRegistry {
        entries,
        n_features: spec.hourly.len(),
    })
}
