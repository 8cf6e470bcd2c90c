use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarvestError;
use crate::domains::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CacheEntry {
    pub id: String,
    pub plan: Vec<String>,
    pub length: usize,
    /// Iteration that found the plan; 0 for pretraining data.
    pub iteration: usize,
}

/// Best plan found so far for every problem. Entries are only ever replaced
/// by strictly shorter plans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolutionCache {
    entries: BTreeMap<String, CacheEntry>,
}

impl SolutionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CacheEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    /// Stores `plan` if the problem has no entry or a strictly longer one.
    pub fn offer(&mut self, id: &str, plan: Vec<String>, iteration: usize) -> bool {
        if self.entries.get(id).is_some_and(|e| e.length <= plan.len()) {
            return false;
        }
        let entry = CacheEntry {
            id: id.to_string(),
            length: plan.len(),
            plan,
            iteration,
        };
        self.entries.insert(id.to_string(), entry);
        true
    }

    pub fn mean_length(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.values().map(|e| e.length as f64).sum::<f64>() / self.entries.len() as f64)
    }

    /// Mean best length over `ids` that have an entry.
    pub fn mean_length_of<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Option<f64> {
        let lens: Vec<f64> = ids
            .into_iter()
            .filter_map(|id| self.entries.get(id))
            .map(|e| e.length as f64)
            .collect();
        (!lens.is_empty()).then(|| lens.iter().sum::<f64>() / lens.len() as f64)
    }

    /// JSONL, one entry per line in id order.
    pub fn save(&self, path: &Path) -> Result<(), HarvestError> {
        let items: Vec<&CacheEntry> = self.entries.values().collect();
        write_jsonl(path, &items)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarvestError> {
        let items: Vec<CacheEntry> = read_jsonl(path)?;
        let mut entries = BTreeMap::new();
        for e in items {
            if e.length != e.plan.len() {
                return Err(HarvestError::Integrity(format!(
                    "cache entry `{}` records length {} for a plan of {} actions",
                    e.id,
                    e.length,
                    e.plan.len()
                )));
            }
            if entries.insert(e.id.clone(), e).is_some() {
                return Err(HarvestError::Integrity("duplicate cache entry".into()));
            }
        }
        Ok(SolutionCache { entries })
    }
}
