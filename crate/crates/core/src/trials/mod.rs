//! Trial fixtures: a 4-primitive bank, exemplars and test items.

pub mod fixtures;

use crate::geometry::PrimId;
use crate::token::{TokenError, Universe, UniverseCache};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub string: String,
    pub novelty_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub bank: Vec<String>,
    pub exemplars: Vec<String>,
    #[serde(default)]
    pub test_items: Vec<TestItem>,
}

/// A trial with its universe built and every token resolved to an index.
#[derive(Debug, Clone)]
pub struct ResolvedTrial {
    pub trial: Trial,
    pub universe: Arc<Universe>,
    pub exemplars: Vec<u32>,
    pub items: Vec<u32>,
}

impl ResolvedTrial {
    pub fn id(&self) -> &str {
        &self.trial.trial_id
    }
}

impl Trial {
    pub fn resolve(&self, cache: &UniverseCache) -> Result<ResolvedTrial, TokenError> {
        let bank = cache.bank();
        let prims: Vec<PrimId> = self.bank.iter().map(|n| bank.resolve(n)).collect::<Result<_, _>>()?;
        let u = cache.get(&prims)?;
        let look = |s: &String| u.lookup(s, bank, cache.table());
        let exemplars = self.exemplars.iter().map(look).collect::<Result<_, _>>()?;
        let items = self.test_items.iter().map(|t| look(&t.string)).collect::<Result<_, _>>()?;
        Ok(ResolvedTrial { trial: self.clone(), universe: u, exemplars, items })
    }
}

pub fn load_trials(text: &str) -> Result<Vec<Trial>, serde_json::Error> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    if v.is_array() {
        serde_json::from_value(v)
    } else {
        Ok(vec![serde_json::from_value(v)?])
    }
}
