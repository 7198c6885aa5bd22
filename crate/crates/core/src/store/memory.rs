use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::{CollectionName, FindingsStore, StoreError};
use crate::model::Finding;

/// Process-local store. Replace swaps an `Arc`, so readers never observe a
/// partial collection.
#[derive(Debug, Default)]
pub struct MemoryStore {
    collections: RwLock<BTreeMap<CollectionName, Arc<Vec<Finding>>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl FindingsStore for MemoryStore {
    fn replace_collection(&self, name: &CollectionName, findings: &[Finding]) -> Result<(), StoreError> {
        let contents = Arc::new(findings.to_vec());
        self.collections
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(name.clone(), contents);
        Ok(())
    }

    fn list_collections(&self) -> Result<Vec<CollectionName>, StoreError> {
        Ok(self.collections.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect())
    }

    fn load_collection(&self, name: &CollectionName) -> Result<Vec<Finding>, StoreError> {
        let snapshot = self.collections.read().unwrap_or_else(|e| e.into_inner()).get(name).cloned();
        Ok(snapshot.map(|c| c.as_ref().clone()).unwrap_or_default())
    }
}
