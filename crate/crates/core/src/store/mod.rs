//! Per-pod finding collections and the read views built on top of them.
//!
//! Backends only implement storage (`replace_collection`, `list_collections`,
//! `load_collection`); the triage views are provided methods so every backend
//! answers them identically.

mod dir;
mod memory;
#[cfg(feature = "mongo")]
mod mongo;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use dir::DirStore;
pub use memory::MemoryStore;
#[cfg(feature = "mongo")]
pub use mongo::{MongoStore, DEFAULT_DATABASE, DEFAULT_URI};

use crate::model::{sort_by_severity, Finding, Severity};

/// Suffix appended to a pod's artifact name to form its collection name.
pub const COLLECTION_SUFFIX: &str = "-result";

/// Name of one collection, e.g. `testpod-result`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CollectionName(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid collection name {0:?}")]
pub struct InvalidCollectionName(pub String);

impl CollectionName {
    /// Collection names double as file names, so they must be non-empty,
    /// free of path separators and NUL, and not start with a dot.
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidCollectionName> {
        let name = name.into();
        let bad = name.is_empty() || name.starts_with('.') || name.contains(['/', '\\', '\0']);
        if bad {
            Err(InvalidCollectionName(name))
        } else {
            Ok(CollectionName(name))
        }
    }

    /// `<artifact>-result`.
    pub fn for_pod(artifact_name: &str) -> Result<Self, InvalidCollectionName> {
        CollectionName::new(format!("{artifact_name}{COLLECTION_SUFFIX}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CollectionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CollectionName {
    type Error = InvalidCollectionName;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CollectionName::new(value)
    }
}

impl From<CollectionName> for String {
    fn from(value: CollectionName) -> Self {
        value.0
    }
}

pub type SeverityCounts = BTreeMap<Severity, usize>;

/// Severity counts over the whole store and per collection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryCounts {
    pub severity_counts: SeverityCounts,
    /// Every collection appears, even when it holds no findings.
    #[serde(rename = "collections")]
    pub per_collection: BTreeMap<CollectionName, SeverityCounts>,
}

impl SummaryCounts {
    /// Count `findings` under `name`.
    pub fn add_collection(&mut self, name: CollectionName, findings: &[Finding]) {
        let counts = self.per_collection.entry(name).or_default();
        for f in findings {
            *counts.entry(f.severity).or_default() += 1;
            *self.severity_counts.entry(f.severity).or_default() += 1;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("collection {collection}: {source}")]
    Io {
        collection: String,
        #[source]
        source: std::io::Error,
    },
    #[error("collection {collection} is corrupt: {source}")]
    Corrupt {
        collection: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    InvalidName(#[from] InvalidCollectionName),
    #[error("store backend: {0}")]
    Backend(String),
}

/// Storage for named finding collections.
///
/// `replace_collection` must be atomic per collection: a concurrent reader
/// sees either the previous contents or the new ones. On failure the previous
/// contents stay in place.
pub trait FindingsStore: Send + Sync {
    fn replace_collection(&self, name: &CollectionName, findings: &[Finding]) -> Result<(), StoreError>;

    /// All collection names, ascending.
    fn list_collections(&self) -> Result<Vec<CollectionName>, StoreError>;

    /// Stored contents in insertion order. Unknown names yield an empty list.
    fn load_collection(&self, name: &CollectionName) -> Result<Vec<Finding>, StoreError>;

    /// Contents sorted by severity, CRITICAL first, ties in stored order.
    fn get_collection(&self, name: &CollectionName) -> Result<Vec<Finding>, StoreError> {
        let mut findings = self.load_collection(name)?;
        sort_by_severity(&mut findings);
        Ok(findings)
    }

    fn summary(&self) -> Result<SummaryCounts, StoreError> {
        let mut summary = SummaryCounts::default();
        for name in self.list_collections()? {
            let findings = self.load_collection(&name)?;
            summary.add_collection(name, &findings);
        }
        Ok(summary)
    }

    /// Every finding of the given severity, tagged with its collection and
    /// ordered by collection name, then stored order.
    fn find_by_severity(&self, severity: Severity) -> Result<Vec<(CollectionName, Finding)>, StoreError> {
        let mut out = Vec::new();
        for name in self.list_collections()? {
            out.extend(
                self.load_collection(&name)?
                    .into_iter()
                    .filter(|f| f.severity == severity)
                    .map(|f| (name.clone(), f)),
            );
        }
        Ok(out)
    }
}

impl<S: FindingsStore + ?Sized> FindingsStore for std::sync::Arc<S> {
    fn replace_collection(&self, name: &CollectionName, findings: &[Finding]) -> Result<(), StoreError> {
        (**self).replace_collection(name, findings)
    }

    fn list_collections(&self) -> Result<Vec<CollectionName>, StoreError> {
        (**self).list_collections()
    }

    fn load_collection(&self, name: &CollectionName) -> Result<Vec<Finding>, StoreError> {
        (**self).load_collection(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collection_names() {
        assert_eq!(CollectionName::for_pod("testpod").unwrap().as_str(), "testpod-result");
        for bad in ["", ".hidden", "a/b", "a\\b", "a\0"] {
            assert!(CollectionName::new(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn summary_shape_serializes_with_string_keys() {
        let mut s = SummaryCounts::default();
        s.add_collection(
            CollectionName::new("p-result").unwrap(),
            &[Finding::new("a", Severity::High), Finding::new("b", Severity::Low), Finding::new("c", Severity::Low)],
        );
        s.add_collection(CollectionName::new("q-result").unwrap(), &[]);
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"severity_counts":{"HIGH":1,"LOW":2},"collections":{"p-result":{"HIGH":1,"LOW":2},"q-result":{}}}"#
        );
    }
}
