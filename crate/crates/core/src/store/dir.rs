use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{CollectionName, FindingsStore, StoreError};
use crate::model::{findings_to_json, Finding};

/// One `<collection>.json` file per collection under a root directory.
///
/// Files hold the same pretty-printed template array as the pipeline's merged
/// output, so a store can be seeded by copying merged files into it. Replace
/// writes a temp file in the same directory and renames it over the target.
#[derive(Debug)]
pub struct DirStore {
    root: PathBuf,
    writers: Mutex<HashMap<CollectionName, Arc<Mutex<()>>>>,
}

const TEMP_PREFIX: &str = ".tmp-";

impl DirStore {
    /// Open (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|source| StoreError::Io {
            collection: root.display().to_string(),
            source,
        })?;
        Ok(DirStore {
            root,
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_of(&self, name: &CollectionName) -> PathBuf {
        self.root.join(format!("{name}.json"))
    }

    fn writer_lock(&self, name: &CollectionName) -> Arc<Mutex<()>> {
        let mut writers = self.writers.lock().unwrap_or_else(|e| e.into_inner());
        writers.entry(name.clone()).or_default().clone()
    }
}

impl FindingsStore for DirStore {
    fn replace_collection(&self, name: &CollectionName, findings: &[Finding]) -> Result<(), StoreError> {
        let lock = self.writer_lock(name);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let io = |source| StoreError::Io {
            collection: name.to_string(),
            source,
        };

        let mut tmp = tempfile::Builder::new()
            .prefix(TEMP_PREFIX)
            .suffix(".json")
            .tempfile_in(&self.root)
            .map_err(io)?;
        tmp.write_all(findings_to_json(findings).as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(self.path_of(name)).map_err(|e| io(e.error))?;
        Ok(())
    }

    fn list_collections(&self) -> Result<Vec<CollectionName>, StoreError> {
        let io = |source| StoreError::Io {
            collection: self.root.display().to_string(),
            source,
        };
        let mut names = Vec::new();
        for entry in std::fs::read_dir(&self.root).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") || !path.is_file() {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if let Ok(name) = CollectionName::new(stem) {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    fn load_collection(&self, name: &CollectionName) -> Result<Vec<Finding>, StoreError> {
        let text = match std::fs::read_to_string(self.path_of(name)) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => {
                return Err(StoreError::Io {
                    collection: name.to_string(),
                    source,
                })
            }
        };
        serde_json::from_str(&text).map_err(|source| StoreError::Corrupt {
            collection: name.to_string(),
            source,
        })
    }
}
