//! MongoDB backend, for deployments that keep the findings in a document
//! database service.

use mongodb::bson::{doc, Document};
use mongodb::options::FindOptions;
use mongodb::sync::{Client, Database};

use super::{CollectionName, FindingsStore, StoreError};
use crate::model::Finding;

pub const DEFAULT_URI: &str = "mongodb://mongo-service:27017/";
pub const DEFAULT_DATABASE: &str = "json_database";

const SEQ_FIELD: &str = "_seq";
const STAGING_PREFIX: &str = "_staging.";

/// Collections live in one database. Replace writes a staging collection and
/// renames it over the target with `dropTarget`, which the server applies
/// atomically.
pub struct MongoStore {
    client: Client,
    db: Database,
}

fn backend(e: impl std::fmt::Display) -> StoreError {
    StoreError::Backend(e.to_string())
}

impl MongoStore {
    /// Connect to `uri`. The database is taken from the URI path when
    /// present, otherwise [`DEFAULT_DATABASE`].
    pub fn connect(uri: &str) -> Result<Self, StoreError> {
        let client = Client::with_uri_str(uri).map_err(backend)?;
        let db = client.default_database().unwrap_or_else(|| client.database(DEFAULT_DATABASE));
        Ok(MongoStore { client, db })
    }
}

impl FindingsStore for MongoStore {
    fn replace_collection(&self, name: &CollectionName, findings: &[Finding]) -> Result<(), StoreError> {
        let staging_name = format!("{STAGING_PREFIX}{name}");
        let staging = self.db.collection::<Document>(&staging_name);
        staging.drop().run().map_err(backend)?;
        let docs = findings
            .iter()
            .enumerate()
            .map(|(seq, f)| {
                let mut d = mongodb::bson::to_document(f).map_err(backend)?;
                d.insert(SEQ_FIELD, seq as i64);
                Ok(d)
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        if docs.is_empty() {
            self.db.create_collection(&staging_name).run().map_err(backend)?;
        } else {
            staging.insert_many(docs).run().map_err(backend)?;
        }
        let db = self.db.name();
        self.client
            .database("admin")
            .run_command(doc! {
                "renameCollection": format!("{db}.{staging_name}"),
                "to": format!("{db}.{name}"),
                "dropTarget": true,
            })
            .run()
            .map_err(backend)?;
        Ok(())
    }

    fn list_collections(&self) -> Result<Vec<CollectionName>, StoreError> {
        let mut names: Vec<_> = self
            .db
            .list_collection_names()
            .run()
            .map_err(backend)?
            .into_iter()
            .filter(|n| !n.starts_with(STAGING_PREFIX))
            .filter_map(|n| CollectionName::new(n).ok())
            .collect();
        names.sort();
        Ok(names)
    }

    fn load_collection(&self, name: &CollectionName) -> Result<Vec<Finding>, StoreError> {
        let options = FindOptions::builder().sort(doc! { SEQ_FIELD: 1 }).build();
        self.db
            .collection::<Document>(name.as_str())
            .find(doc! {})
            .with_options(options)
            .run()
            .map_err(backend)?
            .map(|d| {
                let d = d.map_err(backend)?;
                mongodb::bson::from_document::<Finding>(d).map_err(backend)
            })
            .collect()
    }
}
