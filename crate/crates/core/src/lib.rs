//! Centralized logging of Kubernetes pod misconfigurations.
//!
//! A cycle captures every pod manifest, runs Trivy, kubesec, kube-score and
//! kube-linter against it, maps their output onto one eight-field finding
//! template, drops kubesec findings that repeat a Trivy finding, and stores
//! one collection of merged findings per pod. The [`api`] module serves
//! triage views over the stored collections.

pub mod adapters;
pub mod api;
pub mod dedupe;
pub mod gestalt;
pub mod model;
pub mod normalize;
pub mod pipeline;
pub mod source;
pub mod store;
pub mod tools;

pub use dedupe::{dedupe_pod, is_duplicate, DedupeConfig};
pub use model::{CycleMetrics, Finding, PodTarget, ScanStatus, Severity, Tool, ToolReport};
pub use pipeline::{merge_pod, CycleReport, Pipeline, PipelineConfig, PipelineError};
pub use source::{SourceConfig, SourceMode};
pub use store::{CollectionName, DirStore, FindingsStore, MemoryStore, StoreError, SummaryCounts};
