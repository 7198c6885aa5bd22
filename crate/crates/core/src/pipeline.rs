//! One scan cycle end to end, and the fixed-rate loop around it.
//!
//! Stages run in order and are timed individually:
//!
//! | stage       | work                                                        |
//! |-------------|-------------------------------------------------------------|
//! | `scan`      | list pods, capture manifests, run every tool on every pod  |
//! | `normalize` | parse raw output and map it onto the common template        |
//! | `dedupe`    | drop kubesec findings that repeat a Trivy finding           |
//! | `merge`     | concatenate per-pod lists and write the output tree         |
//! | `persist`   | replace each pod's collection in the store                  |
//!
//! The store is only touched in `persist`, so a cycle interrupted earlier
//! leaves it exactly as it was.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::Serialize;
use tokio::sync::watch;

use crate::adapters::{acquire, report_from_raw, Backend, RawOutput};
use crate::dedupe::{dedupe_pod, DedupeConfig};
use crate::model::{findings_to_json, CycleMetrics, Finding, PodTarget, ScanStatus, Tool};
use crate::source::{self, SourceConfig, SourceError};
use crate::store::{CollectionName, FindingsStore, StoreError};

pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(60);
/// Consecutive failed cycles after which the loop gives up.
pub const MAX_CONSECUTIVE_FAILURES: u32 = 3;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    pub tools: Vec<Tool>,
    pub backend: Backend,
    pub dedupe: DedupeConfig,
    pub out_dir: PathBuf,
    /// `None` runs a single cycle.
    pub interval: Option<Duration>,
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(source: SourceConfig, backend: Backend) -> Self {
        PipelineConfig {
            source,
            tools: Tool::SCANNERS.to_vec(),
            backend,
            dedupe: DedupeConfig::default(),
            out_dir: PathBuf::from("output"),
            interval: None,
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

/// Output subdirectory for per-tool and merged result files.
pub fn tool_dir(out_dir: &Path, tool: Tool) -> PathBuf {
    out_dir.join(tool.as_str())
}

pub fn merged_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("merged")
}

/// A tool that did not produce usable output for a pod.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolFailure {
    pub pod: String,
    pub tool: Tool,
    pub status: ScanStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CycleReport {
    pub metrics: CycleMetrics,
    pub failures: Vec<ToolFailure>,
    /// Pods that vanished between listing and manifest capture.
    pub skipped_pods: Vec<String>,
    pub collections: Vec<CollectionName>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("persisting {failed} failed after updating {} collection(s): {source}", updated.len())]
    Persist {
        failed: CollectionName,
        updated: Vec<CollectionName>,
        #[source]
        source: StoreError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("writing {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cycle interrupted before {stage}; store untouched")]
    Interrupted { stage: &'static str },
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

/// Concatenate one pod's lists in merge order, keeping each tool's order.
pub fn merge_pod(reports: &BTreeMap<Tool, Vec<Finding>>) -> Vec<Finding> {
    Tool::MERGE_ORDER
        .iter()
        .filter_map(|t| reports.get(t))
        .flatten()
        .cloned()
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    let err = |source| PipelineError::Output {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(err)?;
    }
    std::fs::write(path, contents).map_err(err)
}

struct ScannedPod {
    name: String,
    raw: Vec<(Tool, RawOutput)>,
}

struct Shutdown(Option<watch::Receiver<bool>>);

impl Shutdown {
    fn requested(&self) -> bool {
        self.0.as_ref().is_some_and(|rx| *rx.borrow())
    }

    async fn wait(&mut self) {
        match &mut self.0 {
            Some(rx) => {
                if rx.wait_for(|stop| *stop).await.is_err() {
                    std::future::pending::<()>().await;
                }
            }
            None => std::future::pending().await,
        }
    }

    fn check(&self, stage: &'static str) -> Result<(), PipelineError> {
        if self.requested() {
            Err(PipelineError::Interrupted { stage })
        } else {
            Ok(())
        }
    }
}

/// Runs cycles against one store, one cycle at a time.
pub struct Pipeline {
    config: PipelineConfig,
    store: Arc<dyn FindingsStore>,
    cycle_lock: tokio::sync::Mutex<()>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, store: Arc<dyn FindingsStore>) -> Result<Self, PipelineError> {
        if config.tools.is_empty() {
            return Err(PipelineError::Config("at least one tool is required".into()));
        }
        if config.parallelism == 0 {
            return Err(PipelineError::Config("parallelism must be at least 1".into()));
        }
        config.dedupe.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Pipeline {
            config,
            store,
            cycle_lock: tokio::sync::Mutex::new(()),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Run one full cycle.
    pub async fn run_cycle(&self) -> Result<CycleReport, PipelineError> {
        self.cycle(Shutdown(None)).await
    }

    /// Run one cycle, abandoning it at the next stage boundary once
    /// `shutdown` turns true. Scanner processes in flight are killed.
    pub async fn run_cycle_until(&self, shutdown: watch::Receiver<bool>) -> Result<CycleReport, PipelineError> {
        self.cycle(Shutdown(Some(shutdown))).await
    }

    async fn cycle(&self, mut shutdown: Shutdown) -> Result<CycleReport, PipelineError> {
        let _running = self.cycle_lock.lock().await;
        let cfg = &self.config;
        let started = Instant::now();
        let mut report = CycleReport::default();

        // scan
        let t = Instant::now();
        let scanned = tokio::select! {
            scanned = self.scan_stage(&mut report) => scanned?,
            _ = shutdown.wait() => return Err(PipelineError::Interrupted { stage: "normalize" }),
        };
        report.metrics.scan_s = t.elapsed().as_secs_f64();
        report.metrics.pods_scanned = scanned.len();
        shutdown.check("normalize")?;

        // normalize
        let t = Instant::now();
        let mut pods: Vec<(String, BTreeMap<Tool, Vec<Finding>>)> = Vec::with_capacity(scanned.len());
        for pod in scanned {
            let mut lists = BTreeMap::new();
            for (tool, raw) in pod.raw {
                let r = report_from_raw(tool, &pod.name, raw);
                if r.status != ScanStatus::Ok {
                    report.failures.push(ToolFailure {
                        pod: pod.name.clone(),
                        tool,
                        status: r.status,
                        detail: r.detail.clone().unwrap_or_default(),
                    });
                }
                lists.insert(tool, r.findings);
            }
            pods.push((pod.name, lists));
        }
        report.metrics.normalize_s = t.elapsed().as_secs_f64();
        shutdown.check("dedupe")?;

        // dedupe
        let t = Instant::now();
        let pods: Vec<_> = pods
            .into_iter()
            .map(|(name, lists)| (name, dedupe_pod(lists, &cfg.dedupe)))
            .collect();
        report.metrics.dedupe_s = t.elapsed().as_secs_f64();
        shutdown.check("merge")?;

        // merge
        let t = Instant::now();
        let mut merged = Vec::with_capacity(pods.len());
        for (name, lists) in &pods {
            for (tool, findings) in lists {
                let status_ok = !report.failures.iter().any(|f| &f.pod == name && f.tool == *tool);
                if status_ok {
                    let path = tool_dir(&cfg.out_dir, *tool).join(format!("{name}-result.json"));
                    write_file(&path, &findings_to_json(findings))?;
                }
            }
            let findings = merge_pod(lists);
            let path = merged_dir(&cfg.out_dir).join(format!("{name}-result.json"));
            write_file(&path, &findings_to_json(&findings))?;
            merged.push((CollectionName::for_pod(name).map_err(StoreError::from)?, findings));
        }
        report.metrics.merge_s = t.elapsed().as_secs_f64();
        shutdown.check("persist")?;

        // persist
        let t = Instant::now();
        let store = Arc::clone(&self.store);
        let persisted = tokio::task::spawn_blocking(move || {
            let mut updated = Vec::with_capacity(merged.len());
            for (name, findings) in merged {
                if let Err(source) = store.replace_collection(&name, &findings) {
                    return Err(PipelineError::Persist {
                        failed: name,
                        updated,
                        source,
                    });
                }
                updated.push(name);
            }
            Ok(updated)
        })
        .await
        .expect("persist task panicked")?;
        report.collections = persisted;
        report.metrics.persist_s = t.elapsed().as_secs_f64();

        report.metrics.total_s = started.elapsed().as_secs_f64();
        Ok(report)
    }

    async fn scan_stage(&self, report: &mut CycleReport) -> Result<Vec<ScannedPod>, PipelineError> {
        let cfg = &self.config;
        let targets = source::list_targets(&cfg.source).await?;

        let fetched: Vec<(PodTarget, Result<PathBuf, SourceError>)> = stream::iter(targets)
            .map(|target| async move {
                let result = source::fetch_manifest(&target, &cfg.source, &cfg.out_dir).await;
                (target, result.map(|(_, path)| path))
            })
            .buffered(cfg.parallelism)
            .collect()
            .await;

        let mut ready = Vec::new();
        for (target, result) in fetched {
            match result {
                Ok(path) => ready.push((source::artifact_name(&target), path)),
                Err(SourceError::NotFound { namespace, pod }) => {
                    tracing::warn!(%namespace, %pod, "pod disappeared before its manifest was captured");
                    report.skipped_pods.push(source::artifact_name(&target));
                }
                Err(e) => return Err(e.into()),
            }
        }
        ready.sort_by(|a, b| a.0.cmp(&b.0));

        let jobs: Vec<(usize, Tool)> = (0..ready.len())
            .flat_map(|i| cfg.tools.iter().map(move |&t| (i, t)))
            .collect();
        let ready_ref = &ready;
        let outputs: Vec<(usize, Tool, RawOutput)> = stream::iter(jobs)
            .map(|(i, tool)| async move {
                let (name, manifest) = &ready_ref[i];
                let out = acquire(tool, &cfg.backend, name, manifest).await;
                (i, tool, out)
            })
            .buffered(cfg.parallelism)
            .collect()
            .await;

        let mut pods: Vec<ScannedPod> = ready
            .iter()
            .map(|(name, _)| ScannedPod {
                name: name.clone(),
                raw: Vec::new(),
            })
            .collect();
        for (i, tool, out) in outputs {
            *report.metrics.per_tool_s.entry(tool).or_default() += out.duration.as_secs_f64();
            pods[i].raw.push((tool, out));
        }
        Ok(pods)
    }

    /// Run cycles at a fixed rate until `shutdown` turns true.
    ///
    /// A cycle starts every `interval` measured from the previous start; ticks
    /// that fall inside an overrunning cycle are skipped. Gives up after
    /// [`MAX_CONSECUTIVE_FAILURES`] failed cycles in a row.
    pub async fn run_loop<F>(&self, mut shutdown: watch::Receiver<bool>, mut on_cycle: F) -> Result<(), PipelineError>
    where
        F: FnMut(&Result<CycleReport, PipelineError>),
    {
        let period = self.config.interval.unwrap_or(DEFAULT_INTERVAL);
        let mut ticker = tokio::time::interval(period);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let mut failures = 0;
        loop {
            tokio::select! {
                _ = ticker.tick() => {}
                _ = shutdown.wait_for(|stop| *stop) => return Ok(()),
            }
            if *shutdown.borrow() {
                return Ok(());
            }
            let result = self.run_cycle_until(shutdown.clone()).await;
            on_cycle(&result);
            match result {
                Ok(_) => failures = 0,
                Err(PipelineError::Interrupted { .. }) => return Ok(()),
                Err(e) => {
                    failures += 1;
                    tracing::error!(error = %e, consecutive = failures, "cycle failed");
                    if failures >= MAX_CONSECUTIVE_FAILURES {
                        return Err(e);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Severity;

    fn f(title: &str) -> Finding {
        Finding::new(title, Severity::Low)
    }

    #[test]
    fn merge_uses_fixed_tool_order() {
        let reports = BTreeMap::from([
            (Tool::KubeLinter, vec![f("l1")]),
            (Tool::Kubesec, vec![f("k1"), f("k2")]),
            (Tool::Trivy, vec![f("t1")]),
        ]);
        let titles: Vec<_> = merge_pod(&reports).into_iter().map(|f| f.title).collect();
        assert_eq!(titles, vec!["t1", "k1", "k2", "l1"]);
    }

    #[test]
    fn merge_of_nothing_is_empty() {
        assert!(merge_pod(&BTreeMap::new()).is_empty());
        let reports = BTreeMap::from([(Tool::Trivy, vec![]), (Tool::Kubesec, vec![])]);
        assert!(merge_pod(&reports).is_empty());
        assert_eq!(findings_to_json(&merge_pod(&reports)), "[]\n");
    }

    #[test]
    fn merge_single_source() {
        let reports = BTreeMap::from([(Tool::Kubesec, vec![f("k1")])]);
        assert_eq!(merge_pod(&reports), vec![f("k1")]);
    }
}
