mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;
use tokio::sync::watch;

use sentinel_core::adapters::Backend;
use sentinel_core::model::findings_to_json;
use sentinel_core::pipeline::{merged_dir, tool_dir, MAX_CONSECUTIVE_FAILURES};
use sentinel_core::{
    CollectionName, Finding, FindingsStore, MemoryStore, Pipeline, PipelineConfig, PipelineError, ScanStatus, Severity,
    SourceConfig, Tool,
};

use common::*;

fn config(input: &Path, out: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::new(
        SourceConfig::directory(input),
        Backend::Fixture {
            dir: input.to_path_buf(),
        },
    );
    config.out_dir = out.to_path_buf();
    config
}

fn pipeline(config: PipelineConfig) -> (Pipeline, Arc<MemoryStore>) {
    let store = Arc::new(MemoryStore::new());
    (Pipeline::new(config, store.clone()).unwrap(), store)
}

#[tokio::test]
async fn empty_source_yields_empty_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("in")).unwrap();
    let (p, store) = pipeline(config(&tmp.path().join("in"), &tmp.path().join("out")));
    let report = p.run_cycle().await.unwrap();
    assert_eq!(report.metrics.pods_scanned, 0);
    assert!(report.collections.is_empty());
    assert!(store.list_collections().unwrap().is_empty());
}

#[tokio::test]
async fn missing_directory_fails_the_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, _) = pipeline(config(&tmp.path().join("absent"), &tmp.path().join("out")));
    assert!(matches!(p.run_cycle().await, Err(PipelineError::Source(_))));
}

#[tokio::test]
async fn per_tool_files_hold_final_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_corpus(&input);
    let out = tmp.path().join("out");
    let (p, store) = pipeline(config(&input, &out));
    p.run_cycle().await.unwrap();

    let read = |tool: Tool| -> Vec<Value> {
        let text = std::fs::read_to_string(tool_dir(&out, tool).join("alpha-result.json")).unwrap();
        serde_json::from_str(&text).unwrap()
    };
    let kubesec = read(Tool::Kubesec);
    assert_eq!(kubesec.len(), 1);
    assert_eq!(kubesec[0]["Title"], "ServiceAccountName");
    // Trivy's list is sorted HIGH before LOW.
    let trivy = read(Tool::Trivy);
    assert_eq!(trivy[0]["ID"], "KSV014");
    assert_eq!(trivy[1]["ID"], "KSV011");

    let merged = std::fs::read_to_string(merged_dir(&out).join("alpha-result.json")).unwrap();
    let stored = store.load_collection(&CollectionName::for_pod("alpha").unwrap()).unwrap();
    assert_eq!(merged, findings_to_json(&stored));
    let order: Vec<Option<Tool>> = stored.iter().map(|f| f.source_tool).collect();
    assert_eq!(
        order,
        [Tool::Trivy, Tool::Trivy, Tool::Kubesec, Tool::KubeScore, Tool::KubeScore, Tool::KubeLinter].map(Some)
    );
}

#[tokio::test]
async fn tool_failures_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_corpus(&input);
    std::fs::remove_file(input.join("bravo-kube-score.json")).unwrap();
    std::fs::write(input.join("charlie-kubesec.json"), "{ not json").unwrap();
    let out = tmp.path().join("out");
    let (p, store) = pipeline(config(&input, &out));
    let report = p.run_cycle().await.unwrap();

    let failures: Vec<(String, Tool, ScanStatus)> =
        report.failures.iter().map(|f| (f.pod.clone(), f.tool, f.status)).collect();
    assert_eq!(
        failures,
        [
            ("bravo".to_string(), Tool::KubeScore, ScanStatus::ToolMissing),
            ("charlie".to_string(), Tool::Kubesec, ScanStatus::ParseFailed),
        ]
    );
    assert_eq!(report.collections.len(), 3);
    assert!(!tool_dir(&out, Tool::KubeScore).join("bravo-result.json").exists());
    assert!(tool_dir(&out, Tool::Trivy).join("bravo-result.json").exists());
    let bravo = store.load_collection(&CollectionName::for_pod("bravo").unwrap()).unwrap();
    assert_eq!(bravo.len(), 4);
}

#[tokio::test]
async fn fixture_tool_reads_template_files() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("solo-manifest.yaml"), "kind: Pod\n").unwrap();
    let findings = vec![
        Finding::new("b", Severity::Low).with_resolution("r"),
        Finding::new("a", Severity::Critical),
    ];
    std::fs::write(input.join("solo-fixture.json"), findings_to_json(&findings)).unwrap();
    let mut cfg = config(&input, &tmp.path().join("out"));
    cfg.tools = vec![Tool::Fixture];
    let (p, store) = pipeline(cfg);
    p.run_cycle().await.unwrap();
    let stored = store.load_collection(&CollectionName::for_pod("solo").unwrap()).unwrap();
    let titles: Vec<&str> = stored.iter().map(|f| f.title.as_str()).collect();
    assert_eq!(titles, ["b", "a"]);
}

#[tokio::test]
async fn dedupe_can_be_disabled() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_corpus(&input);
    let mut cfg = config(&input, &tmp.path().join("out"));
    cfg.dedupe.enabled_pairs.clear();
    let (p, store) = pipeline(cfg);
    p.run_cycle().await.unwrap();
    let alpha = store.load_collection(&CollectionName::for_pod("alpha").unwrap()).unwrap();
    assert!(alpha.iter().any(|f| f.resolution == READ_ONLY_SELECTOR));
}

#[tokio::test]
async fn interrupted_cycle_leaves_store_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_corpus(&input);
    let out = tmp.path().join("out");
    let (p, store) = pipeline(config(&input, &out));
    let name = CollectionName::for_pod("alpha").unwrap();
    let old = vec![Finding::new("old", Severity::High)];
    store.replace_collection(&name, &old).unwrap();

    let (tx, rx) = watch::channel(false);
    tx.send(true).unwrap();
    let err = p.run_cycle_until(rx).await.unwrap_err();
    assert!(matches!(err, PipelineError::Interrupted { .. }), "{err}");
    assert_eq!(store.list_collections().unwrap(), [name.clone()]);
    assert_eq!(store.load_collection(&name).unwrap(), old);
    assert!(!merged_dir(&out).exists());
}

#[tokio::test]
async fn cycles_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_corpus(&input);
    let out = tmp.path().join("out");
    let (p, store) = pipeline(config(&input, &out));
    p.run_cycle().await.unwrap();
    let first = std::fs::read(merged_dir(&out).join("bravo-result.json")).unwrap();
    let summary = store.summary().unwrap();
    p.run_cycle().await.unwrap();
    assert_eq!(std::fs::read(merged_dir(&out).join("bravo-result.json")).unwrap(), first);
    assert_eq!(store.summary().unwrap(), summary);
}

#[test]
fn invalid_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), tmp.path());
    cfg.parallelism = 0;
    assert!(matches!(Pipeline::new(cfg, Arc::new(MemoryStore::new())), Err(PipelineError::Config(_))));
    let mut cfg = config(tmp.path(), tmp.path());
    cfg.dedupe.threshold = 2.0;
    assert!(matches!(Pipeline::new(cfg, Arc::new(MemoryStore::new())), Err(PipelineError::Config(_))));
}

#[tokio::test]
async fn loop_runs_at_fixed_rate_until_shutdown() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_corpus(&input);
    let mut cfg = config(&input, &tmp.path().join("out"));
    let period = Duration::from_millis(100);
    cfg.interval = Some(period);
    let (p, _) = pipeline(cfg);
    let (tx, rx) = watch::channel(false);
    let mut starts = Vec::new();
    let started = Instant::now();
    p.run_loop(rx, |result| {
        assert!(result.is_ok());
        starts.push(started.elapsed());
        if starts.len() == 3 {
            tx.send(true).unwrap();
        }
    })
    .await
    .unwrap();
    assert_eq!(starts.len(), 3);
    // Ticks at 0, 100 and 200 ms; each callback fires after its cycle.
    assert!(starts[2] >= period * 2, "{starts:?}");
    assert!(starts[2] < period * 2 + Duration::from_secs(2), "{starts:?}");
}

#[tokio::test]
async fn loop_gives_up_after_consecutive_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(&tmp.path().join("absent"), &tmp.path().join("out"));
    cfg.interval = Some(Duration::from_millis(5));
    let (p, _) = pipeline(cfg);
    let (_tx, rx) = watch::channel(false);
    let mut cycles = 0;
    let err = p.run_loop(rx, |_| cycles += 1).await.unwrap_err();
    assert!(matches!(err, PipelineError::Source(_)));
    assert_eq!(cycles, MAX_CONSECUTIVE_FAILURES);
}

#[tokio::test]
async fn loop_stops_immediately_when_already_shut_down() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, _) = pipeline(config(tmp.path(), tmp.path()));
    let (tx, rx) = watch::channel(false);
    tx.send(true).unwrap();
    let mut cycles = 0;
    p.run_loop(rx, |_| cycles += 1).await.unwrap();
    assert!(cycles <= 1);
}
