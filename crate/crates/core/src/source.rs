//! Enumerating pods and capturing their manifests.
//!
//! Cluster mode drives `kubectl`, which takes care of kubeconfig resolution
//! (explicit path, `KUBECONFIG`, `~/.kube/config`, in-cluster service
//! account). Directory mode treats every `*.yaml`/`*.yml` file as one pod.

use std::path::{Path, PathBuf};
use std::process::Stdio;

use serde_json::Value;
use tokio::process::Command;

use crate::model::PodTarget;

/// Separator between namespace and pod name in cluster-mode file names.
pub const NAMESPACE_SEPARATOR: &str = "__";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceMode {
    Cluster { kubeconfig: Option<PathBuf>, kubectl: PathBuf },
    Directory { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceConfig {
    pub mode: SourceMode,
    /// Restrict cluster mode to these namespaces. Ignored in directory mode.
    pub namespace_filter: Option<Vec<String>>,
}

impl SourceConfig {
    pub fn directory(dir: impl Into<PathBuf>) -> Self {
        SourceConfig {
            mode: SourceMode::Directory { dir: dir.into() },
            namespace_filter: None,
        }
    }

    pub fn cluster(kubeconfig: Option<PathBuf>) -> Self {
        SourceConfig {
            mode: SourceMode::Cluster {
                kubeconfig,
                kubectl: PathBuf::from("kubectl"),
            },
            namespace_filter: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("manifest directory {} does not exist", .0.display())]
    DirectoryMissing(PathBuf),
    #[error("cluster unreachable: {0}")]
    ClusterUnreachable(String),
    #[error("pod {namespace}/{pod} not found")]
    NotFound { namespace: String, pod: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// File-system safe name used for manifest files, result files and the
/// collection. Directory mode targets have an empty namespace and keep the
/// bare pod name.
pub fn artifact_name(target: &PodTarget) -> String {
    let clean = |s: &str| s.replace(['/', '\\'], "_");
    if target.namespace.is_empty() {
        clean(&target.pod_name)
    } else {
        format!("{}{NAMESPACE_SEPARATOR}{}", clean(&target.namespace), clean(&target.pod_name))
    }
}

/// Where the captured manifest for `target` lives under `out_dir`.
pub fn manifest_path(out_dir: &Path, target: &PodTarget) -> PathBuf {
    out_dir.join("manifest").join(format!("{}-manifest.yaml", artifact_name(target)))
}

/// Enumerate scan targets, manifests not yet fetched.
///
/// Cluster mode orders by `(namespace, pod)`; directory mode by file name.
pub async fn list_targets(config: &SourceConfig) -> Result<Vec<PodTarget>, SourceError> {
    match &config.mode {
        SourceMode::Directory { dir } => list_directory(dir),
        SourceMode::Cluster { kubeconfig, kubectl } => {
            let kubectl = Kubectl {
                binary: kubectl,
                kubeconfig: kubeconfig.as_deref(),
            };
            let mut namespaces = kubectl.names(&["get", "namespaces", "-o", "json"]).await?;
            if let Some(filter) = &config.namespace_filter {
                namespaces.retain(|ns| filter.contains(ns));
            }
            namespaces.sort();
            let mut targets = Vec::new();
            for ns in namespaces {
                let mut pods = kubectl.names(&["get", "pods", "-n", &ns, "-o", "json"]).await?;
                pods.sort();
                targets.extend(pods.into_iter().map(|pod| PodTarget::new(ns.clone(), pod)));
            }
            Ok(targets)
        }
    }
}

fn manifest_files(dir: &Path) -> Result<Vec<PathBuf>, SourceError> {
    if !dir.is_dir() {
        return Err(SourceError::DirectoryMissing(dir.to_path_buf()));
    }
    let io = |source| SourceError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let is_yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
        if is_yaml && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn pod_name_for(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let name = stem.strip_suffix("-manifest").unwrap_or(stem);
    (!name.is_empty()).then(|| name.to_string())
}

fn list_directory(dir: &Path) -> Result<Vec<PodTarget>, SourceError> {
    let mut targets: Vec<PodTarget> = Vec::new();
    for path in manifest_files(dir)? {
        let Some(name) = pod_name_for(&path) else {
            tracing::warn!(file = %path.display(), "skipping manifest with unusable name");
            continue;
        };
        if targets.iter().any(|t| t.pod_name == name) {
            tracing::warn!(file = %path.display(), pod = %name, "duplicate pod name, skipping");
            continue;
        }
        targets.push(PodTarget::new("", name));
    }
    targets.sort_by(|a, b| a.pod_name.cmp(&b.pod_name));
    Ok(targets)
}

/// Fetch the manifest text for `target` and write it to
/// `<out_dir>/manifest/<name>-manifest.yaml`. Returns the text and the
/// persisted path.
pub async fn fetch_manifest(
    target: &PodTarget,
    config: &SourceConfig,
    out_dir: &Path,
) -> Result<(String, PathBuf), SourceError> {
    let text = match &config.mode {
        SourceMode::Directory { dir } => {
            let path = manifest_files(dir)?
                .into_iter()
                .find(|p| pod_name_for(p).as_deref() == Some(target.pod_name.as_str()))
                .ok_or_else(|| SourceError::NotFound {
                    namespace: target.namespace.clone(),
                    pod: target.pod_name.clone(),
                })?;
            std::fs::read_to_string(&path).map_err(|source| SourceError::Io { path, source })?
        }
        SourceMode::Cluster { kubeconfig, kubectl } => {
            let kubectl = Kubectl {
                binary: kubectl,
                kubeconfig: kubeconfig.as_deref(),
            };
            kubectl.pod_yaml(&target.namespace, &target.pod_name).await?
        }
    };

    let path = manifest_path(out_dir, target);
    let io = |source| SourceError::Io {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(path.parent().expect("manifest path has a parent")).map_err(io)?;
    std::fs::write(&path, &text).map_err(io)?;
    Ok((text, path))
}

struct Kubectl<'a> {
    binary: &'a Path,
    kubeconfig: Option<&'a Path>,
}

impl Kubectl<'_> {
    async fn run(&self, args: &[&str]) -> Result<std::process::Output, SourceError> {
        let mut cmd = Command::new(self.binary);
        if let Some(cfg) = self.kubeconfig {
            cmd.arg("--kubeconfig").arg(cfg);
        }
        cmd.args(args).stdin(Stdio::null()).kill_on_drop(true);
        cmd.output()
            .await
            .map_err(|e| SourceError::ClusterUnreachable(format!("{}: {e}", self.binary.display())))
    }

    /// `.items[].metadata.name` of a list call.
    async fn names(&self, args: &[&str]) -> Result<Vec<String>, SourceError> {
        let out = self.run(args).await?;
        if !out.status.success() {
            return Err(SourceError::ClusterUnreachable(
                String::from_utf8_lossy(&out.stderr).trim().to_string(),
            ));
        }
        let doc: Value = serde_json::from_slice(&out.stdout)
            .map_err(|e| SourceError::ClusterUnreachable(format!("unexpected kubectl output: {e}")))?;
        Ok(doc
            .get("items")
            .and_then(Value::as_array)
            .map(|items| {
                items
                    .iter()
                    .filter_map(|i| i.pointer("/metadata/name").and_then(Value::as_str))
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default())
    }

    async fn pod_yaml(&self, namespace: &str, pod: &str) -> Result<String, SourceError> {
        let out = self.run(&["get", "pod", pod, "-n", namespace, "-o", "yaml"]).await?;
        if out.status.success() {
            return Ok(String::from_utf8_lossy(&out.stdout).into_owned());
        }
        let stderr = String::from_utf8_lossy(&out.stderr);
        if stderr.contains("NotFound") || stderr.contains("not found") {
            Err(SourceError::NotFound {
                namespace: namespace.to_string(),
                pod: pod.to_string(),
            })
        } else {
            Err(SourceError::ClusterUnreachable(stderr.trim().to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_names() {
        assert_eq!(artifact_name(&PodTarget::new("", "testpod")), "testpod");
        assert_eq!(artifact_name(&PodTarget::new("default", "web")), "default__web");
        assert_eq!(artifact_name(&PodTarget::new("a/b", "c\\d")), "a_b__c_d");
    }

    #[test]
    fn manifest_suffix_is_stripped() {
        assert_eq!(pod_name_for(Path::new("/x/testpod-manifest.yaml")).as_deref(), Some("testpod"));
        assert_eq!(pod_name_for(Path::new("/x/a.yml")).as_deref(), Some("a"));
        assert_eq!(pod_name_for(Path::new("/x/-manifest.yaml")), None);
    }

    #[tokio::test]
    async fn directory_listing_is_sorted_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.yaml", "a.yaml", "c-manifest.yml", "notes.txt", "a-kubesec.json"] {
            std::fs::write(dir.path().join(name), "kind: Pod\n").unwrap();
        }
        std::fs::create_dir(dir.path().join("sub.yaml")).unwrap();
        let targets = list_targets(&SourceConfig::directory(dir.path())).await.unwrap();
        let names: Vec<_> = targets.iter().map(|t| t.pod_name.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "c"]);
    }

    #[tokio::test]
    async fn missing_directory() {
        let err = list_targets(&SourceConfig::directory("/nonexistent/manifests")).await.unwrap_err();
        assert!(matches!(err, SourceError::DirectoryMissing(_)));
        assert!(err.to_string().contains("/nonexistent/manifests"));
    }

    #[tokio::test]
    async fn fetch_persists_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.yaml"), "kind: Pod\nmetadata: {name: a}\n").unwrap();
        let cfg = SourceConfig::directory(dir.path());
        let targets = list_targets(&cfg).await.unwrap();
        let (text, path) = fetch_manifest(&targets[0], &cfg, out.path()).await.unwrap();
        assert_eq!(text, "kind: Pod\nmetadata: {name: a}\n");
        assert_eq!(path, out.path().join("manifest/a-manifest.yaml"));
        assert_eq!(std::fs::read_to_string(path).unwrap(), text);

        std::fs::remove_file(dir.path().join("a.yaml")).unwrap();
        let err = fetch_manifest(&targets[0], &cfg, out.path()).await.unwrap_err();
        assert!(matches!(err, SourceError::NotFound { .. }));
    }
}
