//! Running scanners as child processes, or reading canned fixture output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::{Duration, Instant};

use tokio::process::Command;

use super::parse_output;
use crate::model::{ScanStatus, Tool, ToolReport};
use crate::normalize::normalize_all;

/// Default per-invocation timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Where scanner output comes from.
#[derive(Debug, Clone)]
pub enum Backend {
    /// Spawn binaries found in `bin_dir`, falling back to `PATH`.
    Exec { bin_dir: Option<PathBuf>, timeout: Duration },
    /// Read `<dir>/<pod>-<tool>.json` instead of running anything.
    Fixture { dir: PathBuf },
}

impl Backend {
    pub fn exec(bin_dir: Option<PathBuf>) -> Self {
        Backend::Exec {
            bin_dir,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

/// Raw output of one invocation before parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOutput {
    pub raw: String,
    pub status: ScanStatus,
    pub detail: Option<String>,
    pub duration: Duration,
}

/// Argument vector for `tool` scanning `manifest`. Trivy writes its report to
/// `trivy_output`; the others print to stdout.
pub fn scanner_args(tool: Tool, manifest: &Path, trivy_output: &Path) -> Vec<OsString> {
    let m = manifest.as_os_str().to_owned();
    let args: Vec<OsString> = match tool {
        Tool::Trivy => vec![
            "fs".into(),
            "--scanners".into(),
            "vuln,secret,misconfig".into(),
            m,
            "-f".into(),
            "json".into(),
            "--output".into(),
            trivy_output.as_os_str().to_owned(),
        ],
        Tool::Kubesec => vec!["scan".into(), m, "--output".into(), "json".into()],
        Tool::KubeScore => vec!["score".into(), m, "--output-format".into(), "json".into()],
        Tool::KubeLinter => vec!["lint".into(), m, "--format".into(), "json".into()],
        Tool::Fixture => vec![m],
    };
    args
}

/// Locate `binary_name` in `bin_dir`, then on `PATH`.
pub fn resolve_binary(binary_name: &str, bin_dir: Option<&Path>) -> Option<PathBuf> {
    let in_bin_dir = bin_dir.map(|d| d.join(binary_name));
    let on_path = std::env::var_os("PATH")
        .into_iter()
        .flat_map(|p| std::env::split_paths(&p).collect::<Vec<_>>())
        .map(|d| d.join(binary_name));
    in_bin_dir.into_iter().chain(on_path).find(|p| is_executable(p))
}

#[cfg(unix)]
fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    path.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(path: &Path) -> bool {
    path.is_file()
}

/// Spawn `binary` against `manifest` with the tool's argument vector.
///
/// Never fails: a missing binary, a timeout, or a non-zero exit without
/// usable output are all reported through `status`. Any exit code is
/// accepted when the output is JSON (kubesec signals its score that way).
pub async fn run_scanner(tool: Tool, manifest: &Path, binary: &Path, timeout: Duration) -> RawOutput {
    let started = Instant::now();
    let finish = |raw: String, status: ScanStatus, detail: Option<String>| RawOutput {
        raw,
        status,
        detail,
        duration: started.elapsed(),
    };

    if !is_executable(binary) {
        return finish(
            String::new(),
            ScanStatus::ToolMissing,
            Some(format!("{} not found or not executable", binary.display())),
        );
    }

    let trivy_dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return finish(String::new(), ScanStatus::ExecFailed, Some(format!("temp dir: {e}"))),
    };
    let trivy_output = trivy_dir.path().join("result.json");

    let mut cmd = Command::new(binary);
    cmd.args(scanner_args(tool, manifest, &trivy_output))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true);

    let child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return finish(String::new(), ScanStatus::ToolMissing, Some(e.to_string()))
        }
        Err(e) => return finish(String::new(), ScanStatus::ExecFailed, Some(e.to_string())),
    };

    let output = match tokio::time::timeout(timeout, child.wait_with_output()).await {
        Ok(Ok(out)) => out,
        Ok(Err(e)) => return finish(String::new(), ScanStatus::ExecFailed, Some(e.to_string())),
        Err(_) => {
            return finish(
                String::new(),
                ScanStatus::ExecFailed,
                Some(format!("timed out after {}s", timeout.as_secs_f64())),
            )
        }
    };

    let raw = if tool == Tool::Trivy {
        std::fs::read_to_string(&trivy_output).unwrap_or_default()
    } else {
        String::from_utf8_lossy(&output.stdout).into_owned()
    };
    let parses = serde_json::from_str::<serde_json::Value>(&raw).is_ok();
    match (parses, output.status.success()) {
        (true, _) => finish(raw, ScanStatus::Ok, None),
        (false, true) => finish(raw, ScanStatus::ParseFailed, Some("output is not valid JSON".into())),
        (false, false) => {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let detail = format!("exited with {}: {}", output.status, stderr.trim());
            finish(raw, ScanStatus::ExecFailed, Some(detail))
        }
    }
}

fn read_fixture(dir: &Path, pod_name: &str, tool: Tool) -> RawOutput {
    let started = Instant::now();
    let path = dir.join(format!("{pod_name}-{tool}.json"));
    let (raw, status, detail) = match std::fs::read_to_string(&path) {
        Ok(raw) if serde_json::from_str::<serde_json::Value>(&raw).is_ok() => (raw, ScanStatus::Ok, None),
        Ok(raw) => (raw, ScanStatus::ParseFailed, Some(format!("{} is not valid JSON", path.display()))),
        Err(e) => (String::new(), ScanStatus::ToolMissing, Some(format!("{}: {e}", path.display()))),
    };
    RawOutput {
        raw,
        status,
        detail,
        duration: started.elapsed(),
    }
}

/// Obtain raw output for one tool and pod from `backend`.
pub async fn acquire(tool: Tool, backend: &Backend, pod_name: &str, manifest: &Path) -> RawOutput {
    match backend {
        Backend::Fixture { dir } => read_fixture(dir, pod_name, tool),
        Backend::Exec { bin_dir, timeout } => match resolve_binary(tool.binary_name(), bin_dir.as_deref()) {
            Some(binary) => run_scanner(tool, manifest, &binary, *timeout).await,
            None => RawOutput {
                raw: String::new(),
                status: ScanStatus::ToolMissing,
                detail: Some(format!("{} not found in bin dir or PATH", tool.binary_name())),
                duration: Duration::ZERO,
            },
        },
    }
}

/// Parse and normalize raw output into a report.
pub fn report_from_raw(tool: Tool, pod_name: &str, out: RawOutput) -> ToolReport {
    match out.status {
        ScanStatus::Ok => match parse_output(tool, &out.raw) {
            Ok(records) => ToolReport::ok(tool, pod_name, out.raw, normalize_all(&records)),
            Err(e) => ToolReport::failed(tool, pod_name, ScanStatus::ParseFailed, out.raw, e.to_string()),
        },
        status => ToolReport::failed(tool, pod_name, status, out.raw, out.detail.unwrap_or_default()),
    }
}

/// Run (or replay) one tool for one pod and normalize its findings.
pub async fn scan_pod_tool(tool: Tool, backend: &Backend, pod_name: &str, manifest: &Path) -> (ToolReport, Duration) {
    let out = acquire(tool, backend, pod_name, manifest).await;
    let duration = out.duration;
    (report_from_raw(tool, pod_name, out), duration)
}
