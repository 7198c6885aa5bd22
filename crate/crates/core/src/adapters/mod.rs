//! Scanner adapters: per-tool record types, severity derivation and output
//! parsing. Invocation lives in [`exec`].

pub mod exec;

use serde_json::Value;

use crate::model::{Finding, Severity, Tool};

pub use exec::{
    acquire, report_from_raw, resolve_binary, run_scanner, scan_pod_tool, scanner_args, Backend, RawOutput,
};

/// One entry of kubesec's `.scoring.advise` list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KubesecRecord {
    pub id: String,
    pub selector: String,
    pub reason: String,
    pub points: Option<i64>,
    pub severity: Severity,
}

/// One kube-score check result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KubescoreRecord {
    pub name: String,
    pub id: String,
    pub comment: String,
    pub grade: Option<i64>,
    pub severity: Severity,
}

/// One kube-linter report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KubelinterRecord {
    pub check: String,
    pub message: String,
    pub remediation: String,
}

/// One Trivy misconfiguration. Already shaped like the common template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrivyRecord {
    pub type_: String,
    pub id: String,
    pub avdid: String,
    pub title: String,
    pub description: String,
    pub message: String,
    pub resolution: String,
    pub severity: Severity,
}

/// A parsed record from any tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolRecord {
    Trivy(TrivyRecord),
    Kubesec(KubesecRecord),
    KubeScore(KubescoreRecord),
    KubeLinter(KubelinterRecord),
    /// Fixture output is already in the common template.
    Fixture(Finding),
}

impl ToolRecord {
    pub fn tool(&self) -> Tool {
        match self {
            ToolRecord::Trivy(_) => Tool::Trivy,
            ToolRecord::Kubesec(_) => Tool::Kubesec,
            ToolRecord::KubeScore(_) => Tool::KubeScore,
            ToolRecord::KubeLinter(_) => Tool::KubeLinter,
            ToolRecord::Fixture(_) => Tool::Fixture,
        }
    }
}

/// Kubesec point values to severity: -30 is CRITICAL, -9/-7 HIGH, -3/-1
/// MEDIUM, 1/3 LOW, anything else UNKNOWN.
pub fn severity_from_points(points: i64) -> Severity {
    match points {
        -30 => Severity::Critical,
        -9 | -7 => Severity::High,
        -3 | -1 => Severity::Medium,
        1 | 3 => Severity::Low,
        _ => Severity::Unknown,
    }
}

/// kube-score grade to severity: 10 is CRITICAL, 7..=9 HIGH, 5..=6 MEDIUM,
/// below 5 LOW. Absent or above 10 is UNKNOWN.
pub fn severity_from_grade(grade: Option<i64>) -> Severity {
    match grade {
        Some(10) => Severity::Critical,
        Some(7..=9) => Severity::High,
        Some(5..=6) => Severity::Medium,
        Some(g) if g < 5 => Severity::Low,
        _ => Severity::Unknown,
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{tool} output is not valid JSON: {source}")]
pub struct ParseError {
    pub tool: Tool,
    #[source]
    pub source: serde_json::Error,
}

/// Parse raw scanner output into that tool's records.
///
/// Fails only when `raw` is not JSON. Documents of an unexpected shape
/// degrade to an empty list.
pub fn parse_output(tool: Tool, raw: &str) -> Result<Vec<ToolRecord>, ParseError> {
    let doc: Value = serde_json::from_str(raw).map_err(|source| ParseError { tool, source })?;
    Ok(match tool {
        Tool::Trivy => parse_trivy(&doc).into_iter().map(ToolRecord::Trivy).collect(),
        Tool::Kubesec => parse_kubesec(&doc).into_iter().map(ToolRecord::Kubesec).collect(),
        Tool::KubeScore => parse_kube_score(&doc).into_iter().map(ToolRecord::KubeScore).collect(),
        Tool::KubeLinter => parse_kube_linter(&doc).into_iter().map(ToolRecord::KubeLinter).collect(),
        Tool::Fixture => parse_fixture(&doc).into_iter().map(ToolRecord::Fixture).collect(),
    })
}

fn items(v: Option<&Value>) -> &[Value] {
    match v {
        Some(Value::Array(items)) => items,
        _ => &[],
    }
}

fn text(v: &Value, key: &str) -> String {
    match v.get(key) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

fn integer(v: &Value, key: &str) -> Option<i64> {
    v.get(key).and_then(Value::as_i64)
}

/// `.[].scoring.advise[]`, in document order.
fn parse_kubesec(doc: &Value) -> Vec<KubesecRecord> {
    items(Some(doc))
        .iter()
        .flat_map(|result| items(result.get("scoring").and_then(|s| s.get("advise"))))
        .map(|advice| {
            let points = integer(advice, "points");
            KubesecRecord {
                id: text(advice, "id"),
                selector: text(advice, "selector"),
                reason: text(advice, "reason"),
                points,
                severity: points.map_or(Severity::Unknown, severity_from_points),
            }
        })
        .collect()
}

/// `.[] | .checks[]`.
fn parse_kube_score(doc: &Value) -> Vec<KubescoreRecord> {
    items(Some(doc))
        .iter()
        .flat_map(|object| items(object.get("checks")))
        .map(|check| {
            let meta = check.get("check").unwrap_or(&Value::Null);
            let grade = integer(check, "grade");
            KubescoreRecord {
                name: text(meta, "name"),
                id: text(meta, "id"),
                comment: text(meta, "comment"),
                grade,
                severity: severity_from_grade(grade),
            }
        })
        .collect()
}

/// `.Reports[]`, taking the message from `.Diagnostic.Message`.
fn parse_kube_linter(doc: &Value) -> Vec<KubelinterRecord> {
    items(doc.get("Reports"))
        .iter()
        .map(|report| KubelinterRecord {
            check: text(report, "Check"),
            message: report.get("Diagnostic").map(|d| text(d, "Message")).unwrap_or_default(),
            remediation: text(report, "Remediation"),
        })
        .collect()
}

/// `.Results[].Misconfigurations[]` objects that carry a severity, stably
/// sorted CRITICAL first.
fn parse_trivy(doc: &Value) -> Vec<TrivyRecord> {
    let mut records: Vec<TrivyRecord> = items(doc.get("Results"))
        .iter()
        .flat_map(|result| items(result.get("Misconfigurations")))
        .filter(|m| m.is_object())
        // jq's `select(.Severity)` drops null and false only.
        .filter(|m| !matches!(m.get("Severity"), None | Some(Value::Null) | Some(Value::Bool(false))))
        .map(|m| TrivyRecord {
            type_: text(m, "Type"),
            id: text(m, "ID"),
            avdid: text(m, "AVDID"),
            title: text(m, "Title"),
            description: text(m, "Description"),
            message: text(m, "Message"),
            resolution: text(m, "Resolution"),
            severity: m.get("Severity").and_then(Value::as_str).map_or(Severity::Unknown, Severity::parse),
        })
        .collect();
    records.sort_by_key(|r| r.severity.rank());
    records
}

/// An array of template objects; non-object entries are skipped.
fn parse_fixture(doc: &Value) -> Vec<Finding> {
    items(Some(doc))
        .iter()
        .filter(|v| v.is_object())
        .filter_map(|v| serde_json::from_value::<Finding>(v.clone()).ok())
        .collect()
}
