//! Domain types shared across the pipeline: severities, the common finding
//! template, scan targets, per-tool reports and cycle metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Value of the `Type` field for every finding produced by a non-Trivy scanner.
pub const KUBERNETES_SECURITY_CHECK: &str = "Kubernetes Security Check";

/// Triage severity. Declaration order is display order: CRITICAL sorts first,
/// UNKNOWN last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Critical,
    High,
    Medium,
    Low,
    Unknown,
}

impl Severity {
    pub const ALL: [Severity; 5] = [
        Severity::Critical,
        Severity::High,
        Severity::Medium,
        Severity::Low,
        Severity::Unknown,
    ];

    /// Sort key: 0 for CRITICAL through 4 for UNKNOWN.
    pub fn rank(self) -> u8 {
        match self {
            Severity::Critical => 0,
            Severity::High => 1,
            Severity::Medium => 2,
            Severity::Low => 3,
            Severity::Unknown => 4,
        }
    }

    /// Case-insensitive parse. Anything that is not one of the five names is
    /// UNKNOWN, so this never fails.
    pub fn parse(text: &str) -> Severity {
        let text = text.trim();
        Severity::ALL
            .into_iter()
            .find(|s| s.as_str().eq_ignore_ascii_case(text))
            .unwrap_or(Severity::Unknown)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Critical => "CRITICAL",
            Severity::High => "HIGH",
            Severity::Medium => "MEDIUM",
            Severity::Low => "LOW",
            Severity::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Severity::parse(s))
    }
}

impl Serialize for Severity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Null or non-string severities fall through to UNKNOWN like any other
        // unrecognized text.
        let value = Option::<serde_json::Value>::deserialize(deserializer)?;
        Ok(match value {
            Some(serde_json::Value::String(s)) => Severity::parse(&s),
            _ => Severity::Unknown,
        })
    }
}

/// Scanner identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tool {
    Trivy,
    Kubesec,
    KubeScore,
    KubeLinter,
    /// Canned output in the common template, read from a fixture directory.
    Fixture,
}

impl Tool {
    /// The four real scanners, in merge order.
    pub const SCANNERS: [Tool; 4] = [Tool::Trivy, Tool::Kubesec, Tool::KubeScore, Tool::KubeLinter];

    /// Merge order: trivy, kubesec, kube-score, kube-linter, then fixture.
    pub const MERGE_ORDER: [Tool; 5] = [
        Tool::Trivy,
        Tool::Kubesec,
        Tool::KubeScore,
        Tool::KubeLinter,
        Tool::Fixture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Trivy => "trivy",
            Tool::Kubesec => "kubesec",
            Tool::KubeScore => "kube-score",
            Tool::KubeLinter => "kube-linter",
            Tool::Fixture => "fixture",
        }
    }

    /// Executable name looked up in the bin dir and on `PATH`.
    pub fn binary_name(self) -> &'static str {
        self.as_str()
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tool `{0}` (expected trivy, kubesec, kube-score, kube-linter or fixture)")]
pub struct UnknownTool(pub String);

impl FromStr for Tool {
    type Err = UnknownTool;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tool::MERGE_ORDER
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownTool(s.to_string()))
    }
}

/// One misconfiguration in the common eight-field template.
///
/// Serializes with exactly the keys `Type, ID, AVDID, Title, Description,
/// Message, Resolution, Severity`, in that order. `source_tool` is internal
/// and never leaves the process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(rename = "Type", default, deserialize_with = "null_as_empty")]
    pub type_: String,
    #[serde(rename = "ID", default, deserialize_with = "null_as_empty")]
    pub id: String,
    #[serde(rename = "AVDID", default, deserialize_with = "null_as_empty")]
    pub avdid: String,
    #[serde(rename = "Title", default, deserialize_with = "null_as_empty")]
    pub title: String,
    #[serde(rename = "Description", default, deserialize_with = "null_as_empty")]
    pub description: String,
    #[serde(rename = "Message", default, deserialize_with = "null_as_empty")]
    pub message: String,
    #[serde(rename = "Resolution", default, deserialize_with = "null_as_empty")]
    pub resolution: String,
    #[serde(rename = "Severity", default = "unknown_severity")]
    pub severity: Severity,
    #[serde(skip)]
    pub source_tool: Option<Tool>,
}

fn unknown_severity() -> Severity {
    Severity::Unknown
}

/// Scanner output is loose about nulls; the template carries empty strings.
pub(crate) fn null_as_empty<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    let value = Option::<serde_json::Value>::deserialize(d)?;
    Ok(match value {
        None | Some(serde_json::Value::Null) => String::new(),
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
    })
}

impl Finding {
    /// A finding with the generic `Type` and every text field empty.
    pub fn new(title: impl Into<String>, severity: Severity) -> Self {
        Finding {
            type_: KUBERNETES_SECURITY_CHECK.to_string(),
            id: String::new(),
            avdid: String::new(),
            title: title.into(),
            description: String::new(),
            message: String::new(),
            resolution: String::new(),
            severity,
            source_tool: None,
        }
    }

    pub fn with_message(mut self, message: impl Into<String>) -> Self {
        self.message = message.into();
        self
    }

    pub fn with_resolution(mut self, resolution: impl Into<String>) -> Self {
        self.resolution = resolution.into();
        self
    }

    pub fn with_source(mut self, tool: Tool) -> Self {
        self.source_tool = Some(tool);
        self
    }
}

/// Sort findings by severity, CRITICAL first. Stable.
pub fn sort_by_severity(findings: &mut [Finding]) {
    findings.sort_by_key(|f| f.severity.rank());
}

/// Serialize a finding list the way the merged files and the store lay it
/// out: a pretty-printed JSON array with two-space indent and a trailing
/// newline.
pub fn findings_to_json(findings: &[Finding]) -> String {
    let mut out = serde_json::to_string_pretty(findings).expect("findings always serialize");
    out.push('\n');
    out
}

/// A pod to scan. `manifest` is empty until the manifest has been fetched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodTarget {
    pub namespace: String,
    pub pod_name: String,
    pub manifest: String,
}

impl PodTarget {
    pub fn new(namespace: impl Into<String>, pod_name: impl Into<String>) -> Self {
        PodTarget {
            namespace: namespace.into(),
            pod_name: pod_name.into(),
            manifest: String::new(),
        }
    }
}

/// Outcome of one scanner invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStatus {
    Ok,
    ToolMissing,
    ExecFailed,
    ParseFailed,
}

impl ScanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanStatus::Ok => "ok",
            ScanStatus::ToolMissing => "tool_missing",
            ScanStatus::ExecFailed => "exec_failed",
            ScanStatus::ParseFailed => "parse_failed",
        }
    }
}

/// One tool's findings for one pod.
///
/// Invariant: a report whose status is not `Ok` carries no findings.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolReport {
    pub tool: Tool,
    pub pod_name: String,
    pub findings: Vec<Finding>,
    pub raw: String,
    pub status: ScanStatus,
    pub detail: Option<String>,
}

impl ToolReport {
    pub fn ok(tool: Tool, pod_name: impl Into<String>, raw: String, findings: Vec<Finding>) -> Self {
        ToolReport {
            tool,
            pod_name: pod_name.into(),
            findings,
            raw,
            status: ScanStatus::Ok,
            detail: None,
        }
    }

    pub fn failed(
        tool: Tool,
        pod_name: impl Into<String>,
        status: ScanStatus,
        raw: String,
        detail: impl Into<String>,
    ) -> Self {
        debug_assert_ne!(status, ScanStatus::Ok);
        ToolReport {
            tool,
            pod_name: pod_name.into(),
            findings: Vec::new(),
            raw,
            status,
            detail: Some(detail.into()),
        }
    }
}

/// Wall-clock seconds spent in each stage of one cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub scan_s: f64,
    pub dedupe_s: f64,
    pub normalize_s: f64,
    pub merge_s: f64,
    pub persist_s: f64,
    pub total_s: f64,
    pub pods_scanned: usize,
    /// Cumulative scanner time per tool across all pods.
    pub per_tool_s: BTreeMap<Tool, f64>,
}

/// Slack allowed between the measured total and the sum of its stages.
pub const METRICS_EPSILON_S: f64 = 0.1;

impl CycleMetrics {
    pub fn stage_sum(&self) -> f64 {
        self.scan_s + self.dedupe_s + self.normalize_s + self.merge_s + self.persist_s
    }

    /// `total_s` covers the stages (within [`METRICS_EPSILON_S`]) and nothing
    /// is negative.
    pub fn is_consistent(&self) -> bool {
        let stages = [
            self.scan_s,
            self.dedupe_s,
            self.normalize_s,
            self.merge_s,
            self.persist_s,
            self.total_s,
        ];
        stages.iter().chain(self.per_tool_s.values()).all(|d| *d >= 0.0 && d.is_finite())
            && self.total_s >= self.stage_sum() - METRICS_EPSILON_S
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_matches_display_order() {
        assert_eq!(Severity::Critical.rank(), 0);
        assert_eq!(Severity::High.rank(), 1);
        assert_eq!(Severity::Medium.rank(), 2);
        assert_eq!(Severity::Low.rank(), 3);
        assert_eq!(Severity::Unknown.rank(), 4);
        for pair in Severity::ALL.windows(2) {
            assert!(pair[0] < pair[1]);
            assert!(pair[0].rank() < pair[1].rank());
        }
    }

    #[test]
    fn parse_is_case_insensitive_and_total() {
        assert_eq!(Severity::parse("HIGH"), Severity::High);
        assert_eq!(Severity::parse("Unknown"), Severity::Unknown);
        assert_eq!(Severity::parse("UNKNOWN"), Severity::Unknown);
        assert_eq!(Severity::parse("critical"), Severity::Critical);
        assert_eq!(Severity::parse(""), Severity::Unknown);
        assert_eq!(Severity::parse("severe"), Severity::Unknown);
    }

    #[test]
    fn finding_serializes_eight_keys_in_template_order() {
        let f = Finding::new("t", Severity::Low).with_source(Tool::Kubesec);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(
            json,
            r#"{"Type":"Kubernetes Security Check","ID":"","AVDID":"","Title":"t","Description":"","Message":"","Resolution":"","Severity":"LOW"}"#
        );
    }

    #[test]
    fn deserialize_canonicalizes_severity_and_nulls() {
        let f: Finding = serde_json::from_str(
            r#"{"Type":"x","ID":null,"Title":"t","Severity":"Unknown","Extra":1}"#,
        )
        .unwrap();
        assert_eq!(f.severity, Severity::Unknown);
        assert_eq!(f.id, "");
        assert_eq!(f.avdid, "");
        let f: Finding = serde_json::from_str(r#"{"Title":"t","Severity":null}"#).unwrap();
        assert_eq!(f.severity, Severity::Unknown);
    }

    #[test]
    fn tool_names_round_trip() {
        for tool in Tool::MERGE_ORDER {
            assert_eq!(tool.as_str().parse::<Tool>().unwrap(), tool);
            assert_eq!(serde_json::to_string(&tool).unwrap(), format!("\"{}\"", tool.as_str()));
        }
        assert!("kubeaudit".parse::<Tool>().is_err());
    }

    #[test]
    fn metrics_consistency() {
        let mut m = CycleMetrics {
            scan_s: 1.0,
            dedupe_s: 0.5,
            total_s: 1.45,
            ..Default::default()
        };
        assert!(m.is_consistent());
        m.total_s = 1.3;
        assert!(!m.is_consistent());
        m.total_s = 2.0;
        m.per_tool_s.insert(Tool::Trivy, -1.0);
        assert!(!m.is_consistent());
    }
}
