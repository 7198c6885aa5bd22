//! Mapping tool records onto the common finding template.

use crate::adapters::ToolRecord;
use crate::model::{Finding, Severity, Tool, KUBERNETES_SECURITY_CHECK};

fn template(title: &str, message: &str, resolution: &str, severity: Severity, tool: Tool) -> Finding {
    Finding {
        type_: KUBERNETES_SECURITY_CHECK.to_string(),
        id: String::new(),
        avdid: String::new(),
        title: title.to_string(),
        description: String::new(),
        message: message.to_string(),
        resolution: resolution.to_string(),
        severity,
        source_tool: Some(tool),
    }
}

/// Convert one record into a [`Finding`].
///
/// kubesec's `selector` becomes `Resolution` verbatim, which is what dedup
/// compares against Trivy's `Resolution`. kube-linter has no severity, so its
/// findings are UNKNOWN.
pub fn normalize(record: &ToolRecord) -> Finding {
    match record {
        ToolRecord::Kubesec(r) => template(&r.id, &r.reason, &r.selector, r.severity, Tool::Kubesec),
        ToolRecord::KubeScore(r) => Finding {
            id: r.id.clone(),
            ..template(&r.name, &r.comment, "", r.severity, Tool::KubeScore)
        },
        ToolRecord::KubeLinter(r) => template(&r.check, &r.message, &r.remediation, Severity::Unknown, Tool::KubeLinter),
        ToolRecord::Trivy(r) => Finding {
            type_: r.type_.clone(),
            id: r.id.clone(),
            avdid: r.avdid.clone(),
            title: r.title.clone(),
            description: r.description.clone(),
            message: r.message.clone(),
            resolution: r.resolution.clone(),
            severity: r.severity,
            source_tool: Some(Tool::Trivy),
        },
        ToolRecord::Fixture(f) => Finding {
            source_tool: Some(Tool::Fixture),
            ..f.clone()
        },
    }
}

/// Normalize a record list, preserving order.
pub fn normalize_all(records: &[ToolRecord]) -> Vec<Finding> {
    records.iter().map(normalize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{KubelinterRecord, KubescoreRecord, KubesecRecord};

    #[test]
    fn kubesec_selector_becomes_resolution() {
        let f = normalize(&ToolRecord::Kubesec(KubesecRecord {
            id: "ReadOnlyRootFilesystem".into(),
            selector: "sel".into(),
            reason: "why".into(),
            points: Some(1),
            severity: Severity::Low,
        }));
        assert_eq!(f.title, "ReadOnlyRootFilesystem");
        assert_eq!(f.resolution, "sel");
        assert_eq!(f.message, "why");
        assert_eq!(f.id, "");
        assert_eq!(f.severity, Severity::Low);
        assert_eq!(f.source_tool, Some(Tool::Kubesec));
    }

    #[test]
    fn kube_score_keeps_id_and_has_no_resolution() {
        let f = normalize(&ToolRecord::KubeScore(KubescoreRecord {
            name: "N".into(),
            id: "n".into(),
            comment: "c".into(),
            grade: Some(7),
            severity: Severity::High,
        }));
        assert_eq!((f.id.as_str(), f.title.as_str(), f.message.as_str(), f.resolution.as_str()), ("n", "N", "c", ""));
        assert_eq!(f.severity, Severity::High);
    }

    #[test]
    fn kube_linter_is_unknown() {
        let f = normalize(&ToolRecord::KubeLinter(KubelinterRecord {
            check: "c".into(),
            message: "m".into(),
            remediation: "r".into(),
        }));
        assert_eq!(f.severity, Severity::Unknown);
        assert_eq!(f.resolution, "r");
        assert_eq!(f.type_, KUBERNETES_SECURITY_CHECK);
    }

    #[test]
    fn order_is_preserved() {
        let records: Vec<_> = (0..5)
            .map(|i| {
                ToolRecord::KubeLinter(KubelinterRecord {
                    check: i.to_string(),
                    message: String::new(),
                    remediation: String::new(),
                })
            })
            .collect();
        let titles: Vec<_> = normalize_all(&records).into_iter().map(|f| f.title).collect();
        assert_eq!(titles, vec!["0", "1", "2", "3", "4"]);
    }
}
