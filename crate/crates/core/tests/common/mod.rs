//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn sample(name: &str) -> String {
    std::fs::read_to_string(fixtures_dir().join("samples").join(name)).unwrap()
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures_dir().join("golden").join(name)).unwrap()
}

/// Longest common substring by exhaustive search over every start pair.
/// Ties go to the smallest start in `a`, then in `b`.
fn brute_longest(a: &[char], b: &[char]) -> Option<(usize, usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > 0 && best.map_or(true, |(_, _, n)| k > n) {
                best = Some((i, j, k));
            }
        }
    }
    best
}

/// Total characters matched by recursive Ratcliff/Obershelp decomposition.
pub fn brute_matches(a: &[char], b: &[char]) -> usize {
    match brute_longest(a, b) {
        None => 0,
        Some((i, j, k)) => k + brute_matches(&a[..i], &b[..j]) + brute_matches(&a[i + k..], &b[j + k..]),
    }
}

/// Similarity 2M/T, with two empty strings counting as identical.
pub fn oracle_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * brute_matches(&a, &b) as f64 / total as f64
}

/// The original comparison script, line for line, over raw JSON objects:
/// for each Trivy issue, remove the first kubesec issue whose selector is
/// similar enough to the Trivy resolution, then stop looking. Pairs where
/// either side is empty are never compared.
pub fn transliterated_dedupe(trivy: &[Value], kubesec: &[Value], threshold: f64) -> Vec<Value> {
    let mut kubesec_issues: Vec<Value> = kubesec.to_vec();
    for trivy_issue in trivy {
        let resolution = trivy_issue["Resolution"].as_str().unwrap_or("");
        let mut hit = None;
        for kubesec_issue in &kubesec_issues {
            let selector = kubesec_issue["selector"].as_str().unwrap_or("");
            if resolution.is_empty() || selector.is_empty() {
                continue;
            }
            if oracle_ratio(resolution, selector) >= threshold {
                hit = Some(kubesec_issue.clone());
                break;
            }
        }
        if let Some(issue) = hit {
            let pos = kubesec_issues.iter().position(|x| *x == issue).unwrap();
            kubesec_issues.remove(pos);
        }
    }
    kubesec_issues
}

/// Count severities across every merged file under `dir`, reading them as
/// plain JSON.
pub fn recount(dir: &Path) -> (BTreeMap<String, u64>, BTreeMap<String, BTreeMap<String, u64>>) {
    let mut total = BTreeMap::new();
    let mut per = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let counts: &mut BTreeMap<String, u64> = per.entry(name).or_default();
        for f in doc.as_array().unwrap() {
            let sev = f["Severity"].as_str().unwrap().to_string();
            *counts.entry(sev.clone()).or_default() += 1;
            *total.entry(sev).or_default() += 1;
        }
    }
    (total, per)
}

fn trivy_doc(misconfigs: Vec<Value>) -> Value {
    json!({ "SchemaVersion": 2, "Results": [{ "Target": "manifest.yaml", "Misconfigurations": misconfigs }] })
}

fn trivy_item(id: &str, title: &str, resolution: &str, severity: &str) -> Value {
    json!({
        "Type": "Kubernetes Security Check",
        "ID": id,
        "AVDID": format!("AVD-{id}"),
        "Title": title,
        "Description": format!("{title}."),
        "Message": format!("{title} in container 'app'"),
        "Resolution": resolution,
        "Severity": severity,
        "Status": "FAIL",
    })
}

fn kubesec_doc(advise: Vec<Value>) -> Value {
    json!([{ "object": "Pod/x.default", "valid": true, "scoring": { "advise": advise } }])
}

fn kubesec_item(id: &str, selector: &str, points: i64) -> Value {
    json!({ "id": id, "selector": selector, "reason": format!("{id} reduces attack surface"), "points": points })
}

fn kube_score_doc(checks: Vec<Value>) -> Value {
    json!([{ "object_name": "x", "checks": checks }])
}

fn kube_score_item(id: &str, name: &str, grade: i64) -> Value {
    json!({ "check": { "id": id, "name": name, "comment": format!("Checks {name}") }, "grade": grade, "skipped": false })
}

fn kube_linter_doc(reports: Vec<Value>) -> Value {
    json!({ "Reports": reports })
}

fn kube_linter_item(check: &str, remediation: &str) -> Value {
    json!({ "Check": check, "Diagnostic": { "Message": format!("{check} failed") }, "Remediation": remediation })
}

pub const READ_ONLY_RESOLUTION: &str = "Change 'containers[].securityContext.readOnlyRootFilesystem' to 'true'.";
pub const READ_ONLY_SELECTOR: &str = "containers[] .securityContext .readOnlyRootFilesystem == true";

/// Three pods, four scanners each. The only cross-tool duplicate is the
/// read-only-root-filesystem pair in `alpha`; every other Trivy/kubesec
/// pairing scores below 0.65.
pub fn write_corpus(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let pods: [(&str, [Value; 4]); 3] = [
        (
            "alpha",
            [
                trivy_doc(vec![
                    trivy_item("KSV011", "CPU not limited", "Set a limit value under 'containers[].resources.limits.cpu'.", "LOW"),
                    trivy_item("KSV014", "Root file system is not read-only", READ_ONLY_RESOLUTION, "HIGH"),
                ]),
                kubesec_doc(vec![
                    kubesec_item("ServiceAccountName", ".spec .serviceAccountName", 3),
                    kubesec_item("ReadOnlyRootFilesystem", READ_ONLY_SELECTOR, 1),
                ]),
                kube_score_doc(vec![
                    kube_score_item("container-security-context-readonlyrootfilesystem", "Container Security Context ReadOnlyRootFilesystem", 1),
                    kube_score_item("container-resources", "Container Resources", 5),
                ]),
                kube_linter_doc(vec![kube_linter_item("no-read-only-root-fs", "Set readOnlyRootFilesystem to true.")]),
            ],
        ),
        (
            "bravo",
            [
                trivy_doc(vec![
                    trivy_item("KSV009", "Access to host network", "Do not set 'spec.hostNetwork'.", "HIGH"),
                    trivy_item("KSV017", "Privileged", "Set 'containers[].securityContext.privileged' to false.", "CRITICAL"),
                ]),
                kubesec_doc(vec![
                    kubesec_item("LimitsMemory", "containers[] .resources .limits .memory", 1),
                    kubesec_item("HostPID", ".spec .hostPID == true", -9),
                ]),
                kube_score_doc(vec![kube_score_item("pod-networkpolicy", "Pod NetworkPolicy", 10)]),
                kube_linter_doc(vec![]),
            ],
        ),
        (
            "charlie",
            [
                json!({ "SchemaVersion": 2, "Results": [] }),
                kubesec_doc(vec![
                    kubesec_item("AppArmorAny", ".metadata .annotations .\"container.apparmor.security.beta.kubernetes.io/nginx\"", 3),
                    kubesec_item("Privileged", "containers[] .securityContext .privileged == true", -30),
                ]),
                kube_score_doc(vec![kube_score_item("deployment-has-host-podantiaffinity", "Deployment has host PodAntiAffinity", 7)]),
                kube_linter_doc(vec![
                    kube_linter_item("latest-tag", "Use a container image with a specific tag."),
                    kube_linter_item("unset-cpu-requirements", "Set CPU requests for your container."),
                ]),
            ],
        ),
    ];
    let tools = ["trivy", "kubesec", "kube-score", "kube-linter"];
    for (pod, docs) in pods {
        std::fs::write(
            dir.join(format!("{pod}.yaml")),
            format!("apiVersion: v1\nkind: Pod\nmetadata:\n  name: {pod}\n"),
        )
        .unwrap();
        for (tool, doc) in tools.iter().zip(docs) {
            std::fs::write(dir.join(format!("{pod}-{tool}.json")), serde_json::to_string_pretty(&doc).unwrap()).unwrap();
        }
    }
}

/// Findings left per pod once the duplicate is removed.
pub const CORPUS_FINDINGS: [(&str, usize); 3] = [("alpha", 6), ("bravo", 5), ("charlie", 5)];
