//! Cross-tool duplicate removal.
//!
//! For each enabled `(source, target)` pair, every source finding removes at
//! most one target finding: the first one, in current list order, whose
//! `Resolution` is similar enough to its own. Source lists are never touched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gestalt;
use crate::model::{Finding, Tool};

pub const DEFAULT_THRESHOLD: f64 = 0.65;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupeConfig {
    pub threshold: f64,
    /// Ordered `(source, target)` pairs; findings in `target` are dropped when
    /// they duplicate a finding in `source`.
    pub enabled_pairs: Vec<(Tool, Tool)>,
}

impl Default for DedupeConfig {
    fn default() -> Self {
        DedupeConfig {
            threshold: DEFAULT_THRESHOLD,
            enabled_pairs: vec![(Tool::Trivy, Tool::Kubesec)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DedupeConfigError {
    #[error("dedupe threshold must be within [0, 1], got {0}")]
    Threshold(f64),
    #[error("dedupe pair ({0}, {0}) compares a tool with itself")]
    SelfPair(Tool),
}

impl DedupeConfig {
    pub fn with_threshold(threshold: f64) -> Result<Self, DedupeConfigError> {
        let cfg = DedupeConfig {
            threshold,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DedupeConfigError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(DedupeConfigError::Threshold(self.threshold));
        }
        if let Some((tool, _)) = self.enabled_pairs.iter().find(|(s, t)| s == t) {
            return Err(DedupeConfigError::SelfPair(*tool));
        }
        Ok(())
    }
}

/// Whether `candidate` duplicates `keeper`: the gestalt ratio of their
/// resolutions reaches `threshold`. Pairs where either resolution is empty are
/// never duplicates.
pub fn is_duplicate(keeper: &Finding, candidate: &Finding, threshold: f64) -> bool {
    if keeper.resolution.is_empty() || candidate.resolution.is_empty() {
        return false;
    }
    let (a, b) = (keeper.resolution.as_str(), candidate.resolution.as_str());
    gestalt::quick_ratio(a, b) >= threshold && gestalt::ratio(a, b) >= threshold
}

/// Drop duplicate findings from one pod's per-tool lists.
pub fn dedupe_pod(mut reports: BTreeMap<Tool, Vec<Finding>>, config: &DedupeConfig) -> BTreeMap<Tool, Vec<Finding>> {
    for &(source, target) in &config.enabled_pairs {
        if source == target {
            continue;
        }
        let Some(mut targets) = reports.remove(&target) else {
            continue;
        };
        if let Some(sources) = reports.get(&source) {
            for keeper in sources {
                if let Some(pos) = targets.iter().position(|c| is_duplicate(keeper, c, config.threshold)) {
                    targets.remove(pos);
                }
            }
        }
        reports.insert(target, targets);
    }
    reports
}
