//! Plain-text rendering of cycle metrics.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use sentinel_core::pipeline::CycleReport;
use sentinel_core::CycleMetrics;

const STAGES: [&str; 6] = ["Scan", "Dedupe", "Normalize", "Merge", "Persist", "Total"];

fn stage_values(m: &CycleMetrics) -> [f64; 6] {
    [m.scan_s, m.dedupe_s, m.normalize_s, m.merge_s, m.persist_s, m.total_s]
}

/// Stage and per-tool timing tables for one cycle.
pub fn cycle_tables(report: &CycleReport) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    let _ = writeln!(out, "Pods scanned: {}", m.pods_scanned);
    let _ = writeln!(out, "{:<12} {:>10}", "Stage", "Time (s)");
    for (name, value) in STAGES.iter().zip(stage_values(m)) {
        let _ = writeln!(out, "{name:<12} {value:>10.2}");
    }
    if !m.per_tool_s.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "{:<12} {:>10}", "Tool", "Time (s)");
        for (tool, secs) in &m.per_tool_s {
            let _ = writeln!(out, "{:<12} {secs:>10.2}", tool.as_str());
        }
    }
    for failure in &report.failures {
        let _ = writeln!(
            out,
            "warning: {} on {}: {} ({})",
            failure.tool,
            failure.pod,
            failure.status.as_str(),
            failure.detail
        );
    }
    out
}

/// Summary statistics for a series of measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    pub median: f64,
    /// Most frequent value after rounding to two decimals; ties go to the
    /// smallest.
    pub mode: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for v in &sorted {
            *counts.entry((v * 100.0).round() as i64).or_default() += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let mode_key = counts.iter().find(|(_, &c)| c == best).map(|(&k, _)| k).unwrap_or(0);
        Some(Stats {
            min: sorted[0],
            max: sorted[n - 1],
            avg: sorted.iter().sum::<f64>() / n as f64,
            median,
            mode: mode_key as f64 / 100.0,
        })
    }
}

/// Min/max/avg/median/mode of every stage across several cycles.
pub fn loop_summary(history: &[CycleMetrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Cycles completed: {}", history.len());
    if history.is_empty() {
        return out;
    }
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "Stage", "Min", "Max", "Avg", "Median", "Mode"
    );
    for (i, name) in STAGES.iter().enumerate() {
        let series: Vec<f64> = history.iter().map(|m| stage_values(m)[i]).collect();
        let s = Stats::of(&series).expect("non-empty history");
        let _ = writeln!(
            out,
            "{name:<12} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            s.min, s.max, s.avg, s.median, s.mode
        );
    }
    out
}
