//! Backport cases from vendored-library vulnerability reports.

use nativereach_core::upstream::ProvenanceTag;
use nativereach_core::vulnreach::{
    baseline_upstream_only, is_vulnerable, CompiledRecord, Verdict, VulnRecord,
};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Case {
    pub project: String,
    pub library: String,
    pub record: VulnRecord,
    pub tag: ProvenanceTag,
    pub expected: Verdict,
}

pub fn cases() -> Vec<Case> {
    serde_json::from_str(include_str!("../data/backport_cases.json")).expect("fixture parses")
}

pub struct Row {
    pub case: Case,
    pub verdict: Verdict,
    pub baseline: Verdict,
}

pub fn evaluate() -> Vec<Row> {
    cases()
        .into_iter()
        .map(|case| {
            let rec = CompiledRecord::compile(case.record.clone()).expect("record compiles");
            Row {
                verdict: is_vulnerable(&case.tag, &rec),
                baseline: baseline_upstream_only(&case.tag, &rec),
                case,
            }
        })
        .collect()
}

pub struct Outcome {
    pub rows: usize,
    pub verdict_mismatches: Vec<String>,
    pub baseline_flagged: usize,
    /// Rows the provenance verdict calls vulnerable but the baseline does not.
    pub missed_by_baseline: Vec<String>,
    /// Fixed or not-affected rows the baseline still flags.
    pub false_positives: usize,
}

pub fn summarize(rows: &[Row]) -> Outcome {
    let label = |r: &Row| {
        format!(
            "{}/{} {}",
            r.case.project, r.case.library, r.case.record.cve
        )
    };
    Outcome {
        rows: rows.len(),
        verdict_mismatches: rows
            .iter()
            .filter(|r| r.verdict != r.case.expected)
            .map(|r| {
                format!(
                    "{}: {:?}, expected {:?}",
                    label(r),
                    r.verdict,
                    r.case.expected
                )
            })
            .collect(),
        baseline_flagged: rows
            .iter()
            .filter(|r| r.baseline == Verdict::Vulnerable)
            .count(),
        missed_by_baseline: rows
            .iter()
            .filter(|r| r.verdict == Verdict::Vulnerable && r.baseline != Verdict::Vulnerable)
            .map(label)
            .collect(),
        false_positives: rows
            .iter()
            .filter(|r| r.verdict != Verdict::Vulnerable && r.baseline == Verdict::Vulnerable)
            .count(),
    }
}
