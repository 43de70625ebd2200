//! Per-CVE counters and report rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Basis, Finding, Instance, Verdict, VulnDb};
use crate::diag::{Diagnostics, Stage};
use crate::pkgmeta::PackageId;
use crate::upstream::Method;

/// `1 − provenance/upstream`, rounded to four decimals; `0/0` is 0.
pub fn fp_reduction(vuln_upstream: usize, vuln_provenance: usize) -> f64 {
    if vuln_upstream == 0 {
        return 0.0;
    }
    let r = 1.0 - vuln_provenance as f64 / vuln_upstream as f64;
    (r * 10_000.0).round() / 10_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveCounts {
    pub cve: String,
    pub project: String,
    /// Binaries of the project found in the scan.
    pub instances: usize,
    pub hash_matched: usize,
    pub version_matched: usize,
    pub vuln_upstream: usize,
    pub vuln_provenance: usize,
    pub reachable: usize,
    pub fp_reduction: f64,
}

impl CveCounts {
    /// `reachable ≤ vuln_provenance ≤ vuln_upstream ≤ instances`.
    pub fn chain_holds(&self) -> bool {
        self.reachable <= self.vuln_provenance
            && self.vuln_provenance <= self.vuln_upstream
            && self.vuln_upstream <= self.instances
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub package: PackageId,
    pub cves: Vec<CveCounts>,
    pub findings: Vec<Finding>,
    pub instances: Vec<Instance>,
    /// Instances whose provenance could not be judged.
    pub unassessed: Vec<Instance>,
    pub diagnostics: Diagnostics,
}

impl ScanReport {
    /// Findings backed by provenance, the ones that decide the exit code.
    pub fn confirmed(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.basis == Basis::ProvenanceMatch)
    }

    pub fn has_findings(&self) -> bool {
        self.confirmed().next().is_some()
    }

    /// Pretty JSON with keys in sorted order, so any parse and
    /// re-serialization of the output reproduces it byte for byte.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

/// Aggregate instances and findings into a report. An instance vulnerable
/// by provenance but not by the baseline is counted on both sides so the
/// counter chain holds, and reported as a diagnostic.
pub fn emit_report(
    package: &PackageId,
    db: &VulnDb,
    instances: Vec<Instance>,
    findings: Vec<Finding>,
    mut diagnostics: Diagnostics,
) -> ScanReport {
    let mut cves = Vec::new();
    for rec in &db.records {
        let mine: Vec<&Instance> = instances
            .iter()
            .filter(|i| i.cve == rec.record.cve)
            .collect();
        let count = |f: &dyn Fn(&Instance) -> bool| mine.iter().filter(|i| f(i)).count();
        for i in mine
            .iter()
            .filter(|i| i.verdict == Verdict::Vulnerable && i.baseline != Verdict::Vulnerable)
        {
            diagnostics.push(
                Stage::Vulnerability,
                "provenance-exceeds-baseline",
                format!(
                    "{} {}: vulnerable by provenance but not by upstream version",
                    i.cve, i.binary
                ),
            );
        }
        let vuln_provenance = count(&|i| i.verdict == Verdict::Vulnerable);
        let vuln_upstream =
            count(&|i| i.verdict == Verdict::Vulnerable || i.baseline == Verdict::Vulnerable);
        let reachable = mine
            .iter()
            .filter(|i| {
                i.verdict == Verdict::Vulnerable
                    && findings.iter().any(|f| {
                        f.cve == i.cve
                            && f.binary == i.binary
                            && f.basis == Basis::ProvenanceMatch
                            && f.is_reachable()
                    })
            })
            .count();
        cves.push(CveCounts {
            cve: rec.record.cve.clone(),
            project: rec.record.project.clone(),
            instances: mine.len(),
            hash_matched: count(&|i| i.method == Method::HashMatch),
            version_matched: count(&|i| i.method == Method::VersionMatch),
            vuln_upstream,
            vuln_provenance,
            reachable,
            fp_reduction: fp_reduction(vuln_upstream, vuln_provenance),
        });
    }
    let unassessed = instances
        .iter()
        .filter(|i| i.verdict == Verdict::Unknown)
        .cloned()
        .collect();
    ScanReport {
        package: package.clone(),
        cves,
        findings,
        instances,
        unassessed,
        diagnostics,
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn render_text(r: &ScanReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scan of {}", r.package);
    let _ = writeln!(out);
    let mut rows = vec![[
        "CVE",
        "project",
        "inst",
        "hash",
        "ver",
        "vuln-up",
        "vuln-prov",
        "reach",
        "fp-red",
    ]
    .map(String::from)
    .to_vec()];
    for c in &r.cves {
        rows.push(vec![
            c.cve.clone(),
            c.project.clone(),
            c.instances.to_string(),
            c.hash_matched.to_string(),
            c.version_matched.to_string(),
            c.vuln_upstream.to_string(),
            c.vuln_provenance.to_string(),
            c.reachable.to_string(),
            format!("{:.0}%", c.fp_reduction * 100.0),
        ]);
    }
    out.push_str(&table(&rows));

    let _ = writeln!(out, "\nfindings:");
    if r.findings.is_empty() {
        let _ = writeln!(out, "  none");
    }
    for f in &r.findings {
        let basis = match f.basis {
            Basis::ProvenanceMatch => "REACHABLE",
            Basis::UpstreamOnlyMatch => "reachable (upstream version only)",
        };
        let _ = writeln!(out, "  {} {} in {} [{}]", f.cve, basis, f.binary, f.tag);
        let _ = writeln!(out, "    symbols: {}", f.reachable_symbols.join(", "));
        for (i, chain) in f.chains.iter().enumerate() {
            let steps: Vec<String> = chain.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "    chain {}: {}", i + 1, steps.join(" -> "));
        }
        if f.truncated {
            let _ = writeln!(out, "    (chain search truncated)");
        }
    }

    let _ = writeln!(out, "\ninstances:");
    let mut rows = Vec::new();
    for i in &r.instances {
        rows.push(vec![
            format!("  {}", i.cve),
            i.binary.clone(),
            i.tag.to_string(),
            format!("{:?}", i.verdict),
            format!("baseline {:?}", i.baseline),
            if i.ambiguous_comparison {
                "ambiguous-comparison".into()
            } else {
                String::new()
            },
        ]);
    }
    if rows.is_empty() {
        let _ = writeln!(out, "  none");
    }
    out.push_str(&table(&rows));

    if !r.unassessed.is_empty() {
        let _ = writeln!(out, "\nunassessed:");
        for i in &r.unassessed {
            let _ = writeln!(out, "  {} {} {}", i.cve, i.binary, i.tag);
        }
    }
    if !r.diagnostics.is_empty() {
        let _ = writeln!(out, "\ndiagnostics:");
        for d in r.diagnostics.iter() {
            let _ = writeln!(out, "  {d}");
        }
    }
    out
}
