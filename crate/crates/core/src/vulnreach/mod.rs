//! Vulnerability matching, reachability findings, and scan reports.

mod chains;
mod record;
mod report;
mod verdict;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use chains::{
    reachable_targets, shortest_chains, shortest_chains_indexed, validate_chain, ChainSearch,
    Indexed, DEFAULT_EXPANSION_LIMIT,
};
pub use record::{CompiledRecord, OsFix, RecordError, VulnDb, VulnRecord};
pub use report::{emit_report, fp_reduction, render_text, CveCounts, ScanReport};
pub use verdict::{baseline_upstream_only, is_vulnerable, union, upstream_version_of, Verdict};

use crate::pkgmeta::{
    normalize_name, parse_wheel_metadata, MetadataError, PackageId, ParseOptions,
};
use crate::upstream::{Method, Provenance, ProvenanceTag};
use crate::versioncmp::PyVersion;
use crate::xecg::{FunctionId, Xecg};

pub const DEFAULT_K: usize = 5;

/// One binary judged against one CVE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub cve: String,
    pub binary: String,
    pub tag: ProvenanceTag,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<ProvenanceTag>,
    pub method: Method,
    pub verdict: Verdict,
    pub baseline: Verdict,
    /// A letter-suffixed release was compared against a range.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous_comparison: bool,
}

/// Judge every binary whose upstream project has records in `db`.
pub fn assess_instances(provenance: &BTreeMap<String, Provenance>, db: &VulnDb) -> Vec<Instance> {
    let mut out = Vec::new();
    for rec in &db.records {
        for (id, p) in provenance {
            let project = match &p.tag {
                ProvenanceTag::Upstream { project, .. } => Some(project.as_str()),
                _ => p.project.as_deref(),
            };
            if project != Some(rec.record.project.as_str()) {
                continue;
            }
            let verdict = union(p.all_tags().map(|t| is_vulnerable(t, rec)));
            let baseline = union(p.all_tags().map(|t| baseline_upstream_only(t, rec)));
            let ambiguous_comparison = p
                .all_tags()
                .filter_map(upstream_version_of)
                .any(|v| rec.upstream_ambiguous(&v));
            out.push(Instance {
                cve: rec.record.cve.clone(),
                binary: id.clone(),
                tag: p.tag.clone(),
                alternatives: p.alternatives.clone(),
                method: p.method,
                verdict,
                baseline,
                ambiguous_comparison,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    ProvenanceMatch,
    UpstreamOnlyMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub package: PackageId,
    pub cve: String,
    pub binary: String,
    pub tag: ProvenanceTag,
    pub basis: Basis,
    /// Vulnerable symbols of the binary reachable from the roots.
    pub reachable_symbols: Vec<String>,
    pub chains: Vec<Vec<FunctionId>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl Finding {
    pub fn is_reachable(&self) -> bool {
        !self.reachable_symbols.is_empty()
    }
}

/// Vulnerable symbols of `binary` present in the XECG.
pub fn vulnerable_targets(x: &Xecg, binary: &str, rec: &CompiledRecord) -> BTreeSet<FunctionId> {
    x.nodes
        .iter()
        .filter(|f| f.unit == binary && rec.matches_symbol(&f.name))
        .cloned()
        .collect()
}

/// A finding for every instance judged vulnerable, by provenance or by the
/// baseline alone, whose vulnerable symbols the roots reach.
pub fn reachable_findings(
    x: &Xecg,
    instances: &[Instance],
    db: &VulnDb,
    package: &PackageId,
    k: usize,
) -> Vec<Finding> {
    let g = Indexed::new(x);
    let mut out = Vec::new();
    for inst in instances {
        let basis = if inst.verdict == Verdict::Vulnerable {
            Basis::ProvenanceMatch
        } else if inst.baseline == Verdict::Vulnerable {
            Basis::UpstreamOnlyMatch
        } else {
            continue;
        };
        let Some(rec) = db.records.iter().find(|r| r.record.cve == inst.cve) else {
            continue;
        };
        let targets = vulnerable_targets(x, &inst.binary, rec);
        let reach = reachable_targets(x, &targets);
        if reach.is_empty() {
            continue;
        }
        let search = shortest_chains_indexed(&g, x, &targets, k, DEFAULT_EXPANSION_LIMIT);
        out.push(Finding {
            package: package.clone(),
            cve: inst.cve.clone(),
            binary: inst.binary.clone(),
            tag: inst.tag.clone(),
            basis,
            reachable_symbols: reach.into_iter().map(|f| f.name).collect(),
            chains: search.chains,
            truncated: search.truncated,
        });
    }
    out
}

/// Whether `client` forces resolution of `target` onto a vulnerable
/// version: some requirement on `target` admits at least one of the
/// `available` versions and every admitted one is in `vulnerable`.
pub fn pinned_dependents(
    client: &[u8],
    target: &str,
    vulnerable: &BTreeSet<String>,
    available: &[String],
    opts: &ParseOptions,
) -> Result<bool, MetadataError> {
    let meta = parse_wheel_metadata(client, opts)?;
    let target = normalize_name(target);
    let parsed: Vec<(PyVersion, &String)> = available
        .iter()
        .filter_map(|v| v.parse::<PyVersion>().ok().map(|p| (p, v)))
        .collect();
    Ok(meta.deps.iter().filter(|d| d.name == target).any(|d| {
        let admitted: Vec<&String> = parsed
            .iter()
            .filter(|(p, _)| d.admits(p))
            .map(|(_, v)| *v)
            .collect();
        !admitted.is_empty() && admitted.iter().all(|v| vulnerable.contains(*v))
    }))
}
