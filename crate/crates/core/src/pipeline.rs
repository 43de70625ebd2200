//! End-to-end scan: dependency resolution through the report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostics, Stage};
use crate::elfscan::{
    expand_binary_tree, BinaryDepTree, BinaryKind, ExpandError, ExpandOptions, SysResolver,
};
use crate::pkgmeta::{
    parse_wheel_metadata, resolve_python_dep_tree, ParseOptions, PythonDepTree, ResolveError,
    WheelRepository,
};
use crate::upstream::{annotate_provenance, Method, Provenance, ProvenanceContext};
use crate::vulnreach::{assess_instances, emit_report, reachable_findings, ScanReport, VulnDb};
use crate::xecg::{merge, BridgeMap, CallGraph, UnitGraph, UnitKind, Xecg};

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("{pkg}: {source}")]
    Expand {
        pkg: String,
        #[source]
        source: ExpandError,
    },
}

pub struct ScanInputs<'a> {
    pub wheel: &'a [u8],
    pub repo: &'a dyn WheelRepository,
    pub sys: &'a dyn SysResolver,
    pub parse: ParseOptions,
    pub expand: ExpandOptions,
    pub provenance: ProvenanceContext<'a>,
    pub graphs: &'a [UnitGraph],
    pub bridges: &'a BridgeMap,
    pub vulns: &'a VulnDb,
    /// Chains listed per finding.
    pub k: usize,
}

/// The report plus the intermediate artifacts it was computed from.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub report: ScanReport,
    pub python: PythonDepTree,
    pub trees: Vec<BinaryDepTree>,
    pub provenance: BTreeMap<String, Provenance>,
    pub xecg: Xecg,
}

/// Run every stage on `inputs.wheel`. Only an unreadable root wheel
/// aborts; anything else degrades the result and leaves a diagnostic.
pub fn scan(inputs: &ScanInputs<'_>) -> Result<ScanOutcome, ScanError> {
    let res = resolve_python_dep_tree(inputs.wheel, inputs.repo, &inputs.parse)?;
    let mut diags = res.diagnostics;
    let python = res.tree;

    let mut trees = Vec::new();
    for pkg in &python.nodes {
        let bytes = if *pkg == python.root {
            inputs.wheel.to_vec()
        } else {
            match inputs.repo.fetch(&pkg.name, &pkg.version) {
                Ok(b) => b,
                Err(e) => {
                    diags.push(Stage::Binary, "fetch-failed", format!("{pkg}: {e}"));
                    continue;
                }
            }
        };
        match expand_binary_tree(pkg, &bytes, inputs.sys, &inputs.expand) {
            Ok(x) => {
                diags.extend(x.diagnostics);
                trees.push(x.tree);
            }
            Err(source) if *pkg == python.root => {
                return Err(ScanError::Expand {
                    pkg: pkg.to_string(),
                    source,
                })
            }
            Err(e) => diags.push(Stage::Binary, "expand-failed", format!("{pkg}: {e}")),
        }
    }

    let mut provenance = BTreeMap::new();
    for t in &trees {
        let owner = t.owner.clone().expect("expanded trees have owners");
        let a = annotate_provenance(t, &owner, &inputs.provenance, t);
        diags.extend(a.diagnostics);
        for (id, p) in a.provenance {
            provenance.entry(id).or_insert(p);
        }
    }

    let mut py = CallGraph::from_units(inputs.graphs.iter().filter(|g| g.kind == UnitKind::Python));
    py.stitch_python(&python, &mut diags);
    let mut bin =
        CallGraph::from_units(inputs.graphs.iter().filter(|g| g.kind == UnitKind::Binary));
    let tree_refs: Vec<&BinaryDepTree> = trees.iter().collect();
    bin.stitch_binary(&tree_refs, &mut diags);
    let (xecg, d) = merge(&py, &bin, inputs.bridges, &python.root.name);
    diags.extend(d);
    if xecg.roots.is_empty() {
        diags.push(
            Stage::Callgraph,
            "no-roots",
            format!("no call graph for the scanned package {}", python.root),
        );
    }

    let instances = assess_instances(&provenance, inputs.vulns);
    let findings = reachable_findings(&xecg, &instances, inputs.vulns, &python.root, inputs.k);
    let report = emit_report(&python.root, inputs.vulns, instances, findings, diags);
    Ok(ScanOutcome {
        report,
        python,
        trees,
        provenance,
        xecg,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingEntry {
    pub id: String,
    pub path: String,
    pub kind: BinaryKind,
    pub provenance: Provenance,
}

/// How vendored libraries were identified.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub vendored: usize,
    pub hash_matched: usize,
    pub version_matched: usize,
    pub unknown: usize,
}

impl CoverageStats {
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a ListingEntry>) -> Self {
        let mut s = CoverageStats::default();
        for e in entries
            .into_iter()
            .filter(|e| e.kind == BinaryKind::Vendored)
        {
            s.vendored += 1;
            match e.provenance.method {
                Method::HashMatch => s.hash_matched += 1,
                Method::VersionMatch => s.version_matched += 1,
                _ => s.unknown += 1,
            }
        }
        s
    }

    fn frac(&self, n: usize) -> f64 {
        if self.vendored == 0 {
            0.0
        } else {
            n as f64 / self.vendored as f64
        }
    }

    pub fn hash_fraction(&self) -> f64 {
        self.frac(self.hash_matched)
    }

    pub fn version_fraction(&self) -> f64 {
        self.frac(self.version_matched)
    }

    pub fn unknown_fraction(&self) -> f64 {
        self.frac(self.unknown)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceListing {
    pub entries: Vec<ListingEntry>,
    pub stats: CoverageStats,
    pub diagnostics: Diagnostics,
}

/// Expand and annotate a single wheel, without resolving its dependencies.
pub fn provenance_listing(
    wheel: &[u8],
    parse: &ParseOptions,
    sys: &dyn SysResolver,
    expand: &ExpandOptions,
    ctx: &ProvenanceContext<'_>,
) -> Result<ProvenanceListing, ScanError> {
    let md = parse_wheel_metadata(wheel, parse).map_err(ResolveError::from)?;
    let x = expand_binary_tree(&md.id, wheel, sys, expand).map_err(|source| ScanError::Expand {
        pkg: md.id.to_string(),
        source,
    })?;
    let mut diagnostics = md.diagnostics;
    diagnostics.extend(x.diagnostics);
    let a = annotate_provenance(&x.tree, &md.id, ctx, &x.tree);
    diagnostics.extend(a.diagnostics);
    let mut prov = a.provenance;
    let entries: Vec<ListingEntry> = x
        .tree
        .nodes
        .values()
        .map(|n| ListingEntry {
            id: n.id.clone(),
            path: n.path.to_string(),
            kind: n.kind,
            provenance: prov.remove(&n.id).expect("every node is annotated"),
        })
        .collect();
    Ok(ProvenanceListing {
        stats: CoverageStats::from_entries(&entries),
        entries,
        diagnostics,
    })
}
