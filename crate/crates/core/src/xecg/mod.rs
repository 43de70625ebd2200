//! Cross-ecosystem call graph: per-unit graphs stitched along the Python and
//! binary dependency trees, then joined through bridge maps.

mod load;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use load::{
    load_bridge_map, load_call_graph, load_call_graph_dir, load_call_graph_str, parse_bridge_map,
    parse_unit_graph, LoadError, SchemaError,
};

use crate::diag::{Diagnostics, Stage};
use crate::elfscan::BinaryDepTree;
use crate::pkgmeta::PythonDepTree;

/// Unit of the synthetic nodes standing for symbols no dependency defines.
pub const EXTERN_UNIT: &str = "<extern>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Python,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionId {
    pub unit: String,
    pub name: String,
}

impl FunctionId {
    pub fn new(unit: &str, name: &str) -> Self {
        FunctionId {
            unit: unit.to_string(),
            name: name.to_string(),
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.name, self.unit)
    }
}

/// One unit's call graph as loaded from its interchange document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitGraph {
    pub unit: String,
    pub kind: UnitKind,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    /// `(caller, imported name)` calls leaving the unit.
    pub external: BTreeSet<(String, String)>,
    pub exports: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bridge {
    pub py_unit: String,
    pub py_fn: String,
    pub bin_unit: String,
    pub bin_sym: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BridgeMap {
    pub entries: Vec<Bridge>,
}

/// Several units' graphs over global function ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    pub units: BTreeMap<String, UnitKind>,
    pub nodes: BTreeSet<FunctionId>,
    pub edges: BTreeSet<(FunctionId, FunctionId)>,
    pub synthetic: BTreeSet<FunctionId>,
    pub exports: BTreeMap<String, BTreeSet<String>>,
    /// Cross-unit references still to be stitched, kept after stitching so
    /// that re-stitching is a no-op.
    pub external: BTreeSet<(FunctionId, String)>,
}

impl CallGraph {
    /// Disjoint union of unit graphs. A unit appearing twice is merged.
    pub fn from_units<'a>(graphs: impl IntoIterator<Item = &'a UnitGraph>) -> Self {
        let mut cg = CallGraph::default();
        for g in graphs {
            cg.units.insert(g.unit.clone(), g.kind);
            let id = |n: &str| FunctionId::new(&g.unit, n);
            cg.nodes.extend(g.nodes.iter().map(|n| id(n)));
            cg.edges.extend(g.edges.iter().map(|(a, b)| (id(a), id(b))));
            cg.external
                .extend(g.external.iter().map(|(a, n)| (id(a), n.clone())));
            cg.exports
                .entry(g.unit.clone())
                .or_default()
                .extend(g.exports.iter().cloned());
        }
        cg
    }

    fn exports_of(&self, unit: &str, name: &str) -> bool {
        self.exports.get(unit).is_some_and(|e| e.contains(name))
    }

    /// Resolve Python cross-package calls against each package's direct
    /// dependencies. Returns the number of edges added.
    pub fn stitch_python(&mut self, deps: &PythonDepTree, diags: &mut Diagnostics) -> usize {
        let mut direct: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (a, b) in &deps.edges {
            direct
                .entry(a.name.as_str())
                .or_default()
                .insert(b.name.as_str());
        }
        for pkg in &deps.nodes {
            if !self.units.contains_key(&pkg.name) {
                diags.push(
                    Stage::Callgraph,
                    "missing-callgraph",
                    format!("no call graph for {pkg}; treated as opaque"),
                );
            }
        }
        let mut added = 0;
        let refs: Vec<(FunctionId, String)> = self
            .external
            .iter()
            .filter(|(c, _)| self.units.get(&c.unit) == Some(&UnitKind::Python))
            .cloned()
            .collect();
        for (caller, name) in refs {
            let cands: Vec<&str> = direct
                .get(caller.unit.as_str())
                .into_iter()
                .flatten()
                .copied()
                .filter(|d| self.exports_of(d, &name))
                .collect();
            match cands.as_slice() {
                [] => {}
                [d] => {
                    let target = FunctionId::new(d, &name);
                    added += self.edges.insert((caller, target)) as usize;
                }
                many => diags.push(
                    Stage::Callgraph,
                    "ambiguous-call",
                    format!(
                        "{name} called from {} is defined by {}; not linked",
                        caller.unit,
                        many.join(", ")
                    ),
                ),
            }
        }
        added
    }

    /// Resolve imported symbols of each binary against its DT_NEEDED
    /// dependencies, first definition wins. Symbols nobody defines become
    /// synthetic `<extern>` leaves. Returns the number of edges added.
    pub fn stitch_binary(&mut self, trees: &[&BinaryDepTree], diags: &mut Diagnostics) -> usize {
        let mut deps: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut dynsyms: BTreeMap<&str, &BTreeSet<String>> = BTreeMap::new();
        for t in trees {
            for n in t.nodes.values() {
                let d = deps.entry(n.id.as_str()).or_default();
                for r in n.deps() {
                    if !d.contains(&r) {
                        d.push(r);
                    }
                }
                dynsyms.insert(n.id.as_str(), &n.dynsyms);
            }
        }
        for id in deps.keys() {
            if !self.units.contains_key(*id) {
                diags.push(
                    Stage::Callgraph,
                    "missing-callgraph",
                    format!("no call graph for {id}; treated as opaque"),
                );
            }
        }
        let mut added = 0;
        let refs: Vec<(FunctionId, String)> = self
            .external
            .iter()
            .filter(|(c, _)| self.units.get(&c.unit) == Some(&UnitKind::Binary))
            .cloned()
            .collect();
        for (caller, sym) in refs {
            // A dependency without a graph still defines what its dynamic
            // symbol table exports.
            let defines = |d: &str| {
                if self.units.contains_key(d) {
                    self.exports_of(d, &sym)
                } else {
                    dynsyms.get(d).is_some_and(|s| s.contains(&sym))
                }
            };
            let cands: Vec<&str> = deps
                .get(caller.unit.as_str())
                .into_iter()
                .flatten()
                .copied()
                .filter(|d| defines(d))
                .collect();
            let target = match cands.first() {
                Some(d) => {
                    if cands.len() > 1 {
                        diags.push(
                            Stage::Callgraph,
                            "multiple-definitions",
                            format!(
                                "{sym} for {} defined by {}; using {d}",
                                caller.unit,
                                cands.join(", ")
                            ),
                        );
                    }
                    let t = FunctionId::new(d, &sym);
                    if !self.units.contains_key(*d) {
                        self.synthetic.insert(t.clone());
                    }
                    t
                }
                None => {
                    let t = FunctionId::new(EXTERN_UNIT, &sym);
                    self.synthetic.insert(t.clone());
                    t
                }
            };
            self.nodes.insert(target.clone());
            added += self.edges.insert((caller, target)) as usize;
        }
        added
    }
}

pub fn stitch_python(graphs: &[UnitGraph], deps: &PythonDepTree) -> (CallGraph, Diagnostics) {
    let mut diags = Diagnostics::new();
    let mut cg = CallGraph::from_units(graphs.iter().filter(|g| g.kind == UnitKind::Python));
    cg.stitch_python(deps, &mut diags);
    (cg, diags)
}

pub fn stitch_binary(graphs: &[UnitGraph], trees: &[&BinaryDepTree]) -> (CallGraph, Diagnostics) {
    let mut diags = Diagnostics::new();
    let mut cg = CallGraph::from_units(graphs.iter().filter(|g| g.kind == UnitKind::Binary));
    cg.stitch_binary(trees, &mut diags);
    (cg, diags)
}

/// The final graph reachability runs on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Xecg {
    pub nodes: BTreeSet<FunctionId>,
    pub edges: BTreeSet<(FunctionId, FunctionId)>,
    pub synthetic: BTreeSet<FunctionId>,
    pub roots: BTreeSet<FunctionId>,
}

impl Xecg {
    pub fn successors<'a>(
        &'a self,
        f: &'a FunctionId,
    ) -> impl Iterator<Item = &'a FunctionId> + 'a {
        let lo = (f.clone(), FunctionId::new("", ""));
        self.edges
            .range(lo..)
            .take_while(move |(a, _)| a == f)
            .map(|(_, b)| b)
    }

    pub fn has_edge(&self, a: &FunctionId, b: &FunctionId) -> bool {
        self.edges.contains(&(a.clone(), b.clone()))
    }
}

/// Join the Python and binary graphs through `bridges`. Roots are every
/// function of `root_unit`.
pub fn merge(
    py: &CallGraph,
    bin: &CallGraph,
    bridges: &BridgeMap,
    root_unit: &str,
) -> (Xecg, Diagnostics) {
    let mut diags = Diagnostics::new();
    let mut x = Xecg {
        nodes: py.nodes.union(&bin.nodes).cloned().collect(),
        edges: py.edges.union(&bin.edges).cloned().collect(),
        synthetic: py.synthetic.union(&bin.synthetic).cloned().collect(),
        roots: BTreeSet::new(),
    };
    for b in &bridges.entries {
        let from = FunctionId::new(&b.py_unit, &b.py_fn);
        let to = FunctionId::new(&b.bin_unit, &b.bin_sym);
        let missing: Vec<String> = [&from, &to]
            .into_iter()
            .filter(|f| !x.nodes.contains(*f))
            .map(|f| f.to_string())
            .collect();
        if missing.is_empty() {
            x.edges.insert((from, to));
        } else {
            diags.push(
                Stage::Callgraph,
                "dangling-bridge",
                format!(
                    "bridge {from} -> {to}: {} not in any call graph",
                    missing.join(", ")
                ),
            );
        }
    }
    x.roots = x
        .nodes
        .iter()
        .filter(|f| f.unit == root_unit)
        .cloned()
        .collect();
    (x, diags)
}
