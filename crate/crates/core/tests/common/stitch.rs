//! Random multi-unit fixtures and the stitching invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use nativereach_core::elfscan::{BinaryDepTree, BinaryKind, BinaryNode, BinaryPath};
use nativereach_core::pkgmeta::{PackageId, PythonDepTree};
use nativereach_core::xecg::{CallGraph, FunctionId, UnitGraph, UnitKind, EXTERN_UNIT};
use nativereach_core::Diagnostics;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Names are drawn from a small pool so units often define the same ones.
fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_unit(rng: &mut StdRng, unit: &str, kind: UnitKind, names: &[String]) -> UnitGraph {
    let size = rng.random_range(1..=4);
    let mut shuffled = names.to_vec();
    shuffled.shuffle(rng);
    let nodes: BTreeSet<String> = shuffled[..size].iter().cloned().collect();
    let exports = nodes
        .iter()
        .filter(|_| rng.random_bool(0.7))
        .cloned()
        .collect();
    let mut edges = BTreeSet::new();
    for a in &nodes {
        for b in &nodes {
            if rng.random_bool(0.3) {
                edges.insert((a.clone(), b.clone()));
            }
        }
    }
    let node_list: Vec<&String> = nodes.iter().collect();
    let mut external = BTreeSet::new();
    for name in names.iter().filter(|n| !nodes.contains(*n)) {
        if rng.random_bool(0.35) {
            let caller = node_list[rng.random_range(0..node_list.len())].clone();
            external.insert((caller, name.clone()));
        }
    }
    UnitGraph {
        unit: unit.to_string(),
        kind,
        nodes,
        edges,
        external,
        exports,
    }
}

#[derive(Debug, Clone)]
pub struct PyFixture {
    pub tree: PythonDepTree,
    pub graphs: Vec<UnitGraph>,
}

pub fn random_python(rng: &mut StdRng) -> PyFixture {
    let m = rng.random_range(2..=6);
    let pkgs: Vec<PackageId> = (0..m)
        .map(|i| PackageId::new(&format!("p{i}"), "1.0"))
        .collect();
    let mut edges = BTreeSet::new();
    for a in &pkgs {
        for b in &pkgs {
            if a != b && rng.random_bool(0.35) {
                edges.insert((a.clone(), b.clone()));
            }
        }
    }
    let names = pool("py.f", 8);
    let mut graphs = Vec::new();
    for p in &pkgs {
        if rng.random_bool(0.85) {
            graphs.push(random_unit(rng, &p.name, UnitKind::Python, &names));
        }
    }
    PyFixture {
        tree: PythonDepTree {
            root: pkgs[0].clone(),
            nodes: pkgs.into_iter().collect(),
            edges,
            unresolved: BTreeMap::new(),
        },
        graphs,
    }
}

#[derive(Debug, Clone)]
pub struct BinFixture {
    pub tree: BinaryDepTree,
    pub graphs: Vec<UnitGraph>,
}

pub fn random_binary(rng: &mut StdRng) -> BinFixture {
    let n = rng.random_range(2..=7);
    let ids: Vec<String> = (0..n).map(|i| format!("/usr/lib/libb{i}.so.1")).collect();
    let names = pool("sym", 10);
    let mut tree = BinaryDepTree::default();
    for id in &ids {
        let mut deps: Vec<String> = ids
            .iter()
            .filter(|d| *d != id && rng.random_bool(0.4))
            .cloned()
            .collect();
        deps.shuffle(rng);
        let dynsyms = names
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .cloned()
            .collect();
        for d in &deps {
            tree.edges.insert((id.clone(), d.clone()));
        }
        tree.nodes.insert(
            id.clone(),
            BinaryNode {
                id: id.clone(),
                path: BinaryPath::System(PathBuf::from(id)),
                soname: None,
                kind: BinaryKind::System,
                needed: deps
                    .iter()
                    .map(|d| d.rsplit('/').next().unwrap().to_string())
                    .collect(),
                resolved: deps.into_iter().map(Some).collect(),
                dynsyms,
                imports: BTreeSet::new(),
                substituted_from: None,
            },
        );
    }
    let mut graphs = Vec::new();
    for id in &ids {
        if rng.random_bool(0.75) {
            graphs.push(random_unit(rng, id, UnitKind::Binary, &names));
        }
    }
    BinFixture { tree, graphs }
}

fn check_preserved(cg: &CallGraph, graphs: &[UnitGraph]) -> Result<(), String> {
    for g in graphs {
        for n in &g.nodes {
            if !cg.nodes.contains(&FunctionId::new(&g.unit, n)) {
                return Err(format!("node {n} of {} lost", g.unit));
            }
        }
        for (a, b) in &g.edges {
            if !cg
                .edges
                .contains(&(FunctionId::new(&g.unit, a), FunctionId::new(&g.unit, b)))
            {
                return Err(format!("edge {a} -> {b} of {} lost", g.unit));
            }
        }
    }
    Ok(())
}

fn cross_edges(cg: &CallGraph) -> BTreeSet<(FunctionId, FunctionId)> {
    cg.edges
        .iter()
        .filter(|(a, b)| a.unit != b.unit)
        .cloned()
        .collect()
}

pub fn check_python(f: &PyFixture) -> Result<(), String> {
    let mut cg = CallGraph::from_units(&f.graphs);
    let mut diags = Diagnostics::new();
    cg.stitch_python(&f.tree, &mut diags);
    check_preserved(&cg, &f.graphs)?;

    let mut again = cg.clone();
    let added = again.stitch_python(&f.tree, &mut Diagnostics::new());
    if added != 0 || again != cg {
        return Err(format!("re-stitching added {added} edges"));
    }

    let by_unit: BTreeMap<&str, &UnitGraph> =
        f.graphs.iter().map(|g| (g.unit.as_str(), g)).collect();
    let mut want = BTreeSet::new();
    for g in &f.graphs {
        for (caller, name) in &g.external {
            let cands: Vec<&str> = f
                .tree
                .edges
                .iter()
                .filter(|(a, _)| a.name == g.unit)
                .map(|(_, b)| b.name.as_str())
                .filter(|d| by_unit.get(d).is_some_and(|u| u.exports.contains(name)))
                .collect();
            if let [d] = cands.as_slice() {
                want.insert((FunctionId::new(&g.unit, caller), FunctionId::new(d, name)));
            }
        }
    }
    let got = cross_edges(&cg);
    for (a, b) in &got {
        if !f.tree.has_edge(&a.unit, &b.unit) {
            return Err(format!("edge {a} -> {b} crosses a non-dependency"));
        }
    }
    if got != want {
        return Err(format!("cross edges {got:?} != expected {want:?}"));
    }
    Ok(())
}

pub fn check_binary(f: &BinFixture) -> Result<(), String> {
    let mut cg = CallGraph::from_units(&f.graphs);
    let mut diags = Diagnostics::new();
    cg.stitch_binary(&[&f.tree], &mut diags);
    check_preserved(&cg, &f.graphs)?;

    let mut again = cg.clone();
    let added = again.stitch_binary(&[&f.tree], &mut Diagnostics::new());
    if added != 0 || again != cg {
        return Err(format!("re-stitching added {added} edges"));
    }

    let by_unit: BTreeMap<&str, &UnitGraph> =
        f.graphs.iter().map(|g| (g.unit.as_str(), g)).collect();
    let mut want = BTreeSet::new();
    for g in &f.graphs {
        let node = &f.tree.nodes[&g.unit];
        for (caller, sym) in &g.external {
            let first = node.deps().find(|d| match by_unit.get(d) {
                Some(u) => u.exports.contains(sym),
                None => f.tree.nodes[*d].dynsyms.contains(sym),
            });
            let target = FunctionId::new(first.unwrap_or(EXTERN_UNIT), sym);
            want.insert((FunctionId::new(&g.unit, caller), target));
        }
    }
    let got = cross_edges(&cg);
    for (a, b) in &got {
        let along_tree = f.tree.edges.contains(&(a.unit.clone(), b.unit.clone()));
        if !along_tree && b.unit != EXTERN_UNIT {
            return Err(format!("edge {a} -> {b} crosses a non-dependency"));
        }
        if !by_unit.contains_key(b.unit.as_str()) && !cg.synthetic.contains(b) {
            return Err(format!("{b} should be synthetic"));
        }
    }
    if got != want {
        return Err(format!("cross edges {got:?} != expected {want:?}"));
    }
    Ok(())
}

pub struct Summary {
    pub fixtures: usize,
    pub cross_edges: usize,
}

pub fn run(fixtures: usize, rng: &mut StdRng) -> Result<Summary, String> {
    let mut s = Summary {
        fixtures: 0,
        cross_edges: 0,
    };
    for _ in 0..fixtures {
        let py = random_python(rng);
        check_python(&py).map_err(|e| format!("{e}\n{py:?}"))?;
        let bin = random_binary(rng);
        check_binary(&bin).map_err(|e| format!("{e}\n{bin:?}"))?;
        let mut a = CallGraph::from_units(&py.graphs);
        a.stitch_python(&py.tree, &mut Diagnostics::new());
        let mut b = CallGraph::from_units(&bin.graphs);
        b.stitch_binary(&[&bin.tree], &mut Diagnostics::new());
        s.cross_edges += cross_edges(&a).len() + cross_edges(&b).len();
        s.fixtures += 2;
    }
    Ok(s)
}
