//! Random call graphs checked against exhaustive simple-path enumeration.

use std::collections::{BTreeMap, BTreeSet};

use nativereach_core::vulnreach::{
    reachable_targets, shortest_chains, validate_chain, DEFAULT_EXPANSION_LIMIT,
};
use nativereach_core::xecg::{FunctionId, Xecg};
use rand::rngs::StdRng;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Case {
    pub x: Xecg,
    pub targets: BTreeSet<FunctionId>,
    pub k: usize,
}

const UNITS: [&str; 3] = ["app", "dep", "libdep.so"];

pub fn random_case(rng: &mut StdRng) -> Case {
    let n = rng.random_range(1..=12);
    let ids: Vec<FunctionId> = (0..n)
        .map(|i| FunctionId::new(UNITS[rng.random_range(0..UNITS.len())], &format!("f{i}")))
        .collect();
    let p = rng.random_range(0.05..0.35);
    let mut x = Xecg {
        nodes: ids.iter().cloned().collect(),
        ..Default::default()
    };
    for a in &ids {
        for b in &ids {
            if rng.random_bool(p) {
                x.edges.insert((a.clone(), b.clone()));
            }
        }
    }
    x.roots = ids
        .iter()
        .filter(|_| rng.random_bool(0.3))
        .cloned()
        .collect();
    let targets = ids
        .iter()
        .filter(|_| rng.random_bool(0.25))
        .cloned()
        .collect();
    Case {
        x,
        targets,
        k: rng.random_range(1..=6),
    }
}

/// Every simple path that starts at a root.
pub fn all_simple_paths(x: &Xecg) -> Vec<Vec<FunctionId>> {
    let mut adj: BTreeMap<&FunctionId, Vec<&FunctionId>> = BTreeMap::new();
    for (a, b) in &x.edges {
        adj.entry(a).or_default().push(b);
    }
    fn dfs<'a>(
        adj: &BTreeMap<&'a FunctionId, Vec<&'a FunctionId>>,
        path: &mut Vec<&'a FunctionId>,
        out: &mut Vec<Vec<FunctionId>>,
    ) {
        out.push(path.iter().map(|f| (*f).clone()).collect());
        let last = *path.last().unwrap();
        for &n in adj.get(last).map(Vec::as_slice).unwrap_or_default() {
            if !path.contains(&n) {
                path.push(n);
                dfs(adj, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for r in &x.roots {
        let mut path = vec![r];
        dfs(&adj, &mut path, &mut out);
    }
    out
}

pub fn has_cycle(x: &Xecg) -> bool {
    // a node lies on a cycle iff some simple path from it returns to it
    x.edges.iter().any(|(a, b)| {
        let mut seen = BTreeSet::from([b.clone()]);
        let mut stack = vec![b.clone()];
        while let Some(n) = stack.pop() {
            if n == *a {
                return true;
            }
            for (p, q) in &x.edges {
                if *p == n && seen.insert(q.clone()) {
                    stack.push(q.clone());
                }
            }
        }
        false
    })
}

pub fn check(c: &Case) -> Result<(), String> {
    let paths = all_simple_paths(&c.x);
    let want: BTreeSet<FunctionId> = paths
        .iter()
        .filter_map(|p| p.last())
        .filter(|f| c.targets.contains(*f))
        .cloned()
        .collect();
    let got = reachable_targets(&c.x, &c.targets);
    if got != want {
        return Err(format!("reachable set {got:?} != oracle {want:?} on {c:?}"));
    }

    let mut chains: Vec<&Vec<FunctionId>> = paths
        .iter()
        .filter(|p| c.targets.contains(p.last().unwrap()))
        .collect();
    chains.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    chains.dedup();
    let want: Vec<Vec<FunctionId>> = chains.into_iter().take(c.k).cloned().collect();
    let got = shortest_chains(&c.x, &c.targets, c.k, DEFAULT_EXPANSION_LIMIT);
    if got.truncated {
        return Err(format!("search truncated on {c:?}"));
    }
    if got.chains != want {
        return Err(format!(
            "chains {:?} != oracle {want:?} on {c:?}",
            got.chains
        ));
    }
    if let Some(bad) = got
        .chains
        .iter()
        .find(|ch| !validate_chain(&c.x, &c.targets, ch))
    {
        return Err(format!("invalid chain {bad:?}"));
    }
    Ok(())
}

pub struct Summary {
    pub graphs: usize,
    pub cyclic: usize,
    pub with_findings: usize,
}

pub fn run(trials: usize, rng: &mut StdRng) -> Result<Summary, String> {
    let mut s = Summary {
        graphs: 0,
        cyclic: 0,
        with_findings: 0,
    };
    for _ in 0..trials {
        let c = random_case(rng);
        check(&c)?;
        s.graphs += 1;
        s.cyclic += usize::from(has_cycle(&c.x));
        s.with_findings += usize::from(!reachable_targets(&c.x, &c.targets).is_empty());
    }
    Ok(s)
}
