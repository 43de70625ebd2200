//! Reachability and bounded call-chain enumeration over the XECG.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use crate::xecg::{FunctionId, Xecg};

/// Cap on partial chains popped per search.
pub const DEFAULT_EXPANSION_LIMIT: usize = 1_000_000;

/// The XECG with nodes numbered in their sort order, so comparing index
/// sequences is comparing node sequences.
pub struct Indexed<'a> {
    pub ids: Vec<&'a FunctionId>,
    index: BTreeMap<&'a FunctionId, u32>,
    succ: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
}

impl<'a> Indexed<'a> {
    pub fn new(x: &'a Xecg) -> Self {
        let ids: Vec<&FunctionId> = x.nodes.iter().collect();
        let index: BTreeMap<&FunctionId, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, f)| (*f, i as u32))
            .collect();
        let mut succ = vec![Vec::new(); ids.len()];
        let mut pred = vec![Vec::new(); ids.len()];
        for (a, b) in &x.edges {
            if let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) {
                succ[i as usize].push(j);
                pred[j as usize].push(i);
            }
        }
        for v in succ.iter_mut().chain(pred.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Indexed {
            ids,
            index,
            succ,
            pred,
        }
    }

    pub fn get(&self, f: &FunctionId) -> Option<u32> {
        self.index.get(f).copied()
    }

    fn closure(&self, start: impl IntoIterator<Item = u32>, forward: bool) -> Vec<bool> {
        let adj = if forward { &self.succ } else { &self.pred };
        let mut seen = vec![false; self.ids.len()];
        let mut q: VecDeque<u32> = VecDeque::new();
        for s in start {
            if !seen[s as usize] {
                seen[s as usize] = true;
                q.push_back(s);
            }
        }
        while let Some(n) = q.pop_front() {
            for &m in &adj[n as usize] {
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    q.push_back(m);
                }
            }
        }
        seen
    }
}

/// Targets reachable from any root, roots included.
pub fn reachable_targets(x: &Xecg, targets: &BTreeSet<FunctionId>) -> BTreeSet<FunctionId> {
    let g = Indexed::new(x);
    let seen = g.closure(x.roots.iter().filter_map(|r| g.get(r)), true);
    targets
        .iter()
        .filter(|t| g.get(t).is_some_and(|i| seen[i as usize]))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSearch {
    pub chains: Vec<Vec<FunctionId>>,
    /// The expansion limit was hit; fewer than `k` chains may be listed.
    pub truncated: bool,
}

/// Up to `k` simple chains from a root to a target, shortest first and
/// lexicographic among equal lengths. Chains may pass through other
/// targets.
pub fn shortest_chains(
    x: &Xecg,
    targets: &BTreeSet<FunctionId>,
    k: usize,
    limit: usize,
) -> ChainSearch {
    let g = Indexed::new(x);
    shortest_chains_indexed(&g, x, targets, k, limit)
}

pub fn shortest_chains_indexed(
    g: &Indexed<'_>,
    x: &Xecg,
    targets: &BTreeSet<FunctionId>,
    k: usize,
    limit: usize,
) -> ChainSearch {
    let mut out = ChainSearch {
        chains: Vec::new(),
        truncated: false,
    };
    if k == 0 {
        return out;
    }
    let tidx: Vec<u32> = targets.iter().filter_map(|t| g.get(t)).collect();
    let mut is_target = vec![false; g.ids.len()];
    for &t in &tidx {
        is_target[t as usize] = true;
    }
    let useful = g.closure(tidx.iter().copied(), false);
    let mut heap: BinaryHeap<Reverse<(usize, Vec<u32>)>> = BinaryHeap::new();
    for r in x.roots.iter().filter_map(|r| g.get(r)) {
        if useful[r as usize] {
            heap.push(Reverse((1, vec![r])));
        }
    }
    let mut pops = 0usize;
    while let Some(Reverse((_, path))) = heap.pop() {
        pops += 1;
        if pops > limit {
            out.truncated = true;
            break;
        }
        let last = *path.last().unwrap();
        if is_target[last as usize] {
            out.chains
                .push(path.iter().map(|&i| g.ids[i as usize].clone()).collect());
            if out.chains.len() == k {
                break;
            }
        }
        for &n in &g.succ[last as usize] {
            if useful[n as usize] && !path.contains(&n) {
                let mut p = path.clone();
                p.push(n);
                heap.push(Reverse((p.len(), p)));
            }
        }
    }
    out
}

/// Check that `chain` starts at a root, ends in `targets`, and follows
/// XECG edges.
pub fn validate_chain(x: &Xecg, targets: &BTreeSet<FunctionId>, chain: &[FunctionId]) -> bool {
    match (chain.first(), chain.last()) {
        (Some(first), Some(last)) => {
            x.roots.contains(first)
                && targets.contains(last)
                && chain.windows(2).all(|w| x.has_edge(&w[0], &w[1]))
        }
        _ => false,
    }
}
