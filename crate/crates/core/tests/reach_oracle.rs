mod common;

use nativereach_core::vulnreach::{reachable_targets, shortest_chains, DEFAULT_EXPANSION_LIMIT};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn thousand_random_graphs_match_path_enumeration() {
    let s = common::reach::run(1000, &mut common::rng(7)).unwrap();
    assert_eq!(s.graphs, 1000);
    // the generator must exercise cycles and both outcomes
    assert!(s.cyclic > 100, "{} cyclic", s.cyclic);
    assert!(
        s.with_findings > 100 && s.with_findings < 900,
        "{} with findings",
        s.with_findings
    );
}

proptest! {
    #[test]
    fn matches_oracle(seed in any::<u64>()) {
        let c = common::reach::random_case(&mut common::rng(seed));
        prop_assert!(common::reach::check(&c).is_ok(), "{:?}", common::reach::check(&c));
    }

    #[test]
    fn adding_edges_keeps_targets_reachable(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let c = common::reach::random_case(&mut rng);
        let before = reachable_targets(&c.x, &c.targets);
        let nodes: Vec<_> = c.x.nodes.iter().cloned().collect();
        let mut x = c.x.clone();
        for _ in 0..rng.random_range(1..=5) {
            let a = nodes[rng.random_range(0..nodes.len())].clone();
            let b = nodes[rng.random_range(0..nodes.len())].clone();
            x.edges.insert((a, b));
        }
        let after = reachable_targets(&x, &c.targets);
        prop_assert!(before.is_subset(&after));
        // a shortest chain can only get shorter
        let old = shortest_chains(&c.x, &c.targets, 1, DEFAULT_EXPANSION_LIMIT);
        let new = shortest_chains(&x, &c.targets, 1, DEFAULT_EXPANSION_LIMIT);
        if let Some(o) = old.chains.first() {
            prop_assert!(new.chains.first().is_some_and(|n| n.len() <= o.len()));
        }
    }

    #[test]
    fn chain_count_is_monotone_in_k(seed in any::<u64>()) {
        let c = common::reach::random_case(&mut common::rng(seed));
        let small = shortest_chains(&c.x, &c.targets, c.k, DEFAULT_EXPANSION_LIMIT).chains;
        let big = shortest_chains(&c.x, &c.targets, c.k + 3, DEFAULT_EXPANSION_LIMIT).chains;
        prop_assert_eq!(&big[..small.len()], &small[..]);
    }
}
