mod common;

use std::collections::BTreeSet;

use pathrec_core::graph::{self, BipartiteGraph, RandomQueue, Subgraph};
use pathrec_core::seed;
use proptest::prelude::*;
use rand::Rng;

fn full(g: &BipartiteGraph) -> Subgraph {
    Subgraph::induced(g, 0..g.node_count() as u32)
}

fn parents(s: &Subgraph) -> BTreeSet<u32> {
    s.nodes().iter().copied().collect()
}

fn anchors_for<R: Rng>(rng: &mut R, sub: &Subgraph) -> Vec<usize> {
    if sub.is_empty() {
        return Vec::new();
    }
    let a = rng.random_range(0..sub.len());
    let b = rng.random_range(0..sub.len());
    if a == b { vec![a] } else { vec![a, b] }
}

#[test]
fn k_core_matches_fixed_point_oracle() {
    let mut rng = seed::rng_from(11);
    for _ in 0..200 {
        let (users, items, p) = (rng.random_range(2..30), rng.random_range(2..30), rng.random_range(0.05..0.3));
        let g = common::random_bipartite(&mut rng, users, items, p);
        let sub = full(&g);
        let anchors = anchors_for(&mut rng, &sub);
        for k in 1..=3 {
            let got = graph::k_core(&sub, k, &anchors);
            assert_eq!(parents(&got), common::brute_k_core(&sub, k, &anchors));
        }
    }
}

#[test]
fn k_core_on_sixty_node_graph() {
    let mut rng = seed::rng_from(60);
    let g = common::random_bipartite(&mut rng, 30, 30, 0.1);
    let sub = full(&g);
    for k in 1..=3 {
        assert_eq!(parents(&graph::k_core(&sub, k, &[0, 1])), common::brute_k_core(&sub, k, &[0, 1]));
    }
}

#[test]
fn k_core_peel_order_does_not_matter() {
    let mut rng = seed::rng_from(5);
    let g = common::random_bipartite(&mut rng, 25, 25, 0.12);
    let sub = full(&g);
    let anchors = [0, sub.len() - 1];
    for k in 1..=3 {
        let fifo = parents(&graph::k_core(&sub, k, &anchors));
        for trial in 0..50 {
            let q = RandomQueue::new(seed::rng_from(1000 + trial));
            assert_eq!(parents(&graph::k_core_with(&sub, k, &anchors, q)), fifo);
        }
    }
}

#[test]
fn l_hop_matches_bfs_distance_filter() {
    let mut rng = seed::rng_from(3);
    for _ in 0..100 {
        let g = common::random_bipartite(&mut rng, 15, 15, 0.12);
        if g.node_count() < 2 {
            continue;
        }
        let u = rng.random_range(0..g.node_count() as u32);
        let v = rng.random_range(0..g.node_count() as u32);
        let (du, dv) = (common::bfs(&g, u), common::bfs(&g, v));
        for hops in 1..=3 {
            let expected: BTreeSet<u32> = (0..g.node_count())
                .filter(|&n| du[n].is_some_and(|d| d <= hops) || dv[n].is_some_and(|d| d <= hops))
                .map(|n| n as u32)
                .collect();
            let sub = graph::l_hop_subgraph(&g, g.node(u), g.node(v), hops).unwrap();
            assert_eq!(parents(&sub), expected);
        }
    }
}

#[test]
fn l_hop_rejects_zero_hops() {
    let g = BipartiteGraph::from_edges([("a", "x")]);
    let err = graph::l_hop_subgraph(&g, g.node(0), g.node(1), 0);
    assert!(matches!(err, Err(graph::GraphError::ZeroHops)));
}

fn arb_graph() -> impl Strategy<Value = (BipartiteGraph, u64)> {
    (2usize..14, 2usize..14, 0.05f64..0.4, any::<u64>()).prop_map(|(u, i, p, s)| {
        let mut rng = seed::rng_from(s);
        (common::random_bipartite(&mut rng, u, i, p), s)
    })
    .prop_filter("graph needs an edge", |(g, _)| g.edge_count() > 0)
}

proptest! {
    #[test]
    fn induced_subgraph_law((g, s) in arb_graph()) {
        let mut rng = seed::rng_from(s ^ 1);
        let keep: Vec<u32> = (0..g.node_count() as u32).filter(|_| rng.random::<bool>()).collect();
        let sub = Subgraph::induced(&g, keep.iter().copied());
        let set: BTreeSet<u32> = keep.iter().copied().collect();
        let expected: BTreeSet<(u32, u32)> = set
            .iter()
            .flat_map(|&a| g.neighbors(a).iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a < b && set.contains(&b))
            .collect();
        prop_assert_eq!(sub.edges(), expected);
    }

    #[test]
    fn k_core_degree_guarantee_and_idempotence((g, s) in arb_graph(), k in 1usize..4) {
        let mut rng = seed::rng_from(s ^ 2);
        let sub = full(&g);
        let anchors = anchors_for(&mut rng, &sub);
        let anchor_parents: Vec<u32> = anchors.iter().map(|&a| sub.parent_index(a)).collect();
        let core = graph::k_core(&sub, k, &anchors);
        for local in 0..core.len() {
            if !anchor_parents.contains(&core.parent_index(local)) {
                prop_assert!(core.degree(local) >= k);
            }
        }
        for &a in &anchor_parents {
            prop_assert!(core.contains(a));
        }
        let again_anchors: Vec<usize> = anchor_parents.iter().map(|&a| core.local(a).unwrap()).collect();
        let again = graph::k_core(&core, k, &again_anchors);
        prop_assert_eq!(again, core);
    }

    #[test]
    fn l_hop_is_monotone_in_radius((g, s) in arb_graph()) {
        let mut rng = seed::rng_from(s ^ 3);
        let u = rng.random_range(0..g.node_count() as u32);
        let v = rng.random_range(0..g.node_count() as u32);
        let mut prev = BTreeSet::new();
        for hops in 1..=4 {
            let cur = parents(&graph::l_hop_by_index(&g, u, v, hops));
            prop_assert!(prev.is_subset(&cur));
            prev = cur;
        }
    }

    #[test]
    fn graph_is_bipartite_and_symmetric((g, _s) in arb_graph()) {
        for a in 0..g.node_count() as u32 {
            let ns = g.neighbors(a);
            prop_assert!(ns.windows(2).all(|w| w[0] < w[1]));
            for &b in ns {
                prop_assert_ne!(g.node(a).kind, g.node(b).kind);
                prop_assert!(g.neighbors(b).contains(&a));
            }
        }
    }

    #[test]
    fn edge_file_round_trips((g, _s) in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.tsv");
        g.save_edges(&path).unwrap();
        prop_assert_eq!(BipartiteGraph::load_edges(&path).unwrap(), g);
    }
}
