mod common;

use pathrec_core::datastore::ProfileStore;
use pathrec_core::graph::{BipartiteGraph, NodeId};
use pathrec_core::retrieval::{
    self, check_path, edge_weight, render_prompt, retrieve, top_k_paths, ArcRule, Representations, RetrievalConfig,
    RetrievalPath,
};
use pathrec_core::{seed, synth};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn top_k_matches_exhaustive_enumeration() {
    let mut rng = seed::rng_from(21);
    for trial in 0..300 {
        let n = rng.random_range(2..=12);
        let p = rng.random_range(0.2..0.7);
        let (wg, src, dst) = common::random_digraph(&mut rng, n, p, trial % 2 == 0);
        let oracle = common::all_simple_paths(&wg, &src, &dst);
        for k in [1, 3, 5] {
            let got = top_k_paths(&wg, &src, &dst, k).unwrap();
            let want: Vec<_> = oracle.iter().take(k).collect();
            assert_eq!(got.len(), want.len(), "trial {trial} k {k}");
            for (p, (nodes, len)) in got.iter().zip(want) {
                assert_eq!(&p.nodes, nodes, "trial {trial} k {k}");
                assert_eq!(p.length, *len);
                check_path(p, &wg, &src, &dst).unwrap();
            }
        }
    }
}

#[test]
fn top_one_is_the_dijkstra_distance() {
    let mut rng = seed::rng_from(22);
    for _ in 0..200 {
        let n = rng.random_range(2..=20);
        let (wg, src, dst) = common::random_digraph(&mut rng, n, 0.3, false);
        let got = top_k_paths(&wg, &src, &dst, 1).unwrap();
        match common::dijkstra_len(&wg, &src, &dst) {
            Some(d) => assert!((got[0].length - d).abs() < 1e-12),
            None => assert!(got.is_empty()),
        }
    }
}

#[test]
fn arc_weight_spot_values() {
    assert_eq!(edge_weight(0.3, 7, true), 1.0);
    assert!(edge_weight(1.0, 1, false).abs() < 1e-12);
    assert!((edge_weight(0.0, 2, false) - 4f64.ln()).abs() < 1e-9);
    let mut rng = seed::rng_from(23);
    for _ in 0..10_000 {
        let w = edge_weight(rng.random_range(-1.0..=1.0), rng.random_range(1..=100), false);
        assert!(w >= 0.0);
    }
}

fn chain(n_hops: usize) -> (BipartiteGraph, Representations, NodeId, NodeId) {
    // u0 - i0 - u1 - i1 - ... alternating, ending on an item
    let mut edges = Vec::new();
    for h in 0..n_hops {
        let (a, b) = (format!("u{}", h.div_ceil(2)), format!("i{}", h / 2));
        edges.push((a, b));
    }
    let g = BipartiteGraph::from_edges(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    let log = pathrec_core::datastore::InteractionLog::new(
        edges
            .iter()
            .map(|(u, i)| pathrec_core::datastore::Interaction { user: u.clone(), item: i.clone(), timestamp: 0 })
            .collect(),
    );
    let reps = synth::random_reps(&log, 4, 1);
    let last = format!("i{}", (n_hops - 1) / 2);
    (g, reps, NodeId::user("u0"), NodeId::item(last))
}

#[test]
fn ladder_relaxes_core_then_radius() {
    let (g, reps, u, v) = chain(3);
    let cfg = RetrievalConfig { k_core: 3, ..Default::default() };
    let out = retrieve(&g, &reps, &u, &v, &cfg).unwrap();
    assert_eq!((out.l_hop, out.k_core), (3, 2));
    assert_eq!(out.paths.len(), 1);

    let (g, reps, u, v) = chain(5);
    let cfg = RetrievalConfig { l_hop: 1, ..Default::default() };
    let out = retrieve(&g, &reps, &u, &v, &cfg).unwrap();
    assert_eq!((out.l_hop, out.k_core), (2, 1));
    assert_eq!(out.paths[0].hops(), 5);

    let (g, reps, u, v) = chain(7);
    let cfg = RetrievalConfig { l_hop: 1, ..Default::default() };
    assert!(retrieve(&g, &reps, &u, &v, &cfg).unwrap().paths.is_empty());
}

#[test]
fn direct_edge_is_never_a_path() {
    let g = BipartiteGraph::from_edges([("a", "x"), ("b", "x"), ("b", "y"), ("a", "y")]);
    let log = pathrec_core::datastore::InteractionLog::new(
        g.edges()
            .map(|(u, i)| pathrec_core::datastore::Interaction { user: u.into(), item: i.into(), timestamp: 0 })
            .collect(),
    );
    let reps = synth::random_reps(&log, 3, 2);
    let (u, v) = (NodeId::user("a"), NodeId::item("x"));
    let out = retrieve(&g, &reps, &u, &v, &RetrievalConfig::default()).unwrap();
    assert_eq!(out.paths.len(), 1);
    assert_eq!(out.paths[0].ids(), ["a", "y", "b", "x"]);

    let keep = RetrievalConfig { remove_target_edge: false, ..Default::default() };
    let out = retrieve(&g, &reps, &u, &v, &keep).unwrap();
    assert_eq!(out.paths[0].ids(), ["a", "x"]);
    assert_eq!(out.paths[0].length, 1.0);
}

fn sample_profiles() -> ProfileStore {
    let mut p = ProfileStore::default();
    p.user_profiles.insert("u1".into(), "New parent who prefers natural fabrics".into());
    p.user_profiles.insert("u2".into(), "Shopper who stocks up on nursery textiles".into());
    p.item_profiles.insert("i7".into(), "Organic cotton swaddle set".into());
    p.item_profiles.insert("i9".into(), "Soft breathable linen blanket for infants".into());
    p.item_titles.insert("i9".into(), "Linen Baby Blanket".into());
    p
}

#[test]
fn prompt_matches_golden_file() {
    let path = RetrievalPath {
        nodes: vec![NodeId::user("u1"), NodeId::item("i7"), NodeId::user("u2"), NodeId::item("i9")],
        length: 2.5,
    };
    let got = render_prompt("u1", "i9", &[path], &sample_profiles()).unwrap();
    let golden = include_str!("golden/prompt_3hop.txt");
    assert_eq!(got, golden);
}

#[test]
fn prompt_without_paths_has_a_single_newline_block() {
    let got = render_prompt("u1", "i9", &[], &sample_profiles()).unwrap();
    assert!(got.ends_with("his/her preference. \n. Explanations:"));
    let mut missing = sample_profiles();
    missing.item_titles.clear();
    assert!(matches!(
        render_prompt("u1", "i9", &[], &missing),
        Err(retrieval::RetrievalError::MissingTitle(_))
    ));
}

fn planted_small() -> (BipartiteGraph, Representations, synth::Planted) {
    let planted = synth::planted(&synth::PlantedConfig { users: 120, items: 60, ..Default::default() });
    let g = BipartiteGraph::build(&planted.dataset.interactions);
    let reps = synth::random_reps(&planted.dataset.interactions, 8, 9);
    (g, reps, planted)
}

#[test]
fn planted_batch_paths_satisfy_invariants() {
    let (g, reps, planted) = planted_small();
    let mut rng = seed::rng_from(31);
    let cfg = RetrievalConfig::default();
    for _ in 0..150 {
        let u = synth::user_id(rng.random_range(0..120));
        let community = planted.user_community[&u];
        let items: Vec<&String> = planted.item_community.iter().filter(|(_, &c)| c == community).map(|(i, _)| i).collect();
        let mut items = items;
        items.sort();
        let i = items[rng.random_range(0..items.len())];
        let (un, vn) = (NodeId::user(u.clone()), NodeId::item(i.clone()));
        if g.index_of(&vn).is_none() {
            continue;
        }
        let out = retrieve(&g, &reps, &un, &vn, &cfg).unwrap();
        assert!(!out.paths.is_empty());
        assert!(out.paths.len() <= cfg.k_paths);
        let wg = common::searched_digraph(&g, &reps, &un, &vn, &cfg, &out);
        for p in &out.paths {
            check_path(p, &wg, &un, &vn).unwrap();
            assert!(p.hops() > 1);
            assert!(common::kinds_alternate(&p.nodes));
        }
        assert!(out.paths.windows(2).all(|w| w[0].length <= w[1].length));
    }
}

#[test]
fn target_item_rule_changes_only_user_weights() {
    let (g, reps, _) = planted_small();
    let (u, v) = (NodeId::user(synth::user_id(0)), NodeId::item(synth::item_id(3)));
    let (ui, vi) = (g.index_of(&u).unwrap(), g.index_of(&v).unwrap());
    let sub = pathrec_core::graph::l_hop_by_index(&g, ui, vi, 3);
    let a = retrieval::weight_edges(&g, &sub, &reps, &u, &v, ArcRule::SourceUser).unwrap();
    let b = retrieval::weight_edges(&g, &sub, &reps, &u, &v, ArcRule::TargetItem).unwrap();
    for from in 0..a.nodes().len() {
        for (&(to, wa), &(_, wb)) in a.arcs(from).iter().zip(b.arcs(from)) {
            if a.nodes()[to].kind == pathrec_core::graph::NodeKind::Item {
                assert_eq!(wa, wb);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_representations_keeps_paths(scale in prop_oneof![Just(0.5), Just(4.0), 1e-3f64..1e3], s in any::<u64>()) {
        let (g, reps, _) = planted_small();
        let mut rng = seed::rng_from(s);
        let u = NodeId::user(synth::user_id(rng.random_range(0..120)));
        let v = NodeId::item(synth::item_id(rng.random_range(0..60)));
        prop_assume!(g.index_of(&v).is_some());
        let cfg = RetrievalConfig::default();
        let base = retrieve(&g, &reps, &u, &v, &cfg).unwrap();
        let scaled = retrieve(&g, &reps.scaled(scale), &u, &v, &cfg).unwrap();
        let ids = |o: &retrieval::RetrievalOutcome| o.paths.iter().map(|p| p.nodes.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&base), ids(&scaled));
        for (a, b) in base.paths.iter().zip(&scaled.paths) {
            prop_assert!((a.length - b.length).abs() < 1e-9);
        }
    }

    #[test]
    fn returned_lengths_are_sorted(n in 2usize..12, p in 0.2f64..0.8, s in any::<u64>()) {
        let mut rng = seed::rng_from(s);
        let (wg, src, dst) = common::random_digraph(&mut rng, n, p, false);
        let paths = top_k_paths(&wg, &src, &dst, 6).unwrap();
        prop_assert!(paths.windows(2).all(|w| w[0].length <= w[1].length));
        for path in &paths {
            prop_assert!(check_path(path, &wg, &src, &dst).is_ok());
        }
    }
}
