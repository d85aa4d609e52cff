//! Fixtures shared by the criterion benches.

use pathrec_core::graph::{BipartiteGraph, NodeId, NodeKind};
use pathrec_core::retrieval::Representations;
use pathrec_core::synth;

pub struct Fixture {
    pub graph: BipartiteGraph,
    pub reps: Representations,
    pub queries: Vec<(NodeId, NodeId)>,
}

/// Random graph of about `nodes` nodes (70% users, six interactions each)
/// with `queries` user-item pairs spread evenly over both node lists.
pub fn random_fixture(nodes: usize, dim: usize, queries: usize, seed: u64) -> Fixture {
    let users = (nodes * 7 / 10).max(1);
    let log = synth::random_log(users, (nodes - users).max(1), 6, seed);
    let reps = synth::random_reps(&log, dim, seed);
    let graph = BipartiteGraph::build(&log);
    let of = |k: NodeKind| graph.nodes().iter().filter(|n| n.kind == k).cloned().collect::<Vec<_>>();
    let (us, is) = (of(NodeKind::User), of(NodeKind::Item));
    let queries = (0..queries)
        .map(|q| (us[q * 7919 % us.len()].clone(), is[q * 104_729 % is.len()].clone()))
        .collect();
    Fixture { graph, reps, queries }
}
