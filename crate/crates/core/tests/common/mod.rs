//! Brute-force oracles and random fixtures shared by the integration suites.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use pathrec_core::graph::{BipartiteGraph, NodeId, NodeKind, Subgraph};
use pathrec_core::retrieval::WeightedDigraph;
use rand::Rng;

/// Random bipartite graph with edge probability `p`; isolated nodes are dropped
/// because the graph is built from its edge list.
pub fn random_bipartite<R: Rng>(rng: &mut R, users: usize, items: usize, p: f64) -> BipartiteGraph {
    let mut edges = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random::<f64>() < p {
                edges.push((format!("u{u}"), format!("i{i}")));
            }
        }
    }
    BipartiteGraph::from_edges(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())))
}

/// Repeatedly deletes any non-anchor node of degree below `k` until nothing changes.
pub fn brute_k_core(sub: &Subgraph, k: usize, anchors: &[usize]) -> BTreeSet<u32> {
    let n = sub.len();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for x in 0..n {
            if !alive[x] || anchors.contains(&x) {
                continue;
            }
            let deg = sub.neighbors(x).iter().filter(|&&y| alive[y]).count();
            if deg < k {
                alive[x] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&x| alive[x]).map(|x| sub.parent_index(x)).collect()
}

/// Hop distances from `src` over the full graph.
pub fn bfs(g: &BipartiteGraph, src: u32) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.node_count()];
    dist[src as usize] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(x) = q.pop_front() {
        let d = dist[x as usize].unwrap();
        for &y in g.neighbors(x) {
            if dist[y as usize].is_none() {
                dist[y as usize] = Some(d + 1);
                q.push_back(y);
            }
        }
    }
    dist
}

/// Random digraph over `n` nodes of both kinds with arcs only between opposite kinds.
/// With `integer` set, weights are drawn from {0,1,2,3} to force ties.
pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, p: f64, integer: bool) -> (WeightedDigraph, NodeId, NodeId) {
    let users = rng.random_range(1..n);
    let nodes: Vec<NodeId> = (0..n)
        .map(|i| if i < users { NodeId::user(format!("u{i:02}")) } else { NodeId::item(format!("i{i:02}")) })
        .collect();
    let mut arcs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if nodes[a].kind != nodes[b].kind && rng.random::<f64>() < p {
                let w = if integer {
                    rng.random_range(0..4) as f64
                } else {
                    rng.random::<f64>() * 3.0
                };
                arcs.push((a, b, w));
            }
        }
    }
    let src = nodes[rng.random_range(0..users)].clone();
    let dst = nodes[rng.random_range(users..n)].clone();
    (WeightedDigraph::new(nodes, arcs).unwrap(), src, dst)
}

/// Every simple path from `src` to `dst`, sorted by (length, hops, node ids).
pub fn all_simple_paths(wg: &WeightedDigraph, src: &NodeId, dst: &NodeId) -> Vec<(Vec<NodeId>, f64)> {
    let s = wg.index_of(src).unwrap();
    let t = wg.index_of(dst).unwrap();
    let mut out = Vec::new();
    let mut stack = vec![s];
    let mut on = vec![false; wg.nodes().len()];
    on[s] = true;
    dfs(wg, t, &mut stack, &mut on, &mut out);
    let mut paths: Vec<(Vec<NodeId>, f64)> = out
        .into_iter()
        .map(|p: Vec<usize>| {
            let len = p.windows(2).fold(0.0, |acc, w| acc + wg.weight(w[0], w[1]).unwrap());
            (p.iter().map(|&i| wg.nodes()[i].clone()).collect(), len)
        })
        .collect();
    paths.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.len().cmp(&b.0.len()))
            .then_with(|| a.0.cmp(&b.0))
    });
    paths
}

fn dfs(wg: &WeightedDigraph, t: usize, stack: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
    let x = *stack.last().unwrap();
    if x == t {
        out.push(stack.clone());
        return;
    }
    for &(y, _) in wg.arcs(x) {
        if !on[y] {
            on[y] = true;
            stack.push(y);
            dfs(wg, t, stack, on, out);
            stack.pop();
            on[y] = false;
        }
    }
}

/// Plain Dijkstra over lengths only, returning the shortest distance.
pub fn dijkstra_len(wg: &WeightedDigraph, src: &NodeId, dst: &NodeId) -> Option<f64> {
    let n = wg.nodes().len();
    let s = wg.index_of(src)?;
    let t = wg.index_of(dst)?;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[s] = 0.0;
    for _ in 0..n {
        let Some(x) = (0..n)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap_or(Ordering::Equal))
        else {
            break;
        };
        done[x] = true;
        for &(y, w) in wg.arcs(x) {
            if dist[x] + w < dist[y] {
                dist[y] = dist[x] + w;
            }
        }
    }
    dist[t].is_finite().then_some(dist[t])
}

pub fn kinds_alternate(nodes: &[NodeId]) -> bool {
    nodes.windows(2).all(|w| w[0].kind != w[1].kind)
        && nodes.first().map(|n| n.kind) == Some(NodeKind::User)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Rebuilds the weighted digraph a retrieval outcome was searched on.
pub fn searched_digraph(
    g: &BipartiteGraph,
    reps: &pathrec_core::retrieval::Representations,
    user: &NodeId,
    item: &NodeId,
    cfg: &pathrec_core::retrieval::RetrievalConfig,
    outcome: &pathrec_core::retrieval::RetrievalOutcome,
) -> WeightedDigraph {
    let (ui, vi) = (g.index_of(user).unwrap(), g.index_of(item).unwrap());
    let mut sub = pathrec_core::graph::l_hop_by_index(g, ui, vi, outcome.l_hop);
    if cfg.remove_target_edge {
        sub = sub.without_edge(ui, vi);
    }
    let anchors = [sub.local(ui).unwrap(), sub.local(vi).unwrap()];
    let pruned = pathrec_core::graph::k_core(&sub, outcome.k_core, &anchors);
    pathrec_core::retrieval::weight_edges(g, &pruned, reps, user, item, cfg.arc_rule).unwrap()
}

/// Mutable views of every scalar in a projection pair, in a fixed order.
pub fn projection_scalars(p: &mut pathrec_core::rq::ProjectionParams) -> Vec<&mut f64> {
    let mut out = Vec::new();
    for proj in [&mut p.text, &mut p.visual] {
        out.extend(proj.weight.as_mut_slice().iter_mut());
        out.extend(proj.bias.iter_mut());
    }
    out
}

pub fn seq_scalars(p: &mut pathrec_core::userrep::SeqEncoderParams) -> Vec<&mut f64> {
    let mut out = projection_scalars(&mut p.projections);
    out.extend(p.w_u.as_mut_slice().iter_mut());
    out.extend(p.bias.iter_mut());
    out
}

/// Relative error between analytic and central-difference gradients on the
/// sampled coordinates, as `||a - n|| / max(||a||, ||n||)`.
pub fn gradient_rel_err<P: Clone>(
    params: &P,
    analytic: &mut P,
    scalars: impl Fn(&mut P) -> Vec<&mut f64>,
    loss: impl Fn(&P) -> f64,
    coords: &[usize],
    h: f64,
) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    let a_vals: Vec<f64> = scalars(analytic).into_iter().map(|x| *x).collect();
    for &c in coords {
        let mut plus = params.clone();
        *scalars(&mut plus)[c] += h;
        let mut minus = params.clone();
        *scalars(&mut minus)[c] -= h;
        let num = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let a = a_vals[c];
        diff += (a - num).powi(2);
        na += a * a;
        nn += num * num;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}
