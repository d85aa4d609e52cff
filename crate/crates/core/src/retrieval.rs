//! Explainable path retrieval: edge weighting of the pruned query subgraph,
//! loopless top-k shortest paths, and prompt rendering.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::datastore::ProfileStore;
use crate::graph::{self, BipartiteGraph, GraphError, NodeId, NodeKind, Subgraph};
use crate::linalg;

pub const DEFAULT_L_HOP: usize = 3;
pub const DEFAULT_K_CORE: usize = 2;
pub const DEFAULT_K_PATHS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("no representation for {0}")]
    MissingRepresentation(NodeId),
    #[error("no profile for {0}")]
    MissingProfile(NodeId),
    #[error("no title for item `{0}`")]
    MissingTitle(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid arc {from} -> {to}: {reason}")]
    InvalidArc {
        from: NodeId,
        to: NodeId,
        reason: &'static str,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Dense representations of users (sequence-encoder output) and items (features).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Representations {
    pub users: HashMap<String, Vec<f64>>,
    pub items: HashMap<String, Vec<f64>>,
}

impl Representations {
    pub fn get(&self, node: &NodeId) -> Option<&[f64]> {
        match node.kind {
            NodeKind::User => self.users.get(&node.id),
            NodeKind::Item => self.items.get(&node.id),
        }
        .map(Vec::as_slice)
    }

    fn require(&self, node: &NodeId) -> Result<&[f64], RetrievalError> {
        self.get(node)
            .ok_or_else(|| RetrievalError::MissingRepresentation(node.clone()))
    }

    /// Every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |m: &HashMap<String, Vec<f64>>| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|x| x * factor).collect()))
                .collect()
        };
        Self {
            users: scale(&self.users),
            items: scale(&self.items),
        }
    }
}

/// What a user endpoint is compared against when weighting arcs into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArcRule {
    /// User endpoints are compared with the query user.
    #[default]
    SourceUser,
    /// User endpoints are compared with the query item.
    TargetItem,
}

/// Weight of an arc into an endpoint: `ln((2 - cos) * deg)`, or exactly 1 into the target item.
pub fn edge_weight(cos: f64, degree: usize, into_target: bool) -> f64 {
    if into_target {
        return 1.0;
    }
    ((2.0 - cos.clamp(-1.0, 1.0)) * degree as f64).ln()
}

/// Directed graph over sorted, unique node ids with non-negative arc weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    nodes: Vec<NodeId>,
    out: Vec<Vec<(usize, f64)>>,
}

impl WeightedDigraph {
    /// Arcs index into `nodes`. Nodes are re-sorted; duplicate nodes are rejected
    /// by panicking since they indicate a construction bug.
    pub fn new(nodes: Vec<NodeId>, arcs: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, RetrievalError> {
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        let mut remap = vec![0; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let sorted: Vec<NodeId> = order.iter().map(|&o| nodes[o].clone()).collect();
        assert!(sorted.windows(2).all(|w| w[0] < w[1]), "duplicate node ids");
        let mut out = vec![Vec::new(); sorted.len()];
        for (a, b, w) in arcs {
            let (from, to) = (&nodes[a], &nodes[b]);
            if from.kind == to.kind {
                return Err(RetrievalError::InvalidArc {
                    from: from.clone(),
                    to: to.clone(),
                    reason: "endpoints of the same kind",
                });
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(RetrievalError::InvalidArc {
                    from: from.clone(),
                    to: to.clone(),
                    reason: "weight must be finite and non-negative",
                });
            }
            out[remap[a]].push((remap[b], w));
        }
        for list in out.iter_mut() {
            list.sort_by_key(|&(d, _)| d);
        }
        Ok(Self { nodes: sorted, out })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn index_of(&self, n: &NodeId) -> Option<usize> {
        self.nodes.binary_search(n).ok()
    }

    pub fn arcs(&self, from: usize) -> &[(usize, f64)] {
        &self.out[from]
    }

    pub fn arc_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.out[from]
            .binary_search_by_key(&to, |&(d, _)| d)
            .ok()
            .map(|k| self.out[from][k].1)
    }

    /// Sum of arc weights along `path`, accumulated from the source.
    fn path_length(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .map(|w| self.weight(w[0], w[1]).expect("arc on path"))
            .fold(0.0, |acc, w| acc + w)
    }
}

/// Weights every arc of the pruned subgraph. Degrees are taken in `sub`.
pub fn weight_edges(
    g: &BipartiteGraph,
    sub: &Subgraph,
    reps: &Representations,
    source: &NodeId,
    target: &NodeId,
    rule: ArcRule,
) -> Result<WeightedDigraph, RetrievalError> {
    let src_rep = reps.require(source)?;
    let tgt_rep = reps.require(target)?;
    let nodes: Vec<NodeId> = sub.nodes().iter().map(|&p| g.node(p).clone()).collect();
    let mut into = Vec::with_capacity(nodes.len());
    for (local, n) in nodes.iter().enumerate() {
        let rep = reps.require(n)?;
        let w = if n == target {
            1.0
        } else {
            let reference = match (n.kind, rule) {
                (NodeKind::User, ArcRule::TargetItem) => tgt_rep,
                _ => src_rep,
            };
            if rep.len() != reference.len() {
                return Err(RetrievalError::MissingRepresentation(n.clone()));
            }
            edge_weight(linalg::cosine(rep, reference), sub.degree(local).max(1), false)
        };
        assert!(w >= 0.0, "negative arc weight into {n}");
        into.push(w);
    }
    let arcs = (0..sub.len()).flat_map(|a| sub.neighbors(a).iter().map(move |&b| (a, b)));
    WeightedDigraph::new(nodes, arcs.map(|(a, b)| (a, b, into[b])).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPath {
    pub nodes: Vec<NodeId>,
    pub length: f64,
}

impl RetrievalPath {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }
}

/// Dijkstra label: (length, hops, node sequence), compared in that order.
#[derive(Debug, Clone)]
struct Label {
    len: f64,
    path: Vec<usize>,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.len
            .total_cmp(&other.len)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Best path from `src` to `dst` under (length, hops, lexicographic ids) avoiding
/// blocked nodes and arcs.
fn dijkstra(
    wg: &WeightedDigraph,
    src: usize,
    dst: usize,
    blocked_nodes: &[bool],
    blocked_arcs: &HashSet<(usize, usize)>,
) -> Option<Label> {
    let mut settled = vec![false; wg.nodes.len()];
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        len: 0.0,
        path: vec![src],
    });
    while let Some(label) = heap.pop() {
        let at = *label.path.last().expect("non-empty");
        if settled[at] {
            continue;
        }
        settled[at] = true;
        if at == dst {
            return Some(label);
        }
        for &(to, w) in wg.arcs(at) {
            if settled[to] || blocked_nodes[to] || blocked_arcs.contains(&(at, to)) {
                continue;
            }
            let mut path = Vec::with_capacity(label.path.len() + 1);
            path.extend_from_slice(&label.path);
            path.push(to);
            heap.push(Label {
                len: label.len + w,
                path,
            });
        }
    }
    None
}

#[derive(Debug, Clone)]
struct Candidate {
    len: f64,
    path: Vec<usize>,
}

impl Candidate {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.len
            .total_cmp(&other.len)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// The `k` loopless shortest paths from `source` to `target` (Yen's algorithm),
/// ordered by length, then hop count, then node ids.
pub fn top_k_paths(
    wg: &WeightedDigraph,
    source: &NodeId,
    target: &NodeId,
    k: usize,
) -> Result<Vec<RetrievalPath>, RetrievalError> {
    let src = wg
        .index_of(source)
        .ok_or_else(|| RetrievalError::UnknownNode(source.clone()))?;
    let dst = wg
        .index_of(target)
        .ok_or_else(|| RetrievalError::UnknownNode(target.clone()))?;
    Ok(top_k_indices(wg, src, dst, k)
        .into_iter()
        .map(|c| RetrievalPath {
            nodes: c.path.iter().map(|&i| wg.nodes[i].clone()).collect(),
            length: c.len,
        })
        .collect())
}

fn top_k_indices(wg: &WeightedDigraph, src: usize, dst: usize, k: usize) -> Vec<Candidate> {
    let n = wg.nodes.len();
    if k == 0 || src == dst {
        return Vec::new();
    }
    let no_nodes = vec![false; n];
    let Some(first) = dijkstra(wg, src, dst, &no_nodes, &HashSet::new()) else {
        return Vec::new();
    };
    let mut found = vec![Candidate {
        len: wg.path_length(&first.path),
        path: first.path,
    }];
    let mut seen: HashSet<Vec<usize>> = HashSet::from([found[0].path.clone()]);
    let mut pool: BTreeSet<Candidate> = BTreeSet::new();
    let mut blocked_nodes = vec![false; n];

    while found.len() < k {
        let prev = found.last().expect("non-empty").path.clone();
        for i in 0..prev.len() - 1 {
            let root = &prev[..=i];
            let spur = prev[i];
            let mut blocked_arcs = HashSet::new();
            for p in &found {
                if p.path.len() > i + 1 && &p.path[..=i] == root {
                    blocked_arcs.insert((p.path[i], p.path[i + 1]));
                }
            }
            for &r in &root[..i] {
                blocked_nodes[r] = true;
            }
            if let Some(spur_path) = dijkstra(wg, spur, dst, &blocked_nodes, &blocked_arcs) {
                let mut path = root[..i].to_vec();
                path.extend_from_slice(&spur_path.path);
                if seen.insert(path.clone()) {
                    pool.insert(Candidate {
                        len: wg.path_length(&path),
                        path,
                    });
                }
            }
            for &r in &root[..i] {
                blocked_nodes[r] = false;
            }
        }
        match pool.pop_first() {
            Some(best) => found.push(best),
            None => break,
        }
    }
    found
}

/// `<profile> -> buys -> <profile> -> bought by -> ...`
pub fn render_path(path: &RetrievalPath, profiles: &ProfileStore) -> Result<String, RetrievalError> {
    let mut out = String::new();
    for (i, node) in path.nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(match path.nodes[i - 1].kind {
                NodeKind::User => " -> buys -> ",
                NodeKind::Item => " -> bought by -> ",
            });
        }
        let text = match node.kind {
            NodeKind::User => profiles.user(&node.id),
            NodeKind::Item => profiles.item(&node.id),
        }
        .ok_or_else(|| RetrievalError::MissingProfile(node.clone()))?;
        out.push_str(text);
    }
    Ok(out)
}

/// The instruction prompt for explaining why `user` enjoys `item`. Paths are
/// listed as `Path 1: ...`, one per line, between newlines.
pub fn render_prompt(
    user: &str,
    item: &str,
    paths: &[RetrievalPath],
    profiles: &ProfileStore,
) -> Result<String, RetrievalError> {
    let title = profiles
        .title(item)
        .ok_or_else(|| RetrievalError::MissingTitle(item.to_string()))?;
    let item_profile = profiles
        .item(item)
        .ok_or_else(|| RetrievalError::MissingProfile(NodeId::item(item)))?;
    let user_profile = profiles
        .user(user)
        .ok_or_else(|| RetrievalError::MissingProfile(NodeId::user(user)))?;
    let mut block = String::new();
    for (i, p) in paths.iter().enumerate() {
        block.push('\n');
        block.push_str(&format!("Path {}: {}", i + 1, render_path(p, profiles)?));
    }
    block.push('\n');
    Ok(format!(
        "Given the item title, item profile, user profile and some retrieval paths about the user, \
         please explain why the user would enjoy this item. Item title: {title}. \
         Item profile: {item_profile}. User Profile: {user_profile}.\
         Here are several related paths which may reflect his/her preference. {block}. Explanations:"
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub l_hop: usize,
    pub k_core: usize,
    pub k_paths: usize,
    pub arc_rule: ArcRule,
    /// Drop the queried (user, item) edge before pruning and search.
    pub remove_target_edge: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            l_hop: DEFAULT_L_HOP,
            k_core: DEFAULT_K_CORE,
            k_paths: DEFAULT_K_PATHS,
            arc_rule: ArcRule::SourceUser,
            remove_target_edge: true,
        }
    }
}

/// Paths plus the (hops, core) setting of the ladder step that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub paths: Vec<RetrievalPath>,
    pub l_hop: usize,
    pub k_core: usize,
}

/// L-hop extraction, anchored k-core pruning, weighting and top-k search.
/// When nothing survives, the core is relaxed down to 1 and then the radius
/// grows by one hop before giving up.
pub fn retrieve(
    g: &BipartiteGraph,
    reps: &Representations,
    user: &NodeId,
    item: &NodeId,
    cfg: &RetrievalConfig,
) -> Result<RetrievalOutcome, RetrievalError> {
    let ui = g.require(user)?;
    let vi = g.require(item)?;
    let l = cfg.l_hop.max(1);
    let k = cfg.k_core.max(1);
    let mut ladder: Vec<(usize, usize)> = (1..=k).rev().map(|kk| (l, kk)).collect();
    ladder.push((l + 1, 1));

    let mut cached: Option<(usize, Subgraph)> = None;
    for &(hops, core) in &ladder {
        if cached.as_ref().map(|c| c.0) != Some(hops) {
            let mut sub = graph::l_hop_by_index(g, ui, vi, hops);
            if cfg.remove_target_edge {
                sub = sub.without_edge(ui, vi);
            }
            cached = Some((hops, sub));
        }
        let sub = &cached.as_ref().expect("set above").1;
        let anchors = [sub.local(ui).expect("anchor"), sub.local(vi).expect("anchor")];
        let pruned = graph::k_core(sub, core, &anchors);
        let wg = weight_edges(g, &pruned, reps, user, item, cfg.arc_rule)?;
        let paths = top_k_paths(&wg, user, item, cfg.k_paths)?;
        if !paths.is_empty() {
            return Ok(RetrievalOutcome {
                paths,
                l_hop: hops,
                k_core: core,
            });
        }
    }
    Ok(RetrievalOutcome {
        paths: Vec::new(),
        l_hop: l + 1,
        k_core: 1,
    })
}

/// Checks the structural path invariants: starts at `user`, ends at `item`,
/// simple, alternating kinds, and `length` equal to the summed arc weights.
pub fn check_path(path: &RetrievalPath, wg: &WeightedDigraph, user: &NodeId, item: &NodeId) -> Result<(), String> {
    let nodes = &path.nodes;
    if nodes.first() != Some(user) || nodes.last() != Some(item) {
        return Err("wrong endpoints".into());
    }
    let uniq: HashSet<&NodeId> = nodes.iter().collect();
    if uniq.len() != nodes.len() {
        return Err("repeated node".into());
    }
    if nodes.windows(2).any(|w| w[0].kind == w[1].kind) {
        return Err("kinds do not alternate".into());
    }
    if path.hops() % 2 != 1 {
        return Err("even hop count".into());
    }
    let idx: Vec<usize> = nodes
        .iter()
        .map(|n| wg.index_of(n).ok_or_else(|| format!("{n} not in graph")))
        .collect::<Result<_, _>>()?;
    for w in idx.windows(2) {
        if wg.weight(w[0], w[1]).is_none() {
            return Err("missing arc".into());
        }
    }
    let len = wg.path_length(&idx);
    if (len - path.length).abs() > 1e-9 {
        return Err(format!("length {} != arc sum {len}", path.length));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_weight_spot_values() {
        assert_eq!(edge_weight(0.3, 17, true), 1.0);
        assert!(edge_weight(1.0, 1, false).abs() < 1e-12);
        assert!((edge_weight(0.0, 2, false) - 4f64.ln()).abs() < 1e-9);
        assert!((edge_weight(0.0, 2, false) - 1.386294).abs() < 1e-6);
    }

    fn chain() -> (WeightedDigraph, NodeId, NodeId) {
        let nodes = vec![NodeId::user("u"), NodeId::item("a"), NodeId::user("w"), NodeId::item("v")];
        let arcs = vec![(0, 1, 0.5), (1, 0, 0.1), (1, 2, 0.25), (2, 1, 0.0), (2, 3, 1.0), (3, 2, 2.0)];
        (WeightedDigraph::new(nodes, arcs).unwrap(), NodeId::user("u"), NodeId::item("v"))
    }

    #[test]
    fn single_chain_path() {
        let (wg, u, v) = chain();
        let paths = top_k_paths(&wg, &u, &v, 3).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].ids(), vec!["u", "a", "w", "v"]);
        assert_eq!(paths[0].length, 1.75);
        check_path(&paths[0], &wg, &u, &v).unwrap();
    }

    #[test]
    fn no_path_is_empty() {
        let nodes = vec![NodeId::user("u"), NodeId::item("a"), NodeId::item("v")];
        let wg = WeightedDigraph::new(nodes, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(top_k_paths(&wg, &NodeId::user("u"), &NodeId::item("v"), 3).unwrap().is_empty());
        assert!(matches!(
            top_k_paths(&wg, &NodeId::user("zz"), &NodeId::item("v"), 3),
            Err(RetrievalError::UnknownNode(_))
        ));
    }

    #[test]
    fn rejects_bad_arcs() {
        let nodes = vec![NodeId::user("u"), NodeId::user("w")];
        assert!(WeightedDigraph::new(nodes, vec![(0, 1, 1.0)]).is_err());
        let nodes = vec![NodeId::user("u"), NodeId::item("a")];
        assert!(WeightedDigraph::new(nodes.clone(), vec![(0, 1, -0.5)]).is_err());
        assert!(WeightedDigraph::new(nodes, vec![(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn ties_break_on_ids() {
        // Two equal-length, equal-hop paths u-a-w-v and u-b-x-v.
        let nodes = vec![
            NodeId::user("u"),
            NodeId::item("b"),
            NodeId::item("a"),
            NodeId::user("x"),
            NodeId::user("w"),
            NodeId::item("v"),
        ];
        let arcs = vec![(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0)];
        let wg = WeightedDigraph::new(nodes, arcs).unwrap();
        let paths = top_k_paths(&wg, &NodeId::user("u"), &NodeId::item("v"), 2).unwrap();
        assert_eq!(paths[0].ids(), vec!["u", "a", "w", "v"]);
        assert_eq!(paths[1].ids(), vec!["u", "b", "x", "v"]);
        let one = top_k_paths(&wg, &NodeId::user("u"), &NodeId::item("v"), 1).unwrap();
        assert_eq!(one, paths[..1]);
    }

    fn profiles() -> ProfileStore {
        let mut p = ProfileStore::default();
        p.user_profiles.insert("u".into(), "Pu".into());
        p.user_profiles.insert("u2".into(), "Pu2".into());
        p.item_profiles.insert("i".into(), "Pi".into());
        p.item_profiles.insert("i2".into(), "Pi2".into());
        p.item_titles.insert("i2".into(), "Title".into());
        p
    }

    fn path(ids: &[NodeId]) -> RetrievalPath {
        RetrievalPath { nodes: ids.to_vec(), length: 0.0 }
    }

    #[test]
    fn path_rendering() {
        let p = profiles();
        let one = path(&[NodeId::user("u"), NodeId::item("i")]);
        assert_eq!(render_path(&one, &p).unwrap(), "Pu -> buys -> Pi");
        let three = path(&[NodeId::user("u"), NodeId::item("i"), NodeId::user("u2"), NodeId::item("i2")]);
        assert_eq!(
            render_path(&three, &p).unwrap(),
            "Pu -> buys -> Pi -> bought by -> Pu2 -> buys -> Pi2"
        );
        let missing = path(&[NodeId::user("u"), NodeId::item("nope")]);
        assert!(matches!(render_path(&missing, &p), Err(RetrievalError::MissingProfile(_))));
    }

    #[test]
    fn prompt_without_paths() {
        let prompt = render_prompt("u", "i2", &[], &profiles()).unwrap();
        assert_eq!(
            prompt,
            "Given the item title, item profile, user profile and some retrieval paths about the user, \
             please explain why the user would enjoy this item. Item title: Title. Item profile: Pi2. \
             User Profile: Pu.Here are several related paths which may reflect his/her preference. \n. Explanations:"
        );
        assert!(matches!(render_prompt("u", "i", &[], &profiles()), Err(RetrievalError::MissingTitle(_))));
        assert!(matches!(render_prompt("zz", "i2", &[], &profiles()), Err(RetrievalError::MissingProfile(_))));
    }

    #[test]
    fn prompt_numbers_paths_in_order() {
        let p = profiles();
        let a = path(&[NodeId::user("u"), NodeId::item("i2")]);
        let b = path(&[NodeId::user("u"), NodeId::item("i"), NodeId::user("u2"), NodeId::item("i2")]);
        let prompt = render_prompt("u", "i2", &[a.clone(), b, a], &p).unwrap();
        let block = prompt.split("preference. ").nth(1).unwrap();
        assert_eq!(
            block,
            "\nPath 1: Pu -> buys -> Pi2\nPath 2: Pu -> buys -> Pi -> bought by -> Pu2 -> buys -> Pi2\n\
             Path 3: Pu -> buys -> Pi2\n. Explanations:"
        );
    }
}
