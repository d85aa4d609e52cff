//! Bipartite user-item interaction graph, L-hop query subgraphs and
//! anchor-preserving k-core pruning.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{DataError, InteractionLog};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("hop count must be >= 1")]
    ZeroHops,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Item,
}

impl NodeKind {
    pub fn opposite(self) -> Self {
        match self {
            NodeKind::User => NodeKind::Item,
            NodeKind::Item => NodeKind::User,
        }
    }
}

/// A typed node id. Orders users before items, then by id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub id: String,
}

impl NodeId {
    pub fn user(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::User,
            id: id.into(),
        }
    }

    pub fn item(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::Item,
            id: id.into(),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::User => write!(f, "user:{}", self.id),
            NodeKind::Item => write!(f, "item:{}", self.id),
        }
    }
}

/// Node indices are assigned in `NodeId` order, so comparing indices compares ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BipartiteGraph {
    nodes: Vec<NodeId>,
    users: HashMap<String, u32>,
    items: HashMap<String, u32>,
    adj: Vec<Vec<u32>>,
}

impl BipartiteGraph {
    /// One undirected edge per distinct (user, item) pair.
    pub fn build(log: &InteractionLog) -> Self {
        Self::from_edges(log.entries.iter().map(|e| (e.user.as_str(), e.item.as_str())))
    }

    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let pairs: BTreeSet<(&str, &str)> = edges.into_iter().collect();
        let users: BTreeSet<&str> = pairs.iter().map(|p| p.0).collect();
        let items: BTreeSet<&str> = pairs.iter().map(|p| p.1).collect();
        let mut nodes = Vec::with_capacity(users.len() + items.len());
        let mut user_index = HashMap::with_capacity(users.len());
        let mut item_index = HashMap::with_capacity(items.len());
        for u in users {
            user_index.insert(u.to_string(), nodes.len() as u32);
            nodes.push(NodeId::user(u));
        }
        for i in items {
            item_index.insert(i.to_string(), nodes.len() as u32);
            nodes.push(NodeId::item(i));
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        for (u, i) in pairs {
            let (a, b) = (user_index[u], item_index[i]);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        Self {
            nodes,
            users: user_index,
            items: item_index,
            adj,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn node(&self, idx: u32) -> &NodeId {
        &self.nodes[idx as usize]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn index_of(&self, node: &NodeId) -> Option<u32> {
        match node.kind {
            NodeKind::User => self.users.get(&node.id).copied(),
            NodeKind::Item => self.items.get(&node.id).copied(),
        }
    }

    pub fn require(&self, node: &NodeId) -> Result<u32, GraphError> {
        self.index_of(node)
            .ok_or_else(|| GraphError::UnknownNode(node.clone()))
    }

    pub fn neighbors(&self, idx: u32) -> &[u32] {
        &self.adj[idx as usize]
    }

    pub fn degree(&self, idx: u32) -> usize {
        self.adj[idx as usize].len()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adj[a as usize].binary_search(&b).is_ok()
    }

    /// `(user, item)` pairs sorted by user id then item id.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .take_while(|(_, n)| n.kind == NodeKind::User)
            .flat_map(move |(u, n)| {
                self.adj[u]
                    .iter()
                    .map(move |&i| (n.id.as_str(), self.nodes[i as usize].id.as_str()))
            })
    }

    /// Node indices within `hops` of `start`, ascending.
    pub fn ball(&self, start: u32, hops: usize) -> Vec<u32> {
        let mut dist = HashMap::new();
        dist.insert(start, 0usize);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            if d == hops {
                continue;
            }
            for &m in &self.adj[n as usize] {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(m) {
                    e.insert(d + 1);
                    queue.push_back(m);
                }
            }
        }
        let mut out: Vec<u32> = dist.into_keys().collect();
        out.sort_unstable();
        out
    }

    pub fn save_edges(&self, path: &Path) -> Result<(), DataError> {
        let io = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        let res: std::io::Result<()> = (|| {
            for (u, i) in self.edges() {
                writeln!(w, "{u}\t{i}")?;
            }
            w.flush()
        })();
        res.map_err(io)
    }

    pub fn load_edges(path: &Path) -> Result<Self, DataError> {
        let io = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let f = fs::File::open(path).map_err(io)?;
        let mut pairs = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let (u, i) = line.split_once('\t').ok_or_else(|| DataError::MalformedLine {
                line: n + 1,
                reason: "expected user<TAB>item".into(),
            })?;
            pairs.push((u.to_string(), i.to_string()));
        }
        Ok(Self::from_edges(pairs.iter().map(|(u, i)| (u.as_str(), i.as_str()))))
    }
}

/// A node subset of a parent graph with its (restricted) adjacency.
/// Nodes are stored as ascending parent indices; local index `i` is `nodes[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    nodes: Vec<u32>,
    adj: Vec<Vec<usize>>,
}

impl Subgraph {
    /// Induced subgraph of `g` on `nodes` (any order, duplicates ignored).
    pub fn induced(g: &BipartiteGraph, nodes: impl IntoIterator<Item = u32>) -> Self {
        let mut nodes: Vec<u32> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        let adj = nodes
            .iter()
            .map(|&n| {
                g.neighbors(n)
                    .iter()
                    .filter_map(|m| nodes.binary_search(m).ok())
                    .collect()
            })
            .collect();
        Self { nodes, adj }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn parent_index(&self, local: usize) -> u32 {
        self.nodes[local]
    }

    pub fn local(&self, parent: u32) -> Option<usize> {
        self.nodes.binary_search(&parent).ok()
    }

    pub fn contains(&self, parent: u32) -> bool {
        self.local(parent).is_some()
    }

    pub fn neighbors(&self, local: usize) -> &[usize] {
        &self.adj[local]
    }

    pub fn degree(&self, local: usize) -> usize {
        self.adj[local].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as ascending parent-index pairs.
    pub fn edges(&self) -> BTreeSet<(u32, u32)> {
        let mut out = BTreeSet::new();
        for (a, list) in self.adj.iter().enumerate() {
            for &b in list {
                if a < b {
                    out.insert((self.nodes[a], self.nodes[b]));
                }
            }
        }
        out
    }

    /// The same node set without the edge between parent nodes `a` and `b`.
    pub fn without_edge(mut self, a: u32, b: u32) -> Self {
        if let (Some(la), Some(lb)) = (self.local(a), self.local(b)) {
            self.adj[la].retain(|&x| x != lb);
            self.adj[lb].retain(|&x| x != la);
        }
        self
    }

    /// Restriction to the local nodes flagged in `keep`.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = nodes.len();
                nodes.push(self.nodes[i]);
            }
        }
        let adj = keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| {
                self.adj[i]
                    .iter()
                    .filter(|&&j| keep[j])
                    .map(|&j| remap[j])
                    .collect()
            })
            .collect();
        Self { nodes, adj }
    }
}

/// Union of the `hops`-balls around `u` and `v`, with induced edges.
pub fn l_hop_subgraph(g: &BipartiteGraph, u: &NodeId, v: &NodeId, hops: usize) -> Result<Subgraph, GraphError> {
    if hops == 0 {
        return Err(GraphError::ZeroHops);
    }
    let (ui, vi) = (g.require(u)?, g.require(v)?);
    Ok(l_hop_by_index(g, ui, vi, hops))
}

pub fn l_hop_by_index(g: &BipartiteGraph, u: u32, v: u32, hops: usize) -> Subgraph {
    let mut nodes = g.ball(u, hops);
    nodes.extend(g.ball(v, hops));
    Subgraph::induced(g, nodes)
}

/// Removal order for the peeling queue.
pub trait PeelQueue {
    fn push(&mut self, n: usize);
    fn pop(&mut self) -> Option<usize>;
}

impl PeelQueue for VecDeque<usize> {
    fn push(&mut self, n: usize) {
        self.push_back(n);
    }

    fn pop(&mut self) -> Option<usize> {
        self.pop_front()
    }
}

/// A queue that dequeues a uniformly random pending node.
pub struct RandomQueue<R> {
    items: Vec<usize>,
    rng: R,
}

impl<R: Rng> RandomQueue<R> {
    pub fn new(rng: R) -> Self {
        Self {
            items: Vec::new(),
            rng,
        }
    }
}

impl<R: Rng> PeelQueue for RandomQueue<R> {
    fn push(&mut self, n: usize) {
        self.items.push(n);
    }

    fn pop(&mut self) -> Option<usize> {
        if self.items.is_empty() {
            return None;
        }
        let k = self.rng.random_range(0..self.items.len());
        Some(self.items.swap_remove(k))
    }
}

/// Iterative k-core peeling; anchors (local indices) are never enqueued.
pub fn k_core(sub: &Subgraph, k: usize, anchors: &[usize]) -> Subgraph {
    k_core_with(sub, k, anchors, VecDeque::new())
}

pub fn k_core_with<Q: PeelQueue>(sub: &Subgraph, k: usize, anchors: &[usize], mut queue: Q) -> Subgraph {
    let n = sub.len();
    let mut is_anchor = vec![false; n];
    for &a in anchors {
        is_anchor[a] = true;
    }
    let mut deg: Vec<usize> = (0..n).map(|i| sub.degree(i)).collect();
    let mut alive = vec![true; n];
    let mut queued = vec![false; n];
    for i in 0..n {
        if deg[i] < k && !is_anchor[i] {
            queue.push(i);
            queued[i] = true;
        }
    }
    while let Some(x) = queue.pop() {
        if !alive[x] {
            continue;
        }
        alive[x] = false;
        for &y in sub.neighbors(x) {
            if alive[y] {
                deg[y] -= 1;
                if deg[y] < k && !is_anchor[y] && !queued[y] {
                    queue.push(y);
                    queued[y] = true;
                }
            }
        }
    }
    sub.restrict(&alive)
}

/// [`k_core`] with anchors given as node ids of the parent graph.
pub fn k_core_anchored(
    g: &BipartiteGraph,
    sub: &Subgraph,
    k: usize,
    anchors: &[&NodeId],
) -> Result<Subgraph, GraphError> {
    let locals = anchors
        .iter()
        .map(|a| {
            g.index_of(a)
                .and_then(|p| sub.local(p))
                .ok_or_else(|| GraphError::UnknownNode((*a).clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(k_core(sub, k, &locals))
}
