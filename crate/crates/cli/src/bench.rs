//! Per-query retrieval timing.

use std::io::Write;
use std::time::Instant;

use anyhow::Result;
use pathrec_core::graph::{BipartiteGraph, NodeKind};
use pathrec_core::retrieval::{self, Representations, RetrievalConfig};
use pathrec_core::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "query,user,item,paths,best_length,best_path,l_hop,k_core,micros";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub queries: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub total_ms: f64,
    pub queries_per_sec: f64,
}

/// Seeded uniform (user, item) query pairs.
pub fn sample_queries(g: &BipartiteGraph, n: usize, root_seed: u64) -> Vec<(u32, u32)> {
    let users: Vec<u32> = (0..g.node_count() as u32).filter(|&i| g.node(i).kind == NodeKind::User).collect();
    let items: Vec<u32> = (0..g.node_count() as u32).filter(|&i| g.node(i).kind == NodeKind::Item).collect();
    if users.is_empty() || items.is_empty() {
        return Vec::new();
    }
    let mut rng = seed::stage_rng(root_seed, "bench-queries");
    (0..n)
        .map(|_| (users[rng.random_range(0..users.len())], items[rng.random_range(0..items.len())]))
        .collect()
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times every query sequentially and writes one CSV row per query.
pub fn bench_retrieval<W: Write>(
    g: &BipartiteGraph,
    reps: &Representations,
    cfg: &RetrievalConfig,
    queries: &[(u32, u32)],
    mut out: W,
) -> Result<BenchSummary> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut times = Vec::with_capacity(queries.len());
    let start = Instant::now();
    for (q, &(u, v)) in queries.iter().enumerate() {
        let (un, vn) = (g.node(u), g.node(v));
        let t = Instant::now();
        let res = retrieval::retrieve(g, reps, un, vn, cfg)?;
        let micros = t.elapsed().as_secs_f64() * 1e6;
        times.push(micros / 1e3);
        let (best_len, best) = match res.paths.first() {
            Some(p) => (format!("{}", p.length), p.ids().join(" ")),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{q},{},{},{},{best_len},{best},{},{},{micros:.1}",
            un.id,
            vn.id,
            res.paths.len(),
            res.l_hop,
            res.k_core
        )?;
    }
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    out.flush()?;
    times.sort_by(f64::total_cmp);
    Ok(BenchSummary {
        queries: queries.len(),
        p50_ms: percentile(&times, 0.5),
        p95_ms: percentile(&times, 0.95),
        total_ms,
        queries_per_sec: if total_ms > 0.0 { queries.len() as f64 / (total_ms / 1e3) } else { 0.0 },
    })
}
