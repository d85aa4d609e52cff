//! Synthetic datasets with planted structure, for tests, benchmarks and demos.
//!
//! Items are split into communities and each community into clusters. Every
//! cluster has its own centre in both embedding spaces. Users belong to one
//! community, have a home cluster, and mostly interact with it.

use std::collections::{BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::datastore::{Dataset, EmbeddingTable, Interaction, InteractionLog, Modality, ProfileStore};
use crate::retrieval::Representations;
use crate::seed;

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub communities: usize,
    pub clusters_per_community: usize,
    pub text_dim: usize,
    pub visual_dim: usize,
    pub min_interactions: usize,
    pub max_interactions: usize,
    /// Probability that an interaction falls in the user's home cluster.
    pub home_prob: f64,
    /// Within-cluster spread relative to the unit-variance cluster centres.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            users: 500,
            items: 200,
            communities: 2,
            clusters_per_community: 5,
            text_dim: 32,
            visual_dim: 24,
            min_interactions: 8,
            max_interactions: 14,
            home_prob: 0.8,
            noise: 0.35,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: Dataset,
    pub user_community: HashMap<String, usize>,
    pub item_community: HashMap<String, usize>,
    pub item_cluster: HashMap<String, usize>,
}

pub fn user_id(u: usize) -> String {
    format!("u{u:05}")
}

pub fn item_id(i: usize) -> String {
    format!("i{i:05}")
}

fn gaussian_vec<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let n = Normal::new(0.0, scale).expect("finite");
    (0..dim).map(|_| n.sample(rng)).collect()
}

pub fn planted(cfg: &PlantedConfig) -> Planted {
    let mut rng = seed::stage_rng(cfg.seed, "synth");
    let n_clusters = cfg.communities * cfg.clusters_per_community;
    let text_centres: Vec<Vec<f64>> = (0..n_clusters).map(|_| gaussian_vec(cfg.text_dim, 1.0, &mut rng)).collect();
    let visual_centres: Vec<Vec<f64>> = (0..n_clusters).map(|_| gaussian_vec(cfg.visual_dim, 1.0, &mut rng)).collect();

    let cluster_of_item = |i: usize| i * n_clusters / cfg.items;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    let mut text_rows = Vec::with_capacity(cfg.items);
    let mut visual_rows = Vec::with_capacity(cfg.items);
    let mut item_community = HashMap::new();
    let mut item_cluster = HashMap::new();
    let mut profiles = ProfileStore::default();
    for i in 0..cfg.items {
        let c = cluster_of_item(i);
        members[c].push(i);
        let id = item_id(i);
        let jitter = |centre: &[f64], rng: &mut _| -> Vec<f64> {
            let noise = gaussian_vec(centre.len(), cfg.noise, rng);
            centre.iter().zip(noise).map(|(a, b)| a + b).collect()
        };
        text_rows.push((id.clone(), jitter(&text_centres[c], &mut rng)));
        visual_rows.push((id.clone(), jitter(&visual_centres[c], &mut rng)));
        let community = c / cfg.clusters_per_community;
        item_community.insert(id.clone(), community);
        item_cluster.insert(id.clone(), c);
        profiles.item_profiles.insert(
            id.clone(),
            format!("A product from line {c} in catalogue section {community}"),
        );
        profiles.item_titles.insert(id.clone(), format!("Product {id}"));
    }

    let mut entries = Vec::new();
    let mut user_community = HashMap::new();
    for u in 0..cfg.users {
        let community = u % cfg.communities;
        let home = community * cfg.clusters_per_community + rng.random_range(0..cfg.clusters_per_community);
        let community_items: Vec<usize> = (0..cfg.clusters_per_community)
            .flat_map(|k| members[community * cfg.clusters_per_community + k].iter().copied())
            .collect();
        let count = rng.random_range(cfg.min_interactions..=cfg.max_interactions);
        let mut chosen = BTreeSet::new();
        let mut order = Vec::with_capacity(count);
        let mut attempts = 0;
        while order.len() < count && attempts < count * 50 {
            attempts += 1;
            let pool = if rng.random::<f64>() < cfg.home_prob { &members[home] } else { &community_items };
            let Some(&i) = pool.choose(&mut rng) else { continue };
            if chosen.insert(i) {
                order.push(i);
            }
        }
        let id = user_id(u);
        let start = rng.random_range(0..1_000_000u64);
        for (t, i) in order.into_iter().enumerate() {
            entries.push(Interaction {
                user: id.clone(),
                item: item_id(i),
                timestamp: start + 3600 * t as u64,
            });
        }
        user_community.insert(id.clone(), community);
        profiles.user_profiles.insert(
            id.clone(),
            format!("A shopper in catalogue section {community} who keeps returning to line {home}"),
        );
    }

    let dataset = Dataset {
        text: EmbeddingTable::from_rows(Modality::Text, cfg.text_dim, text_rows).expect("valid rows"),
        visual: EmbeddingTable::from_rows(Modality::Visual, cfg.visual_dim, visual_rows).expect("valid rows"),
        interactions: InteractionLog::new(entries),
        profiles,
    };
    Planted {
        dataset,
        user_community,
        item_community,
        item_cluster,
    }
}

/// Uniform random bipartite log: every user interacts with `per_user` distinct items.
pub fn random_log(users: usize, items: usize, per_user: usize, seed: u64) -> InteractionLog {
    let mut rng = seed::stage_rng(seed, "random-log");
    let mut entries = Vec::with_capacity(users * per_user);
    for u in 0..users {
        let picks = rand::seq::index::sample(&mut rng, items, per_user.min(items));
        for (t, i) in picks.into_iter().enumerate() {
            entries.push(Interaction {
                user: user_id(u),
                item: item_id(i),
                timestamp: t as u64,
            });
        }
    }
    InteractionLog::new(entries)
}

/// Gaussian representations for every node of a log.
pub fn random_reps(log: &InteractionLog, dim: usize, seed: u64) -> Representations {
    let mut rng = seed::stage_rng(seed, "random-reps");
    let mut reps = Representations::default();
    let users: BTreeSet<&str> = log.entries.iter().map(|e| e.user.as_str()).collect();
    let items: BTreeSet<&str> = log.entries.iter().map(|e| e.item.as_str()).collect();
    for u in users {
        reps.users.insert(u.to_string(), gaussian_vec(dim, 1.0, &mut rng));
    }
    for i in items {
        reps.items.insert(i.to_string(), gaussian_vec(dim, 1.0, &mut rng));
    }
    reps
}
