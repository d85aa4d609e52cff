//! Layered configuration: built-in defaults, then a TOML file, then
//! `PATHREC_*` environment variables, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pathrec_core::retrieval::{self, ArcRule};
use pathrec_core::{encoder, rq, userrep};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const ENV_PREFIX: &str = "PATHREC_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads for batch stages; 0 picks one per core.
    pub threads: usize,

    pub work_dir: PathBuf,
    pub text_embeddings: Option<PathBuf>,
    pub visual_embeddings: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    /// Query pairs `user<TAB>item`; without it every user is paired with their latest item.
    pub pairs: Option<PathBuf>,
    /// Pre-trained encoder weights; seeded weights are used otherwise.
    pub encoder_weights: Option<PathBuf>,

    pub layers: usize,
    pub codebook_size: usize,
    pub latent_dim: usize,
    pub beta: f64,
    pub tau: f64,
    pub rq_epochs: usize,
    pub rq_lr: f64,
    pub rq_batch_size: usize,
    pub refit_every: usize,
    pub kmeans_iters: usize,

    pub user_epochs: usize,
    pub user_lr: f64,
    pub negatives: usize,
    pub user_batch_size: usize,

    pub l_hop: usize,
    pub k_core: usize,
    pub k_paths: usize,
    pub arc_rule: ArcRule,
    pub remove_target_edge: bool,

    pub gnn_dim: usize,
    pub experts: usize,
    pub output_dim: usize,
    pub dropout: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rq_train = rq::ProjectionTrainConfig::default();
        let user_train = userrep::UserRepTrainConfig::default();
        Self {
            seed: 42,
            threads: 0,
            work_dir: PathBuf::from("work"),
            text_embeddings: None,
            visual_embeddings: None,
            interactions: None,
            profiles: None,
            pairs: None,
            encoder_weights: None,
            layers: rq::DEFAULT_LAYERS,
            codebook_size: rq::DEFAULT_CODEBOOK_SIZE,
            latent_dim: rq::DEFAULT_LATENT_DIM,
            beta: rq::DEFAULT_BETA,
            tau: rq::DEFAULT_TAU,
            rq_epochs: rq_train.epochs,
            rq_lr: rq_train.lr,
            rq_batch_size: rq_train.batch_size,
            refit_every: rq_train.refit_every,
            kmeans_iters: rq::KMeansConfig::default().max_iters,
            user_epochs: user_train.epochs,
            user_lr: user_train.lr,
            negatives: user_train.negatives,
            user_batch_size: user_train.batch_size,
            l_hop: retrieval::DEFAULT_L_HOP,
            k_core: retrieval::DEFAULT_K_CORE,
            k_paths: retrieval::DEFAULT_K_PATHS,
            arc_rule: ArcRule::default(),
            remove_target_edge: true,
            gnn_dim: encoder::DEFAULT_GNN_DIM,
            experts: encoder::DEFAULT_EXPERTS,
            output_dim: encoder::DEFAULT_OUTPUT_DIM,
            dropout: 0.0,
        }
    }
}

/// Keys that locate files or tune execution but never change results.
const NON_SEMANTIC_KEYS: &[&str] = &[
    "threads",
    "work_dir",
    "text_embeddings",
    "visual_embeddings",
    "interactions",
    "profiles",
    "pairs",
    "encoder_weights",
];

impl PipelineConfig {
    /// Applies the layers in order. `env` is usually `std::env::vars()`.
    pub fn layered(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut map = match serde_json::to_value(Self::default())? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        let defaults = map.clone();
        if let Some(path) = file {
            let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let table: toml::Table = toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))?;
            for (k, v) in table {
                if !defaults.contains_key(&k) {
                    bail!("unknown config key `{k}` in {}", path.display());
                }
                map.insert(k, serde_json::to_value(v)?);
            }
        }
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| Some((k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase(), v)))
            .collect();
        env.sort();
        for (k, v) in env {
            if defaults.contains_key(&k) {
                map.insert(k.clone(), coerce(&defaults, &k, &v).with_context(|| format!("environment {ENV_PREFIX}{}", k.to_ascii_uppercase()))?);
            }
        }
        for (k, v) in overrides {
            let k = k.replace('-', "_");
            if !defaults.contains_key(&k) {
                bail!("unknown config key `{k}`");
            }
            map.insert(k.clone(), coerce(&defaults, &k, v).with_context(|| format!("override {k}={v}"))?);
        }
        let cfg: Self = serde_json::from_value(Value::Object(map)).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("codebook_size", self.codebook_size),
            ("latent_dim", self.latent_dim),
            ("rq_batch_size", self.rq_batch_size),
            ("refit_every", self.refit_every),
            ("kmeans_iters", self.kmeans_iters),
            ("negatives", self.negatives),
            ("user_batch_size", self.user_batch_size),
            ("l_hop", self.l_hop),
            ("k_core", self.k_core),
            ("k_paths", self.k_paths),
            ("gnn_dim", self.gnn_dim),
            ("experts", self.experts),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            bail!("tau must be positive");
        }
        if !(self.beta >= 0.0 && self.rq_lr >= 0.0 && self.user_lr >= 0.0) {
            bail!("beta and learning rates must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail!("dropout must be in [0, 1)");
        }
        Ok(())
    }

    /// The result-affecting settings as a JSON object.
    pub fn semantic(&self) -> Map<String, Value> {
        let Value::Object(mut m) = serde_json::to_value(self).expect("serializes") else {
            unreachable!()
        };
        for k in NON_SEMANTIC_KEYS {
            m.remove(*k);
        }
        m
    }

    /// Hex SHA-256 of the result-affecting settings.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(&self.semantic()).expect("serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The subset of settings named in `keys`, for stage manifests.
    pub fn subset(&self, keys: &[&str]) -> Value {
        let all = self.semantic();
        Value::Object(
            keys.iter()
                .map(|k| (k.to_string(), all.get(*k).cloned().expect("known key")))
                .collect(),
        )
    }

    pub fn retrieval(&self) -> retrieval::RetrievalConfig {
        retrieval::RetrievalConfig {
            l_hop: self.l_hop,
            k_core: self.k_core,
            k_paths: self.k_paths,
            arc_rule: self.arc_rule,
            remove_target_edge: self.remove_target_edge,
        }
    }

    pub fn stage_seed(&self, label: &str) -> u64 {
        pathrec_core::seed::derive_seed(self.seed, label)
    }
}

/// Parses a string using the type of the key's default value.
fn coerce(defaults: &Map<String, Value>, key: &str, raw: &str) -> Result<Value> {
    Ok(match &defaults[key] {
        Value::Bool(_) => Value::Bool(raw.parse().with_context(|| format!("`{raw}` is not a boolean"))?),
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().with_context(|| format!("`{raw}` is not a non-negative integer"))?),
        Value::Number(_) => Value::from(raw.parse::<f64>().with_context(|| format!("`{raw}` is not a number"))?),
        _ => Value::String(raw.to_string()),
    })
}
