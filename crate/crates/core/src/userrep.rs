//! Multimodal item features and the sequence encoder that turns a user's
//! history into a user representation.
//!
//! An item feature is the concatenation `[z_t, q_t, z_v, q_v]` of the projected
//! embedding and its quantization in each modality. The sequence encoder mean
//! pools the history features and applies a square linear map. Training uses
//! InfoNCE over one positive and sampled negatives with dot-product logits.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{DataError, EmbeddingTable, Modality, UserSequence};
use crate::linalg::{self, Matrix};
use crate::rq::{CodebookStack, ProjectionParams, RqError};
use crate::seed;
use crate::weights;

pub const DEFAULT_NEGATIVES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum UserRepError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{item}` has no {modality} embedding")]
    MissingModality { item: String, modality: Modality },
    #[error("user `{0}` has an empty sequence")]
    EmptySequence(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Rq(#[from] RqError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeature {
    pub item: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRep {
    pub user: String,
    pub vector: Vec<f64>,
}

/// Frozen inputs for feature construction: raw tables and fitted codebooks.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub text: &'a EmbeddingTable,
    pub visual: &'a EmbeddingTable,
    pub text_stack: &'a CodebookStack,
    pub visual_stack: &'a CodebookStack,
}

impl<'a> FeatureContext<'a> {
    fn raw(&self, item: &str) -> Result<[&'a [f64]; 2], UserRepError> {
        match (self.text.get(item), self.visual.get(item)) {
            (Some(t), Some(v)) => Ok([t, v]),
            (None, None) => Err(UserRepError::UnknownItem(item.to_string())),
            (None, Some(_)) => Err(UserRepError::MissingModality {
                item: item.to_string(),
                modality: Modality::Text,
            }),
            (Some(_), None) => Err(UserRepError::MissingModality {
                item: item.to_string(),
                modality: Modality::Visual,
            }),
        }
    }

    /// Items present in both tables, in text-table order.
    pub fn items(&self) -> Vec<String> {
        self.text
            .ids()
            .iter()
            .filter(|id| self.visual.contains(id))
            .cloned()
            .collect()
    }
}

/// `[f(e_t), q_t, f(e_v), q_v]`, each block of the latent dimension.
pub fn item_feature(
    item: &str,
    ctx: &FeatureContext<'_>,
    projections: &ProjectionParams,
) -> Result<ItemFeature, UserRepError> {
    let [et, ev] = ctx.raw(item)?;
    let zt = projections.text.apply(et);
    let zv = projections.visual.apply(ev);
    let qt = ctx.text_stack.quantize_latent(&zt)?;
    let qv = ctx.visual_stack.quantize_latent(&zv)?;
    let mut vector = Vec::with_capacity(4 * zt.len());
    vector.extend_from_slice(&zt);
    vector.extend_from_slice(&qt.quantized);
    vector.extend_from_slice(&zv);
    vector.extend_from_slice(&qv.quantized);
    Ok(ItemFeature {
        item: item.to_string(),
        vector,
    })
}

/// Features for every item in `ctx`, keyed by id.
pub fn all_item_features(
    ctx: &FeatureContext<'_>,
    projections: &ProjectionParams,
) -> Result<HashMap<String, Vec<f64>>, UserRepError> {
    ctx.items()
        .into_iter()
        .map(|id| item_feature(&id, ctx, projections).map(|f| (f.item, f.vector)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqEncoderParams {
    pub projections: ProjectionParams,
    pub w_u: Matrix,
    pub bias: Vec<f64>,
}

impl SeqEncoderParams {
    /// `W_u = I + N(0, 1e-4)` noise, zero bias.
    pub fn seeded<R: Rng + ?Sized>(projections: ProjectionParams, rng: &mut R) -> Self {
        let n = 4 * projections.latent_dim();
        let mut w_u = Matrix::identity(n);
        w_u.add_scaled(1.0, &Matrix::gaussian(n, n, 1e-2, rng));
        Self {
            projections,
            w_u,
            bias: vec![0.0; n],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w_u.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            projections: self.projections.zeros_like(),
            w_u: Matrix::zeros(self.w_u.rows(), self.w_u.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &SeqEncoderParams) {
        self.projections.add_scaled(alpha, &other.projections);
        self.w_u.add_scaled(alpha, &other.w_u);
        linalg::axpy(&mut self.bias, alpha, &other.bias);
    }

    pub fn is_finite(&self) -> bool {
        self.projections.is_finite() && self.w_u.is_finite() && linalg::all_finite(&self.bias)
    }

    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        self.projections.save(dir)?;
        weights::save_matrix(&dir.join("w_u.tsv"), &self.w_u)?;
        weights::save_vector(&dir.join("w_u_bias.tsv"), &self.bias)
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        Ok(Self {
            projections: ProjectionParams::load(dir)?,
            w_u: weights::load_matrix(&dir.join("w_u.tsv"))?,
            bias: weights::load_vector(&dir.join("w_u_bias.tsv"))?,
        })
    }
}

fn mean_pool<'a>(features: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let n = features.len() as f64;
    let mut m = vec![0.0; dim];
    for f in features {
        linalg::axpy(&mut m, 1.0 / n, f);
    }
    m
}

/// `h = W_u * mean(features of seq) + b`.
pub fn encode_user(
    seq: &UserSequence,
    features: &HashMap<String, Vec<f64>>,
    params: &SeqEncoderParams,
) -> Result<UserRep, UserRepError> {
    if seq.items.is_empty() {
        return Err(UserRepError::EmptySequence(seq.user.clone()));
    }
    let rows = seq
        .items
        .iter()
        .map(|i| {
            features
                .get(i)
                .map(Vec::as_slice)
                .ok_or_else(|| UserRepError::UnknownItem(i.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let m = mean_pool(rows.into_iter(), params.feature_dim());
    let mut vector = params.w_u.matvec(&m);
    linalg::axpy(&mut vector, 1.0, &params.bias);
    Ok(UserRep {
        user: seq.user.clone(),
        vector,
    })
}

/// `-ln( exp(h.e+) / (exp(h.e+) + sum exp(h.e-)) )` with logits divided by `temperature`.
pub fn infonce(h: &[f64], pos: &[f64], negs: &[&[f64]], temperature: f64) -> f64 {
    let mut logits = Vec::with_capacity(negs.len() + 1);
    logits.push(linalg::dot(h, pos) / temperature);
    logits.extend(negs.iter().map(|n| linalg::dot(h, n) / temperature));
    let pos = logits[0];
    if logits.iter().all(|&l| l <= pos) {
        // ln(1 + sum exp(l_j - l_pos)) keeps precision when the loss is tiny
        return logits[1..].iter().map(|&l| (l - pos).exp()).sum::<f64>().ln_1p();
    }
    linalg::log_sum_exp(&logits) - pos
}

/// Cosine similarity; zero when either vector is (numerically) zero.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64, UserRepError> {
    if a.len() != b.len() {
        return Err(UserRepError::DimMismatch(a.len(), b.len()));
    }
    Ok(linalg::cosine(a, b))
}

/// One InfoNCE training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub user: String,
    pub history: Vec<String>,
    pub positive: String,
    pub negatives: Vec<String>,
}

/// Mean InfoNCE over the batch and its gradient with respect to `W_u`, the
/// bias and both projections. Quantized blocks are treated as constants.
pub fn loss_and_grad(
    params: &SeqEncoderParams,
    batch: &[TrainSample],
    ctx: &FeatureContext<'_>,
    temperature: f64,
) -> Result<(f64, SeqEncoderParams), UserRepError> {
    let mut grad = params.zeros_like();
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let dim = params.feature_dim();
    let d = params.projections.latent_dim();

    let mut features: HashMap<&str, Vec<f64>> = HashMap::new();
    for s in batch {
        if s.history.is_empty() {
            return Err(UserRepError::EmptySequence(s.user.clone()));
        }
        for id in s.history.iter().chain([&s.positive]).chain(&s.negatives) {
            if !features.contains_key(id.as_str()) {
                let f = item_feature(id, ctx, &params.projections)?;
                features.insert(id.as_str(), f.vector);
            }
        }
    }
    let mut feat_grad: HashMap<&str, Vec<f64>> = HashMap::new();
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        let m = mean_pool(s.history.iter().map(|i| features[i.as_str()].as_slice()), dim);
        let mut h = params.w_u.matvec(&m);
        linalg::axpy(&mut h, 1.0, &params.bias);

        let cands: Vec<&str> = std::iter::once(s.positive.as_str())
            .chain(s.negatives.iter().map(String::as_str))
            .collect();
        let logits: Vec<f64> = cands
            .iter()
            .map(|c| linalg::dot(&h, &features[c]) / temperature)
            .collect();
        let lse = linalg::log_sum_exp(&logits);
        loss += inv_b * (lse - logits[0]);

        let mut dh = vec![0.0; dim];
        for (k, (c, l)) in cands.iter().zip(&logits).enumerate() {
            let p = (l - lse).exp();
            let dlogit = inv_b * (p - if k == 0 { 1.0 } else { 0.0 }) / temperature;
            linalg::axpy(&mut dh, dlogit, &features[c]);
            let g = feat_grad.entry(c).or_insert_with(|| vec![0.0; dim]);
            linalg::axpy(g, dlogit, &h);
        }
        grad.w_u.add_outer(1.0, &dh, &m);
        linalg::axpy(&mut grad.bias, 1.0, &dh);
        let dm = params.w_u.matvec_t(&dh);
        let share = 1.0 / s.history.len() as f64;
        for i in &s.history {
            let g = feat_grad.entry(i.as_str()).or_insert_with(|| vec![0.0; dim]);
            linalg::axpy(g, share, &dm);
        }
    }
    // Only the projected blocks depend smoothly on the projections.
    let mut items: Vec<&&str> = feat_grad.keys().collect();
    items.sort();
    for id in items {
        let g = &feat_grad[*id];
        let [et, ev] = ctx.raw(id)?;
        grad.projections.text.accumulate_grad(1.0, &g[..d], et);
        grad.projections.visual.accumulate_grad(1.0, &g[2 * d..3 * d], ev);
    }
    Ok((loss, grad))
}

/// One gradient-descent step; returns the updated parameters and the batch loss
/// measured before the update.
pub fn train_step(
    params: &SeqEncoderParams,
    batch: &[TrainSample],
    ctx: &FeatureContext<'_>,
    lr: f64,
    temperature: f64,
) -> Result<(SeqEncoderParams, f64), UserRepError> {
    let (loss, grad) = loss_and_grad(params, batch, ctx, temperature)?;
    if !loss.is_finite() {
        return Err(UserRepError::NonFiniteLoss { epoch: 0 });
    }
    let mut next = params.clone();
    if lr != 0.0 {
        next.add_scaled(-lr, &grad);
    }
    Ok((next, loss))
}

/// Uniform negatives among `universe` items outside `exclude`, without replacement.
pub fn sample_negatives<R: Rng + ?Sized>(
    universe: &[String],
    exclude: &HashSet<&str>,
    count: usize,
    rng: &mut R,
) -> Vec<String> {
    let n_excluded = universe.iter().filter(|i| exclude.contains(i.as_str())).count();
    let available = universe.len() - n_excluded;
    if available <= count {
        return universe
            .iter()
            .filter(|i| !exclude.contains(i.as_str()))
            .cloned()
            .collect();
    }
    if 2 * n_excluded > universe.len() {
        let pool: Vec<&String> = universe.iter().filter(|i| !exclude.contains(i.as_str())).collect();
        return index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|k| pool[k].clone())
            .collect();
    }
    let mut picked = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let k = rng.random_range(0..universe.len());
        let id = &universe[k];
        if !exclude.contains(id.as_str()) && picked.insert(k) {
            out.push(id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserRepTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for UserRepTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.05,
            negatives: DEFAULT_NEGATIVES,
            batch_size: 256,
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// Every (prefix, next item) pair of every sequence with at least two items.
pub fn next_item_pairs(sequences: &[UserSequence]) -> Vec<(usize, usize)> {
    sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (1..seq.items.len()).map(move |t| (s, t)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct UserRepTrainReport {
    pub params: SeqEncoderParams,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch gradient descent on next-item InfoNCE with fresh negatives every epoch.
pub fn train_user_rep(
    sequences: &[UserSequence],
    ctx: &FeatureContext<'_>,
    init: SeqEncoderParams,
    cfg: &UserRepTrainConfig,
) -> Result<UserRepTrainReport, UserRepError> {
    use rand::seq::SliceRandom;

    let universe = ctx.items();
    let mut rng = seed::rng_from(cfg.seed);
    let mut params = init;
    let mut pairs = next_item_pairs(sequences);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in pairs.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<TrainSample> = chunk
                .iter()
                .map(|&(s, t)| {
                    let seq = &sequences[s];
                    let exclude: HashSet<&str> = seq.items.iter().map(String::as_str).collect();
                    TrainSample {
                        user: seq.user.clone(),
                        history: seq.items[..t].to_vec(),
                        positive: seq.items[t].clone(),
                        negatives: sample_negatives(&universe, &exclude, cfg.negatives, &mut rng),
                    }
                })
                .collect();
            let (next, loss) = train_step(&params, &batch, ctx, cfg.lr, cfg.temperature)
                .map_err(|e| match e {
                    UserRepError::NonFiniteLoss { .. } => UserRepError::NonFiniteLoss { epoch },
                    other => other,
                })?;
            params = next;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        if !params.is_finite() {
            return Err(UserRepError::NonFiniteLoss { epoch });
        }
        let mean = if count > 0 { total / count as f64 } else { 0.0 };
        log::info!("sequence encoder epoch {epoch}: loss {mean:.6}");
        epoch_loss.push(mean);
    }
    Ok(UserRepTrainReport { params, epoch_loss })
}

/// Items ranked by `h . e` (descending, ties by id), skipping `exclude`.
pub fn rank_items<'a>(
    h: &[f64],
    features: &'a HashMap<String, Vec<f64>>,
    exclude: &HashSet<&str>,
    top: usize,
) -> Vec<&'a str> {
    let mut scored: Vec<(f64, &str)> = features
        .iter()
        .filter(|(id, _)| !exclude.contains(id.as_str()))
        .map(|(id, f)| (linalg::dot(h, f), id.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(top).map(|(_, id)| id).collect()
}

/// Fraction of `(history, target)` cases whose target ranks in the top `k`
/// among items outside the history.
pub fn recall_at_k(
    cases: &[UserSequence],
    targets: &[String],
    features: &HashMap<String, Vec<f64>>,
    params: &SeqEncoderParams,
    k: usize,
) -> Result<f64, UserRepError> {
    let mut hits = 0usize;
    for (seq, target) in cases.iter().zip(targets) {
        let h = encode_user(seq, features, params)?;
        let exclude: HashSet<&str> = seq.items.iter().map(String::as_str).collect();
        if rank_items(&h.vector, features, &exclude, k).contains(&target.as_str()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / cases.len().max(1) as f64)
}

pub fn save_reps<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<(), DataError> {
    use std::io::Write;
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut rows = rows.into_iter().peekable();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let dim = rows.peek().map_or(0, |(_, v)| v.len());
    let res: std::io::Result<()> = (|| {
        writeln!(w, "#dim={}", dim.max(1))?;
        for (id, v) in rows {
            crate::datastore::write_vector_line(&mut w, id, v)?;
        }
        w.flush()
    })();
    res.map_err(io)
}
