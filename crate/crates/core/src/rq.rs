//! Residual quantization of item embeddings into semantic ids.
//!
//! Each modality has a linear projection `z = W e + b` into a `d`-dimensional
//! latent space and a stack of `L` codebooks of `K` codewords. Quantization is
//! greedy: layer `i` picks the codeword nearest to the residual `r_i` and hands
//! `r_{i+1} = r_i - v_{c_i}` to the next layer. The quantized vector is the sum
//! of the selected codewords; the decoder is the identity in latent space.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{DataError, EmbeddingTable, Modality};
use crate::linalg::{self, Matrix};
use crate::seed;
use crate::weights;

pub const DEFAULT_LAYERS: usize = 4;
pub const DEFAULT_CODEBOOK_SIZE: usize = 256;
pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_BETA: f64 = 0.25;
pub const DEFAULT_TAU: f64 = 0.07;

#[derive(Debug, thiserror::Error)]
pub enum RqError {
    #[error("cannot fit codebooks on an empty table")]
    EmptyInput,
    #[error("codebook stack is not fitted")]
    NotFitted,
    #[error("alignment loss needs matched batches of at least 2, got {text} text / {visual} visual")]
    BatchTooSmall { text: usize, visual: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("item `{0}` missing from the {1} table")]
    Misaligned(String, Modality),
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Linear encoder from raw embedding space into the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Projection {
    /// Gaussian weights with scale `1/sqrt(d_in)`, zero bias.
    pub fn seeded<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::gaussian(d_out, d_in, 1.0 / (d_in as f64).sqrt(), rng),
            bias: vec![0.0; d_out],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, e: &[f64]) -> Vec<f64> {
        let mut z = self.weight.matvec(e);
        linalg::axpy(&mut z, 1.0, &self.bias);
        z
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Projection) {
        self.weight.add_scaled(alpha, &other.weight);
        linalg::axpy(&mut self.bias, alpha, &other.bias);
    }

    /// Accumulates the gradient of a loss with `dL/dz = grad_z` at input `e`.
    pub fn accumulate_grad(&mut self, scale: f64, grad_z: &[f64], e: &[f64]) {
        self.weight.add_outer(scale, grad_z, e);
        linalg::axpy(&mut self.bias, scale, grad_z);
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && linalg::all_finite(&self.bias)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), DataError> {
        weights::save_matrix(&dir.join(format!("{stem}_weight.tsv")), &self.weight)?;
        weights::save_vector(&dir.join(format!("{stem}_bias.tsv")), &self.bias)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, DataError> {
        Ok(Self {
            weight: weights::load_matrix(&dir.join(format!("{stem}_weight.tsv")))?,
            bias: weights::load_vector(&dir.join(format!("{stem}_bias.tsv")))?,
        })
    }
}

/// One projection per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub text: Projection,
    pub visual: Projection,
}

impl ProjectionParams {
    pub fn seeded<R: Rng + ?Sized>(text_dim: usize, visual_dim: usize, d: usize, rng: &mut R) -> Self {
        Self {
            text: Projection::seeded(text_dim, d, rng),
            visual: Projection::seeded(visual_dim, d, rng),
        }
    }

    pub fn get(&self, m: Modality) -> &Projection {
        match m {
            Modality::Text => &self.text,
            Modality::Visual => &self.visual,
        }
    }

    pub fn get_mut(&mut self, m: Modality) -> &mut Projection {
        match m {
            Modality::Text => &mut self.text,
            Modality::Visual => &mut self.visual,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.text.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            text: self.text.zeros_like(),
            visual: self.visual.zeros_like(),
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &ProjectionParams) {
        self.text.add_scaled(alpha, &other.text);
        self.visual.add_scaled(alpha, &other.visual);
    }

    pub fn is_finite(&self) -> bool {
        self.text.is_finite() && self.visual.is_finite()
    }

    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        self.text.save(dir, "projection_text")?;
        self.visual.save(dir, "projection_visual")
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        Ok(Self {
            text: Projection::load(dir, "projection_text")?,
            visual: Projection::load(dir, "projection_visual")?,
        })
    }
}

/// Per-layer codebook indices of one quantized vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticId {
    pub modality: Modality,
    pub indices: Vec<usize>,
}

impl SemanticId {
    /// Renders the indices as `i1,i2,...`.
    pub fn to_field(&self) -> String {
        self.indices
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationResult {
    pub sid: SemanticId,
    /// Sum of the selected codewords.
    pub quantized: Vec<f64>,
    /// `r_1 ..= r_{L+1}`; `r_1` is the latent input.
    pub residuals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub layers: usize,
    pub codebook_size: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Relative objective improvement below which Lloyd iterations stop.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS,
            codebook_size: DEFAULT_CODEBOOK_SIZE,
            seed: 0,
            max_iters: 25,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookStack {
    modality: Modality,
    layers: Vec<Matrix>,
    fitted: bool,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StackManifest {
    modality: Modality,
    layers: usize,
    codebook_size: usize,
    dim: usize,
    seed: u64,
    fitted: bool,
}

impl CodebookStack {
    /// An unfitted stack of zero codewords.
    pub fn unfitted(modality: Modality, layers: usize, codebook_size: usize, dim: usize, seed: u64) -> Self {
        Self {
            modality,
            layers: vec![Matrix::zeros(codebook_size, dim); layers],
            fitted: false,
            seed,
        }
    }

    /// A fitted stack from explicit codebooks (each `K x d`).
    pub fn from_layers(modality: Modality, layers: Vec<Matrix>, seed: u64) -> Result<Self, RqError> {
        let first = layers.first().ok_or_else(|| RqError::Config("at least one layer".into()))?;
        let (k, d) = (first.rows(), first.cols());
        if k == 0 {
            return Err(RqError::Config("codebook size must be >= 1".into()));
        }
        for l in &layers {
            if (l.rows(), l.cols()) != (k, d) {
                return Err(RqError::Config("codebook layers differ in shape".into()));
            }
            if !l.is_finite() {
                return Err(RqError::Config("non-finite codeword".into()));
            }
        }
        Ok(Self {
            modality,
            layers,
            fitted: true,
            seed,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer(&self, i: usize) -> &Matrix {
        &self.layers[i]
    }

    pub fn codeword(&self, layer: usize, index: usize) -> &[f64] {
        self.layers[layer].row(index)
    }

    /// Quantizes a latent vector.
    pub fn quantize_latent(&self, z: &[f64]) -> Result<QuantizationResult, RqError> {
        if !self.fitted {
            return Err(RqError::NotFitted);
        }
        if z.len() != self.dim() {
            return Err(RqError::DimMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        let mut residuals = Vec::with_capacity(self.layers.len() + 1);
        let mut indices = Vec::with_capacity(self.layers.len());
        let mut quantized = vec![0.0; z.len()];
        let mut r = z.to_vec();
        for book in &self.layers {
            let c = nearest(book, &r);
            let v = book.row(c);
            linalg::axpy(&mut quantized, 1.0, v);
            let next = linalg::sub(&r, v);
            residuals.push(std::mem::replace(&mut r, next));
            indices.push(c);
        }
        residuals.push(r);
        Ok(QuantizationResult {
            sid: SemanticId {
                modality: self.modality,
                indices,
            },
            quantized,
            residuals,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (i, l) in self.layers.iter().enumerate() {
            weights::save_matrix(&dir.join(format!("layer{i}.tsv")), l)?;
        }
        let manifest = StackManifest {
            modality: self.modality,
            layers: self.num_layers(),
            codebook_size: self.codebook_size(),
            dim: self.dim(),
            seed: self.seed,
            fitted: self.fitted,
        };
        let path = dir.join("codebooks.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializes"))
            .map_err(|source| DataError::Io { path, source })
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let path = dir.join("codebooks.json");
        let raw = fs::read_to_string(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        let m: StackManifest =
            serde_json::from_str(&raw).map_err(|e| DataError::Manifest(e.to_string()))?;
        let mut layers = Vec::with_capacity(m.layers);
        for i in 0..m.layers {
            let l = weights::load_matrix(&dir.join(format!("layer{i}.tsv")))?;
            if (l.rows(), l.cols()) != (m.codebook_size, m.dim) {
                return Err(DataError::Manifest(format!("layer{i} shape disagrees with manifest")));
            }
            layers.push(l);
        }
        Ok(Self {
            modality: m.modality,
            layers,
            fitted: m.fitted,
            seed: m.seed,
        })
    }
}

/// Index of the nearest row of `book` to `x`; ties go to the lowest index.
pub fn nearest(book: &Matrix, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in book.iter_rows().enumerate() {
        let d = linalg::sq_dist(c, x);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Quantizes a raw embedding through its projection.
pub fn quantize(
    e: &[f64],
    stack: &CodebookStack,
    projection: &Projection,
) -> Result<QuantizationResult, RqError> {
    if e.len() != projection.input_dim() {
        return Err(RqError::DimMismatch {
            expected: projection.input_dim(),
            found: e.len(),
        });
    }
    stack.quantize_latent(&projection.apply(e))
}

/// Greedy per-layer k-means on the projected table.
pub fn fit_codebooks(
    table: &EmbeddingTable,
    projection: &Projection,
    cfg: &KMeansConfig,
) -> Result<CodebookStack, RqError> {
    if table.is_empty() {
        return Err(RqError::EmptyInput);
    }
    if table.dim() != projection.input_dim() {
        return Err(RqError::DimMismatch {
            expected: projection.input_dim(),
            found: table.dim(),
        });
    }
    let points: Vec<Vec<f64>> = table.iter().map(|(_, e)| projection.apply(e)).collect();
    fit_latent(table.modality(), &points, cfg)
}

/// Greedy per-layer k-means on latent vectors.
pub fn fit_latent(modality: Modality, points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<CodebookStack, RqError> {
    if points.is_empty() {
        return Err(RqError::EmptyInput);
    }
    if cfg.layers == 0 || cfg.codebook_size == 0 {
        return Err(RqError::Config("layers and codebook size must be >= 1".into()));
    }
    let mut rng = seed::rng_from(cfg.seed);
    let mut residuals = points.to_vec();
    let mut layers = Vec::with_capacity(cfg.layers);
    for layer in 0..cfg.layers {
        let book = kmeans(&residuals, cfg, &mut rng, layer);
        for r in residuals.iter_mut() {
            let c = nearest(&book, r);
            linalg::axpy(r, -1.0, book.row(c));
        }
        layers.push(book);
    }
    CodebookStack::from_layers(modality, layers, cfg.seed)
}

/// Lloyd's k-means seeded with the data mean as centroid 0 followed by k-means++ draws.
/// With the mean among the initial centroids the result never has more energy than
/// the input's variance about its mean.
fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], cfg: &KMeansConfig, rng: &mut R, layer: usize) -> Matrix {
    let n = points.len();
    let d = points[0].len();
    let k = cfg.codebook_size;
    let mut centroids = Matrix::zeros(k, d);

    let mut mean = vec![0.0; d];
    for p in points {
        linalg::axpy(&mut mean, 1.0, p);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    centroids.row_mut(0).copy_from_slice(&mean);

    let mut dist: Vec<f64> = points.iter().map(|p| linalg::sq_dist(p, &mean)).collect();
    let mut degenerate = false;
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            Some(idx)
        } else {
            None
        };
        match pick {
            Some(i) => {
                centroids.row_mut(c).copy_from_slice(&points[i]);
                for (dd, p) in dist.iter_mut().zip(points) {
                    *dd = dd.min(linalg::sq_dist(p, &points[i]));
                }
            }
            None => {
                // Every point already coincides with a centroid.
                degenerate = true;
                let prev = centroids.row(c - 1).to_vec();
                centroids.row_mut(c).copy_from_slice(&prev);
            }
        }
    }
    if degenerate {
        log::warn!("codebook layer {layer}: fewer distinct residuals than codewords; duplicated centroids");
    }

    let mut assign = vec![0usize; n];
    let mut prev_obj = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let mut obj = 0.0;
        for (a, p) in assign.iter_mut().zip(points) {
            *a = nearest(&centroids, p);
            obj += linalg::sq_dist(p, centroids.row(*a));
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            linalg::axpy(sums.row_mut(a), 1.0, p);
            counts[a] += 1;
        }
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                let inv = 1.0 / cnt as f64;
                let row: Vec<f64> = sums.row(c).iter().map(|s| s * inv).collect();
                centroids.row_mut(c).copy_from_slice(&row);
            }
        }
        if prev_obj.is_finite() && (prev_obj - obj) <= cfg.tol * prev_obj.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_obj = obj;
    }
    centroids
}

/// Mean squared norm of `r_i` for every layer input `i = 1..=L+1` over a set of latent points.
pub fn layer_energies(stack: &CodebookStack, points: &[Vec<f64>]) -> Result<Vec<f64>, RqError> {
    let mut energy = vec![0.0; stack.num_layers() + 1];
    for p in points {
        let q = stack.quantize_latent(p)?;
        for (e, r) in energy.iter_mut().zip(&q.residuals) {
            *e += linalg::sq_norm(r);
        }
    }
    let n = points.len().max(1) as f64;
    Ok(energy.into_iter().map(|e| e / n).collect())
}

/// Squared distance between the latent input and its quantization (identity decoder).
pub fn recon_loss_latent(z: &[f64], result: &QuantizationResult) -> f64 {
    linalg::sq_dist(z, &result.quantized)
}

pub fn recon_loss(e: &[f64], result: &QuantizationResult, projection: &Projection) -> f64 {
    recon_loss_latent(&projection.apply(e), result)
}

/// `sum_i ||sg[r_i] - v_i||^2 + beta ||r_i - sg[v_i]||^2`, which as a value is
/// `(1 + beta) * sum_i ||r_i - v_i||^2`.
pub fn commit_loss(result: &QuantizationResult, stack: &CodebookStack, beta: f64) -> f64 {
    debug_assert!(beta >= 0.0);
    let codebook: f64 = result
        .sid
        .indices
        .iter()
        .enumerate()
        .map(|(i, &c)| linalg::sq_dist(&result.residuals[i], stack.codeword(i, c)))
        .sum();
    (1.0 + beta) * codebook
}

/// In-batch InfoNCE between quantized text and visual vectors with cosine similarity.
/// Row `j` contrasts the matched text vector against every other text vector for visual `j`.
pub fn align_loss(zt: &[Vec<f64>], zv: &[Vec<f64>], tau: f64) -> Result<f64, RqError> {
    if zt.len() != zv.len() || zt.len() < 2 {
        return Err(RqError::BatchTooSmall {
            text: zt.len(),
            visual: zv.len(),
        });
    }
    if tau <= 0.0 {
        return Err(RqError::Config("tau must be positive".into()));
    }
    let b = zt.len();
    let mut logits = vec![0.0; b];
    let mut total = 0.0;
    for (j, v) in zv.iter().enumerate() {
        for (l, t) in logits.iter_mut().zip(zt) {
            *l = linalg::cosine(t, v) / tau;
        }
        total += linalg::log_sum_exp(&logits) - logits[j];
    }
    Ok(total / b as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Codebooks are refit by k-means every this many epochs.
    pub refit_every: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ProjectionTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-2,
            beta: DEFAULT_BETA,
            tau: DEFAULT_TAU,
            batch_size: 256,
            refit_every: 5,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Latent and quantized views of one item in both modalities.
struct Encoded {
    z: [Vec<f64>; 2],
    q: [QuantizationResult; 2],
}

fn encode_item(
    e: [&[f64]; 2],
    projections: &ProjectionParams,
    stacks: [&CodebookStack; 2],
) -> Result<Encoded, RqError> {
    let zt = projections.text.apply(e[0]);
    let zv = projections.visual.apply(e[1]);
    let qt = stacks[0].quantize_latent(&zt)?;
    let qv = stacks[1].quantize_latent(&zv)?;
    Ok(Encoded {
        z: [zt, zv],
        q: [qt, qv],
    })
}

/// Value and projection gradient of the joint objective on one batch:
/// in-batch alignment (when the batch has at least two items) plus the
/// batch mean of commitment and reconstruction losses in each modality.
///
/// Codewords and codeword selections are constants; the quantized vectors
/// therefore carry no gradient and the alignment term contributes to the
/// value only.
pub fn multi_loss_and_grad(
    batch: &[[&[f64]; 2]],
    projections: &ProjectionParams,
    stacks: [&CodebookStack; 2],
    beta: f64,
    tau: f64,
) -> Result<(f64, ProjectionParams), RqError> {
    let n = batch.len();
    let mut grad = projections.zeros_like();
    if n == 0 {
        return Ok((0.0, grad));
    }
    let encoded = batch
        .iter()
        .map(|e| encode_item(*e, projections, stacks))
        .collect::<Result<Vec<_>, _>>()?;
    let mut loss = 0.0;
    if n >= 2 {
        let qt: Vec<Vec<f64>> = encoded.iter().map(|x| x.q[0].quantized.clone()).collect();
        let qv: Vec<Vec<f64>> = encoded.iter().map(|x| x.q[1].quantized.clone()).collect();
        loss += align_loss(&qt, &qv, tau)?;
    }
    let inv_n = 1.0 / n as f64;
    for (item, enc) in batch.iter().zip(&encoded) {
        for (m, modality) in Modality::ALL.into_iter().enumerate() {
            let q = &enc.q[m];
            loss += inv_n * (recon_loss_latent(&enc.z[m], q) + commit_loss(q, stacks[m], beta));
            // r_{i+1} = z - sum_{l<=i} v_l, so each term differentiates to its own residual.
            let last = q.residuals.last().expect("L+1 residuals");
            let mut g: Vec<f64> = last.iter().map(|x| 2.0 * x).collect();
            for r in &q.residuals[1..] {
                linalg::axpy(&mut g, 2.0 * (1.0 + beta), r);
            }
            grad.get_mut(modality).accumulate_grad(inv_n, &g, item[m]);
        }
    }
    Ok((loss, grad))
}

/// Value of the joint objective on one batch.
pub fn multi_loss(
    batch: &[[&[f64]; 2]],
    projections: &ProjectionParams,
    stacks: [&CodebookStack; 2],
    beta: f64,
    tau: f64,
) -> Result<f64, RqError> {
    multi_loss_and_grad(batch, projections, stacks, beta, tau).map(|(l, _)| l)
}

#[derive(Debug, Clone)]
pub struct ProjectionTrainReport {
    pub projections: ProjectionParams,
    pub text_stack: CodebookStack,
    pub visual_stack: CodebookStack,
    /// Held-out joint loss before training (index 0) and after each epoch.
    pub holdout_loss: Vec<f64>,
}

/// Item ids present in both tables, in text-table order.
pub fn aligned_ids(text: &EmbeddingTable, visual: &EmbeddingTable) -> Result<Vec<String>, RqError> {
    for id in visual.ids() {
        if !text.contains(id) {
            return Err(RqError::Misaligned(id.clone(), Modality::Text));
        }
    }
    for id in text.ids() {
        if !visual.contains(id) {
            return Err(RqError::Misaligned(id.clone(), Modality::Visual));
        }
    }
    Ok(text.ids().to_vec())
}

fn fit_pair(
    text: &EmbeddingTable,
    visual: &EmbeddingTable,
    ids: &[String],
    projections: &ProjectionParams,
    kmeans: &KMeansConfig,
) -> Result<[CodebookStack; 2], RqError> {
    let fit = |m: Modality, table: &EmbeddingTable| {
        let p = projections.get(m);
        let pts: Vec<Vec<f64>> = ids
            .iter()
            .map(|id| p.apply(table.get(id).expect("aligned")))
            .collect();
        fit_latent(m, &pts, kmeans)
    };
    Ok([fit(Modality::Text, text)?, fit(Modality::Visual, visual)?])
}

/// Gradient descent on the joint objective through the projections.
/// Codebooks are fit on the training slice before the first epoch and refit
/// every `refit_every` epochs.
pub fn train_projection(
    text: &EmbeddingTable,
    visual: &EmbeddingTable,
    init: ProjectionParams,
    kmeans: &KMeansConfig,
    cfg: &ProjectionTrainConfig,
) -> Result<ProjectionTrainReport, RqError> {
    let mut ids = aligned_ids(text, visual)?;
    if ids.is_empty() {
        return Err(RqError::EmptyInput);
    }
    let mut rng = seed::rng_from(cfg.seed);
    ids.shuffle(&mut rng);
    let n_hold = ((ids.len() as f64) * cfg.holdout_fraction).round() as usize;
    let n_hold = if ids.len() >= 4 { n_hold.clamp(2, ids.len() - 2) } else { 0 };
    let (hold, train) = ids.split_at(n_hold);
    let mut train = train.to_vec();
    let pair = |id: &String| -> [&[f64]; 2] {
        [text.get(id).expect("aligned"), visual.get(id).expect("aligned")]
    };
    let hold_batch: Vec<[&[f64]; 2]> = if hold.is_empty() {
        train.iter().map(pair).collect()
    } else {
        hold.iter().map(pair).collect()
    };

    let mut projections = init;
    let [mut ts, mut vs] = fit_pair(text, visual, &train, &projections, kmeans)?;
    let eval = |p: &ProjectionParams, ts: &CodebookStack, vs: &CodebookStack| {
        multi_loss(&hold_batch, p, [ts, vs], cfg.beta, cfg.tau)
    };
    let mut holdout_loss = vec![eval(&projections, &ts, &vs)?];
    let refit_every = cfg.refit_every.max(1);
    let batch_size = cfg.batch_size.max(1);

    for epoch in 1..=cfg.epochs {
        if epoch > 1 && (epoch - 1) % refit_every == 0 {
            [ts, vs] = fit_pair(text, visual, &train, &projections, kmeans)?;
        }
        train.shuffle(&mut rng);
        for chunk in train.chunks(batch_size) {
            let batch: Vec<[&[f64]; 2]> = chunk.iter().map(pair).collect();
            let (loss, grad) = multi_loss_and_grad(&batch, &projections, [&ts, &vs], cfg.beta, cfg.tau)?;
            if !loss.is_finite() {
                return Err(RqError::NonFiniteLoss {
                    epoch,
                    detail: format!("batch loss {loss} with lr {}", cfg.lr),
                });
            }
            projections.add_scaled(-cfg.lr, &grad);
        }
        if !projections.is_finite() {
            return Err(RqError::NonFiniteLoss {
                epoch,
                detail: "projection weights diverged".into(),
            });
        }
        let l = eval(&projections, &ts, &vs)?;
        if !l.is_finite() {
            return Err(RqError::NonFiniteLoss {
                epoch,
                detail: format!("held-out loss {l}"),
            });
        }
        log::info!("projection epoch {epoch}: held-out loss {l:.6}");
        holdout_loss.push(l);
    }
    // Final codebooks match the final projection.
    [ts, vs] = fit_pair(text, visual, &train, &projections, kmeans)?;
    Ok(ProjectionTrainReport {
        projections,
        text_stack: ts,
        visual_stack: vs,
        holdout_loss,
    })
}
