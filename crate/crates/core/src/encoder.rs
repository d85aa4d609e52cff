//! Graph encoding of retrieved paths and the mixture-of-experts adapter that
//! maps them to a soft prompt, plus the export record for fine-tuning.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::DataError;
use crate::graph::{BipartiteGraph, GraphError, Subgraph};
use crate::linalg::{self, Matrix};
use crate::retrieval::{Representations, RetrievalError, RetrievalPath};
use crate::weights;

/// Version of the export record layout.
pub const SCHEMA_VERSION: &str = "1";
pub const DEFAULT_GNN_DIM: usize = 64;
pub const DEFAULT_EXPERTS: usize = 4;
pub const DEFAULT_OUTPUT_DIM: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("{found} path encodings for {slots} slots")]
    TooManyPaths { found: usize, slots: usize },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("bad weight manifest: {0}")]
    Manifest(String),
}

/// Path nodes together with their 1-hop neighbours in the full graph.
pub fn retrieval_subgraph(g: &BipartiteGraph, path: &RetrievalPath) -> Result<Subgraph, GraphError> {
    let mut nodes = Vec::new();
    for n in &path.nodes {
        let idx = g.require(n)?;
        nodes.push(idx);
        nodes.extend_from_slice(g.neighbors(idx));
    }
    Ok(Subgraph::induced(g, nodes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    /// `d_g x d_in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl GnnParams {
    pub fn seeded<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::gaussian(d_out, d_in, 1.0 / (d_in as f64).sqrt(), rng),
            bias: vec![0.0; d_out],
            activation: Activation::Relu,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Mean over nodes of `act(W * mean(self and neighbour reps) + b)`.
pub fn gnn_encode(
    g: &BipartiteGraph,
    sub: &Subgraph,
    reps: &Representations,
    params: &GnnParams,
) -> Result<Vec<f64>, EncoderError> {
    let d_in = params.weight.cols();
    let node_reps = sub
        .nodes()
        .iter()
        .map(|&p| {
            let n = g.node(p);
            let r = reps
                .get(n)
                .ok_or_else(|| RetrievalError::MissingRepresentation(n.clone()))?;
            if r.len() != d_in {
                return Err(EncoderError::DimMismatch {
                    expected: d_in,
                    found: r.len(),
                });
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut pooled = vec![0.0; params.output_dim()];
    if sub.is_empty() {
        return Ok(pooled);
    }
    let inv_n = 1.0 / sub.len() as f64;
    for (local, rep) in node_reps.iter().enumerate() {
        let neigh = sub.neighbors(local);
        let mut msg = rep.to_vec();
        for &m in neigh {
            linalg::axpy(&mut msg, 1.0, node_reps[m]);
        }
        let inv = 1.0 / (neigh.len() + 1) as f64;
        msg.iter_mut().for_each(|x| *x *= inv);
        let h = params.weight.matvec(&msg);
        for ((p, hv), b) in pooled.iter_mut().zip(h).zip(&params.bias) {
            *p += inv_n * params.activation.apply(hv + b);
        }
    }
    Ok(pooled)
}

/// Concatenates up to `slots` encodings of width `dim`, zero-padding missing slots.
pub fn concat_paths(encodings: &[Vec<f64>], slots: usize, dim: usize) -> Result<Vec<f64>, EncoderError> {
    if encodings.len() > slots {
        return Err(EncoderError::TooManyPaths {
            found: encodings.len(),
            slots,
        });
    }
    let mut out = Vec::with_capacity(slots * dim);
    for e in encodings {
        if e.len() != dim {
            return Err(EncoderError::DimMismatch {
                expected: dim,
                found: e.len(),
            });
        }
        out.extend_from_slice(e);
    }
    out.resize(slots * dim, 0.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    /// `d_out x d_in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Expert {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::add(&self.weight.matvec(x), &self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeParams {
    pub experts: Vec<Expert>,
    /// `n x d_in`; gate logits are `gate * x`.
    pub gate: Matrix,
    pub dropout: f64,
}

impl MoeParams {
    pub fn seeded<R: Rng + ?Sized>(d_in: usize, d_out: usize, n: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (d_in as f64).sqrt();
        let experts = (0..n)
            .map(|_| Expert {
                weight: Matrix::gaussian(d_out, d_in, scale, rng),
                bias: vec![0.0; d_out],
            })
            .collect();
        Self {
            experts,
            gate: Matrix::gaussian(n, d_in, scale, rng),
            dropout: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.gate.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.experts[0].weight.rows()
    }

    pub fn gate_weights(&self, x: &[f64]) -> Result<Vec<f64>, EncoderError> {
        if x.len() != self.input_dim() {
            return Err(EncoderError::DimMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(linalg::softmax(&self.gate.matvec(x)))
    }
}

/// `sum_i softmax(W_g x)_i * (W_i x + b_i)`. With `train` set, `x` first passes
/// through inverted dropout drawn from the given generator.
pub fn moe_forward<R: Rng + ?Sized>(
    x: &[f64],
    params: &MoeParams,
    train: Option<&mut R>,
) -> Result<Vec<f64>, EncoderError> {
    let gate = params.gate_weights(x)?;
    let dropped;
    let input = match train {
        Some(rng) if params.dropout > 0.0 => {
            let keep = 1.0 - params.dropout;
            dropped = x
                .iter()
                .map(|&v| if rng.random::<f64>() < keep { v / keep } else { 0.0 })
                .collect::<Vec<_>>();
            &dropped[..]
        }
        _ => x,
    };
    let mut y = vec![0.0; params.output_dim()];
    for (g, e) in gate.iter().zip(&params.experts) {
        linalg::axpy(&mut y, *g, &e.apply(input));
    }
    Ok(y)
}

/// Inference-mode [`moe_forward`].
pub fn moe_infer(x: &[f64], params: &MoeParams) -> Result<Vec<f64>, EncoderError> {
    moe_forward::<rand_chacha::ChaCha8Rng>(x, params, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub gnn: GnnParams,
    pub moe: MoeParams,
    /// Number of path slots in the concatenated encoding.
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EncoderManifest {
    d_in: usize,
    d_g: usize,
    slots: usize,
    experts: usize,
    d_out: usize,
    activation: Activation,
    dropout: f64,
}

impl EncoderParams {
    pub fn seeded<R: Rng + ?Sized>(d_in: usize, d_g: usize, slots: usize, experts: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            gnn: GnnParams::seeded(d_in, d_g, rng),
            moe: MoeParams::seeded(slots * d_g, d_out, experts, rng),
            slots,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), EncoderError> {
        fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        weights::save_matrix(&dir.join("gnn_weight.tsv"), &self.gnn.weight)?;
        weights::save_vector(&dir.join("gnn_bias.tsv"), &self.gnn.bias)?;
        weights::save_matrix(&dir.join("moe_gate.tsv"), &self.moe.gate)?;
        for (i, e) in self.moe.experts.iter().enumerate() {
            weights::save_matrix(&dir.join(format!("expert{i}_weight.tsv")), &e.weight)?;
            weights::save_vector(&dir.join(format!("expert{i}_bias.tsv")), &e.bias)?;
        }
        let m = EncoderManifest {
            d_in: self.gnn.weight.cols(),
            d_g: self.gnn.output_dim(),
            slots: self.slots,
            experts: self.moe.experts.len(),
            d_out: self.moe.output_dim(),
            activation: self.gnn.activation,
            dropout: self.moe.dropout,
        };
        let path = dir.join("encoder.json");
        fs::write(&path, serde_json::to_string_pretty(&m).expect("serializes"))
            .map_err(|source| DataError::Io { path, source })?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EncoderError> {
        let path = dir.join("encoder.json");
        let raw = fs::read_to_string(&path).map_err(|source| DataError::Io { path, source })?;
        let m: EncoderManifest = serde_json::from_str(&raw).map_err(|e| EncoderError::Manifest(e.to_string()))?;
        let shape_check = |what: &str, mat: &Matrix, rows: usize, cols: usize| {
            if (mat.rows(), mat.cols()) == (rows, cols) {
                Ok(())
            } else {
                Err(EncoderError::Manifest(format!(
                    "{what} is {}x{}, manifest says {rows}x{cols}",
                    mat.rows(),
                    mat.cols()
                )))
            }
        };
        let gnn_weight = weights::load_matrix(&dir.join("gnn_weight.tsv"))?;
        shape_check("gnn weight", &gnn_weight, m.d_g, m.d_in)?;
        let gate = weights::load_matrix(&dir.join("moe_gate.tsv"))?;
        shape_check("gate", &gate, m.experts, m.slots * m.d_g)?;
        let mut experts = Vec::with_capacity(m.experts);
        for i in 0..m.experts {
            let weight = weights::load_matrix(&dir.join(format!("expert{i}_weight.tsv")))?;
            shape_check("expert", &weight, m.d_out, m.slots * m.d_g)?;
            experts.push(Expert {
                weight,
                bias: weights::load_vector(&dir.join(format!("expert{i}_bias.tsv")))?,
            });
        }
        Ok(Self {
            gnn: GnnParams {
                weight: gnn_weight,
                bias: weights::load_vector(&dir.join("gnn_bias.tsv"))?,
                activation: m.activation,
            },
            moe: MoeParams {
                experts,
                gate,
                dropout: m.dropout,
            },
            slots: m.slots,
        })
    }
}

/// Soft prompt for one pair: encode each path's neighbourhood, concatenate in
/// the given (ascending length) order, and adapt through the mixture of experts.
pub fn soft_prompt(
    g: &BipartiteGraph,
    reps: &Representations,
    paths: &[RetrievalPath],
    params: &EncoderParams,
) -> Result<Vec<f64>, EncoderError> {
    let encodings = paths
        .iter()
        .take(params.slots)
        .map(|p| {
            let sub = retrieval_subgraph(g, p)?;
            gnn_encode(g, &sub, reps, &params.gnn)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let x = concat_paths(&encodings, params.slots, params.gnn.output_dim())?;
    moe_infer(&x, &params.moe)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

/// One fine-tuning record per (user, item) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPromptBundle {
    pub user: String,
    pub item: String,
    pub prompt: String,
    pub paths: Vec<Vec<String>>,
    pub soft_prompt: Vec<f64>,
    pub meta: BundleMeta,
}

/// Appends one JSON line per bundle in the given order; returns the record count.
pub fn export_bundles<W: Write>(bundles: &[SoftPromptBundle], mut out: W) -> std::io::Result<usize> {
    for b in bundles {
        serde_json::to_writer(&mut out, b)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(bundles.len())
}
