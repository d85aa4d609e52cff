//! The pipeline stages. Each stage reads artifacts from the work directory,
//! writes its own, and records a manifest.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pathrec_core::datastore::{self, derive_sequences, Dataset, EmbeddingTable, Modality, ProfileStore};
use pathrec_core::encoder::{self, BundleMeta, EncoderParams, SoftPromptBundle};
use pathrec_core::graph::{BipartiteGraph, NodeId};
use pathrec_core::retrieval::{self, Representations, RetrievalPath};
use pathrec_core::rq::{self, CodebookStack, KMeansConfig, ProjectionParams, ProjectionTrainConfig};
use pathrec_core::userrep::{self, FeatureContext, SeqEncoderParams, UserRepTrainConfig};
use pathrec_core::{seed, synth};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::manifest::{list_files, run_stage, StageStatus};

pub const STAGES: [&str; 8] = [
    "ingest",
    "fit-codebooks",
    "quantize",
    "train-user-rep",
    "build-graph",
    "retrieve",
    "encode",
    "export",
];

/// Paths of every artifact inside the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub work: PathBuf,
}

impl Layout {
    pub fn new(work: impl Into<PathBuf>) -> Self {
        Self { work: work.into() }
    }

    pub fn store(&self) -> PathBuf {
        self.work.join("store")
    }

    pub fn store_files(&self) -> Vec<PathBuf> {
        [
            datastore::TEXT_FILE,
            datastore::VISUAL_FILE,
            datastore::INTERACTIONS_FILE,
            datastore::PROFILES_FILE,
            datastore::STORE_MANIFEST,
        ]
        .iter()
        .map(|f| self.store().join(f))
        .collect()
    }

    pub fn rq(&self) -> PathBuf {
        self.work.join("rq")
    }

    pub fn codebooks(&self, m: Modality) -> PathBuf {
        self.rq().join(format!("codebooks_{m}"))
    }

    pub fn sids(&self, m: Modality) -> PathBuf {
        self.work.join("sids").join(format!("{m}.tsv"))
    }

    pub fn userrep(&self) -> PathBuf {
        self.work.join("userrep")
    }

    pub fn user_reps(&self) -> PathBuf {
        self.userrep().join("user_reps.tsv")
    }

    pub fn item_features(&self) -> PathBuf {
        self.userrep().join("item_features.tsv")
    }

    pub fn edges(&self) -> PathBuf {
        self.work.join("graph").join("edges.tsv")
    }

    pub fn pairs(&self) -> PathBuf {
        self.work.join("retrieval").join("pairs.tsv")
    }

    pub fn paths(&self) -> PathBuf {
        self.work.join("retrieval").join("paths.jsonl")
    }

    pub fn encoder_weights(&self) -> PathBuf {
        self.work.join("encoder").join("weights")
    }

    pub fn soft_prompts(&self) -> PathBuf {
        self.work.join("encoder").join("soft_prompts.jsonl")
    }

    pub fn bundles(&self) -> PathBuf {
        self.work.join("export").join("bundles.jsonl")
    }

    fn rel(&self, p: &Path) -> PathBuf {
        p.strip_prefix(&self.work).unwrap_or(p).to_path_buf()
    }

    fn files_under(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        list_files(&self.work, dir)
    }
}

fn mkdirs(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn parent_dirs(p: &Path) -> Result<()> {
    mkdirs(p.parent().expect("file path has a parent"))
}

fn all_files(dirs: &[PathBuf], layout: &Layout) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for d in dirs {
        out.extend(layout.files_under(d)?.into_iter().map(|r| layout.work.join(r)));
    }
    Ok(out)
}

fn thread_pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("building worker pool")
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| anyhow!("no {what} file configured"))
}

pub fn ingest(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let inputs = vec![
        required(&cfg.text_embeddings, "text embeddings")?.clone(),
        required(&cfg.visual_embeddings, "visual embeddings")?.clone(),
        required(&cfg.interactions, "interactions")?.clone(),
        required(&cfg.profiles, "profiles")?.clone(),
    ];
    run_stage(&layout.work, "ingest", serde_json::Value::Null, &inputs, force, || {
        let load = |i: usize| format!("loading {}", inputs[i].display());
        let ds = Dataset {
            text: datastore::load_embeddings(&inputs[0], Modality::Text).with_context(|| load(0))?,
            visual: datastore::load_embeddings(&inputs[1], Modality::Visual).with_context(|| load(1))?,
            interactions: datastore::load_interactions(&inputs[2]).with_context(|| load(2))?,
            profiles: datastore::load_profiles(&inputs[3]).with_context(|| load(3))?,
        };
        for (n, e) in ds.interactions.entries.iter().enumerate() {
            for table in [&ds.text, &ds.visual] {
                if !table.contains(&e.item) {
                    bail!(
                        "{} line {}: item {} has no {} embedding",
                        inputs[2].display(),
                        n + 1,
                        e.item,
                        table.modality()
                    );
                }
            }
        }
        ds.save(&layout.store())?;
        Ok(layout.store_files().iter().map(|p| layout.rel(p)).collect())
    })
}

fn kmeans_config(cfg: &PipelineConfig) -> KMeansConfig {
    KMeansConfig {
        layers: cfg.layers,
        codebook_size: cfg.codebook_size,
        seed: cfg.stage_seed("kmeans"),
        max_iters: cfg.kmeans_iters,
        ..Default::default()
    }
}

pub fn fit_codebooks(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let keys = [
        "seed", "layers", "codebook_size", "latent_dim", "beta", "tau", "rq_epochs", "rq_lr", "rq_batch_size",
        "refit_every", "kmeans_iters",
    ];
    run_stage(&layout.work, "fit-codebooks", cfg.subset(&keys), &layout.store_files(), force, || {
        let ds = Dataset::load(&layout.store())?;
        let mut rng = seed::stage_rng(cfg.seed, "projection-init");
        let init = ProjectionParams::seeded(ds.text.dim(), ds.visual.dim(), cfg.latent_dim, &mut rng);
        let train = ProjectionTrainConfig {
            epochs: cfg.rq_epochs,
            lr: cfg.rq_lr,
            beta: cfg.beta,
            tau: cfg.tau,
            batch_size: cfg.rq_batch_size,
            refit_every: cfg.refit_every,
            seed: cfg.stage_seed("projection-train"),
            ..Default::default()
        };
        let report = rq::train_projection(&ds.text, &ds.visual, init, &kmeans_config(cfg), &train)?;
        let dir = layout.rq();
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        mkdirs(&dir)?;
        report.projections.save(&dir)?;
        report.text_stack.save(&layout.codebooks(Modality::Text))?;
        report.visual_stack.save(&layout.codebooks(Modality::Visual))?;
        fs::write(dir.join("holdout_loss.json"), serde_json::to_string(&report.holdout_loss)? + "\n")?;
        layout.files_under(&dir)
    })
}

struct Quantizer {
    projections: ProjectionParams,
    text_stack: CodebookStack,
    visual_stack: CodebookStack,
}

fn load_quantizer(layout: &Layout) -> Result<Quantizer> {
    Ok(Quantizer {
        projections: ProjectionParams::load(&layout.rq())?,
        text_stack: CodebookStack::load(&layout.codebooks(Modality::Text))?,
        visual_stack: CodebookStack::load(&layout.codebooks(Modality::Visual))?,
    })
}

pub fn quantize(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let mut inputs = layout.store_files();
    inputs.extend(all_files(&[layout.rq()], &layout)?);
    run_stage(&layout.work, "quantize", serde_json::Value::Null, &inputs, force, || {
        let ds = Dataset::load(&layout.store())?;
        let q = load_quantizer(&layout)?;
        let mut written = Vec::new();
        for m in Modality::ALL {
            let (stack, proj) = match m {
                Modality::Text => (&q.text_stack, &q.projections.text),
                Modality::Visual => (&q.visual_stack, &q.projections.visual),
            };
            let path = layout.sids(m);
            parent_dirs(&path)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            for (id, e) in ds.table(m).iter() {
                let r = rq::quantize(e, stack, proj).with_context(|| format!("item {id}"))?;
                writeln!(w, "{id}\t{}", r.sid.to_field())?;
            }
            w.flush()?;
            written.push(layout.rel(&path));
        }
        Ok(written)
    })
}

pub fn train_user_rep(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let mut inputs = layout.store_files();
    inputs.extend(all_files(&[layout.rq()], &layout)?);
    let keys = ["seed", "user_epochs", "user_lr", "negatives", "user_batch_size"];
    run_stage(&layout.work, "train-user-rep", cfg.subset(&keys), &inputs, force, || {
        let ds = Dataset::load(&layout.store())?;
        let q = load_quantizer(&layout)?;
        let ctx = FeatureContext {
            text: &ds.text,
            visual: &ds.visual,
            text_stack: &q.text_stack,
            visual_stack: &q.visual_stack,
        };
        let sequences = derive_sequences(&ds.interactions);
        let init = SeqEncoderParams::seeded(q.projections.clone(), &mut seed::stage_rng(cfg.seed, "userrep-init"));
        let train = UserRepTrainConfig {
            epochs: cfg.user_epochs,
            lr: cfg.user_lr,
            negatives: cfg.negatives,
            batch_size: cfg.user_batch_size,
            temperature: 1.0,
            seed: cfg.stage_seed("userrep-train"),
        };
        let report = userrep::train_user_rep(&sequences, &ctx, init, &train)?;
        let features = userrep::all_item_features(&ctx, &report.params.projections)?;

        let dir = layout.userrep();
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        let params_dir = dir.join("params");
        mkdirs(&params_dir)?;
        report.params.save(&params_dir)?;
        let items = ctx.items();
        userrep::save_reps(
            &layout.item_features(),
            items.iter().map(|id| (id.as_str(), features[id].as_slice())),
        )?;
        let reps = sequences
            .iter()
            .map(|s| userrep::encode_user(s, &features, &report.params))
            .collect::<Result<Vec<_>, _>>()?;
        userrep::save_reps(&layout.user_reps(), reps.iter().map(|r| (r.user.as_str(), r.vector.as_slice())))?;
        fs::write(dir.join("epoch_loss.json"), serde_json::to_string(&report.epoch_loss)? + "\n")?;
        layout.files_under(&dir)
    })
}

pub fn build_graph(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let input = Layout::new(&cfg.work_dir).store().join(datastore::INTERACTIONS_FILE);
    build_graph_from(cfg, &input, force)
}

/// Builds the graph from any interaction log file.
pub fn build_graph_from(cfg: &PipelineConfig, input: &Path, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    run_stage(&layout.work, "build-graph", serde_json::Value::Null, &[input.to_path_buf()], force, || {
        let log = datastore::load_interactions(input).with_context(|| format!("loading {}", input.display()))?;
        let g = BipartiteGraph::build(&log);
        let path = layout.edges();
        parent_dirs(&path)?;
        g.save_edges(&path)?;
        log::info!(
            "graph: {} users, {} items, {} edges",
            g.user_count(),
            g.item_count(),
            g.edge_count()
        );
        Ok(vec![layout.rel(&path)])
    })
}

fn table_map(t: EmbeddingTable) -> HashMap<String, Vec<f64>> {
    t.iter().map(|(id, v)| (id.to_string(), v.to_vec())).collect()
}

pub fn load_representations(layout: &Layout) -> Result<Representations> {
    Ok(Representations {
        users: table_map(datastore::load_embeddings(&layout.user_reps(), Modality::Text)?),
        items: table_map(datastore::load_embeddings(&layout.item_features(), Modality::Text)?),
    })
}

/// One line of the batch retrieval output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub user: String,
    pub item: String,
    pub paths: Vec<Vec<String>>,
    pub lengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl PathRecord {
    /// Paths start at the user and alternate kinds.
    pub fn retrieval_paths(&self) -> Vec<RetrievalPath> {
        self.paths
            .iter()
            .zip(&self.lengths)
            .map(|(ids, &length)| RetrievalPath {
                nodes: ids
                    .iter()
                    .enumerate()
                    .map(|(i, id)| if i % 2 == 0 { NodeId::user(id.clone()) } else { NodeId::item(id.clone()) })
                    .collect(),
                length,
            })
            .collect()
    }
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let t = line.trim_end_matches('\r');
        if t.trim().is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(i), None) if !u.is_empty() && !i.is_empty() => out.push((u.to_string(), i.to_string())),
            _ => bail!("{} line {}: expected `user<TAB>item`", path.display(), n + 1),
        }
    }
    Ok(out)
}

pub fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    parent_dirs(path)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (u, i) in pairs {
        writeln!(w, "{u}\t{i}")?;
    }
    w.flush()?;
    Ok(())
}

/// Retrieves paths for one pair; the prompt is rendered when `profiles` is given.
pub fn retrieve_pair(
    g: &BipartiteGraph,
    reps: &Representations,
    cfg: &PipelineConfig,
    user: &str,
    item: &str,
    profiles: Option<&ProfileStore>,
) -> Result<PathRecord> {
    let (u, v) = (NodeId::user(user), NodeId::item(item));
    let out = retrieval::retrieve(g, reps, &u, &v, &cfg.retrieval())?;
    let prompt = profiles
        .map(|p| retrieval::render_prompt(user, item, &out.paths, p))
        .transpose()?;
    Ok(PathRecord {
        user: user.to_string(),
        item: item.to_string(),
        paths: out.paths.iter().map(|p| p.ids().iter().map(|s| s.to_string()).collect()).collect(),
        lengths: out.paths.iter().map(|p| p.length).collect(),
        prompt,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    parent_dirs(path)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .map(|(n, l)| {
            serde_json::from_str(&l?).with_context(|| format!("{} line {}", path.display(), n + 1))
        })
        .collect()
}

/// Each user paired with the last item of their sequence.
fn default_pairs(store: &Path) -> Result<Vec<(String, String)>> {
    let log = datastore::load_interactions(&store.join(datastore::INTERACTIONS_FILE))?;
    Ok(derive_sequences(&log)
        .into_iter()
        .filter_map(|s| Some((s.user, s.items.last()?.clone())))
        .collect())
}

pub fn retrieve_batch(cfg: &PipelineConfig, emit_prompt: bool, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let mut inputs = vec![layout.edges(), layout.user_reps(), layout.item_features()];
    inputs.push(layout.store().join(datastore::INTERACTIONS_FILE));
    if emit_prompt {
        inputs.push(layout.store().join(datastore::PROFILES_FILE));
    }
    if let Some(p) = &cfg.pairs {
        inputs.push(p.clone());
    }
    let mut stage_cfg = cfg.subset(&["l_hop", "k_core", "k_paths", "arc_rule", "remove_target_edge"]);
    stage_cfg["emit_prompt"] = emit_prompt.into();
    run_stage(&layout.work, "retrieve", stage_cfg, &inputs, force, || {
        let g = BipartiteGraph::load_edges(&layout.edges())?;
        let reps = load_representations(&layout)?;
        let profiles = emit_prompt
            .then(|| datastore::load_profiles(&layout.store().join(datastore::PROFILES_FILE)))
            .transpose()?;
        let pairs = match &cfg.pairs {
            Some(p) => read_pairs(p)?,
            None => default_pairs(&layout.store())?,
        };
        for (n, (u, i)) in pairs.iter().enumerate() {
            if g.index_of(&NodeId::user(u.clone())).is_none() {
                bail!("pair {}: unknown user {u}", n + 1);
            }
            if g.index_of(&NodeId::item(i.clone())).is_none() {
                bail!("pair {}: unknown item {i}", n + 1);
            }
        }
        let records = thread_pool(cfg)?.install(|| {
            pairs
                .par_iter()
                .map(|(u, i)| {
                    retrieve_pair(&g, &reps, cfg, u, i, profiles.as_ref()).with_context(|| format!("pair ({u}, {i})"))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let found = records.iter().filter(|r| !r.paths.is_empty()).count();
        log::info!("retrieved paths for {found} of {} pairs", records.len());
        write_pairs(&layout.pairs(), &pairs)?;
        write_jsonl(&layout.paths(), &records)?;
        Ok(vec![layout.rel(&layout.pairs()), layout.rel(&layout.paths())])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPromptRecord {
    pub user: String,
    pub item: String,
    pub soft_prompt: Vec<f64>,
}

pub fn encode(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let mut inputs = vec![layout.paths(), layout.edges(), layout.user_reps(), layout.item_features()];
    if let Some(dir) = &cfg.encoder_weights {
        inputs.extend(list_files(Path::new(""), dir)?);
    }
    let keys = ["seed", "k_paths", "gnn_dim", "experts", "output_dim", "dropout"];
    run_stage(&layout.work, "encode", cfg.subset(&keys), &inputs, force, || {
        let g = BipartiteGraph::load_edges(&layout.edges())?;
        let reps = load_representations(&layout)?;
        let records: Vec<PathRecord> = read_jsonl(&layout.paths())?;
        let mut params = match &cfg.encoder_weights {
            Some(dir) => EncoderParams::load(dir)?,
            None => EncoderParams::seeded(
                reps.items.values().next().map_or(1, Vec::len),
                cfg.gnn_dim,
                cfg.k_paths,
                cfg.experts,
                cfg.output_dim,
                &mut seed::stage_rng(cfg.seed, "encoder-init"),
            ),
        };
        params.moe.dropout = cfg.dropout;
        let soft = thread_pool(cfg)?.install(|| {
            records
                .par_iter()
                .map(|r| {
                    let v = encoder::soft_prompt(&g, &reps, &r.retrieval_paths(), &params)
                        .with_context(|| format!("pair ({}, {})", r.user, r.item))?;
                    Ok(SoftPromptRecord {
                        user: r.user.clone(),
                        item: r.item.clone(),
                        soft_prompt: v,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let wdir = layout.encoder_weights();
        if wdir.exists() {
            fs::remove_dir_all(&wdir)?;
        }
        params.save(&wdir)?;
        write_jsonl(&layout.soft_prompts(), &soft)?;
        let mut written = layout.files_under(&wdir)?;
        written.push(layout.rel(&layout.soft_prompts()));
        Ok(written)
    })
}

pub fn export(cfg: &PipelineConfig, force: bool) -> Result<StageStatus> {
    let layout = Layout::new(&cfg.work_dir);
    let inputs = vec![
        layout.paths(),
        layout.soft_prompts(),
        layout.store().join(datastore::PROFILES_FILE),
    ];
    run_stage(&layout.work, "export", cfg.subset(&["seed"]), &inputs, force, || {
        let records: Vec<PathRecord> = read_jsonl(&layout.paths())?;
        let soft: Vec<SoftPromptRecord> = read_jsonl(&layout.soft_prompts())?;
        if records.len() != soft.len() {
            bail!("{} path records but {} soft prompts", records.len(), soft.len());
        }
        let profiles = datastore::load_profiles(&layout.store().join(datastore::PROFILES_FILE))?;
        let meta = BundleMeta {
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            version: encoder::SCHEMA_VERSION.to_string(),
        };
        let bundles = records
            .into_iter()
            .zip(soft)
            .map(|(r, s)| {
                if (&r.user, &r.item) != (&s.user, &s.item) {
                    bail!("record order mismatch at ({}, {})", r.user, r.item);
                }
                let prompt = retrieval::render_prompt(&r.user, &r.item, &r.retrieval_paths(), &profiles)
                    .with_context(|| format!("pair ({}, {})", r.user, r.item))?;
                Ok(SoftPromptBundle {
                    user: r.user,
                    item: r.item,
                    prompt,
                    paths: r.paths,
                    soft_prompt: s.soft_prompt,
                    meta: meta.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let path = layout.bundles();
        parent_dirs(&path)?;
        let mut w = BufWriter::new(fs::File::create(&path)?);
        let n = encoder::export_bundles(&bundles, &mut w)?;
        log::info!("exported {n} records to {}", path.display());
        Ok(vec![layout.rel(&path)])
    })
}

/// Every stage in order.
pub fn run(cfg: &PipelineConfig, force: bool) -> Result<Vec<(&'static str, StageStatus)>> {
    Ok(vec![
        ("ingest", ingest(cfg, force)?),
        ("fit-codebooks", fit_codebooks(cfg, force)?),
        ("quantize", quantize(cfg, force)?),
        ("train-user-rep", train_user_rep(cfg, force)?),
        ("build-graph", build_graph(cfg, force)?),
        ("retrieve", retrieve_batch(cfg, false, force)?),
        ("encode", encode(cfg, force)?),
        ("export", export(cfg, force)?),
    ])
}

/// File names written by [`write_synthetic`].
pub const SYNTH_FILES: [&str; 5] = [
    "embeddings_text.tsv",
    "embeddings_visual.tsv",
    "interactions.tsv",
    "profiles.jsonl",
    "pairs.tsv",
];

/// Writes a planted dataset plus `n_pairs` random same-community query pairs.
pub fn write_synthetic(out: &Path, planted_cfg: &synth::PlantedConfig, n_pairs: usize) -> Result<synth::Planted> {
    use rand::Rng;

    mkdirs(out)?;
    let planted = synth::planted(planted_cfg);
    let ds = &planted.dataset;
    ds.text.save(&out.join(SYNTH_FILES[0]))?;
    ds.visual.save(&out.join(SYNTH_FILES[1]))?;
    ds.interactions.save(&out.join(SYNTH_FILES[2]))?;
    ds.profiles.save(&out.join(SYNTH_FILES[3]))?;

    let mut by_community: HashMap<usize, Vec<&String>> = HashMap::new();
    let seen: HashSet<&str> = ds.interactions.entries.iter().map(|e| e.item.as_str()).collect();
    for id in ds.text.ids() {
        if seen.contains(id.as_str()) {
            by_community.entry(planted.item_community[id]).or_default().push(id);
        }
    }
    let mut users: Vec<&String> = planted.user_community.keys().collect();
    users.sort();
    let mut rng = seed::stage_rng(planted_cfg.seed, "pairs");
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs && !users.is_empty() {
        let u = users[rng.random_range(0..users.len())];
        let Some(items) = by_community.get(&planted.user_community[u]) else {
            continue;
        };
        let i = items[rng.random_range(0..items.len())];
        pairs.push((u.clone(), i.clone()));
    }
    write_pairs(&out.join(SYNTH_FILES[4]), &pairs)?;
    Ok(planted)
}
