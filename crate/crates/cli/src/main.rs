use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pathrec_cli::bench::{bench_retrieval, sample_queries};
use pathrec_cli::manifest::StageStatus;
use pathrec_cli::pipeline::{self, Layout};
use pathrec_cli::PipelineConfig;
use pathrec_core::graph::BipartiteGraph;
use pathrec_core::{datastore, synth};

#[derive(Parser)]
#[command(name = "pathrec", version = pathrec_cli::VERSION, about = "Path retrieval for explainable recommendation")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "PATHREC_CONFIG")]
    config: Option<PathBuf>,
    /// Work directory holding every stage's artifacts.
    #[arg(long, global = true)]
    work: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides any config key, e.g. `--set k_paths=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Rerun stages even when their manifest is current.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Inputs {
    #[arg(long = "embeddings-text", alias = "text")]
    text: Option<PathBuf>,
    #[arg(long = "embeddings-visual", alias = "visual")]
    visual: Option<PathBuf>,
    #[arg(long)]
    interactions: Option<PathBuf>,
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw inputs and copy them into the store.
    Ingest {
        #[command(flatten)]
        inputs: Inputs,
        /// Same as `--work`; the store is written to `<DIR>/store`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train projections and fit residual codebooks for both modalities.
    FitCodebooks {
        #[arg(short = 'L', long)]
        layers: Option<usize>,
        #[arg(short = 'K', long)]
        codebook_size: Option<usize>,
        #[arg(short = 'd', long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write semantic ids for every item.
    Quantize,
    /// Train the sequence encoder and write user and item representations.
    TrainUserRep {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long = "negs", alias = "negatives")]
        negatives: Option<usize>,
    },
    /// Build the user-item graph.
    BuildGraph {
        /// Interaction log to read instead of the ingested store.
        #[arg(long)]
        interactions: Option<PathBuf>,
        /// Same as `--work`; edges are written to `<DIR>/graph/edges.tsv`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Retrieve paths for one pair or for a batch of pairs.
    Retrieve {
        #[arg(long, requires = "item")]
        user: Option<String>,
        #[arg(long, requires = "user")]
        item: Option<String>,
        /// Batch mode: `user<TAB>item` per line.
        #[arg(long, conflicts_with = "user")]
        pairs: Option<PathBuf>,
        #[arg(long)]
        emit_prompt: bool,
        #[arg(long)]
        l_hop: Option<usize>,
        #[arg(long)]
        k_core: Option<usize>,
        #[arg(short = 'k', long)]
        k_paths: Option<usize>,
    },
    /// Encode retrieved paths into soft prompts.
    Encode {
        /// Directory of pre-trained encoder weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Write the final JSON-lines records.
    Export,
    /// Every stage in order.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Print the resolved configuration and its hash.
    Config,
    /// Write a planted-community dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        /// Same-community query pairs written to pairs.tsv.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
    },
    /// Time single-pair retrieval.
    Bench {
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        /// Use a random graph with this many nodes instead of the work directory.
        #[arg(long)]
        synthetic_nodes: Option<usize>,
        /// Per-query CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn push<T: ToString>(o: &mut Vec<(String, String)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key.to_string(), v.to_string()));
    }
}

fn push_path(o: &mut Vec<(String, String)>, key: &str, v: &Option<PathBuf>) {
    push(o, key, v.as_ref().map(|p| p.display()));
}

fn push_inputs(o: &mut Vec<(String, String)>, i: &Inputs) {
    push_path(o, "text_embeddings", &i.text);
    push_path(o, "visual_embeddings", &i.visual);
    push_path(o, "interactions", &i.interactions);
    push_path(o, "profiles", &i.profiles);
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut o = Vec::new();
    for s in &cli.set {
        let (k, v) = s.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
        o.push((k.trim().to_string(), v.trim().to_string()));
    }
    push(&mut o, "seed", cli.seed);
    push(&mut o, "threads", cli.threads);
    push_path(&mut o, "work_dir", &cli.work);
    match &cli.command {
        Command::Ingest { inputs, out } => {
            push_inputs(&mut o, inputs);
            push_path(&mut o, "work_dir", out);
        }
        Command::BuildGraph { out, .. } => push_path(&mut o, "work_dir", out),
        Command::Run { inputs, pairs } => {
            push_inputs(&mut o, inputs);
            push_path(&mut o, "pairs", pairs);
        }
        Command::FitCodebooks {
            layers,
            codebook_size,
            latent_dim,
            epochs,
        } => {
            push(&mut o, "layers", *layers);
            push(&mut o, "codebook_size", *codebook_size);
            push(&mut o, "latent_dim", *latent_dim);
            push(&mut o, "rq_epochs", *epochs);
        }
        Command::TrainUserRep { epochs, lr, negatives } => {
            push(&mut o, "user_epochs", *epochs);
            push(&mut o, "user_lr", *lr);
            push(&mut o, "negatives", *negatives);
        }
        Command::Retrieve {
            pairs,
            l_hop,
            k_core,
            k_paths,
            ..
        } => {
            push_path(&mut o, "pairs", pairs);
            push(&mut o, "l_hop", *l_hop);
            push(&mut o, "k_core", *k_core);
            push(&mut o, "k_paths", *k_paths);
        }
        Command::Encode { weights } => push_path(&mut o, "encoder_weights", weights),
        _ => {}
    }
    Ok(o)
}

fn report(stage: &str, status: StageStatus) {
    match status {
        StageStatus::Ran => log::info!("{stage}: done"),
        StageStatus::Skipped => log::info!("{stage}: up to date, skipped"),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::layered(cli.config.as_deref(), std::env::vars(), &overrides(&cli)?)?;
    let force = cli.force;
    match &cli.command {
        Command::Ingest { .. } => report("ingest", pipeline::ingest(&cfg, force)?),
        Command::FitCodebooks { .. } => report("fit-codebooks", pipeline::fit_codebooks(&cfg, force)?),
        Command::Quantize => report("quantize", pipeline::quantize(&cfg, force)?),
        Command::TrainUserRep { .. } => report("train-user-rep", pipeline::train_user_rep(&cfg, force)?),
        Command::BuildGraph { interactions, .. } => {
            let status = match interactions {
                Some(p) => pipeline::build_graph_from(&cfg, p, force)?,
                None => pipeline::build_graph(&cfg, force)?,
            };
            report("build-graph", status)
        }
        Command::Retrieve {
            user: Some(user),
            item: Some(item),
            emit_prompt,
            ..
        } => {
            let layout = Layout::new(&cfg.work_dir);
            let g = BipartiteGraph::load_edges(&layout.edges())?;
            let reps = pipeline::load_representations(&layout)?;
            let profiles = emit_prompt
                .then(|| datastore::load_profiles(&layout.store().join(datastore::PROFILES_FILE)))
                .transpose()?;
            let rec = pipeline::retrieve_pair(&g, &reps, &cfg, user, item, profiles.as_ref())?;
            let mut out = std::io::stdout().lock();
            serde_json::to_writer(&mut out, &rec)?;
            writeln!(out)?;
        }
        Command::Retrieve { emit_prompt, .. } => report("retrieve", pipeline::retrieve_batch(&cfg, *emit_prompt, force)?),
        Command::Encode { .. } => report("encode", pipeline::encode(&cfg, force)?),
        Command::Export => report("export", pipeline::export(&cfg, force)?),
        Command::Run { .. } => {
            for (stage, status) in pipeline::run(&cfg, force)? {
                report(stage, status);
            }
        }
        Command::Config => {
            println!("# config_hash = {}", cfg.config_hash());
            print!("{}", toml::to_string(&cfg)?);
        }
        Command::Synth { out, users, items, pairs } => {
            let planted = synth::PlantedConfig {
                users: *users,
                items: *items,
                seed: cfg.seed,
                ..Default::default()
            };
            pipeline::write_synthetic(out, &planted, *pairs)?;
            log::info!("wrote synthetic dataset to {}", out.display());
        }
        Command::Bench {
            queries,
            synthetic_nodes,
            csv,
        } => {
            let (g, reps) = match synthetic_nodes {
                Some(n) => {
                    let users = (n * 7 / 10).max(1);
                    let items = n.saturating_sub(users).max(1);
                    let log = synth::random_log(users, items, 6, cfg.seed);
                    let reps = synth::random_reps(&log, 4 * cfg.latent_dim, cfg.seed);
                    (BipartiteGraph::build(&log), reps)
                }
                None => {
                    let layout = Layout::new(&cfg.work_dir);
                    (BipartiteGraph::load_edges(&layout.edges())?, pipeline::load_representations(&layout)?)
                }
            };
            let qs = sample_queries(&g, *queries, cfg.seed);
            let summary = match csv {
                Some(p) => {
                    let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                    bench_retrieval(&g, &reps, &cfg.retrieval(), &qs, std::io::BufWriter::new(f))?
                }
                None => bench_retrieval(&g, &reps, &cfg.retrieval(), &qs, std::io::sink())?,
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
