//! Stage manifests: what a stage read, with which settings, and what it wrote.
//! A stage whose manifest still matches its inputs and outputs is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub version: String,
    pub config: Value,
    /// Input path to hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the work directory, to hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

pub fn hash_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Every regular file under `dir`, sorted, as paths relative to `root`.
pub fn list_files(root: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn key(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

pub fn manifest_path(work: &Path, stage: &str) -> PathBuf {
    work.join(MANIFEST_DIR).join(format!("{stage}.json"))
}

/// Runs `body` unless an up-to-date manifest exists. `inputs` are hashed before
/// running; `body` returns the files it wrote, relative to `work`. The manifest
/// is written only after the body succeeds.
pub fn run_stage(
    work: &Path,
    stage: &str,
    config: Value,
    inputs: &[PathBuf],
    force: bool,
    body: impl FnOnce() -> Result<Vec<PathBuf>>,
) -> Result<StageStatus> {
    let mut input_hashes = BTreeMap::new();
    for p in inputs {
        let h = hash_file(p).with_context(|| format!("stage {stage}: missing or unreadable input {}", p.display()))?;
        input_hashes.insert(key(p), h);
    }
    let path = manifest_path(work, stage);
    if !force {
        if let Some(old) = read_manifest(&path) {
            let same_request = old.stage == stage
                && old.version == pathrec_core::encoder::SCHEMA_VERSION
                && old.config == config
                && old.inputs == input_hashes;
            if same_request && outputs_intact(work, &old) {
                log::info!("stage {stage}: up to date, skipping");
                return Ok(StageStatus::Skipped);
            }
        }
    }
    if path.exists() {
        fs::remove_file(&path).with_context(|| format!("removing stale {}", path.display()))?;
    }
    log::info!("stage {stage}: running");
    let written = body().with_context(|| format!("stage {stage} failed"))?;
    let mut outputs = BTreeMap::new();
    for rel in written {
        let h = hash_file(&work.join(&rel))?;
        outputs.insert(key(&rel), h);
    }
    let manifest = StageManifest {
        stage: stage.to_string(),
        version: pathrec_core::encoder::SCHEMA_VERSION.to_string(),
        config,
        inputs: input_hashes,
        outputs,
    };
    fs::create_dir_all(path.parent().expect("has parent"))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &path)?;
    Ok(StageStatus::Ran)
}

pub fn read_manifest(path: &Path) -> Option<StageManifest> {
    let raw = fs::read_to_string(path).ok()?;
    serde_json::from_str(&raw).ok()
}

fn outputs_intact(work: &Path, m: &StageManifest) -> bool {
    m.outputs
        .iter()
        .all(|(rel, h)| hash_file(&work.join(rel)).map(|x| &x == h).unwrap_or(false))
}
