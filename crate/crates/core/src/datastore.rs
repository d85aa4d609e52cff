//! Ingest and persistence of embeddings, interaction logs and text profiles.
//!
//! Embedding tables use a line format: an optional `#dim=N` header followed
//! by one `id<TAB>v1,v2,...` record per line. Interactions are
//! `user<TAB>item<TAB>timestamp` lines. Profiles are line-delimited JSON
//! records `{"id", "kind": "user"|"item", "profile", "title"?}`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::linalg::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("non-finite value in row `{0}`")]
    NonFiniteValue(String),
    #[error("line {line}: malformed line ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {0}: negative timestamp")]
    NegativeTimestamp(usize),
    #[error("line {line}: malformed record ({reason})")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("empty embedding file without a #dim header")]
    MissingDim,
    #[error("bad store manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Visual,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Text, Modality::Visual];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Visual => "visual",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Modality::Text),
            "visual" => Ok(Modality::Visual),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// Dense per-item vectors for one modality, kept in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    modality: Modality,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
}

impl EmbeddingTable {
    pub fn new(modality: Modality, dim: usize) -> Self {
        Self {
            modality,
            ids: Vec::new(),
            index: HashMap::new(),
            vectors: Matrix::zeros(0, dim),
        }
    }

    /// Builds a table from `(id, vector)` rows, enforcing the table invariants.
    pub fn from_rows(
        modality: Modality,
        dim: usize,
        rows: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, DataError> {
        let mut ids = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        for (n, (id, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(DataError::DimMismatch {
                    line: n + 1,
                    expected: dim,
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(DataError::NonFiniteValue(id));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(DataError::DuplicateId(id));
            }
            ids.push(id);
            data.extend(v);
        }
        Ok(Self {
            modality,
            vectors: Matrix::from_vec(ids.len(), dim, data),
            ids,
            index,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&r| self.vectors.row(r))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(r, id)| (id.as_str(), self.vectors.row(r)))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#dim={}", self.dim())?;
        for (id, v) in self.iter() {
            write_vector_line(&mut out, id, v)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(path))
    }
}

/// Writes one `id<TAB>v1,v2,...` line. `{}` on f64 is the shortest exact round-trip form.
pub fn write_vector_line<W: Write>(out: &mut W, id: &str, v: &[f64]) -> std::io::Result<()> {
    write!(out, "{id}\t")?;
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        write!(out, "{x}")?;
    }
    out.write_all(b"\n")
}

/// Parses the embedding line format from a reader.
pub fn parse_embeddings<R: Read>(reader: R, modality: Modality) -> Result<EmbeddingTable, DataError> {
    let mut dim: Option<usize> = None;
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut data = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| DataError::MalformedLine {
            line: lineno,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(d) = rest.trim().strip_prefix("dim=") {
                let d: usize = d.trim().parse().map_err(|_| DataError::MalformedLine {
                    line: lineno,
                    reason: format!("bad dim header `{line}`"),
                })?;
                if d == 0 || !ids.is_empty() {
                    return Err(DataError::MalformedLine {
                        line: lineno,
                        reason: "dim header must be positive and precede all rows".into(),
                    });
                }
                dim = Some(d);
            }
            continue;
        }
        let (id, values) = line.split_once('\t').ok_or_else(|| DataError::MalformedLine {
            line: lineno,
            reason: "missing tab separator".into(),
        })?;
        if id.is_empty() {
            return Err(DataError::MalformedLine {
                line: lineno,
                reason: "empty id".into(),
            });
        }
        let mut row = Vec::with_capacity(dim.unwrap_or(0));
        for tok in values.split(',') {
            let x: f64 = tok.trim().parse().map_err(|_| DataError::MalformedLine {
                line: lineno,
                reason: format!("bad number `{tok}`"),
            })?;
            row.push(x);
        }
        let expected = *dim.get_or_insert(row.len());
        if row.len() != expected {
            return Err(DataError::DimMismatch {
                line: lineno,
                expected,
                found: row.len(),
            });
        }
        if !row.iter().all(|x| x.is_finite()) {
            return Err(DataError::NonFiniteValue(id.to_string()));
        }
        if index.insert(id.to_string(), ids.len()).is_some() {
            return Err(DataError::DuplicateId(id.to_string()));
        }
        ids.push(id.to_string());
        data.extend(row);
    }
    let dim = dim.ok_or(DataError::MissingDim)?;
    Ok(EmbeddingTable {
        modality,
        vectors: Matrix::from_vec(ids.len(), dim, data),
        ids,
        index,
    })
}

pub fn load_embeddings(path: &Path, modality: Modality) -> Result<EmbeddingTable, DataError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    parse_embeddings(f, modality)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub entries: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new(entries: Vec<Interaction>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.user, e.item, e.timestamp)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(path))
    }
}

pub fn parse_interactions<R: Read>(reader: R) -> Result<InteractionLog, DataError> {
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = n + 1;
        let malformed = |reason: &str| DataError::MalformedLine {
            line: lineno,
            reason: reason.to_string(),
        };
        let line = line.map_err(|e| malformed(&e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(user), Some(item), Some(ts), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(malformed("expected user<TAB>item<TAB>timestamp"));
        };
        if user.is_empty() || item.is_empty() {
            return Err(malformed("empty id"));
        }
        let ts: i64 = ts
            .trim()
            .parse()
            .map_err(|_| malformed(&format!("bad timestamp `{ts}`")))?;
        if ts < 0 {
            return Err(DataError::NegativeTimestamp(lineno));
        }
        entries.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            timestamp: ts as u64,
        });
    }
    Ok(InteractionLog { entries })
}

pub fn load_interactions(path: &Path) -> Result<InteractionLog, DataError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    parse_interactions(f)
}

/// Chronological item sequence of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user: String,
    pub items: Vec<String>,
}

/// One sequence per distinct user, ordered by user id. Items are sorted by
/// timestamp; ties keep log order.
pub fn derive_sequences(log: &InteractionLog) -> Vec<UserSequence> {
    let mut by_user: BTreeMap<&str, Vec<(u64, &str)>> = BTreeMap::new();
    for e in &log.entries {
        by_user
            .entry(e.user.as_str())
            .or_default()
            .push((e.timestamp, e.item.as_str()));
    }
    by_user
        .into_iter()
        .map(|(user, mut events)| {
            events.sort_by_key(|&(ts, _)| ts);
            UserSequence {
                user: user.to_string(),
                items: events.into_iter().map(|(_, i)| i.to_string()).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileStore {
    pub user_profiles: BTreeMap<String, String>,
    pub item_profiles: BTreeMap<String, String>,
    pub item_titles: BTreeMap<String, String>,
}

impl ProfileStore {
    pub fn user(&self, id: &str) -> Option<&str> {
        self.user_profiles.get(id).map(String::as_str)
    }

    pub fn item(&self, id: &str) -> Option<&str> {
        self.item_profiles.get(id).map(String::as_str)
    }

    pub fn title(&self, id: &str) -> Option<&str> {
        self.item_titles.get(id).map(String::as_str)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, profile) in &self.user_profiles {
            let rec = serde_json::json!({"id": id, "kind": "user", "profile": profile});
            writeln!(out, "{rec}")?;
        }
        for (id, profile) in &self.item_profiles {
            let mut rec = serde_json::json!({"id": id, "kind": "item", "profile": profile});
            if let Some(t) = self.item_titles.get(id) {
                rec["title"] = Value::String(t.clone());
            }
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(path))
    }
}

pub fn parse_profiles<R: Read>(reader: R) -> Result<ProfileStore, DataError> {
    let mut store = ProfileStore::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = n + 1;
        let malformed = |reason: String| DataError::MalformedRecord {
            line: lineno,
            reason,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let obj = rec
            .as_object()
            .ok_or_else(|| malformed("not a JSON object".into()))?;
        let field = |name: &'static str| -> Result<Option<String>, DataError> {
            match obj.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(DataError::MalformedRecord {
                    line: lineno,
                    reason: format!("field `{name}` is not a string"),
                }),
            }
        };
        let missing = |field: &'static str| DataError::MissingField { line: lineno, field };
        let id = field("id")?.ok_or_else(|| missing("id"))?;
        let kind = field("kind")?.ok_or_else(|| missing("kind"))?;
        let profile = field("profile")?.ok_or_else(|| missing("profile"))?;
        let title = field("title")?;
        match kind.as_str() {
            "user" => {
                store.user_profiles.insert(id, profile);
            }
            "item" => {
                if let Some(t) = title {
                    store.item_titles.insert(id.clone(), t);
                }
                store.item_profiles.insert(id, profile);
            }
            other => return Err(malformed(format!("unknown kind `{other}`"))),
        }
    }
    Ok(store)
}

pub fn load_profiles(path: &Path) -> Result<ProfileStore, DataError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    parse_profiles(f)
}

/// Everything ingested for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub text: EmbeddingTable,
    pub visual: EmbeddingTable,
    pub interactions: InteractionLog,
    pub profiles: ProfileStore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub text_dim: usize,
    pub visual_dim: usize,
    pub text_rows: usize,
    pub visual_rows: usize,
    pub interactions: usize,
    pub user_profiles: usize,
    pub item_profiles: usize,
}

pub const TEXT_FILE: &str = "embeddings_text.tsv";
pub const VISUAL_FILE: &str = "embeddings_visual.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const STORE_MANIFEST: &str = "store.json";

impl Dataset {
    pub fn table(&self, m: Modality) -> &EmbeddingTable {
        match m {
            Modality::Text => &self.text,
            Modality::Visual => &self.visual,
        }
    }

    pub fn manifest(&self) -> StoreManifest {
        StoreManifest {
            text_dim: self.text.dim(),
            visual_dim: self.visual.dim(),
            text_rows: self.text.len(),
            visual_rows: self.visual.len(),
            interactions: self.interactions.len(),
            user_profiles: self.profiles.user_profiles.len(),
            item_profiles: self.profiles.item_profiles.len(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.text.save(&dir.join(TEXT_FILE))?;
        self.visual.save(&dir.join(VISUAL_FILE))?;
        self.interactions.save(&dir.join(INTERACTIONS_FILE))?;
        self.profiles.save(&dir.join(PROFILES_FILE))?;
        let path = dir.join(STORE_MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(&path, json).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let ds = Self {
            text: load_embeddings(&dir.join(TEXT_FILE), Modality::Text)?,
            visual: load_embeddings(&dir.join(VISUAL_FILE), Modality::Visual)?,
            interactions: load_interactions(&dir.join(INTERACTIONS_FILE))?,
            profiles: load_profiles(&dir.join(PROFILES_FILE))?,
        };
        let path = dir.join(STORE_MANIFEST);
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: StoreManifest =
            serde_json::from_str(&raw).map_err(|e| DataError::Manifest(e.to_string()))?;
        if manifest != ds.manifest() {
            return Err(DataError::Manifest(format!(
                "{} does not match the stored files",
                path.display()
            )));
        }
        Ok(ds)
    }
}
