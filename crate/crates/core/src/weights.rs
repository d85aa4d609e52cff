//! Matrix and vector files in the embedding line format, one row per line keyed by row index.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::datastore::{self, DataError, Modality};
use crate::linalg::Matrix;

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "#dim={}", m.cols())?;
        for (r, row) in m.iter_rows().enumerate() {
            datastore::write_vector_line(w, &r.to_string(), row)?;
        }
        w.flush()
    };
    write(&mut w).map_err(io)
}

/// Loads a matrix saved by [`save_matrix`]; rows must be keyed `0..n` in order.
pub fn load_matrix(path: &Path) -> Result<Matrix, DataError> {
    let table = datastore::load_embeddings(path, Modality::Text)?;
    for (r, id) in table.ids().iter().enumerate() {
        if *id != r.to_string() {
            return Err(DataError::MalformedLine {
                line: r + 2,
                reason: format!("expected row key {r}, found `{id}`"),
            });
        }
    }
    Ok(table.matrix().clone())
}

pub fn save_vector(path: &Path, v: &[f64]) -> Result<(), DataError> {
    save_matrix(path, &Matrix::from_vec(1, v.len(), v.to_vec()))
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>, DataError> {
    let m = load_matrix(path)?;
    if m.rows() != 1 {
        return Err(DataError::MalformedLine {
            line: 1,
            reason: format!("expected a single row, found {}", m.rows()),
        });
    }
    Ok(m.row(0).to_vec())
}
