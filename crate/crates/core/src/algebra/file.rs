//! JSON text formats for actions and matrices.
//!
//! Matrices are row-major arrays of `[re, im]` pairs.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ActionAssignment, AlgebraState, Automorphism, CMatrix};
use crate::error::{Error, Result};
use crate::words::GeneratorTable;

pub const ACTION_FORMAT_VERSION: u32 = 1;

type Rows = Vec<Vec<[f64; 2]>>;

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

fn from_rows(rows: &Rows, dim: usize, what: &str) -> Result<CMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::input(format!("{what} must be a {dim}x{dim} matrix")));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionFile {
    pub version: u32,
    pub dim: usize,
    pub state: Rows,
    pub generators: Vec<GeneratorAction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorAction {
    pub name: String,
    pub unitary: Rows,
}

impl ActionFile {
    pub fn from_action(state: &AlgebraState, action: &ActionAssignment) -> Self {
        let table = action.table();
        ActionFile {
            version: ACTION_FORMAT_VERSION,
            dim: state.dim(),
            state: to_rows(state.density()),
            generators: (0..table.len())
                .map(|g| GeneratorAction {
                    name: table.name(g).to_string(),
                    unitary: to_rows(action.get(g).unitary()),
                })
                .collect(),
        }
    }

    /// Validates the state, unitarity, state invariance and involution
    /// compatibility against `table`.
    pub fn into_action(self, table: &GeneratorTable) -> Result<(AlgebraState, ActionAssignment)> {
        if self.version != ACTION_FORMAT_VERSION {
            return Err(Error::input(format!(
                "unsupported action format version {} (expected {ACTION_FORMAT_VERSION})",
                self.version
            )));
        }
        let state = AlgebraState::new(from_rows(&self.state, self.dim, "state")?)?;
        let mut maps: Vec<Option<Automorphism>> = vec![None; table.len()];
        for g in &self.generators {
            let id = table.lookup(&g.name).ok_or_else(|| {
                Error::input(format!("action names unknown generator {}", g.name))
            })?;
            if maps[id].is_some() {
                return Err(Error::input(format!(
                    "generator {} is assigned twice",
                    g.name
                )));
            }
            let u = from_rows(&g.unitary, self.dim, &format!("unitary of {}", g.name))?;
            let m = Automorphism::new(u)
                .map_err(|e| Error::input(format!("generator {}: {e}", g.name)))?;
            if !m.preserves(&state) {
                return Err(Error::input(format!(
                    "generator {} does not preserve the state",
                    g.name
                )));
            }
            maps[id] = Some(m);
        }
        let maps = maps
            .into_iter()
            .enumerate()
            .map(|(g, m)| {
                m.ok_or_else(|| {
                    Error::input(format!("no unitary given for generator {}", table.name(g)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let action = ActionAssignment::new(table.clone(), maps)?;
        Ok((state, action))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_action(state: &AlgebraState, action: &ActionAssignment, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&ActionFile::from_action(state, action))
        .expect("action file serialises");
    text.push('\n');
    write(path, text)
}

pub fn load_action(
    path: &Path,
    table: &GeneratorTable,
) -> Result<(AlgebraState, ActionAssignment)> {
    let file: ActionFile = parse(path, &read(path)?)?;
    file.into_action(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub dim: usize,
    pub matrix: Rows,
}

pub fn save_matrix(m: &CMatrix, path: &Path) -> Result<()> {
    let file = MatrixFile {
        dim: m.nrows(),
        matrix: to_rows(m),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("matrix file serialises");
    text.push('\n');
    write(path, text)
}

pub fn load_matrix(path: &Path) -> Result<CMatrix> {
    let file: MatrixFile = parse(path, &read(path)?)?;
    from_rows(&file.matrix, file.dim, "matrix")
}
