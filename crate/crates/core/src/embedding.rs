//! Dense embedding matrices on disk: raw little-endian `f32` rows plus a
//! JSON sidecar naming the row-id and identity-tag files.
//!
//! For a data file `emb.f32` the sidecar is `emb.f32.json`:
//! `{"rows": n, "dim": d, "ids": "emb.ids", "identities": "emb.identities"}`.
//! Paths are relative to the sidecar's directory; `identities` may be null.
//! The id file has one id per line; the identity file one token per line
//! (`female_black`, ..., or `none` for an untagged row).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Identity;
use crate::error::{Error, Result};
use crate::io;

const UNTAGGED: &str = "none";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    identities: Option<Vec<Option<Identity>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    rows: usize,
    dim: usize,
    ids: String,
    identities: Option<String>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value in row {}", pos / dim)));
        }
        Ok(EmbeddingMatrix {
            dim,
            data,
            ids,
            identities: None,
        })
    }

    pub fn with_identities(mut self, identities: Vec<Option<Identity>>) -> Result<Self> {
        if identities.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                got: identities.len(),
            });
        }
        self.identities = Some(identities);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn identities(&self) -> Option<&[Option<Identity>]> {
        self.identities.as_deref()
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    fn sidecar_path(data_path: &Path) -> PathBuf {
        let mut s = data_path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes the data file, its sidecar, and the id/identity files next to it.
    pub fn save(&self, data_path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        io::write_bytes(data_path, &bytes)?;
        let stem = data_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "embeddings".into());
        let dir = data_path.parent().unwrap_or(Path::new(""));
        let ids_name = format!("{stem}.ids");
        io::write_bytes(&dir.join(&ids_name), lines(self.ids.iter().map(String::as_str)).as_bytes())?;
        let identities_name = match &self.identities {
            Some(tags) => {
                let name = format!("{stem}.identities");
                let tokens: Vec<String> = tags
                    .iter()
                    .map(|t| t.map_or_else(|| UNTAGGED.to_string(), |i| i.token()))
                    .collect();
                io::write_bytes(&dir.join(&name), lines(tokens.iter().map(String::as_str)).as_bytes())?;
                Some(name)
            }
            None => None,
        };
        let sidecar = Sidecar {
            rows: self.rows(),
            dim: self.dim,
            ids: ids_name,
            identities: identities_name,
        };
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n";
        io::write_bytes(&Self::sidecar_path(data_path), json.as_bytes())
    }

    pub fn load(data_path: &Path) -> Result<Self> {
        let side_path = Self::sidecar_path(data_path);
        let sidecar: Sidecar = serde_json::from_str(&io::read_to_string(&side_path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", side_path.display())))?;
        let bytes = io::read_bytes(data_path)?;
        let want = sidecar.rows * sidecar.dim * 4;
        if bytes.len() != want {
            return Err(Error::Format(format!(
                "{}: expected {want} bytes for {}×{} f32, found {}",
                data_path.display(),
                sidecar.rows,
                sidecar.dim,
                bytes.len()
            )));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let dir = side_path.parent().unwrap_or(Path::new(""));
        let ids: Vec<String> = io::read_to_string(&dir.join(&sidecar.ids))?
            .lines()
            .map(str::to_string)
            .collect();
        if ids.len() != sidecar.rows {
            return Err(Error::Format(format!("{}: expected {} ids, found {}", sidecar.ids, sidecar.rows, ids.len())));
        }
        let m = EmbeddingMatrix::new(sidecar.dim, data, ids)?;
        match sidecar.identities {
            None => Ok(m),
            Some(name) => {
                let path = dir.join(&name);
                let tags = io::read_to_string(&path)?
                    .lines()
                    .enumerate()
                    .map(|(row, t)| {
                        if t.trim() == UNTAGGED {
                            Ok(None)
                        } else {
                            t.trim().parse::<Identity>().map(Some).map_err(|e| Error::Record {
                                source_name: name.clone(),
                                row: row + 1,
                                message: e.to_string(),
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                m.with_identities(tags)
            }
        }
    }
}

fn lines<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items.map(|s| format!("{s}\n")).collect()
}

/// Cosine similarity accumulated in f64; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
