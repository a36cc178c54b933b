//! Named tensor containers: a directory of CBT1 files plus `manifest.json`.

use crate::tensor::{load_cbt1, save_cbt1, Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("weights directory {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("missing tensor role `{0}`")]
    Missing(String),
    #[error("tensor `{role}` has shape {actual:?}, expected {expected:?}")]
    Dims {
        role: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    role: String,
    file: String,
    dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    tensors: Vec<ManifestEntry>,
}

/// Ordered map from role name to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    pub kind: String,
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, role: impl Into<String>, t: Tensor) {
        self.tensors.insert(role.into(), t);
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn take(&mut self, role: &str, dims: &[usize]) -> Result<Tensor, WeightsError> {
        let t = self
            .tensors
            .remove(role)
            .ok_or_else(|| WeightsError::Missing(role.to_string()))?;
        if t.shape() != dims {
            return Err(WeightsError::Dims {
                role: role.to_string(),
                expected: dims.to_vec(),
                actual: t.shape().to_vec(),
            });
        }
        Ok(t)
    }

    /// Shape of a stored role without removing it.
    pub fn dims(&self, role: &str) -> Result<&[usize], WeightsError> {
        self.tensors
            .get(role)
            .map(|t| t.shape())
            .ok_or_else(|| WeightsError::Missing(role.to_string()))
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), WeightsError> {
        let dir = dir.as_ref();
        let io = |source| WeightsError::Io {
            path: dir.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut entries = Vec::new();
        for (role, t) in &self.tensors {
            let file = format!("{role}.cbt1");
            save_cbt1(dir.join(&file), t)?;
            entries.push(ManifestEntry {
                role: role.clone(),
                file,
                dims: t.shape().to_vec(),
            });
        }
        let manifest = Manifest {
            kind: self.kind.clone(),
            tensors: entries,
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(dir.join(MANIFEST), json + "\n").map_err(io)?;
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, WeightsError> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join(MANIFEST)).map_err(|source| WeightsError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut store = WeightStore::new(manifest.kind);
        for e in manifest.tensors {
            let t = load_cbt1(dir.join(&e.file))?;
            if t.shape() != e.dims.as_slice() {
                return Err(WeightsError::Dims {
                    role: e.role,
                    expected: e.dims,
                    actual: t.shape().to_vec(),
                });
            }
            store.insert(e.role, t);
        }
        Ok(store)
    }
}

/// Tensor with i.i.d. `U(-bound, bound)` entries drawn in row-major order.
pub fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], bound: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Bound used for seeded toy weights.
pub const TOY_WEIGHT_BOUND: f32 = 0.1;
