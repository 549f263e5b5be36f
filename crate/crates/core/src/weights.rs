//! The learned weight vector and its binary file format.
//!
//! Layout of a weights file (all integers and floats little-endian):
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 4     | magic `JSWT`                             |
//! | 4     | format version (u32, currently 1)        |
//! | 32    | SHA-256 of the model's canonical form    |
//! | 8     | dimension D (u64)                        |
//! | 8     | layout checksum (u64)                    |
//! | 8·D   | weights (f64)                            |

use std::fs;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use thiserror::Error;

use crate::model::{BlockId, ModelSpec};

const MAGIC: &[u8; 4] = b"JSWT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32 + 8 + 8;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed weights file: {0}")]
    Format(String),
    #[error("weights were trained for a different model")]
    ModelMismatch,
    #[error("weight {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        WeightVector(vec![0.0; spec.dim()])
    }

    pub fn block(&self, spec: &ModelSpec, id: BlockId) -> &[f64] {
        &self.0[spec.layout.range(id)]
    }

    pub fn block_mut(&mut self, spec: &ModelSpec, id: BlockId) -> &mut [f64] {
        let r = spec.layout.range(id);
        &mut self.0[r]
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn check_finite(&self) -> Result<(), WeightsError> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(WeightsError::NonFinite {
                index,
                value: self.0[index],
            }),
            None => Ok(()),
        }
    }

    pub fn to_bytes(&self, spec: &ModelSpec) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.0.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&spec.hash_bytes());
        out.extend_from_slice(&(self.0.len() as u64).to_le_bytes());
        out.extend_from_slice(&spec.layout.checksum().to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a weights file, checking it belongs to `spec` and holds only
    /// finite values.
    pub fn from_bytes(bytes: &[u8], spec: &ModelSpec) -> Result<Self, WeightsError> {
        if bytes.len() < HEADER_LEN {
            return Err(WeightsError::Format("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(WeightsError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(WeightsError::Format(format!("unsupported version {version}")));
        }
        if bytes[8..40] != spec.hash_bytes() {
            return Err(WeightsError::ModelMismatch);
        }
        let dim = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
        let checksum = u64::from_le_bytes(bytes[48..56].try_into().unwrap());
        if dim != spec.dim() || checksum != spec.layout.checksum() {
            return Err(WeightsError::ModelMismatch);
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * dim {
            return Err(WeightsError::Format(format!(
                "expected {} weight bytes, found {}",
                8 * dim,
                body.len()
            )));
        }
        let w = WeightVector(
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
        w.check_finite()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path, spec: &ModelSpec) -> Result<(), WeightsError> {
        fs::write(path, self.to_bytes(spec)).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path, spec: &ModelSpec) -> Result<Self, WeightsError> {
        let bytes = fs::read(path).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes, spec)
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for WeightVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let spec = ModelSpec::default_model(3, 4, [2, 2, 2, 2, 2]);
        let w = WeightVector((0..spec.dim()).map(|i| (i as f64).sin() * 1e-3).collect());
        let bytes = w.to_bytes(&spec);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * spec.dim());
        assert_eq!(WeightVector::from_bytes(&bytes, &spec).unwrap(), w);
    }

    #[test]
    fn rejects_nan_and_foreign_model() {
        let spec = ModelSpec::default_model(3, 4, [2, 2, 2, 2, 2]);
        let mut w = WeightVector::zeros(&spec);
        w[5] = f64::NAN;
        let err = WeightVector::from_bytes(&w.to_bytes(&spec), &spec).unwrap_err();
        assert!(matches!(err, WeightsError::NonFinite { index: 5, .. }));

        let other = ModelSpec::default_model(4, 4, [2, 2, 2, 2, 2]);
        let z = WeightVector::zeros(&spec);
        assert!(matches!(
            WeightVector::from_bytes(&z.to_bytes(&spec), &other),
            Err(WeightsError::ModelMismatch)
        ));
    }
}
