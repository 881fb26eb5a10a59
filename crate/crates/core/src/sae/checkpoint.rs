use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::SaeParams;
use crate::error::{Error, Result};
use crate::store::{load_matrix, save_matrix};

pub const ENC_WEIGHT_FILE: &str = "enc_weight.bin";
pub const DICTIONARY_FILE: &str = "dictionary.bin";
pub const ENC_BIAS_FILE: &str = "enc_bias.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub c: usize,
    pub d: usize,
    pub k: usize,
    pub alpha: f64,
    pub step: usize,
    pub seed: u64,
}

fn to_f32(values: impl Iterator<Item = f64>) -> Vec<f32> {
    values.map(|v| v as f32).collect()
}

/// Writes each parameter tensor as a float32 container plus `manifest.json`.
pub fn save_checkpoint(dir: &Path, params: &SaeParams, alpha: f64, step: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let d = params.input_dim();
    save_matrix(&dir.join(ENC_WEIGHT_FILE), d, &to_f32(params.enc_weight().iter().copied()))?;
    save_matrix(&dir.join(DICTIONARY_FILE), d, &to_f32(params.dictionary().iter().copied()))?;
    save_matrix(&dir.join(ENC_BIAS_FILE), params.width(), &to_f32(params.enc_bias().iter().copied()))?;
    let manifest = CheckpointManifest { c: params.width(), d, k: params.k(), alpha, step, seed };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(SaeParams, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let (c, d) = (manifest.c, manifest.d);
    let load = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
        let (h, data) = load_matrix(&dir.join(name))?;
        if h.dim != cols || h.count != rows {
            return Err(Error::Consistency(format!("{name} is {}x{}, manifest says {rows}x{cols}", h.count, h.dim)));
        }
        Ok(data.into_iter().map(f64::from).collect())
    };
    let enc = Array2::from_shape_vec((c, d), load(ENC_WEIGHT_FILE, c, d)?).map_err(|e| Error::shape(e.to_string()))?;
    let dict = Array2::from_shape_vec((c, d), load(DICTIONARY_FILE, c, d)?).map_err(|e| Error::shape(e.to_string()))?;
    let bias = Array1::from_vec(load(ENC_BIAS_FILE, 1, c)?);
    Ok((SaeParams::new(enc, dict, bias, manifest.k)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let params = SaeParams::init(9, 4, 3, 2).unwrap();
        save_checkpoint(dir.path(), &params, 0.0, 17, 2).unwrap();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest, CheckpointManifest { c: 9, d: 4, k: 3, alpha: 0.0, step: 17, seed: 2 });
        for (a, b) in back.dictionary().iter().zip(params.dictionary().iter()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        // A second save of the loaded params is byte-identical.
        let dir2 = tempfile::tempdir().unwrap();
        save_checkpoint(dir2.path(), &back, 0.0, 17, 2).unwrap();
        for f in [ENC_WEIGHT_FILE, DICTIONARY_FILE, ENC_BIAS_FILE, MANIFEST_FILE] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(dir2.path().join(f)).unwrap());
        }
    }

    #[test]
    fn manifest_keys() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &SaeParams::init(2, 2, 1, 0).unwrap(), 0.5, 1, 3).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["alpha", "c", "d", "k", "seed", "step"]);
    }
}
