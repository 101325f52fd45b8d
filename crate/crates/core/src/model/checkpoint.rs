//! Binary checkpoints: an `COLOG1` magic, a little-endian `u64` manifest
//! length, a JSON manifest, then every tensor as little-endian `f32`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::Model;
use super::params::Parameters;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"COLOG1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Offset in values from the start of the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in model.params.named() {
        tensors.push(TensorEntry {
            name,
            shape: [t.rows, t.cols],
            offset,
        });
        offset += t.len();
    }
    let manifest = Manifest {
        config: model.config.clone(),
        dtype: "f32".into(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + offset * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.named() {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let bad = |m: &str| Error::data(format!("checkpoint: {m}"));
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut len = [0u8; 8];
    len.copy_from_slice(&bytes[6..14]);
    let len = u64::from_le_bytes(len) as usize;
    let json = bytes.get(14..14 + len).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| bad(&format!("manifest: {e}")))?;
    if manifest.dtype != "f32" {
        return Err(bad(&format!("unsupported dtype {}", manifest.dtype)));
    }
    manifest.config.validate()?;
    let data = &bytes[14 + len..];
    let mut params = Parameters::init_shapes(&manifest.config);
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    if names.len() != manifest.tensors.len() {
        return Err(bad("tensor count does not match the configuration"));
    }
    for ((t, name), entry) in params.tensors_mut().into_iter().zip(&names).zip(&manifest.tensors) {
        if &entry.name != name || entry.shape != [t.rows, t.cols] {
            return Err(bad(&format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
        }
        let start = entry.offset * 4;
        let raw = data
            .get(start..start + t.len() * 4)
            .ok_or_else(|| bad("truncated data"))?;
        for (v, chunk) in t.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
    }
    if let Some(name) = params.first_non_finite() {
        return Err(Error::numerical(format!("checkpoint tensor {name} is not finite")));
    }
    Model::from_parts(manifest.config, params)
}

/// Round every parameter to the on-disk precision.
pub fn quantize(model: &mut Model) {
    for t in model.params.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Load a checkpoint and refuse it if its configuration differs from
/// `expected`.
pub fn load_checkpoint_matching(path: &Path, expected: &ModelConfig) -> Result<Model> {
    let model = load_checkpoint(path)?;
    let diff = model.config.diff(expected);
    if !diff.is_empty() {
        return Err(Error::config(format!(
            "{} was trained with a different model configuration (checkpoint vs requested): {}",
            path.display(),
            diff.join(", ")
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            d_word: 4,
            d_event: 3,
            hidden: 4,
            heads: 2,
            layers: 1,
            ffn_inner: 8,
            latent: 6,
            l_sem: 3,
            l_seq: 2,
            vocab_size: 5,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::new(tiny()).unwrap();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        let mut q = m.clone();
        quantize(&mut q);
        assert_eq!(back, q);
        assert_eq!(from_bytes(&to_bytes(&back)).unwrap(), back);
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::new(tiny()).unwrap();
        let mut bytes = to_bytes(&m);
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());
        let bytes = to_bytes(&m);
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn refuses_mismatched_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&Model::new(tiny()).unwrap(), &path).unwrap();
        let mut other = tiny();
        other.hidden = 8;
        let err = load_checkpoint_matching(&path, &other).unwrap_err().to_string();
        assert!(err.contains("hidden"), "{err}");
        assert!(load_checkpoint_matching(&path, &tiny()).is_ok());
    }
}
