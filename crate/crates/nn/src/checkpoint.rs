//! Parameter checkpoint files: a JSON manifest of named shapes followed
//! by little-endian 32-bit float payloads in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::tensor::NnError;

const MAGIC: &[u8; 4] = b"SKNM";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    meta: Value,
    params: Vec<ManifestEntry>,
}

/// Writes named parameter tensors plus free-form metadata.
pub fn save(
    path: &Path,
    entries: &[(String, Vec<f64>)],
    meta: &Value,
) -> Result<(), NnError> {
    let manifest = Manifest {
        meta: meta.clone(),
        params: entries
            .iter()
            .map(|(name, values)| ManifestEntry {
                name: name.clone(),
                len: values.len() as u64,
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for (_, values) in entries {
        for &v in values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back as (name, values) pairs and the stored
/// metadata. Values round-trip through 32-bit floats.
pub fn load(path: &Path) -> Result<(Vec<(String, Vec<f64>)>, Value), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NnError::BadCheckpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(NnError::BadCheckpoint(format!(
            "bad magic {:?}; not a model checkpoint",
            magic
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| NnError::BadCheckpoint("truncated version field".into()))?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(NnError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)
        .map_err(|_| NnError::BadCheckpoint("truncated manifest length".into()))?;
    let mlen = u64::from_le_bytes(buf8) as usize;
    let mut mbytes = vec![0u8; mlen];
    r.read_exact(&mut mbytes)
        .map_err(|_| NnError::BadCheckpoint("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&mbytes)?;
    let mut entries = Vec::with_capacity(manifest.params.len());
    for e in &manifest.params {
        let mut values = Vec::with_capacity(e.len as usize);
        for _ in 0..e.len {
            r.read_exact(&mut buf4).map_err(|_| {
                NnError::BadCheckpoint(format!("truncated payload for '{}'", e.name))
            })?;
            values.push(f32::from_le_bytes(buf4) as f64);
        }
        entries.push((e.name.clone(), values));
    }
    Ok((entries, manifest.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_preserves_f32_exact_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        // Values chosen to be exactly representable in f32.
        let entries = vec![
            ("enc.w".to_string(), vec![0.5, -0.25, 3.0]),
            ("enc.b".to_string(), vec![1.0]),
        ];
        let meta = json!({"epochs": 7, "norm": {"mean": 0.125, "std": 2.0}});
        save(&path, &entries, &meta).unwrap();
        let (back, meta_back) = load(&path).unwrap();
        assert_eq!(back, entries);
        assert_eq!(meta_back, meta);
    }

    #[test]
    fn arbitrary_f64_values_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let values = vec![0.1234567890123, -9.87654321e-3];
        save(&path, &[("w".into(), values.clone())], &Value::Null).unwrap();
        let (back, _) = load(&path).unwrap();
        for (a, b) in back[0].1.iter().zip(&values) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn foreign_and_truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, b"RIFF....").unwrap();
        assert!(matches!(load(&path), Err(NnError::BadCheckpoint(_))));

        let good = dir.path().join("good.ckpt");
        save(&good, &[("w".into(), vec![1.0; 10])], &Value::Null).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 6]).unwrap();
        match load(&cut) {
            Err(NnError::BadCheckpoint(msg)) => assert!(msg.contains("truncated")),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }
}
