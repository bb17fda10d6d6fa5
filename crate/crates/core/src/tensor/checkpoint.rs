//! Parameter checkpoint: a single JSON manifest line (name, shape,
//! byte offset into the payload) followed by a little-endian 32-bit
//! float payload. Round-trips bit-exactly.

use super::TensorError;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

const MAGIC: &str = "QTCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    magic: String,
    #[serde(default)]
    config: Option<serde_json::Value>,
    tensors: Vec<ManifestEntry>,
}

/// An on-disk parameter set plus an optional config echo.
#[derive(Debug)]
pub struct Checkpoint {
    pub config: Option<serde_json::Value>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }
}

pub fn save_tensors(
    path: &Path,
    tensors: &[(String, Vec<usize>, Vec<f32>)],
    config: Option<serde_json::Value>,
) -> Result<(), TensorError> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, shape, data) in tensors {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::InvalidShape { shape: shape.clone(), len: data.len() });
        }
        entries.push(ManifestEntry { name: name.clone(), shape: shape.clone(), offset });
        offset += (data.len() * 4) as u64;
    }
    let manifest = Manifest { magic: MAGIC.to_string(), config, tensors: entries };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &manifest).map_err(|e| TensorError::Format(e.to_string()))?;
    f.write_all(b"\n")?;
    for (_, _, data) in tensors {
        for v in data {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Checkpoint, TensorError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let manifest: Manifest =
        serde_json::from_str(header.trim_end()).map_err(|e| TensorError::Format(e.to_string()))?;
    if manifest.magic != MAGIC {
        return Err(TensorError::Format(format!("bad magic {:?}", manifest.magic)));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * 4;
        if end > payload.len() {
            return Err(TensorError::Format(format!("payload too short for {}", e.name)));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((e.name.clone(), e.shape.clone(), data));
    }
    Ok(Checkpoint { config: manifest.config, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let tensors = vec![
            ("w".to_string(), vec![2, 2], vec![1.0f32, -0.0, f32::MIN_POSITIVE, 3.25e-7]),
            ("b".to_string(), vec![3], vec![0.1, 0.2, 0.3]),
        ];
        save_tensors(&path, &tensors, Some(serde_json::json!({"k": 1}))).unwrap();
        let loaded = load_tensors(&path).unwrap();
        assert_eq!(loaded.config, Some(serde_json::json!({"k": 1})));
        for ((n0, s0, d0), (n1, s1, d1)) in tensors.iter().zip(loaded.tensors.iter()) {
            assert_eq!(n0, n1);
            assert_eq!(s0, s1);
            assert_eq!(
                d0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                d1.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
