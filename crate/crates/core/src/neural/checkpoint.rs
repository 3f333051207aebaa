//! Versioned binary checkpoints plus a human-readable manifest.
//!
//! Layout: magic, format version (u32 LE), vocabulary hash (u64 LE),
//! record count (u32 LE), then per parameter: name (u32 length + UTF-8),
//! shape (u32 rank + u32 dims), values as f32 LE.

use super::tensor::Tensor;
use super::NeuralError;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SEMRLCK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub version: u32,
    pub vocab_hash: u64,
}

fn named(p: &Tensor) -> Result<&str, NeuralError> {
    p.name()
        .ok_or_else(|| NeuralError::Checkpoint("unnamed parameter cannot be checkpointed".into()))
}

pub fn save_checkpoint(path: &Path, params: &[Tensor], vocab_hash: u64) -> Result<(), NeuralError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&vocab_hash.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = named(p)?;
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(p.shape().len() as u32).to_le_bytes())?;
        for &d in p.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in p.data().iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, NeuralError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Load values into `params`, matched by name. Every stored record must
/// find a parameter of identical shape, and every parameter must be filled.
pub fn load_checkpoint(path: &Path, params: &[Tensor]) -> Result<CheckpointMeta, NeuralError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let mut hash_bytes = [0u8; 8];
    r.read_exact(&mut hash_bytes)?;
    let vocab_hash = u64::from_le_bytes(hash_bytes);
    let count = read_u32(&mut r)? as usize;
    let mut filled = vec![false; params.len()];
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| NeuralError::Checkpoint("non-UTF-8 parameter name".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f32::from_le_bytes(b) as f64);
        }
        let idx = params
            .iter()
            .position(|p| p.name() == Some(name.as_str()))
            .ok_or_else(|| NeuralError::Checkpoint(format!("unknown parameter `{name}`")))?;
        if params[idx].shape() != shape.as_slice() {
            return Err(NeuralError::Checkpoint(format!(
                "shape mismatch for `{name}`: stored {:?}, model {:?}",
                shape,
                params[idx].shape()
            )));
        }
        if filled[idx] {
            return Err(NeuralError::Checkpoint(format!("duplicate record `{name}`")));
        }
        params[idx].set_data(&data);
        filled[idx] = true;
    }
    if let Some(i) = filled.iter().position(|&f| !f) {
        return Err(NeuralError::Checkpoint(format!(
            "checkpoint missing parameter `{}`",
            params[i].name().unwrap_or("<unnamed>")
        )));
    }
    Ok(CheckpointMeta { version, vocab_hash })
}

/// Plain-text sidecar: one line per parameter plus a total.
pub fn write_manifest(path: &Path, params: &[Tensor]) -> Result<(), NeuralError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut total = 0usize;
    for p in params {
        let name = named(p)?;
        writeln!(w, "{name}\t{:?}\t{}", p.shape(), p.len())?;
        total += p.len();
    }
    writeln!(w, "total\t{total}")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn roundtrip_preserves_values_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::param("layer.w", &[2, 3], vec![0.1, -0.2, 0.3, 1.5, -2.5, 0.0]);
        let b = Tensor::param("layer.b", &[3], vec![1.0, 2.0, 3.0]);
        save_checkpoint(&path, &[a.clone(), b.clone()], 0xDEAD_BEEF).unwrap();

        let a2 = Tensor::param("layer.w", &[2, 3], vec![0.0; 6]);
        let b2 = Tensor::param("layer.b", &[3], vec![0.0; 3]);
        let meta = load_checkpoint(&path, &[a2.clone(), b2.clone()]).unwrap();
        assert_eq!(meta, CheckpointMeta { version: FORMAT_VERSION, vocab_hash: 0xDEAD_BEEF });
        for (x, y) in a.data().iter().zip(a2.data().iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
        assert_eq!(*b2.data(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_and_missing_param_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::param("w", &[2], vec![1.0, 2.0]);
        save_checkpoint(&path, &[a], 0).unwrap();

        let wrong_shape = Tensor::param("w", &[3], vec![0.0; 3]);
        assert!(load_checkpoint(&path, &[wrong_shape]).is_err());

        let w = Tensor::param("w", &[2], vec![0.0; 2]);
        let extra = Tensor::param("missing", &[1], vec![0.0]);
        assert!(load_checkpoint(&path, &[w, extra]).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPT????????").unwrap();
        let w = Tensor::param("w", &[1], vec![0.0]);
        let err = load_checkpoint(&path, &[w]).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn manifest_lists_totals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let a = Tensor::param("w", &[2, 2], vec![0.0; 4]);
        let b = Tensor::param("b", &[2], vec![0.0; 2]);
        write_manifest(&path, &[a, b]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("w\t[2, 2]\t4"));
        assert!(text.contains("total\t6"));
    }
}
