//! `TNN1` weights files.
//!
//! Layout, all integers `u32` little-endian and all floats `f32`
//! little-endian:
//!
//! ```text
//! "TNN1" | layer count | per layer: rows | cols | weights (rows*cols, row-major) | bias (rows)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{ModelsError, Result};
use crate::tiny::{Dense, TinyClassifier};

pub const MAGIC: &[u8; 4] = b"TNN1";

pub fn write_weights<W: Write>(model: &TinyClassifier, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    for layer in model.layers() {
        w.write_all(&(layer.rows as u32).to_le_bytes())?;
        w.write_all(&(layer.cols as u32).to_le_bytes())?;
        for v in layer.weights.iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(model: &TinyClassifier) -> Vec<u8> {
    let mut buf = Vec::new();
    write_weights(model, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(ModelsError::Format("truncated file".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<usize> {
    let b = take(bytes, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
}

fn take_f32s(bytes: &mut &[u8], n: usize) -> Result<Vec<f32>> {
    let len = n.checked_mul(4).ok_or_else(|| ModelsError::Format("layer too large".into()))?;
    Ok(take(bytes, len)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<TinyClassifier> {
    if take(&mut bytes, 4)? != MAGIC {
        return Err(ModelsError::Format("bad magic".into()));
    }
    let count = take_u32(&mut bytes)?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rows = take_u32(&mut bytes)?;
        let cols = take_u32(&mut bytes)?;
        let weights = take_f32s(
            &mut bytes,
            rows.checked_mul(cols).ok_or_else(|| ModelsError::Format("layer too large".into()))?,
        )?;
        let bias = take_f32s(&mut bytes, rows)?;
        layers.push(Dense { rows, cols, weights, bias });
    }
    if !bytes.is_empty() {
        return Err(ModelsError::Format(format!("{} trailing bytes", bytes.len())));
    }
    TinyClassifier::new(layers)
}

pub fn read_weights<R: Read>(mut r: R) -> Result<TinyClassifier> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn save(model: &TinyClassifier, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TinyClassifier> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_layout() {
        let model = TinyClassifier::new(vec![Dense {
            rows: 1,
            cols: 2,
            weights: vec![1.0, -2.0],
            bias: vec![0.5],
        }])
        .unwrap();
        let bytes = to_bytes(&model);
        let mut expected = b"TNN1".to_vec();
        for v in [1u32, 1, 2] {
            expected.extend(v.to_le_bytes());
        }
        for v in [1.0f32, -2.0, 0.5] {
            expected.extend(v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
        assert_eq!(from_bytes(&bytes).unwrap(), model);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bytes = to_bytes(&TinyClassifier::random(6, 3, 2, &mut rng));
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[3] = b'2';
        assert!(from_bytes(&magic).is_err());
    }
}
