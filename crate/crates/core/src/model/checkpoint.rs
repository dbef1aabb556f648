//! Binary model checkpoints.
//!
//! ```text
//! LLCGMODEL 1\n
//! <arch>\n            e.g. "G,G"
//! <dims>\n            space separated, e.g. "16 32 4"
//! f64 little-endian   every matrix row-major, in layer order
//! ```

use std::path::Path;

use ndarray::Array2;

use super::{Arch, Model};
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"LLCGMODEL 1\n";

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 64 + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(model.arch().to_string().as_bytes());
    out.push(b'\n');
    let dims: Vec<String> = model.dims().iter().map(|d| d.to_string()).collect();
    out.extend_from_slice(dims.join(" ").as_bytes());
    out.push(b'\n');
    for w in model.weights() {
        for x in w.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn take_line<'a>(bytes: &'a [u8], what: &str) -> Result<(&'a str, &'a [u8])> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format(format!("missing {what} line")))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format(format!("{what} line is not UTF-8")))?;
    Ok((line, &bytes[end + 1..]))
}

/// Decodes a checkpoint. Never panics on malformed input.
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format("missing `LLCGMODEL 1` header".into()))?;
    let (arch, rest) = take_line(rest, "arch")?;
    let arch: Arch = arch.parse()?;
    let (dims, mut rest) = take_line(rest, "dims")?;
    let dims = dims
        .split_ascii_whitespace()
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::Format(format!("invalid dim `{d}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != arch.len() + 1 || dims.contains(&0) {
        return Err(Error::Format(format!("dims {dims:?} do not fit arch {arch}")));
    }

    let mut shapes = Vec::new();
    let mut total: usize = 0;
    for (l, kind) in arch.layers().iter().enumerate() {
        let size = dims[l]
            .checked_mul(dims[l + 1])
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        for _ in 0..kind.matrices() {
            shapes.push((dims[l], dims[l + 1]));
            total = total
                .checked_add(size)
                .ok_or_else(|| Error::Format("parameter count overflows".into()))?;
        }
    }
    let expected = total
        .checked_mul(8)
        .ok_or_else(|| Error::Format("parameter count overflows".into()))?;
    if rest.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} parameter bytes, found {}",
            rest.len()
        )));
    }

    let mut weights = Vec::with_capacity(shapes.len());
    for (r, c) in shapes {
        let (chunk, tail) = rest.split_at(r * c * 8);
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        weights.push(Array2::from_shape_vec((r, c), values).map_err(|e| Error::Format(e.to_string()))?);
        rest = tail;
    }
    Model::from_weights(arch, dims, weights)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    decode_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::init("G,S,L".parse().unwrap(), vec![5, 4, 3, 2], 7).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let m = model();
        assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_model(&model());
        assert!(bytes.starts_with(b"LLCGMODEL 1\nG,S,L\n5 4 3 2\n"));
        assert_eq!(bytes.len(), 26 + model().param_count() * 8);
    }

    #[test]
    fn truncated_and_corrupt_inputs_fail() {
        let bytes = encode_model(&model());
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_model(&bytes[..5]).is_err());
        assert!(decode_model(b"LLCGMODEL 2\nG\n1 1\n").is_err());
        assert!(decode_model(b"LLCGMODEL 1\nG\n18446744073709551615 18446744073709551615\n").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model(), &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model());
    }
}
