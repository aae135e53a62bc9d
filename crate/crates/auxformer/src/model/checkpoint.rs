//! Flat binary parameter container.
//!
//! Layout: the magic string "AUXF1", then for each named parameter: name
//! length (u32 LE), UTF-8 name, rank (u32 LE), extents (u32 LE each), payload
//! (f64 LE). Parameters are written in canonical visiting order; readers
//! accept any order but require exactly the canonical name set.

use super::params::{Affine, AttnBlock, AttnUnit, Layer, ModelParams, Params};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::numerics::Tensor;
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"AUXF1";

/// Hard cap on a single tensor's element count when reading; anything larger
/// is treated as a corrupt header rather than an allocation request.
const MAX_ELEMENTS: u64 = 1 << 31;

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    params.visit(|name, tensor| {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &e in tensor.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    });
    write_atomic(path, &buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedPayload {
                path: self.path.clone(),
                expected: (self.pos + n) as u64,
                got: self.bytes.len() as u64,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }
}

fn read_entries(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = std::fs::read(path)?;
    let path_str = path.display().to_string();
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..5] != CHECKPOINT_MAGIC {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: "missing AUXF1 magic".into(),
        });
    }
    let mut r = Reader {
        bytes: &bytes,
        pos: 5,
        path: path_str.clone(),
    };
    let mut entries = BTreeMap::new();
    while r.pos < r.bytes.len() {
        let name_len = r.u32()? as usize;
        if name_len == 0 || name_len > 4096 {
            return Err(Error::MalformedHeader {
                path: path_str,
                reason: format!("implausible name length {name_len}"),
            });
        }
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::MalformedHeader {
                path: path_str.clone(),
                reason: "parameter name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::MalformedHeader {
                path: path_str,
                reason: format!("implausible rank {rank} for {name}"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let e = r.u32()? as u64;
            numel = numel.saturating_mul(e);
            shape.push(e as usize);
        }
        if numel > MAX_ELEMENTS {
            return Err(Error::DimensionOverflow {
                path: path_str,
                reason: format!("{name} declares {numel} elements"),
            });
        }
        let data = r.f64_vec(numel as usize)?;
        if entries
            .insert(name.clone(), Tensor::new(shape, data)?)
            .is_some()
        {
            return Err(Error::Checkpoint {
                path: path_str,
                reason: format!("duplicate parameter {name}"),
            });
        }
    }
    Ok(entries)
}

fn take_tensor(
    entries: &mut BTreeMap<String, Tensor>,
    name: &str,
    shape: &[usize],
    path: &str,
) -> Result<Tensor> {
    let t = entries.remove(name).ok_or_else(|| Error::Checkpoint {
        path: path.to_string(),
        reason: format!("missing parameter {name}"),
    })?;
    if t.shape() != shape {
        return Err(Error::Checkpoint {
            path: path.to_string(),
            reason: format!(
                "{name}: expected shape {:?}, found {:?}",
                shape,
                t.shape()
            ),
        });
    }
    Ok(t)
}

fn take_affine(
    entries: &mut BTreeMap<String, Tensor>,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    path: &str,
) -> Result<Affine<Tensor>> {
    Ok(Affine {
        weight: take_tensor(entries, &format!("{prefix}.w"), &[fan_in, fan_out], path)?,
        bias: take_tensor(entries, &format!("{prefix}.b"), &[fan_out], path)?,
    })
}

fn take_unit(
    entries: &mut BTreeMap<String, Tensor>,
    prefix: &str,
    feat: usize,
    path: &str,
) -> Result<AttnUnit<Tensor>> {
    Ok(AttnUnit {
        query: take_affine(entries, &format!("{prefix}.q"), feat, feat, path)?,
        key: take_affine(entries, &format!("{prefix}.k"), feat, feat, path)?,
        value: take_affine(entries, &format!("{prefix}.v"), feat, feat, path)?,
        ffn1: take_affine(entries, &format!("{prefix}.ffn1"), feat, 2 * feat, path)?,
        ffn2: take_affine(entries, &format!("{prefix}.ffn2"), 2 * feat, feat, path)?,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut entries = read_entries(path)?;
    let path_str = path.display().to_string();

    let encoder_w = entries.get("encoder.w").ok_or_else(|| Error::Checkpoint {
        path: path_str.clone(),
        reason: "missing parameter encoder.w".into(),
    })?;
    if encoder_w.rank() != 2 || encoder_w.shape()[0] != 3 {
        return Err(Error::Checkpoint {
            path: path_str,
            reason: format!("encoder.w has shape {:?}", encoder_w.shape()),
        });
    }
    let feat = encoder_w.shape()[1];

    let joints = entries
        .get("dict.joint")
        .map(|t| t.shape().first().copied().unwrap_or(0))
        .ok_or_else(|| Error::Checkpoint {
            path: path_str.clone(),
            reason: "missing parameter dict.joint".into(),
        })?;
    let t_total = entries
        .get("dict.time")
        .map(|t| t.shape().first().copied().unwrap_or(0))
        .ok_or_else(|| Error::Checkpoint {
            path: path_str.clone(),
            reason: "missing parameter dict.time".into(),
        })?;

    let mut layer_count = 0;
    while entries.contains_key(&format!("layer{}.osta.spatial.q.w", layer_count + 1)) {
        layer_count += 1;
    }
    if layer_count == 0 {
        return Err(Error::Checkpoint {
            path: path_str,
            reason: "no attention layers found".into(),
        });
    }

    let encoder = take_affine(&mut entries, "encoder", 3, feat, &path_str)?;
    let joint_dict = take_tensor(&mut entries, "dict.joint", &[joints, feat], &path_str)?;
    let time_dict = take_tensor(&mut entries, "dict.time", &[t_total, feat], &path_str)?;
    let masked_token = take_tensor(&mut entries, "token.masked", &[feat], &path_str)?;
    let mut layers = Vec::with_capacity(layer_count);
    for l in 1..=layer_count {
        layers.push(Layer {
            osta: AttnBlock {
                spatial: take_unit(&mut entries, &format!("layer{l}.osta.spatial"), feat, &path_str)?,
                temporal: take_unit(
                    &mut entries,
                    &format!("layer{l}.osta.temporal"),
                    feat,
                    &path_str,
                )?,
            },
            fsta: AttnBlock {
                spatial: take_unit(&mut entries, &format!("layer{l}.fsta.spatial"), feat, &path_str)?,
                temporal: take_unit(
                    &mut entries,
                    &format!("layer{l}.fsta.temporal"),
                    feat,
                    &path_str,
                )?,
            },
        });
    }
    let head_pred = take_affine(&mut entries, "head.pred", feat, 3, &path_str)?;
    let head_mask = take_affine(&mut entries, "head.mask", feat, 3, &path_str)?;
    let head_denoise = take_affine(&mut entries, "head.denoise", feat, 3, &path_str)?;

    if let Some(name) = entries.keys().next() {
        return Err(Error::Checkpoint {
            path: path_str,
            reason: format!("unknown parameter {name}"),
        });
    }

    Ok(Params {
        encoder,
        joint_dict,
        time_dict,
        masked_token,
        layers,
        head_pred,
        head_mask,
        head_denoise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::tiny_hyper;

    fn roundtrip_dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise_lossless() {
        let dir = roundtrip_dir();
        let path = dir.path().join("model.ckpt");
        let params = ModelParams::init(5, 3, &tiny_hyper(), 42).unwrap();
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let mut originals = Vec::new();
        params.visit(|name, t| originals.push((name, t.clone())));
        let mut reloaded = Vec::new();
        loaded.visit(|name, t| reloaded.push((name, t.clone())));
        assert_eq!(originals.len(), reloaded.len());
        for ((n1, t1), (n2, t2)) in originals.iter().zip(&reloaded) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            assert_eq!(t1.data(), t2.data());
        }
    }

    #[test]
    fn empty_file_is_a_header_error() {
        let dir = roundtrip_dir();
        let path = dir.path().join("empty.ckpt");
        std::fs::write(&path, b"").unwrap();
        match load_checkpoint(&path) {
            Err(Error::MalformedHeader { .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_truncation_error() {
        let dir = roundtrip_dir();
        let path = dir.path().join("model.ckpt");
        let params = ModelParams::init(4, 2, &tiny_hyper(), 1).unwrap();
        save_checkpoint(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::TruncatedPayload { .. }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn absurd_extents_are_an_overflow_error() {
        let dir = roundtrip_dir();
        let path = dir.path().join("model.ckpt");
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let name = b"encoder.w";
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&path, &buf).unwrap();
        match load_checkpoint(&path) {
            Err(Error::DimensionOverflow { .. }) => {}
            other => panic!("expected overflow error, got {other:?}"),
        }
    }

    #[test]
    fn missing_parameter_is_reported_by_name() {
        let dir = roundtrip_dir();
        let path = dir.path().join("model.ckpt");
        let params = ModelParams::init(4, 2, &tiny_hyper(), 1).unwrap();
        save_checkpoint(&path, &params).unwrap();

        // rewrite the file without the head.denoise.b entry
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        params.visit(|name, tensor| {
            if name == "head.denoise.b" {
                return;
            }
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &e in tensor.shape() {
                buf.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        });
        std::fs::write(&path, &buf).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("head.denoise.b"), "{err}");
    }
}
