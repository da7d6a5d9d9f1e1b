//! Model checkpoints.
//!
//! Format: magic `MRW1`, little-endian u32 entry count, then per entry a
//! u32 name length, the UTF-8 name, the parameter tensor in the MRT1
//! layout, its Nadam first and second moments as two more MRT1 tensors,
//! and the u64 step count.

use std::path::Path;

use super::tensor::{Param, Tensor};
use super::NnError;
use crate::dsp::store::{read_mrt1_at, write_mrt1, MRT1_MAGIC};

pub const MRW1_MAGIC: &[u8; 4] = b"MRW1";

fn tensor_block(t: &Tensor<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * t.len());
    write_mrt1(&mut buf, t.dims(), t.data()).expect("in-memory write");
    buf
}

/// Serialize named parameters in traversal order.
pub fn encode_checkpoint(entries: &[(String, &Param<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MRW1_MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, param) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&tensor_block(&param.value));
        out.extend_from_slice(&tensor_block(&param.m));
        out.extend_from_slice(&tensor_block(&param.v));
        out.extend_from_slice(&param.t.to_le_bytes());
    }
    out
}

/// One named parameter loaded from a checkpoint.
#[derive(Debug, Clone)]
pub struct CheckpointEntry {
    pub name: String,
    pub value: Tensor<f32>,
    pub m: Tensor<f32>,
    pub v: Tensor<f32>,
    pub t: u64,
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointEntry>, NnError> {
    let bad = |msg: &str| NnError::Checkpoint(msg.to_string());
    if bytes.len() < 8 || &bytes[0..4] != MRW1_MAGIC {
        return Err(bad("missing MRW1 magic"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut pos = 8;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        if bytes.len() < pos + 4 {
            return Err(bad("truncated name length"));
        }
        let name_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() < pos + name_len {
            return Err(bad("truncated name"));
        }
        let name = std::str::from_utf8(&bytes[pos..pos + name_len])
            .map_err(|_| bad("name is not UTF-8"))?
            .to_string();
        pos += name_len;
        let tensor = |pos: &mut usize| -> Result<Tensor<f32>, NnError> {
            if bytes.len() < *pos + 4 || &bytes[*pos..*pos + 4] != MRT1_MAGIC {
                return Err(bad("expected MRT1 tensor"));
            }
            let (dims, cells) = read_mrt1_at(bytes, pos)
                .map_err(|e| NnError::Checkpoint(e.to_string()))?;
            Ok(Tensor::from_vec(&dims, cells))
        };
        let value = tensor(&mut pos)?;
        let m = tensor(&mut pos)?;
        let v = tensor(&mut pos)?;
        if bytes.len() < pos + 8 {
            return Err(bad("truncated step count"));
        }
        let t = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        pos += 8;
        entries.push(CheckpointEntry { name, value, m, v, t });
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    entries: &[(String, &Param<f32>)],
) -> Result<(), NnError> {
    std::fs::write(path, encode_checkpoint(entries))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<CheckpointEntry>, NnError> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_params_and_state() {
        let mut p = Param::new(Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]));
        p.m.data_mut()[1] = 0.5;
        p.v.data_mut()[2] = 0.25;
        p.t = 17;
        let q = Param::new(Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 1.0]));

        let entries = vec![("layer.w".to_string(), &p), ("layer.b".to_string(), &q)];
        let bytes = encode_checkpoint(&entries);
        let decoded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(decoded.len(), 2);
        assert_eq!(decoded[0].name, "layer.w");
        assert_eq!(decoded[0].value.data(), p.value.data());
        assert_eq!(decoded[0].m.data()[1], 0.5);
        assert_eq!(decoded[0].v.data()[2], 0.25);
        assert_eq!(decoded[0].t, 17);
        assert_eq!(decoded[1].name, "layer.b");
        assert_eq!(decoded[1].value.dims(), &[3]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let p = Param::new(Tensor::<f32>::zeros(&[1]));
        let mut bytes = encode_checkpoint(&[("x".to_string(), &p)]);
        bytes[0] = b'Z';
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
