//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `HSCPP1`, u64 config hash, then for each
//! tensor: u32 name length, UTF-8 name, u32 rank, u32 dims, f32 data.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::model::{ConditionedNet, NetConfig, NetError};

const MAGIC: &[u8; 6] = b"HSCPP1";

/// First eight bytes of SHA-256, read as little-endian u64.
pub fn config_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn write_checkpoint<W: Write>(
    net: &ConditionedNet,
    hash: u64,
    out: &mut W,
) -> Result<(), NetError> {
    let mut buf = Vec::with_capacity(14 + net.params.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&hash.to_le_bytes());
    for t in &net.params.tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &net.params.data[t.range()] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], NetError> {
    if buf.len() < n {
        return Err(NetError::Checkpoint("truncated file".into()));
    }
    let (a, b) = buf.split_at(n);
    *buf = b;
    Ok(a)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32, NetError> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().unwrap()))
}

/// Rebuilds the network for `config` and loads every tensor, checking names
/// and shapes. Returns the network and the stored config hash.
pub fn read_checkpoint<R: Read>(
    config: NetConfig,
    input: &mut R,
) -> Result<(ConditionedNet, u64), NetError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut buf = &bytes[..];
    if take(&mut buf, 6)? != MAGIC {
        return Err(NetError::Checkpoint("missing HSCPP1 magic".into()));
    }
    let hash = u64::from_le_bytes(take(&mut buf, 8)?.try_into().unwrap());
    let mut net = ConditionedNet::new(config);
    let mut seen = 0;
    while !buf.is_empty() {
        let len = take_u32(&mut buf)? as usize;
        let name = std::str::from_utf8(take(&mut buf, len)?)
            .map_err(|_| NetError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = take_u32(&mut buf)? as usize;
        let shape = (0..rank)
            .map(|_| take_u32(&mut buf).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let info = net
            .params
            .find(&name)
            .ok_or_else(|| NetError::Checkpoint(format!("unknown tensor {name}")))?
            .clone();
        if info.shape != shape {
            return Err(NetError::Checkpoint(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                info.shape
            )));
        }
        let raw = take(&mut buf, info.len() * 4)?;
        for (dst, src) in net.params.data[info.range()]
            .iter_mut()
            .zip(raw.chunks_exact(4))
        {
            *dst = f32::from_le_bytes(src.try_into().unwrap()) as f64;
        }
        seen += 1;
    }
    if seen != net.params.tensors.len() {
        return Err(NetError::Checkpoint(format!(
            "checkpoint has {seen} tensors, network expects {}",
            net.params.tensors.len()
        )));
    }
    Ok((net, hash))
}
