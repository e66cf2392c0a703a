//! Binary checkpoint container.
//!
//! Layout: magic `TICN`, a little-endian u32 format version, a u32 entry
//! count, then one record per entry: u32 name length + UTF-8 name, a dtype
//! tag (1 = f32, 2 = f64, 3 = u8), a u8 rank, u32 dims, and the raw
//! little-endian payload. The first entry, `spec.toml`, embeds the network
//! architecture as bytes; the rest are the parameter tensors in network
//! order, so a checkpoint is self-describing and round-trips byte for byte.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt};

use super::network::Network;
use super::NetworkSpec;
use crate::data::write_atomic;
use crate::{Error, Real, Result};

const MAGIC: &[u8; 4] = b"TICN";
const VERSION: u32 = 1;

const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;
const DTYPE_U8: u8 = 3;

#[cfg(not(feature = "f32"))]
const REAL_DTYPE: u8 = DTYPE_F64;
#[cfg(feature = "f32")]
const REAL_DTYPE: u8 = DTYPE_F32;

fn push_real_payload(out: &mut Vec<u8>, values: &[Real]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_entry_header(out: &mut Vec<u8>, name: &str, dtype: u8, dims: &[usize]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dtype);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

/// Serialize the network (architecture + parameters) to `path`, atomically.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let spec_toml = toml::to_string(net.spec())
        .map_err(|e| Error::Format(format!("cannot serialize network spec: {e}")))?;
    let params = net.param_tensors();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&((params.len() + 1) as u32).to_le_bytes());
    push_entry_header(&mut out, "spec.toml", DTYPE_U8, &[spec_toml.len()]);
    out.extend_from_slice(spec_toml.as_bytes());
    for (name, dims, values) in params {
        push_entry_header(&mut out, &name, REAL_DTYPE, &dims);
        push_real_payload(&mut out, values);
    }
    write_atomic(path, &out)
}

struct Entry {
    name: String,
    dtype: u8,
    dims: Vec<usize>,
    payload: Vec<u8>,
}

fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let mut cur = Cursor::new(&bytes[..]);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint truncated before magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("checkpoint truncated in header".into()))?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let count = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("checkpoint truncated in header".into()))?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Format("checkpoint truncated in entry header".into()))?
            as usize;
        let mut name = vec![0u8; name_len];
        cur.read_exact(&mut name)
            .map_err(|_| Error::Format("checkpoint truncated in entry name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
        let dtype = cur
            .read_u8()
            .map_err(|_| Error::Format("checkpoint truncated at dtype".into()))?;
        let rank = cur
            .read_u8()
            .map_err(|_| Error::Format("checkpoint truncated at rank".into()))?;
        let mut dims = Vec::with_capacity(rank as usize);
        let mut len = 1usize;
        for _ in 0..rank {
            let d = cur
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Format("checkpoint truncated in dims".into()))?
                as usize;
            len = len
                .checked_mul(d)
                .ok_or_else(|| Error::Format("checkpoint dims overflow".into()))?;
            dims.push(d);
        }
        let elem = match dtype {
            DTYPE_F32 => 4,
            DTYPE_F64 => 8,
            DTYPE_U8 => 1,
            other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
        };
        let byte_len = len
            .checked_mul(elem)
            .ok_or_else(|| Error::Format("checkpoint payload overflow".into()))?;
        let mut payload = vec![0u8; byte_len];
        cur.read_exact(&mut payload).map_err(|_| {
            Error::Format(format!("checkpoint truncated in payload of {name:?}"))
        })?;
        entries.push(Entry { name, dtype, dims, payload });
    }
    Ok(entries)
}

fn decode_reals(entry: &Entry) -> Result<Vec<Real>> {
    if entry.dtype != REAL_DTYPE {
        return Err(Error::Format(format!(
            "entry {:?} has dtype tag {}, this build expects {}",
            entry.name, entry.dtype, REAL_DTYPE
        )));
    }
    let width = std::mem::size_of::<Real>();
    Ok(entry
        .payload
        .chunks_exact(width)
        .map(|b| Real::from_le_bytes(b.try_into().expect("chunk width")))
        .collect())
}

fn fill_params(net: &mut Network, entries: &[Entry]) -> Result<()> {
    let params = net.param_tensors_mut();
    let tensor_entries: Vec<&Entry> = entries.iter().filter(|e| e.name != "spec.toml").collect();
    if tensor_entries.len() != params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameter tensors, network has {}",
            tensor_entries.len(),
            params.len()
        )));
    }
    for (entry, (name, dims, values)) in tensor_entries.iter().zip(params) {
        if entry.name != name {
            return Err(Error::Format(format!(
                "checkpoint entry {:?} does not match network parameter {name:?}",
                entry.name
            )));
        }
        if entry.dims != dims {
            return Err(Error::Format(format!(
                "parameter {name:?} has dims {:?} in the checkpoint but {dims:?} in the network",
                entry.dims
            )));
        }
        let decoded = decode_reals(entry)?;
        values.copy_from_slice(&decoded);
    }
    Ok(())
}

/// Rebuild the architecture embedded in the checkpoint and restore every
/// parameter bit-exactly.
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let entries = read_entries(path)?;
    let spec_entry = entries
        .iter()
        .find(|e| e.name == "spec.toml")
        .ok_or_else(|| Error::Format("checkpoint has no spec.toml entry".into()))?;
    let spec_text = std::str::from_utf8(&spec_entry.payload)
        .map_err(|_| Error::Format("spec.toml entry is not UTF-8".into()))?;
    let spec: NetworkSpec = toml::from_str(spec_text)
        .map_err(|e| Error::Format(format!("embedded spec does not parse: {e}")))?;
    let mut net = Network::build(&spec)?;
    fill_params(&mut net, &entries)?;
    Ok(net)
}

/// Load checkpoint parameters into a network built from a caller-provided
/// spec, ignoring the embedded one. This is the weight-swap path: transform
/// layers carry no parameters, so checkpoints move freely between a plain
/// CNN and its transform variant as long as conv/dense shapes agree.
pub fn load_checkpoint_into(spec: &NetworkSpec, path: &Path) -> Result<Network> {
    let entries = read_entries(path)?;
    let mut net = Network::build(spec)?;
    fill_params(&mut net, &entries)?;
    Ok(net)
}
