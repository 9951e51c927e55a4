//! Per-cluster embedding file.
//!
//! ```text
//! magic     4 bytes   "EGV1"
//! dimension u32 LE
//! count     u64 LE
//! ids       count × u64 LE
//! payload   count × dimension × f32 LE, row-major
//! ```

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::types::{ChunkId, Embedding};

pub const CLUSTER_MAGIC: &[u8; 4] = b"EGV1";
const HEADER_LEN: usize = 4 + 4 + 8;

pub fn encode_cluster(dimension: usize, entries: &[(ChunkId, Embedding)]) -> Vec<u8> {
    let count = entries.len();
    let mut out = Vec::with_capacity(HEADER_LEN + count * 8 + count * dimension * 4);
    out.extend_from_slice(CLUSTER_MAGIC);
    out.write_u32::<LittleEndian>(dimension as u32).unwrap();
    out.write_u64::<LittleEndian>(count as u64).unwrap();
    for (id, _) in entries {
        out.write_u64::<LittleEndian>(id.0).unwrap();
    }
    for (_, e) in entries {
        debug_assert_eq!(e.dim(), dimension);
        for v in e.as_slice() {
            out.write_f32::<LittleEndian>(*v).unwrap();
        }
    }
    out
}

/// Decodes a cluster file. `path` only labels errors.
pub fn decode_cluster(bytes: &[u8], path: &Path) -> Result<(usize, Vec<(ChunkId, Embedding)>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::corrupt(path, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != CLUSTER_MAGIC {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let mut cur = Cursor::new(&bytes[4..]);
    let dimension = cur.read_u32::<LittleEndian>().unwrap() as usize;
    let count = cur.read_u64::<LittleEndian>().unwrap();

    let expected = (count as u128) * (8 + 4 * dimension as u128) + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::corrupt(
            path,
            format!("count {count} × dimension {dimension} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let count = count as usize;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(ChunkId(cur.read_u64::<LittleEndian>().unwrap()));
    }
    let mut entries = Vec::with_capacity(count);
    for id in ids {
        let mut values = vec![0.0f32; dimension];
        cur.read_f32_into::<LittleEndian>(&mut values).unwrap();
        let e = Embedding::new(values).map_err(|_| Error::corrupt(path, format!("non-finite value for chunk {id}")))?;
        entries.push((id, e));
    }
    Ok((dimension, entries))
}
