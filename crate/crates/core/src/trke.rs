//! The `TRKE` embeddings file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TRKE"            4 bytes magic
//! version: u32      always 1
//! dim: u32
//! count: u64
//! count × { keyframe_id: u64, dim × f32 }
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::catalog::KeyframeId;

pub const MAGIC: &[u8; 4] = b"TRKE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum TrkeError {
    #[error("not a TRKE file (bad magic)")]
    BadMagic,
    #[error("unsupported TRKE version {0}")]
    UnsupportedVersion(u32),
    #[error("TRKE dimension must be positive")]
    ZeroDim,
    #[error("TRKE file truncated: expected {expected} records, read {read}")]
    Truncated { expected: u64, read: u64 },
    #[error("trailing bytes after {0} records")]
    TrailingBytes(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrkeHeader {
    pub dim: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrkeFile {
    pub dim: u32,
    pub records: Vec<(KeyframeId, Vec<f32>)>,
}

pub fn read_header<R: Read>(r: &mut R) -> Result<TrkeHeader, TrkeError> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TrkeError::BadMagic,
        _ => TrkeError::Io(e),
    })?;
    if &buf[..4] != MAGIC {
        return Err(TrkeError::BadMagic);
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(TrkeError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if dim == 0 {
        return Err(TrkeError::ZeroDim);
    }
    let count = u64::from_le_bytes(buf[12..20].try_into().unwrap());
    Ok(TrkeHeader { dim, count })
}

pub fn read<R: Read>(mut r: R) -> Result<TrkeFile, TrkeError> {
    let header = read_header(&mut r)?;
    let dim = header.dim as usize;
    let record_len = 8 + 4 * dim;
    let mut buf = vec![0u8; record_len];
    // count comes from an untrusted header; grow as records actually arrive
    let mut records = Vec::with_capacity(header.count.min(1 << 16) as usize);
    for read in 0..header.count {
        if let Err(e) = r.read_exact(&mut buf) {
            return Err(match e.kind() {
                io::ErrorKind::UnexpectedEof => TrkeError::Truncated {
                    expected: header.count,
                    read,
                },
                _ => TrkeError::Io(e),
            });
        }
        let id = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let values = buf[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push((KeyframeId(id), values));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(TrkeError::TrailingBytes(header.count));
    }
    Ok(TrkeFile {
        dim: header.dim,
        records,
    })
}

pub fn write<'a, W, I>(mut w: W, dim: u32, count: u64, records: I) -> Result<(), TrkeError>
where
    W: Write,
    I: IntoIterator<Item = (KeyframeId, &'a [f32])>,
{
    if dim == 0 {
        return Err(TrkeError::ZeroDim);
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    let mut written = 0u64;
    for (id, values) in records {
        assert_eq!(values.len(), dim as usize, "record width must equal dim");
        w.write_all(&id.0.to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        written += 1;
    }
    assert_eq!(written, count, "record count must match header");
    w.flush()?;
    Ok(())
}

pub fn to_bytes(file: &TrkeFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + file.records.len() * (8 + 4 * file.dim as usize));
    write(
        &mut out,
        file.dim,
        file.records.len() as u64,
        file.records.iter().map(|(id, v)| (*id, v.as_slice())),
    )
    .expect("writing to a Vec cannot fail");
    out
}
