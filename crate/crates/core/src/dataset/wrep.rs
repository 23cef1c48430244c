//! `.wrep` tensor files: one layer of word representations.
//!
//! Layout (all integers little-endian, no padding):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 6    | magic `WREP1\0`                         |
//! | 6      | 4    | format version (= 1)                    |
//! | 10     | 4    | layer index                             |
//! | 14     | 4    | row count                               |
//! | 18     | 4    | dimension                               |
//! | 22     | 8    | FNV-1a checksum of the token-id order   |
//! | 30     | 4·n·d| row-major `f32` values                  |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"WREP1\0";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 30;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian `u64` encoding of each token id, in row order.
pub fn token_order_checksum<I>(token_ids: I) -> u64
where
    I: IntoIterator<Item = usize>,
{
    let mut hash = FNV_OFFSET;
    for id in token_ids {
        for byte in (id as u64).to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    hash
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WrepHeader {
    pub version: u32,
    pub layer_index: u32,
    pub n_rows: u32,
    pub dim: u32,
    pub checksum: u64,
}

impl WrepHeader {
    pub fn payload_len(&self) -> u64 {
        u64::from(self.n_rows) * u64::from(self.dim) * 4
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[..6].copy_from_slice(MAGIC);
        buf[6..10].copy_from_slice(&self.version.to_le_bytes());
        buf[10..14].copy_from_slice(&self.layer_index.to_le_bytes());
        buf[14..18].copy_from_slice(&self.n_rows.to_le_bytes());
        buf[18..22].copy_from_slice(&self.dim.to_le_bytes());
        buf[22..30].copy_from_slice(&self.checksum.to_le_bytes());
        buf
    }

    fn decode(path: &Path, buf: &[u8; HEADER_LEN]) -> Result<Self> {
        if &buf[..6] != MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let u32_at = |at: usize| u32::from_le_bytes(buf[at..at + 4].try_into().unwrap());
        let header = WrepHeader {
            version: u32_at(6),
            layer_index: u32_at(10),
            n_rows: u32_at(14),
            dim: u32_at(18),
            checksum: u64::from_le_bytes(buf[22..30].try_into().unwrap()),
        };
        if header.version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported version {}", header.version),
            ));
        }
        Ok(header)
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

/// Reads and checks only the header, including that the file length matches
/// the declared shape exactly.
pub fn read_header(path: &Path) -> Result<WrepHeader> {
    let mut file = open(path)?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut buf = [0u8; HEADER_LEN];
    file.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(path, "truncated header"),
        _ => Error::io(path, e),
    })?;
    let header = WrepHeader::decode(path, &buf)?;
    let expected = HEADER_LEN as u64 + header.payload_len();
    if len < expected {
        return Err(Error::format(
            path,
            format!("truncated payload: {len} bytes, expected {expected}"),
        ));
    }
    if len > expected {
        return Err(Error::format(
            path,
            format!("trailing bytes: {len} bytes, expected {expected}"),
        ));
    }
    Ok(header)
}

pub fn read(path: &Path) -> Result<(WrepHeader, Vec<f32>)> {
    let header = read_header(path)?;
    let mut reader = BufReader::new(open(path)?);
    let mut skip = [0u8; HEADER_LEN];
    reader.read_exact(&mut skip).map_err(|e| Error::io(path, e))?;

    let count = header.n_rows as usize * header.dim as usize;
    let mut bytes = vec![0u8; count * 4];
    reader.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(path, "truncated payload"),
        _ => Error::io(path, e),
    })?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn write(path: &Path, header: &WrepHeader, values: &[f32]) -> Result<()> {
    let expected = header.n_rows as usize * header.dim as usize;
    if values.len() != expected {
        return Err(Error::Shape(format!(
            "{} values for a {}x{} tensor",
            values.len(),
            header.n_rows,
            header.dim
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&header.encode())
        .map_err(|e| Error::io(path, e))?;
    for v in values {
        writer
            .write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
