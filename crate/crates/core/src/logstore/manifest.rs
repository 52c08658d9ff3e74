//! Batch directory of a segment.
//!
//! Layout, little-endian: magic `DWMF`, version `u16`, codec `u8`, token
//! rules `u8`, capacity `u32`, batch count `u32`, then one 20-byte record
//! per posting: data offset `u64`, compressed length `u32`, uncompressed
//! length `u32`, line count `u32`.

use crate::error::{Error, Result};

use super::tokenize::TokenRules;

pub const MANIFEST_MAGIC: [u8; 4] = *b"DWMF";
pub const MANIFEST_VERSION: u16 = 1;
const PREAMBLE_LEN: usize = 16;
const RECORD_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Codec {
    /// Batches stored verbatim.
    None,
    /// One zstd frame per batch.
    #[default]
    Zstd,
}

impl Codec {
    pub fn id(self) -> u8 {
        match self {
            Codec::None => 0,
            Codec::Zstd => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Codec::None),
            1 => Ok(Codec::Zstd),
            other => Err(Error::Corrupt(format!("unknown codec {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BatchEntry {
    pub offset: u64,
    pub compressed_len: u32,
    pub uncompressed_len: u32,
    pub line_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub codec: Codec,
    pub token_rules: TokenRules,
    pub capacity: u32,
    /// Indexed by posting.
    pub batches: Vec<BatchEntry>,
}

impl Manifest {
    pub fn line_count(&self) -> u64 {
        self.batches.iter().map(|b| b.line_count as u64).sum()
    }

    pub fn uncompressed_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.uncompressed_len as u64).sum()
    }

    pub fn compressed_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.compressed_len as u64).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PREAMBLE_LEN + RECORD_LEN * self.batches.len());
        out.extend_from_slice(&MANIFEST_MAGIC);
        out.extend_from_slice(&MANIFEST_VERSION.to_le_bytes());
        out.push(self.codec.id());
        out.push(self.token_rules.id());
        out.extend_from_slice(&self.capacity.to_le_bytes());
        out.extend_from_slice(&(self.batches.len() as u32).to_le_bytes());
        for b in &self.batches {
            out.extend_from_slice(&b.offset.to_le_bytes());
            out.extend_from_slice(&b.compressed_len.to_le_bytes());
            out.extend_from_slice(&b.uncompressed_len.to_le_bytes());
            out.extend_from_slice(&b.line_count.to_le_bytes());
        }
        out
    }

    /// Parses a manifest and checks every batch lies within `data_len` bytes.
    pub fn decode(bytes: &[u8], data_len: u64) -> Result<Self> {
        if bytes.len() < PREAMBLE_LEN {
            return Err(Error::Truncated {
                need: PREAMBLE_LEN as u64,
                have: bytes.len() as u64,
            });
        }
        if bytes[..4] != MANIFEST_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let codec = Codec::from_id(bytes[6])?;
        let token_rules = TokenRules::from_id(bytes[7])?;
        let capacity = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let need = PREAMBLE_LEN + count * RECORD_LEN;
        if bytes.len() != need {
            return Err(Error::Truncated {
                need: need as u64,
                have: bytes.len() as u64,
            });
        }
        if count as u64 > capacity as u64 {
            return Err(Error::Corrupt(format!("{count} batches exceed capacity {capacity}")));
        }
        let batches = bytes[PREAMBLE_LEN..]
            .chunks_exact(RECORD_LEN)
            .map(|r| BatchEntry {
                offset: u64::from_le_bytes(r[0..8].try_into().unwrap()),
                compressed_len: u32::from_le_bytes(r[8..12].try_into().unwrap()),
                uncompressed_len: u32::from_le_bytes(r[12..16].try_into().unwrap()),
                line_count: u32::from_le_bytes(r[16..20].try_into().unwrap()),
            })
            .collect::<Vec<_>>();
        for (p, b) in batches.iter().enumerate() {
            if b.offset + b.compressed_len as u64 > data_len || b.line_count == 0 {
                return Err(Error::Corrupt(format!("batch {p} out of bounds")));
            }
        }
        Ok(Manifest {
            codec,
            token_rules,
            capacity,
            batches,
        })
    }
}
