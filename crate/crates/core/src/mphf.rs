//! Minimal perfect hashing over token fingerprints with cascaded bit vectors.
//!
//! Each level hashes the keys that are still unplaced into a bit vector of
//! `gamma * remaining` bits. Positions hit by exactly one key are set and
//! those keys are done; the rest move on to the next level. A key's index is
//! the rank of its bit across all levels. Keys left after [`MAX_LEVELS`] go
//! into a sorted fallback table and take the trailing indices.
//!
//! Serialized layout (all little-endian u64 unless noted):
//!
//! ```text
//! n, level_count
//! per level: seed, bit_len, rank samples (one per 512 bits), bit words
//! fallback_count, then fallback_count x (key: u32, index: u32)
//! ```
//!
//! Rank samples are absolute: the number of set bits in all earlier levels
//! plus the earlier blocks of this level.

use crate::error::{Error, Result};
use crate::hashing::{mix64, TokenFingerprint};

pub const MAX_LEVELS: usize = 32;
pub const DEFAULT_GAMMA: f64 = 2.0;

const RANK_BLOCK_BITS: u64 = 512;
const WORDS_PER_BLOCK: u64 = RANK_BLOCK_BITS / 64;

#[inline]
fn level_seed(level: usize) -> u64 {
    mix64(0x5851_f42d_4c95_7f2d ^ (level as u64 + 1))
}

#[inline]
fn level_position(key: u32, seed: u64, bit_len: u64) -> u64 {
    let h = mix64(key as u64 ^ seed);
    ((h as u128 * bit_len as u128) >> 64) as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Level {
    seed: u64,
    words: Vec<u64>,
    ranks: Vec<u64>,
}

impl Level {
    fn bit_len(&self) -> u64 {
        self.words.len() as u64 * 64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mphf {
    levels: Vec<Level>,
    fallback: Vec<(u32, u32)>,
    n: u64,
    gamma: f64,
}

impl Mphf {
    /// Builds over a set of distinct fingerprints. Input order does not matter.
    pub fn build(keys: &[TokenFingerprint], gamma: f64) -> Result<Self> {
        Self::build_with_max_levels(keys, gamma, MAX_LEVELS)
    }

    pub(crate) fn build_with_max_levels(keys: &[TokenFingerprint], gamma: f64, max_levels: usize) -> Result<Self> {
        let max_levels = max_levels.min(MAX_LEVELS);
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma {gamma} must be >= 1")));
        }
        let mut remaining: Vec<u32> = keys.iter().map(|k| k.0).collect();
        remaining.sort_unstable();
        if let Some(w) = remaining.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateKey(w[0]));
        }
        let n = remaining.len() as u64;
        let mut levels = Vec::new();
        let mut placed = 0u64;
        while !remaining.is_empty() && levels.len() < max_levels {
            let seed = level_seed(levels.len());
            let bit_len = ((gamma * remaining.len() as f64).ceil() as u64).div_ceil(64).max(1) * 64;
            let nwords = (bit_len / 64) as usize;
            let mut seen = vec![0u64; nwords];
            let mut collided = vec![0u64; nwords];
            for &k in &remaining {
                let pos = level_position(k, seed, bit_len);
                let (w, b) = ((pos / 64) as usize, 1u64 << (pos % 64));
                if seen[w] & b != 0 {
                    collided[w] |= b;
                } else {
                    seen[w] |= b;
                }
            }
            remaining.retain(|&k| {
                let pos = level_position(k, seed, bit_len);
                collided[(pos / 64) as usize] & (1 << (pos % 64)) != 0
            });
            let words: Vec<u64> = seen.iter().zip(&collided).map(|(s, c)| s & !c).collect();
            let mut ranks = Vec::with_capacity(nwords.div_ceil(WORDS_PER_BLOCK as usize));
            for block in words.chunks(WORDS_PER_BLOCK as usize) {
                ranks.push(placed);
                placed += block.iter().map(|w| w.count_ones() as u64).sum::<u64>();
            }
            levels.push(Level { seed, words, ranks });
        }
        let fallback = remaining
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, (placed + i as u64) as u32))
            .collect();
        Ok(Mphf {
            levels,
            fallback,
            n,
            gamma,
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn fallback_len(&self) -> usize {
        self.fallback.len()
    }

    /// Total bits across all level vectors.
    pub fn total_level_bits(&self) -> u64 {
        self.levels.iter().map(Level::bit_len).sum()
    }

    /// Index of `key`: exact for build keys, arbitrary or `None` otherwise.
    pub fn evaluate(&self, key: TokenFingerprint) -> Option<u64> {
        for level in &self.levels {
            let pos = level_position(key.0, level.seed, level.bit_len());
            let wi = (pos / 64) as usize;
            let word = level.words[wi];
            let bit = pos % 64;
            if word >> bit & 1 == 1 {
                let block = wi / WORDS_PER_BLOCK as usize;
                let mut rank = level.ranks[block];
                for w in &level.words[block * WORDS_PER_BLOCK as usize..wi] {
                    rank += w.count_ones() as u64;
                }
                rank += (word & ((1u64 << bit) - 1)).count_ones() as u64;
                return Some(rank);
            }
        }
        self.fallback
            .binary_search_by_key(&key.0, |&(k, _)| k)
            .ok()
            .map(|i| self.fallback[i].1 as u64)
    }

    pub fn serialized_len(&self) -> usize {
        16 + self
            .levels
            .iter()
            .map(|l| 16 + 8 * (l.ranks.len() + l.words.len()))
            .sum::<usize>()
            + 8
            + 8 * self.fallback.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.reserve(self.serialized_len());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&(self.levels.len() as u64).to_le_bytes());
        for level in &self.levels {
            out.extend_from_slice(&level.seed.to_le_bytes());
            out.extend_from_slice(&level.bit_len().to_le_bytes());
            for r in &level.ranks {
                out.extend_from_slice(&r.to_le_bytes());
            }
            for w in &level.words {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.fallback.len() as u64).to_le_bytes());
        for &(k, i) in &self.fallback {
            out.extend_from_slice(&k.to_le_bytes());
            out.extend_from_slice(&i.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }
}

#[inline]
fn u64_at(bytes: &[u8], at: usize) -> Option<u64> {
    bytes.get(at..at + 8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
}

#[inline]
fn u32_at(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

/// Evaluates a serialized function in place, without deserializing it.
#[derive(Clone, Copy, Debug)]
pub struct MphfView<'a> {
    bytes: &'a [u8],
    n: u64,
    level_count: u64,
}

impl<'a> MphfView<'a> {
    /// Reads only the 16-byte preamble.
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let (n, level_count) = match (u64_at(bytes, 0), u64_at(bytes, 8)) {
            (Some(n), Some(l)) => (n, l),
            _ => {
                return Err(Error::Truncated {
                    need: 16,
                    have: bytes.len() as u64,
                })
            }
        };
        if level_count > MAX_LEVELS as u64 {
            return Err(Error::Corrupt(format!("{level_count} hash levels")));
        }
        Ok(MphfView {
            bytes,
            n,
            level_count,
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Same contract as [`Mphf::evaluate`]. Malformed bytes yield `None`.
    pub fn evaluate(&self, key: TokenFingerprint) -> Option<u64> {
        let bytes = self.bytes;
        let mut at = 16usize;
        for _ in 0..self.level_count {
            let seed = u64_at(bytes, at)?;
            let bit_len = u64_at(bytes, at + 8)?;
            if bit_len == 0 || bit_len % 64 != 0 {
                return None;
            }
            let nranks = bit_len.div_ceil(RANK_BLOCK_BITS) as usize;
            let ranks_at = at + 16;
            let words_at = ranks_at + 8 * nranks;
            let pos = level_position(key.0, seed, bit_len);
            let wi = (pos / 64) as usize;
            let word = u64_at(bytes, words_at + 8 * wi)?;
            let bit = pos % 64;
            if word >> bit & 1 == 1 {
                let block = wi / WORDS_PER_BLOCK as usize;
                let mut rank = u64_at(bytes, ranks_at + 8 * block)?;
                for w in block * WORDS_PER_BLOCK as usize..wi {
                    rank += u64_at(bytes, words_at + 8 * w)?.count_ones() as u64;
                }
                rank += (word & ((1u64 << bit) - 1)).count_ones() as u64;
                return Some(rank);
            }
            at = words_at + 8 * (bit_len / 64) as usize;
        }
        let count = u64_at(bytes, at)? as usize;
        let table = bytes.get(at + 8..at + 8 + count.checked_mul(8)?)?;
        let (mut lo, mut hi) = (0usize, count);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let k = u32_at(table, mid * 8)?;
            match k.cmp(&key.0) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return u32_at(table, mid * 8 + 4).map(u64::from),
            }
        }
        None
    }
}
