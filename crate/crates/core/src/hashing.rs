//! Token fingerprints and the commutative postings hash.
//!
//! A posting list's hash is the XOR of one LCG step applied to each of its
//! postings. XOR makes the hash independent of insertion order and lets a
//! list update its hash in constant time when a posting is added.

use std::fmt;

use crate::error::{Error, Result};

/// LCG multiplier. Full period modulo 2^64 with increment 1.
pub const LCG_MULTIPLIER: u64 = 0xd134_2543_de82_ef95;
/// LCG increment.
pub const LCG_INCREMENT: u64 = 1;

const FP_SEED: u64 = 0x243f_6a88_85a3_08d3;
const FP_MULTIPLIER: u64 = 0x9e37_79b9_7f4a_7c15;

/// 32-bit stand-in for a token in every sketch structure.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TokenFingerprint(pub u32);

impl fmt::Debug for TokenFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenFingerprint({:#010x})", self.0)
    }
}

/// Index of one set (one batch of log lines).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PostingId(pub u16);

impl PostingId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u16> for PostingId {
    fn from(v: u16) -> Self {
        PostingId(v)
    }
}

/// Order-independent summary of a set of postings.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PostingsHash(pub u64);

impl fmt::Debug for PostingsHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PostingsHash({:#018x})", self.0)
    }
}

/// Finalizer from splitmix64.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seedless 64-bit hash of a byte string: polynomial accumulation over
/// little-endian 8-byte words, then a multiply-xorshift finalizer.
#[inline]
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut acc = FP_SEED ^ (bytes.len() as u64).wrapping_mul(FP_MULTIPLIER);
    let mut chunks = bytes.chunks_exact(8);
    for chunk in &mut chunks {
        let word = u64::from_le_bytes(chunk.try_into().unwrap());
        acc = (acc ^ word).wrapping_mul(FP_MULTIPLIER).rotate_left(29);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut buf = [0u8; 8];
        buf[..rest.len()].copy_from_slice(rest);
        acc = (acc ^ u64::from_le_bytes(buf)).wrapping_mul(FP_MULTIPLIER).rotate_left(29);
    }
    mix64(acc)
}

/// Fingerprint of a token. Empty tokens have nothing to index and are rejected.
#[inline]
pub fn fingerprint(token: &[u8]) -> Result<TokenFingerprint> {
    if token.is_empty() {
        return Err(Error::EmptyToken);
    }
    Ok(TokenFingerprint(hash_bytes(token) as u32))
}

/// One LCG step starting from `x_0 = p`.
#[inline]
pub fn element_hash(p: PostingId) -> u64 {
    LCG_MULTIPLIER.wrapping_mul(p.0 as u64).wrapping_add(LCG_INCREMENT)
}

/// XOR-fold of element hashes. Postings must be distinct; the empty set hashes to 0.
pub fn postings_hash<I>(postings: I) -> PostingsHash
where
    I: IntoIterator<Item = PostingId>,
{
    PostingsHash(postings.into_iter().fold(0, |h, p| h ^ element_hash(p)))
}

/// Adds `p` to the set summarized by `h`. `p` must not already be in that set.
#[inline]
pub fn extend_hash(h: PostingsHash, p: PostingId) -> PostingsHash {
    PostingsHash(h.0 ^ element_hash(p))
}
