//! Posting list representations.
//!
//! In memory, a list is either a sorted array of 16-bit postings or a dense
//! bitset over the sketch capacity. On disk, lists are stored with Binary
//! Interpolative Coding and variable-length records are located through a
//! sampled prefix-sum index. All persisted bit sequences pack bits MSB-first
//! within each byte.

use crate::error::{Error, Result};
use crate::hashing::{extend_hash, PostingId, PostingsHash};

/// Append-only bit sequence, MSB-first within bytes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitSequence {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitSequence {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            bit_len: 0,
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn push_bit(&mut self, bit: bool) {
        let used = (self.bit_len % 8) as u32;
        if used == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> used;
        }
        self.bit_len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    #[inline]
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        let mut remaining = width;
        while remaining > 0 {
            let used = (self.bit_len % 8) as u32;
            if used == 0 {
                self.bytes.push(0);
            }
            let free = 8 - used;
            let take = free.min(remaining);
            let chunk = ((value >> (remaining - take)) & ((1u64 << take) - 1)) as u8;
            *self.bytes.last_mut().unwrap() |= chunk << (free - take);
            remaining -= take;
            self.bit_len += take as u64;
        }
    }

    pub fn read(&self, offset: u64, width: u32) -> Result<u64> {
        if offset + width as u64 > self.bit_len {
            return Err(Error::BitsExhausted {
                offset,
                len: self.bit_len,
            });
        }
        Ok(read_bits(&self.bytes, offset, width))
    }
}

/// Reads `width` bits starting at bit `offset` of an MSB-first byte slice.
/// Panics if the slice is too short; callers bounds-check first.
#[inline]
pub fn read_bits(bytes: &[u8], offset: u64, width: u32) -> u64 {
    debug_assert!(width <= 64);
    if width == 0 {
        return 0;
    }
    let start = (offset / 8) as usize;
    let shift = (offset % 8) as u32;
    let total = shift + width;
    if total <= 64 && start + 8 <= bytes.len() {
        let word = u64::from_be_bytes(bytes[start..start + 8].try_into().unwrap());
        return (word << shift) >> (64 - width);
    }
    let mut value: u128 = 0;
    let nbytes = total.div_ceil(8) as usize;
    for &b in &bytes[start..start + nbytes] {
        value = (value << 8) | b as u128;
    }
    let excess = nbytes as u32 * 8 - total;
    ((value >> excess) & ((1u128 << width) - 1)) as u64
}

/// Sequential reader over an MSB-first bit slice with a known bit length.
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    end: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], start: u64, bit_len: u64) -> Self {
        BitReader {
            bytes,
            pos: start,
            end: bit_len.min(bytes.len() as u64 * 8),
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    #[inline]
    pub fn read(&mut self, width: u32) -> Result<u64> {
        if self.pos + width as u64 > self.end {
            return Err(Error::BitsExhausted {
                offset: self.pos,
                len: self.end,
            });
        }
        let v = read_bits(self.bytes, self.pos, width);
        self.pos += width as u64;
        Ok(v)
    }
}

/// Number of bits needed to represent `v` (0 for 0).
#[inline]
pub fn bit_width(v: u64) -> u32 {
    64 - v.leading_zeros()
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Repr {
    Short(Vec<u16>),
    Long(Box<[u64]>),
}

/// Shape parameters shared by every list of one sketch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ListConfig {
    pub capacity: u32,
    /// Lists with more postings than this are stored as bitsets.
    pub promotion_threshold: u32,
}

impl ListConfig {
    pub fn new(capacity: u32) -> Result<Self> {
        if capacity == 0 || capacity > 1 << 16 {
            return Err(Error::InvalidCapacity(capacity));
        }
        Ok(ListConfig {
            capacity,
            promotion_threshold: capacity / 16,
        })
    }

    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.promotion_threshold = threshold;
        self
    }

    #[inline]
    pub fn check(&self, p: PostingId) -> Result<()> {
        if (p.0 as u32) < self.capacity {
            Ok(())
        } else {
            Err(Error::PostingOutOfRange {
                posting: p.0 as u32,
                capacity: self.capacity,
            })
        }
    }

    fn bitset_words(&self) -> usize {
        (self.capacity as usize).div_ceil(64)
    }
}

/// A deduplicated, reference-counted posting set with an incrementally
/// maintained postings hash.
#[derive(Clone, Debug)]
pub struct MutablePostingList {
    repr: Repr,
    len: u32,
    hash: PostingsHash,
    /// Number of token-map entries referencing this list.
    pub token_count: u32,
    config: ListConfig,
}

impl MutablePostingList {
    pub fn new(config: ListConfig) -> Self {
        MutablePostingList {
            repr: Repr::Short(Vec::new()),
            len: 0,
            hash: PostingsHash(0),
            token_count: 0,
            config,
        }
    }

    pub fn from_postings(config: ListConfig, postings: &[PostingId]) -> Result<Self> {
        let mut list = Self::new(config);
        for &p in postings {
            list.insert(p)?;
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn postings_hash(&self) -> PostingsHash {
        self.hash
    }

    pub fn config(&self) -> ListConfig {
        self.config
    }

    pub fn is_bitset(&self) -> bool {
        matches!(self.repr, Repr::Long(_))
    }

    pub fn contains(&self, p: PostingId) -> Result<bool> {
        self.config.check(p)?;
        Ok(self.contains_unchecked(p))
    }

    #[inline]
    pub(crate) fn contains_unchecked(&self, p: PostingId) -> bool {
        match &self.repr {
            Repr::Short(v) => v.binary_search(&p.0).is_ok(),
            Repr::Long(words) => {
                let i = p.index();
                words
                    .get(i / 64)
                    .is_some_and(|w| w >> (i % 64) & 1 == 1)
            }
        }
    }

    /// Inserts `p`; returns false (and leaves the list untouched) if present.
    pub fn insert(&mut self, p: PostingId) -> Result<bool> {
        self.config.check(p)?;
        let added = match &mut self.repr {
            Repr::Short(v) => match v.binary_search(&p.0) {
                Ok(_) => false,
                Err(pos) => {
                    v.insert(pos, p.0);
                    true
                }
            },
            Repr::Long(words) => {
                let i = p.index();
                let mask = 1u64 << (i % 64);
                if words[i / 64] & mask != 0 {
                    false
                } else {
                    words[i / 64] |= mask;
                    true
                }
            }
        };
        if added {
            self.len += 1;
            self.hash = extend_hash(self.hash, p);
            if self.len > self.config.promotion_threshold {
                self.promote();
            }
        }
        Ok(added)
    }

    fn promote(&mut self) {
        if let Repr::Short(v) = &self.repr {
            let mut words = vec![0u64; self.config.bitset_words()].into_boxed_slice();
            for &p in v {
                words[p as usize / 64] |= 1 << (p % 64);
            }
            self.repr = Repr::Long(words);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = PostingId> + '_ {
        let (short, long) = match &self.repr {
            Repr::Short(v) => (Some(v.iter().map(|&p| PostingId(p))), None),
            Repr::Long(words) => (None, Some(BitsetIter::new(words))),
        };
        short.into_iter().flatten().chain(long.into_iter().flatten())
    }

    pub fn to_vec(&self) -> Vec<PostingId> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.iter());
        out
    }

    pub fn min(&self) -> Option<PostingId> {
        self.iter().next()
    }

    /// True iff this list holds exactly `base ∪ {extra}`, where `extra ∉ base`.
    pub(crate) fn equals_extended(&self, base: &MutablePostingList, extra: PostingId) -> bool {
        if self.len != base.len + 1 || !self.contains_unchecked(extra) {
            return false;
        }
        match (&self.repr, &base.repr) {
            (Repr::Long(a), Repr::Long(b)) => {
                let ei = extra.index();
                a.iter().zip(b.iter()).enumerate().all(|(wi, (&x, &y))| {
                    let y = if wi == ei / 64 { y | 1 << (ei % 64) } else { y };
                    x == y
                })
            }
            _ => base.iter().all(|p| self.contains_unchecked(p)),
        }
    }

    /// True iff both lists hold the same set.
    pub fn same_postings(&self, other: &MutablePostingList) -> bool {
        if self.len != other.len || self.hash != other.hash {
            return false;
        }
        match (&self.repr, &other.repr) {
            (Repr::Short(a), Repr::Short(b)) => a == b,
            (Repr::Long(a), Repr::Long(b)) => a == b,
            _ => other.iter().all(|p| self.contains_unchecked(p)),
        }
    }

    /// Heap bytes owned by the representation.
    pub fn payload_bytes(&self) -> usize {
        match &self.repr {
            Repr::Short(v) => v.capacity() * 2,
            Repr::Long(words) => words.len() * 8,
        }
    }
}

struct BitsetIter<'a> {
    words: &'a [u64],
    index: usize,
    current: u64,
}

impl<'a> BitsetIter<'a> {
    fn new(words: &'a [u64]) -> Self {
        BitsetIter {
            words,
            index: 0,
            current: words.first().copied().unwrap_or(0),
        }
    }
}

impl Iterator for BitsetIter<'_> {
    type Item = PostingId;

    fn next(&mut self) -> Option<PostingId> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(PostingId((self.index * 64 + bit) as u16));
            }
            self.index += 1;
            self.current = *self.words.get(self.index)?;
        }
    }
}

/// Appends `x ∈ [0, range)` as a truncated (minimal) binary code.
#[inline]
fn write_minimal_binary(out: &mut BitSequence, x: u64, range: u64) {
    debug_assert!(x < range);
    if range <= 1 {
        return;
    }
    let k = bit_width(range - 1);
    let short_codes = (1u64 << k) - range;
    if x < short_codes {
        out.push_bits(x, k - 1);
    } else {
        out.push_bits(x + short_codes, k);
    }
}

#[inline]
fn read_minimal_binary(reader: &mut BitReader<'_>, range: u64) -> Result<u64> {
    if range <= 1 {
        return Ok(0);
    }
    let k = bit_width(range - 1);
    let short_codes = (1u64 << k) - range;
    let x = reader.read(k - 1)?;
    if x < short_codes {
        Ok(x)
    } else {
        let x = (x << 1) | reader.read(1)?;
        Ok(x - short_codes)
    }
}

/// Binary Interpolative Coding of a strictly ascending list within `[lo, hi]`,
/// appended to `out`.
pub fn bic_encode_into(out: &mut BitSequence, postings: &[PostingId], lo: u32, hi: u32) -> Result<()> {
    if let (Some(first), Some(last)) = (postings.first(), postings.last()) {
        if (first.0 as u32) < lo || (last.0 as u32) > hi {
            let bad = if (first.0 as u32) < lo { first.0 } else { last.0 };
            return Err(Error::ValueOutOfRange { value: bad as u32, lo, hi });
        }
    }
    if postings.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Unsorted);
    }
    encode_range(out, postings, lo as u64, hi as u64);
    Ok(())
}

pub fn bic_encode(postings: &[PostingId], lo: u32, hi: u32) -> Result<BitSequence> {
    let mut out = BitSequence::new();
    bic_encode_into(&mut out, postings, lo, hi)?;
    Ok(out)
}

fn encode_range(out: &mut BitSequence, values: &[PostingId], lo: u64, hi: u64) {
    let n = values.len() as u64;
    if n == 0 {
        return;
    }
    let mid = (values.len() - 1) / 2;
    let v = values[mid].0 as u64;
    let min = lo + mid as u64;
    let max = hi - (n - 1 - mid as u64);
    write_minimal_binary(out, v - min, max - min + 1);
    if mid > 0 {
        encode_range(out, &values[..mid], lo, v - 1);
    }
    if mid + 1 < values.len() {
        encode_range(out, &values[mid + 1..], v + 1, hi);
    }
}

/// Decodes `count` postings in `[lo, hi]` starting at bit `at`.
/// Returns the postings and the number of bits consumed.
pub fn bic_decode(
    bytes: &[u8],
    bit_len: u64,
    at: u64,
    count: u32,
    lo: u32,
    hi: u32,
) -> Result<(Vec<PostingId>, u64)> {
    if lo > hi || count as u64 > hi as u64 - lo as u64 + 1 {
        return Err(Error::CountExceedsRange { count, lo, hi });
    }
    let mut out = vec![PostingId(0); count as usize];
    let mut reader = BitReader::new(bytes, at, bit_len);
    decode_range(&mut reader, &mut out, lo as u64, hi as u64)?;
    Ok((out, reader.position() - at))
}

fn decode_range(reader: &mut BitReader<'_>, out: &mut [PostingId], lo: u64, hi: u64) -> Result<()> {
    let n = out.len() as u64;
    if n == 0 {
        return Ok(());
    }
    let mid = (out.len() - 1) / 2;
    let min = lo + mid as u64;
    let max = hi - (n - 1 - mid as u64);
    let v = min + read_minimal_binary(reader, max - min + 1)?;
    if v > max {
        return Err(Error::Corrupt(format!("interpolative code value {v} above {max}")));
    }
    out[mid] = PostingId(v as u16);
    if mid > 0 {
        decode_range(reader, &mut out[..mid], lo, v - 1)?;
    }
    if mid + 1 < out.len() {
        decode_range(reader, &mut out[mid + 1..], v + 1, hi)?;
    }
    Ok(())
}

/// Builder for a sampled prefix-sum index over variable-length bit records.
///
/// Stores every record's bit length in a fixed width and an absolute bit
/// offset every `sample_interval` records.
#[derive(Clone, Debug)]
pub struct PrefixSumBuilder {
    lengths: Vec<u32>,
    sample_interval: u32,
}

/// Encoded form of a prefix-sum index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPrefixSums {
    pub width: u8,
    pub sample_interval: u32,
    pub count: u64,
    /// Fixed-width lengths, MSB-first.
    pub lengths: Vec<u8>,
    /// Little-endian 64-bit absolute offsets.
    pub samples: Vec<u8>,
}

impl PrefixSumBuilder {
    pub fn new(sample_interval: u32) -> Result<Self> {
        if sample_interval == 0 {
            return Err(Error::InvalidConfig("sample interval must be positive".into()));
        }
        Ok(PrefixSumBuilder {
            lengths: Vec::new(),
            sample_interval,
        })
    }

    pub fn push(&mut self, bit_length: u32) {
        debug_assert!(bit_length >= 1);
        self.lengths.push(bit_length);
    }

    pub fn finish(self) -> EncodedPrefixSums {
        let max = self.lengths.iter().copied().max().unwrap_or(0);
        let width = bit_width(max as u64).max(1);
        let mut lengths = BitSequence::with_capacity(self.lengths.len() * width as usize);
        let mut samples = Vec::with_capacity(self.lengths.len() / self.sample_interval as usize * 8 + 8);
        let mut offset = 0u64;
        for (i, &len) in self.lengths.iter().enumerate() {
            if i as u64 % self.sample_interval as u64 == 0 {
                samples.extend_from_slice(&offset.to_le_bytes());
            }
            lengths.push_bits(len as u64, width);
            offset += len as u64;
        }
        EncodedPrefixSums {
            width: width as u8,
            sample_interval: self.sample_interval,
            count: self.lengths.len() as u64,
            lengths: lengths.into_bytes(),
            samples,
        }
    }
}

/// Read-only view over an encoded prefix-sum index.
#[derive(Clone, Copy, Debug)]
pub struct PrefixSumIndex<'a> {
    width: u32,
    sample_interval: u64,
    count: u64,
    lengths: &'a [u8],
    samples: &'a [u8],
}

impl<'a> PrefixSumIndex<'a> {
    pub fn new(
        width: u8,
        sample_interval: u32,
        count: u64,
        lengths: &'a [u8],
        samples: &'a [u8],
    ) -> Result<Self> {
        if sample_interval == 0 || (count > 0 && width == 0) || width > 32 {
            return Err(Error::Corrupt("bad prefix-sum parameters".into()));
        }
        let need_len = (count * width as u64).div_ceil(8);
        let need_samples = count.div_ceil(sample_interval as u64) * 8;
        if (lengths.len() as u64) < need_len || (samples.len() as u64) < need_samples {
            return Err(Error::Truncated {
                need: need_len + need_samples,
                have: (lengths.len() + samples.len()) as u64,
            });
        }
        Ok(PrefixSumIndex {
            width: width as u32,
            sample_interval: sample_interval as u64,
            count,
            lengths,
            samples,
        })
    }

    pub fn from_encoded(enc: &'a EncodedPrefixSums) -> Result<Self> {
        Self::new(enc.width, enc.sample_interval, enc.count, &enc.lengths, &enc.samples)
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    fn length_at(&self, i: u64) -> u64 {
        read_bits(self.lengths, i * self.width as u64, self.width)
    }

    /// Returns `(bit offset, bit length)` of entry `i`.
    pub fn offset(&self, i: u64) -> Result<(u64, u32)> {
        if i >= self.count {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.count,
            });
        }
        let block = i / self.sample_interval;
        let s = block as usize * 8;
        let mut offset = u64::from_le_bytes(self.samples[s..s + 8].try_into().unwrap());
        for j in block * self.sample_interval..i {
            offset += self.length_at(j);
        }
        Ok((offset, self.length_at(i) as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn ids(v: &[u16]) -> Vec<PostingId> {
        v.iter().map(|&p| PostingId(p)).collect()
    }

    #[test]
    fn bit_sequence_reads_back() {
        let mut bits = BitSequence::new();
        bits.push_bits(0b101, 3);
        bits.push_bit(true);
        bits.push_bits(0xdead_beef, 32);
        bits.push_bits(0, 0);
        bits.push_bits(u64::MAX, 64);
        assert_eq!(bits.bit_len(), 100);
        assert_eq!(bits.read(0, 3).unwrap(), 0b101);
        assert_eq!(bits.read(3, 1).unwrap(), 1);
        assert_eq!(bits.read(4, 32).unwrap(), 0xdead_beef);
        assert_eq!(bits.read(36, 64).unwrap(), u64::MAX);
        assert!(bits.read(90, 11).is_err());
        assert_eq!(bits.as_bytes()[0], 0b1011_1101);
    }

    #[test]
    fn contains_on_example_list() {
        let cfg = ListConfig::new(4).unwrap();
        let list = MutablePostingList::from_postings(cfg, &ids(&[0, 2])).unwrap();
        assert!(list.contains(PostingId(2)).unwrap());
        assert!(!list.contains(PostingId(1)).unwrap());
        assert!(list.contains(PostingId(4)).is_err());
        let empty = MutablePostingList::new(cfg);
        assert!(!empty.contains(PostingId(3)).unwrap());
    }

    #[test]
    fn insert_is_idempotent() {
        let cfg = ListConfig::new(1024).unwrap();
        let mut list = MutablePostingList::new(cfg);
        assert!(list.insert(PostingId(7)).unwrap());
        assert!(!list.insert(PostingId(7)).unwrap());
        assert_eq!(list.len(), 1);
        assert!(list.insert(PostingId(1024)).is_err());
    }

    #[test]
    fn promotion_preserves_content() {
        let cfg = ListConfig::new(1024).unwrap();
        assert_eq!(cfg.promotion_threshold, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut list = MutablePostingList::new(cfg);
        let mut oracle = BTreeSet::new();
        while oracle.len() < 64 {
            let p = rng.gen_range(0..1024u16);
            oracle.insert(p);
            list.insert(PostingId(p)).unwrap();
        }
        assert!(!list.is_bitset());
        let before = list.to_vec();
        let p = (0..1024u16).find(|p| !oracle.contains(p)).unwrap();
        list.insert(PostingId(p)).unwrap();
        oracle.insert(p);
        assert!(list.is_bitset());
        let after = list.to_vec();
        assert_eq!(after, ids(&oracle.iter().copied().collect::<Vec<_>>()));
        assert!(before.iter().all(|p| after.contains(p)));
        assert_eq!(list.postings_hash(), crate::hashing::postings_hash(after));
    }

    #[test]
    fn membership_matches_naive_oracle() {
        let cfg = ListConfig::new(4096).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for target in [10usize, 200, 1500] {
            let mut list = MutablePostingList::new(cfg);
            let mut oracle = BTreeSet::new();
            for _ in 0..target {
                let p = rng.gen_range(0..4096u16);
                assert_eq!(list.insert(PostingId(p)).unwrap(), oracle.insert(p));
            }
            for p in 0..4096u16 {
                assert_eq!(list.contains(PostingId(p)).unwrap(), oracle.contains(&p));
            }
            assert_eq!(list.len(), oracle.len());
        }
    }

    #[test]
    fn equality_helpers() {
        let cfg = ListConfig::new(256).unwrap().with_threshold(2);
        let base = MutablePostingList::from_postings(cfg, &ids(&[1, 5])).unwrap();
        let ext = MutablePostingList::from_postings(cfg, &ids(&[1, 5, 9])).unwrap();
        let other = MutablePostingList::from_postings(cfg, &ids(&[1, 6, 9])).unwrap();
        assert!(ext.equals_extended(&base, PostingId(9)));
        assert!(!other.equals_extended(&base, PostingId(9)));
        let long_base = MutablePostingList::from_postings(cfg, &ids(&[1, 5, 7])).unwrap();
        let long_ext = MutablePostingList::from_postings(cfg, &ids(&[1, 5, 7, 200])).unwrap();
        assert!(long_ext.equals_extended(&long_base, PostingId(200)));
        assert!(!long_ext.equals_extended(&long_base, PostingId(100)));
        assert!(ext.same_postings(&ext.clone()));
        assert!(!ext.same_postings(&other));
    }

    #[test]
    fn bic_degenerate_cases() {
        assert_eq!(bic_encode(&[], 0, 1023).unwrap().bit_len(), 0);
        let full: Vec<PostingId> = (0..1024).map(PostingId).collect();
        assert_eq!(bic_encode(&full, 0, 1023).unwrap().bit_len(), 0);
        let (decoded, used) = bic_decode(&[], 0, 0, 0, 0, 1023).unwrap();
        assert!(decoded.is_empty());
        assert_eq!(used, 0);
        let (decoded, used) = bic_decode(&[], 0, 0, 1024, 0, 1023).unwrap();
        assert_eq!(decoded, full);
        assert_eq!(used, 0);
    }

    #[test]
    fn bic_rejects_bad_input() {
        assert!(matches!(bic_encode(&ids(&[3, 2]), 0, 10), Err(Error::Unsorted)));
        assert!(matches!(bic_encode(&ids(&[2, 2]), 0, 10), Err(Error::Unsorted)));
        assert!(matches!(bic_encode(&ids(&[11]), 0, 10), Err(Error::ValueOutOfRange { .. })));
        assert!(matches!(bic_encode(&ids(&[1]), 2, 10), Err(Error::ValueOutOfRange { .. })));
        assert!(matches!(bic_decode(&[], 0, 0, 12, 0, 10), Err(Error::CountExceedsRange { .. })));
    }

    #[test]
    fn bic_known_encoding() {
        // [1, 5] in [0, 7]: the middle (index 0) is 1 with feasible range [0, 6];
        // 7 values -> k = 3 with one short code, so 1 is written as 1 + 1 in 3 bits
        // ("010"). Then 5 in [2, 7]: offset 3 of 6 values, two short codes, so
        // 3 + 2 in 3 bits ("101").
        let bits = bic_encode(&ids(&[1, 5]), 0, 7).unwrap();
        assert_eq!(bits.bit_len(), 6);
        assert_eq!(bits.read(0, 6).unwrap(), 0b010_101);
    }

    #[test]
    fn bic_clustered_runs_are_small() {
        // only nodes on the run's outer boundary pay for the wide universe
        for start in [0u16, 1000, 40000] {
            let run: Vec<PostingId> = (start..start + 1024).map(PostingId).collect();
            let bits = bic_encode(&run, 0, 65535).unwrap();
            assert!((bits.bit_len() as f64) / 1024.0 < 2.0, "{} bits", bits.bit_len());
        }
    }

    #[test]
    fn bic_round_trip_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stream = BitSequence::new();
        let mut expected = Vec::new();
        for _ in 0..2000 {
            let n = rng.gen_range(0..200);
            let set: BTreeSet<u16> = (0..n).map(|_| rng.gen()).collect();
            let v = ids(&set.iter().copied().collect::<Vec<_>>());
            let at = stream.bit_len();
            bic_encode_into(&mut stream, &v, 0, 65535).unwrap();
            expected.push((at, v));
        }
        for (at, v) in expected {
            let (out, _) = bic_decode(stream.as_bytes(), stream.bit_len(), at, v.len() as u32, 0, 65535).unwrap();
            assert_eq!(out, v);
        }
    }

    #[test]
    fn prefix_sums_basic() {
        let mut b = PrefixSumBuilder::new(3).unwrap();
        let lens = [1u32, 4, 2, 7, 1, 1, 3];
        for &l in &lens {
            b.push(l);
        }
        let enc = b.finish();
        assert_eq!(enc.width, 3);
        let idx = PrefixSumIndex::from_encoded(&enc).unwrap();
        assert_eq!(idx.offset(0).unwrap(), (0, 1));
        let mut running = 0u64;
        for (i, &l) in lens.iter().enumerate() {
            assert_eq!(idx.offset(i as u64).unwrap(), (running, l));
            running += l as u64;
        }
        assert!(idx.offset(7).is_err());
    }

    #[test]
    fn prefix_sums_million_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lens: Vec<u32> = (0..1_000_000).map(|_| rng.gen_range(1..=31)).collect();
        let mut b = PrefixSumBuilder::new(64).unwrap();
        lens.iter().for_each(|&l| b.push(l));
        let enc = b.finish();
        let idx = PrefixSumIndex::from_encoded(&enc).unwrap();
        let mut running = 0u64;
        for (i, &l) in lens.iter().enumerate() {
            let (off, len) = idx.offset(i as u64).unwrap();
            assert_eq!((off, len), (running, l));
            running += l as u64;
        }
    }

    proptest! {
        #[test]
        fn bic_round_trip(set in proptest::collection::btree_set(any::<u16>(), 0..300), pad in 0u32..5) {
            let v = ids(&set.iter().copied().collect::<Vec<_>>());
            let lo = v.first().map_or(0, |p| (p.0 as u32).saturating_sub(pad));
            let hi = v.last().map_or(0, |p| (p.0 as u32 + pad).min(65535)).max(lo);
            let bits = bic_encode(&v, lo, hi).unwrap();
            let (out, used) = bic_decode(bits.as_bytes(), bits.bit_len(), 0, v.len() as u32, lo, hi).unwrap();
            prop_assert_eq!(used, bits.bit_len());
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(out, v);
        }

        #[test]
        fn inserts_track_oracle(ops in proptest::collection::vec(0u16..512, 0..400)) {
            let cfg = ListConfig::new(512).unwrap();
            let mut list = MutablePostingList::new(cfg);
            let mut oracle = BTreeSet::new();
            for p in ops {
                let before = list.len();
                prop_assert_eq!(list.insert(PostingId(p)).unwrap(), oracle.insert(p));
                prop_assert!(list.len() >= before);
            }
            prop_assert_eq!(list.to_vec(), ids(&oracle.iter().copied().collect::<Vec<_>>()));
            prop_assert_eq!(list.postings_hash(), crate::hashing::postings_hash(list.to_vec()));
            prop_assert_eq!(list.is_bitset(), list.len() as u32 > cfg.promotion_threshold);
        }
    }
}
