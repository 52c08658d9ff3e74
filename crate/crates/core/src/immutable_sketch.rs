//! The compact single-file sketch.
//!
//! A minimal perfect hash maps each fingerprint to a slot. Per slot the file
//! stores signature bits (or the full fingerprint for temporary segments) and
//! a variable-width rank code. Ranks order the deduplicated posting lists by
//! popularity, and each list is stored once with interpolative coding.
//!
//! File layout: a fixed header followed by seven sections, each 8-byte
//! aligned, in this order:
//!
//! | section      | contents                                                   |
//! |--------------|------------------------------------------------------------|
//! | mphf         | serialized [`Mphf`]                                        |
//! | signatures   | `b` bits per slot MSB-first, or `u32` LE fingerprints      |
//! | rank lengths | `w` bits per slot: the bit length of each rank code        |
//! | rank samples | `u64` LE absolute bit offset every `sample_interval` slots |
//! | rank bits    | concatenated big-endian rank codes                         |
//! | directory    | per rank: `u64` LE bit offset, `u32` LE cardinality        |
//! | list bits    | interpolative-coded lists over `[0, capacity - 1]`         |
//!
//! Opening a reader parses the header only.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::hashing::{PostingId, TokenFingerprint};
use crate::mphf::{Mphf, MphfView, DEFAULT_GAMMA};
use crate::mutable_sketch::{ListId, MutableSketch, TokenRef};
use crate::postings_codec::{
    bic_decode, bic_encode_into, bit_width, read_bits, BitSequence, PrefixSumBuilder, PrefixSumIndex,
};

pub const MAGIC: [u8; 4] = *b"DWSK";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 156;
pub const FLAG_TEMPORARY: u16 = 1;
pub const FILE_EXTENSION: &str = "dwsk";

const SECTION_COUNT: usize = 7;
const SECTION_NAMES: [&str; SECTION_COUNT] = [
    "mphf",
    "signatures",
    "rank lengths",
    "rank samples",
    "rank bits",
    "list directory",
    "list bits",
];
const DIR_ENTRY_LEN: usize = 12;
const MAX_LISTS: u64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Mphf = 0,
    Signatures = 1,
    RankLengths = 2,
    RankSamples = 3,
    RankBits = 4,
    Directory = 5,
    ListBits = 6,
}

/// Random access to the bytes of one sketch file.
pub trait ByteSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bytes in `range`. Callers stay within `0..len()`.
    fn bytes(&self, range: Range<usize>) -> &[u8];
}

impl<T: AsRef<[u8]> + ?Sized> ByteSource for T {
    fn len(&self) -> usize {
        self.as_ref().len()
    }

    fn bytes(&self, range: Range<usize>) -> &[u8] {
        &self.as_ref()[range]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchConfig {
    /// Signature bits per token, 0..=32. Ignored for temporary sketches.
    pub signature_bits: u8,
    /// Rank-offset sample spacing.
    pub sample_interval: u32,
    /// Store full fingerprints so the sketch can be merged later.
    pub temporary: bool,
}

impl Default for SketchConfig {
    fn default() -> Self {
        SketchConfig {
            signature_bits: 8,
            sample_interval: 64,
            temporary: false,
        }
    }
}

impl SketchConfig {
    pub fn temporary() -> Self {
        SketchConfig {
            temporary: true,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.signature_bits > 32 {
            return Err(Error::InvalidConfig(format!(
                "signature bits {} exceed 32",
                self.signature_bits
            )));
        }
        if self.sample_interval == 0 {
            return Err(Error::InvalidConfig("sample interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchHeader {
    pub version: u16,
    pub flags: u16,
    pub n_tokens: u64,
    pub n_lists: u64,
    pub capacity: u32,
    pub signature_bits: u8,
    pub rank_length_width: u8,
    pub sample_interval: u32,
    /// `(offset, byte length)` per section.
    pub sections: [(u64, u64); SECTION_COUNT],
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SketchHeader {
    pub fn is_temporary(&self) -> bool {
        self.flags & FLAG_TEMPORARY != 0
    }

    pub fn section(&self, s: Section) -> (u64, u64) {
        self.sections[s as usize]
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        let mut at = 0;
        let mut put = |bytes: &[u8]| {
            out[at..at + bytes.len()].copy_from_slice(bytes);
            at += bytes.len();
        };
        put(&MAGIC);
        put(&self.version.to_le_bytes());
        put(&self.flags.to_le_bytes());
        put(&self.n_tokens.to_le_bytes());
        put(&self.n_lists.to_le_bytes());
        put(&self.capacity.to_le_bytes());
        put(&[self.signature_bits, self.rank_length_width, 0, 0]);
        put(&self.sample_interval.to_le_bytes());
        for (off, len) in self.sections {
            put(&off.to_le_bytes());
            put(&len.to_le_bytes());
        }
        let checksum = fnv1a64(&out[..HEADER_LEN - 8]);
        out[HEADER_LEN - 8..].copy_from_slice(&checksum.to_le_bytes());
        out
    }

    /// Parses and validates a header against a file of `file_len` bytes.
    pub fn decode(bytes: &[u8], file_len: u64) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                need: HEADER_LEN as u64,
                have: bytes.len() as u64,
            });
        }
        if bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let u16_at = |at: usize| u16::from_le_bytes(bytes[at..at + 2].try_into().unwrap());
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let stored = u64_at(HEADER_LEN - 8);
        let computed = fnv1a64(&bytes[..HEADER_LEN - 8]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let mut sections = [(0u64, 0u64); SECTION_COUNT];
        for (i, s) in sections.iter_mut().enumerate() {
            *s = (u64_at(36 + 16 * i), u64_at(44 + 16 * i));
        }
        let header = SketchHeader {
            version,
            flags: u16_at(6),
            n_tokens: u64_at(8),
            n_lists: u64_at(16),
            capacity: u32_at(24),
            signature_bits: bytes[28],
            rank_length_width: bytes[29],
            sample_interval: u32_at(32),
            sections,
        };
        header.validate(file_len)?;
        Ok(header)
    }

    fn validate(&self, file_len: u64) -> Result<()> {
        if self.capacity == 0 || self.capacity > 1 << 16 {
            return Err(Error::InvalidCapacity(self.capacity));
        }
        if self.signature_bits > 32 || self.sample_interval == 0 || self.rank_length_width > 32 {
            return Err(Error::Corrupt("bad sketch parameters".into()));
        }
        let mut prev_end = HEADER_LEN as u64;
        for (i, &(off, len)) in self.sections.iter().enumerate() {
            let end = off.checked_add(len);
            match end {
                Some(end) if off >= prev_end && end <= file_len => prev_end = end,
                _ => {
                    return Err(Error::SectionOutOfBounds {
                        section: SECTION_NAMES[i],
                    })
                }
            }
        }
        let n = self.n_tokens;
        let need = |s: Section, bytes: u64| -> Result<()> {
            if self.section(s).1 < bytes {
                Err(Error::SectionOutOfBounds {
                    section: SECTION_NAMES[s as usize],
                })
            } else {
                Ok(())
            }
        };
        let sig_bytes = if self.is_temporary() {
            n * 4
        } else {
            (n * self.signature_bits as u64).div_ceil(8)
        };
        need(Section::Signatures, sig_bytes)?;
        need(Section::RankLengths, (n * self.rank_length_width as u64).div_ceil(8))?;
        need(Section::RankSamples, n.div_ceil(self.sample_interval as u64) * 8)?;
        need(Section::Directory, self.n_lists * DIR_ENTRY_LEN as u64)?;
        if n > 0 && self.rank_length_width == 0 {
            return Err(Error::Corrupt("zero rank length width".into()));
        }
        Ok(())
    }
}

/// Bits used to store `rank`: `ceil(log2(max(rank, 1))) + 1`.
#[inline]
pub fn rank_code_width(rank: u64) -> u32 {
    bit_width(rank.max(1) - 1) + 1
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum ListKey {
    Single(u16),
    Handle(u32),
}

struct RankedList {
    key: ListKey,
    refs: u64,
    postings: Vec<PostingId>,
}

/// Serializes a mutable sketch into the immutable file format.
pub fn build(sketch: &MutableSketch, cfg: &SketchConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    let capacity = sketch.capacity();

    // 1. one list universe: singletons from direct entries plus stored lists
    let mut single_refs = vec![0u64; capacity as usize];
    let mut keys = Vec::with_capacity(sketch.token_count());
    for (fp, r) in sketch.entries() {
        keys.push(fp);
        if let TokenRef::Direct(p) = r {
            single_refs[p.index()] += 1;
        }
    }
    let mut lists: Vec<RankedList> = single_refs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(p, &c)| RankedList {
            key: ListKey::Single(p as u16),
            refs: c,
            postings: vec![PostingId(p as u16)],
        })
        .collect();
    lists.extend(sketch.lists().map(|(h, l)| RankedList {
        key: ListKey::Handle(h),
        refs: l.token_count as u64,
        postings: l.to_vec(),
    }));
    if lists.len() as u64 > MAX_LISTS {
        return Err(Error::TooManyLists(lists.len() as u64));
    }

    // 2. rank by popularity; ties by smallest posting, cardinality, then content
    lists.sort_unstable_by(|a, b| {
        (Reverse(a.refs), a.postings.first(), a.postings.len(), &a.postings).cmp(&(
            Reverse(b.refs),
            b.postings.first(),
            b.postings.len(),
            &b.postings,
        ))
    });
    let rank_of: HashMap<ListKey, u64> = lists
        .iter()
        .enumerate()
        .map(|(rank, l)| (l.key, rank as u64))
        .collect();

    // 3. minimal perfect hash over all fingerprints
    keys.sort_unstable();
    let mphf = Mphf::build(&keys, DEFAULT_GAMMA)?;
    let n = keys.len();
    let mut slot_rank = vec![0u64; n];
    let mut slot_fp = vec![0u32; n];
    for (fp, r) in sketch.entries() {
        let slot = mphf.evaluate(fp).expect("build key must resolve") as usize;
        let key = match r {
            TokenRef::Direct(p) => ListKey::Single(p.0),
            TokenRef::List(h) => ListKey::Handle(h),
            TokenRef::Absent => unreachable!("absent entries are not iterated"),
        };
        slot_rank[slot] = rank_of[&key];
        slot_fp[slot] = fp.0;
    }

    // 4. rank codes + prefix sums
    let mut rank_bits = BitSequence::new();
    let mut prefix = PrefixSumBuilder::new(cfg.sample_interval)?;
    for &rank in &slot_rank {
        let width = rank_code_width(rank);
        rank_bits.push_bits(rank, width);
        prefix.push(width);
    }
    let prefix = prefix.finish();

    // 5. signatures or full fingerprints
    let signature_bits = if cfg.temporary { 32 } else { cfg.signature_bits };
    let signatures = if cfg.temporary {
        slot_fp.iter().flat_map(|fp| fp.to_le_bytes()).collect()
    } else {
        let mut sig = BitSequence::with_capacity(n * signature_bits as usize);
        let mask = low_mask(signature_bits);
        for &fp in &slot_fp {
            sig.push_bits(fp as u64 & mask, signature_bits as u32);
        }
        sig.into_bytes()
    };

    // 6. directory + interpolative-coded lists
    let mut directory = Vec::with_capacity(lists.len() * DIR_ENTRY_LEN);
    let mut list_bits = BitSequence::new();
    for l in &lists {
        directory.extend_from_slice(&list_bits.bit_len().to_le_bytes());
        directory.extend_from_slice(&(l.postings.len() as u32).to_le_bytes());
        bic_encode_into(&mut list_bits, &l.postings, 0, capacity - 1)?;
    }

    let bodies: [Vec<u8>; SECTION_COUNT] = [
        mphf.to_bytes(),
        signatures,
        prefix.lengths,
        prefix.samples,
        rank_bits.into_bytes(),
        directory,
        list_bits.into_bytes(),
    ];
    let mut sections = [(0u64, 0u64); SECTION_COUNT];
    let mut at = HEADER_LEN.next_multiple_of(8);
    for (i, body) in bodies.iter().enumerate() {
        sections[i] = (at as u64, body.len() as u64);
        at = (at + body.len()).next_multiple_of(8);
    }
    let header = SketchHeader {
        version: FORMAT_VERSION,
        flags: if cfg.temporary { FLAG_TEMPORARY } else { 0 },
        n_tokens: n as u64,
        n_lists: lists.len() as u64,
        capacity,
        signature_bits,
        rank_length_width: prefix.width,
        sample_interval: cfg.sample_interval,
        sections,
    };
    let mut out = Vec::with_capacity(at);
    out.extend_from_slice(&header.encode());
    for (i, body) in bodies.iter().enumerate() {
        out.resize(sections[i].0 as usize, 0);
        out.extend_from_slice(body);
    }
    Ok(out)
}

#[inline]
fn low_mask(bits: u8) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Reader over one sketch file. Holds only the parsed header; every
/// lookup reads the sections it needs directly from the byte source.
#[derive(Debug)]
pub struct SketchReader<B> {
    source: B,
    header: SketchHeader,
}

impl<B: ByteSource> SketchReader<B> {
    pub fn open(source: B) -> Result<Self> {
        let len = source.len();
        if len < HEADER_LEN {
            return Err(Error::Truncated {
                need: HEADER_LEN as u64,
                have: len as u64,
            });
        }
        let header = SketchHeader::decode(source.bytes(0..HEADER_LEN), len as u64)?;
        Ok(SketchReader { source, header })
    }

    pub fn header(&self) -> &SketchHeader {
        &self.header
    }

    pub fn source(&self) -> &B {
        &self.source
    }

    pub fn is_temporary(&self) -> bool {
        self.header.is_temporary()
    }

    pub fn token_count(&self) -> u64 {
        self.header.n_tokens
    }

    pub fn list_count(&self) -> u64 {
        self.header.n_lists
    }

    pub fn capacity(&self) -> u32 {
        self.header.capacity
    }

    #[inline]
    fn section(&self, s: Section) -> &[u8] {
        let (off, len) = self.header.section(s);
        self.source.bytes(off as usize..(off + len) as usize)
    }

    fn prefix_index(&self) -> Result<PrefixSumIndex<'_>> {
        PrefixSumIndex::new(
            self.header.rank_length_width,
            self.header.sample_interval,
            self.header.n_tokens,
            self.section(Section::RankLengths),
            self.section(Section::RankSamples),
        )
    }

    fn rank_at(&self, slot: u64) -> Result<u64> {
        let (offset, width) = self.prefix_index()?.offset(slot)?;
        let bits = self.section(Section::RankBits);
        if offset + width as u64 > bits.len() as u64 * 8 || width > 32 {
            return Err(Error::Corrupt(format!("rank code of slot {slot} out of bounds")));
        }
        let rank = read_bits(bits, offset, width);
        if rank >= self.header.n_lists {
            return Err(Error::Corrupt(format!("slot {slot} has rank {rank}")));
        }
        Ok(rank)
    }

    /// Fingerprint stored for `slot` in a temporary sketch.
    fn stored_fingerprint(&self, slot: u64) -> u32 {
        let sig = self.section(Section::Signatures);
        let at = slot as usize * 4;
        u32::from_le_bytes(sig[at..at + 4].try_into().unwrap())
    }

    fn signature_matches(&self, slot: u64, fp: TokenFingerprint) -> bool {
        if self.is_temporary() {
            return self.stored_fingerprint(slot) == fp.0;
        }
        let b = self.header.signature_bits;
        if b == 0 {
            return true;
        }
        let stored = read_bits(self.section(Section::Signatures), slot * b as u64, b as u32);
        stored == fp.0 as u64 & low_mask(b)
    }

    /// Rank (list id) of the list referenced by `fp`, or `None` if the
    /// fingerprint is rejected.
    pub fn is_present(&self, fp: TokenFingerprint) -> Result<Option<u64>> {
        let mphf = MphfView::new(self.section(Section::Mphf))?;
        let slot = match mphf.evaluate(fp) {
            Some(s) if s < self.header.n_tokens => s,
            _ => return Ok(None),
        };
        if !self.signature_matches(slot, fp) {
            return Ok(None);
        }
        self.rank_at(slot).map(Some)
    }

    /// Sorted postings of the list with rank `list_id`.
    pub fn decode_list(&self, list_id: u64) -> Result<Vec<PostingId>> {
        if list_id >= self.header.n_lists {
            return Err(Error::ListIdOutOfRange {
                id: list_id,
                count: self.header.n_lists,
            });
        }
        let dir = self.section(Section::Directory);
        let at = list_id as usize * DIR_ENTRY_LEN;
        let offset = u64::from_le_bytes(dir[at..at + 8].try_into().unwrap());
        let count = u32::from_le_bytes(dir[at + 8..at + 12].try_into().unwrap());
        let bits = self.section(Section::ListBits);
        let (postings, _) = bic_decode(bits, bits.len() as u64 * 8, offset, count, 0, self.header.capacity - 1)?;
        Ok(postings)
    }

    /// `(fingerprint, rank)` for every slot of a temporary sketch.
    pub fn entries(&self) -> Result<Vec<(TokenFingerprint, u64)>> {
        if !self.is_temporary() {
            return Err(Error::NotTemporary);
        }
        (0..self.header.n_tokens)
            .map(|slot| Ok((TokenFingerprint(self.stored_fingerprint(slot)), self.rank_at(slot)?)))
            .collect()
    }

    /// Ranks of all slots, decoded through the prefix-sum index.
    pub fn slot_ranks(&self) -> Result<Vec<u64>> {
        (0..self.header.n_tokens).map(|s| self.rank_at(s)).collect()
    }

    /// Count of slots per rank-code width (index = width in bits).
    pub fn rank_width_histogram(&self) -> Result<Vec<u64>> {
        let index = self.prefix_index()?;
        let mut hist = vec![0u64; 33];
        for slot in 0..self.header.n_tokens {
            let (_, w) = index.offset(slot)?;
            hist[(w as usize).min(32)] += 1;
        }
        while hist.len() > 1 && hist.last() == Some(&0) {
            hist.pop();
        }
        Ok(hist)
    }

    pub fn list_id(&self, fp: TokenFingerprint) -> Result<Option<ListId>> {
        Ok(self.is_present(fp)?.map(ListId))
    }
}

/// Replays temporary sketches into one mutable sketch, as if the input had
/// never been split.
pub fn merge_segments<B: ByteSource>(readers: &[SketchReader<B>]) -> Result<MutableSketch> {
    let capacity = match readers.first() {
        Some(r) => r.capacity(),
        None => return Err(Error::InvalidConfig("no segments to merge".into())),
    };
    for r in readers {
        if !r.is_temporary() {
            return Err(Error::NotTemporary);
        }
        if r.capacity() != capacity {
            return Err(Error::CapacityMismatch(capacity, r.capacity()));
        }
    }
    let mut sketch = MutableSketch::new(capacity)?;
    for r in readers {
        let mut by_rank: Vec<Vec<TokenFingerprint>> = vec![Vec::new(); r.list_count() as usize];
        for (fp, rank) in r.entries()? {
            by_rank[rank as usize].push(fp);
        }
        for (rank, fps) in by_rank.iter().enumerate() {
            if fps.is_empty() {
                continue;
            }
            let postings = r.decode_list(rank as u64)?;
            for &fp in fps {
                for &p in &postings {
                    sketch.add(fp, p)?;
                }
            }
        }
    }
    Ok(sketch)
}
