use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty token")]
    EmptyToken,
    #[error("empty query")]
    EmptyQuery,
    #[error("posting {posting} out of range for capacity {capacity}")]
    PostingOutOfRange { posting: u32, capacity: u32 },
    #[error("invalid capacity {0}: must be in 1..=65536")]
    InvalidCapacity(u32),
    #[error("list arena exhausted ({0} handles)")]
    ArenaExhausted(u32),
    #[error("too many posting lists for the rank code ({0})")]
    TooManyLists(u64),
    #[error("duplicate key {0:#010x}")]
    DuplicateKey(u32),
    #[error("postings are not strictly ascending")]
    Unsorted,
    #[error("value {value} outside range [{lo}, {hi}]")]
    ValueOutOfRange { value: u32, lo: u32, hi: u32 },
    #[error("{count} values cannot fit into range [{lo}, {hi}]")]
    CountExceedsRange { count: u32, lo: u32, hi: u32 },
    #[error("bit read past end of sequence (offset {offset}, length {len})")]
    BitsExhausted { offset: u64, len: u64 },
    #[error("entry index {index} out of range ({count} entries)")]
    IndexOutOfRange { index: u64, count: u64 },
    #[error("list id {id} out of range ({count} lists)")]
    ListIdOutOfRange { id: u64, count: u64 },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("header checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("file truncated: need {need} bytes, have {have}")]
    Truncated { need: u64, have: u64 },
    #[error("section {section} out of bounds")]
    SectionOutOfBounds { section: &'static str },
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("segment is not a temporary segment")]
    NotTemporary,
    #[error("capacity mismatch between segments ({0} vs {1})")]
    CapacityMismatch(u32, u32),
    #[error("segment full: all {0} postings in use")]
    SegmentFull(u32),
    #[error("store already finished")]
    Finished,
    #[error(transparent)]
    Io(#[from] io::Error),
}
