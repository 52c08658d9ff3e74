//! Multi-set multi-membership sketches for log search.
//!
//! A sketch maps every token to the set of batches (postings) containing it.
//! [`MutableSketch`] accepts inserts and deduplicates identical posting lists;
//! [`immutable_sketch::build`] freezes it into a compact file read through
//! [`SketchReader`]. [`logstore`] puts a segment store and query planner on top.

pub mod corpus;
mod error;
pub mod hashing;
pub mod immutable_sketch;
pub mod logstore;
pub mod mphf;
pub mod mutable_sketch;
pub mod postings_codec;
pub mod query;

pub use error::{Error, Result};
pub use hashing::{fingerprint, PostingId, PostingsHash, TokenFingerprint};
pub use immutable_sketch::{merge_segments, ByteSource, SketchConfig, SketchHeader, SketchReader};
pub use mphf::Mphf;
pub use mutable_sketch::{ListId, MutableSketch, SketchStats, TokenRef};
pub use postings_codec::{ListConfig, MutablePostingList};
pub use query::{execute, intersect_all, union_all, PostingsConsumer, SketchView};
pub use logstore::{Segment, SegmentWriter, StoreConfig};
