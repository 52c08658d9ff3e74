//! Log store built on the sketch.
//!
//! Lines are appended to batches; each batch is one posting. Sealed batches
//! are compressed into the segment's data file while every token of every
//! line goes into a mutable sketch. Finishing a segment writes the immutable
//! sketch and the batch manifest. Queries intersect token posting sets to
//! find candidate batches, then decompress and post-filter only those.

mod bmh;
mod manifest;
mod segment;
mod tokenize;
mod writer;

pub use bmh::Finder;
pub use manifest::{BatchEntry, Codec, Manifest, MANIFEST_MAGIC, MANIFEST_VERSION};
pub use segment::{
    map_file, split_batch, FileBytes, LineMatch, PlanMode, QueryKind, QueryOutcome, QueryPlan, Segment,
    BATCHES_FILE, MANIFEST_FILE, SKETCH_FILE,
};
pub use tokenize::{
    class_of, contains_grams, contains_grams_with, is_aligned, term_tokens, term_tokens_with, tokenize, CharClass,
    TokenRules, Tokenizer, COMPOSITE_SEPARATORS,
};
pub use writer::{partial_path, IngestStats, SegmentWriter, StoreConfig};
