//! Shared fixtures for the criterion benches.

use std::path::Path;

use dynawarp_core::corpus::{generate, Corpus, CorpusConfig};
use dynawarp_core::logstore::tokenize;
use dynawarp_core::{fingerprint, MutableSketch, PostingId, Segment, SegmentWriter, StoreConfig, TokenFingerprint};

pub fn corpus(lines: usize) -> Corpus {
    generate(&CorpusConfig {
        lines,
        ..CorpusConfig::default()
    })
}

/// (fingerprint, posting) pairs in ingest order, one posting per `batch_lines` lines.
pub fn postings(corpus: &Corpus, batch_lines: usize) -> Vec<(TokenFingerprint, PostingId)> {
    let mut out = Vec::new();
    for (i, line) in corpus.lines.iter().enumerate() {
        let p = PostingId((i / batch_lines) as u16);
        out.extend(tokenize(line.as_bytes()).iter().map(|t| (fingerprint(t).unwrap(), p)));
    }
    out
}

pub fn mutable_sketch(pairs: &[(TokenFingerprint, PostingId)]) -> MutableSketch {
    let mut sketch = MutableSketch::new(1 << 16).unwrap();
    for &(fp, p) in pairs {
        sketch.add(fp, p).unwrap();
    }
    sketch
}

pub fn segment(dir: &Path, corpus: &Corpus) -> Segment {
    let mut w = SegmentWriter::create(dir.join("seg"), StoreConfig::default()).unwrap();
    for l in &corpus.lines {
        w.ingest(l.as_bytes()).unwrap();
    }
    w.finish().unwrap().0
}
