//! Finished segments: candidate pruning through the sketch, exact
//! post-filtering, and the full-scan baseline.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use memmap2::Mmap;

use crate::error::{Error, Result};
use crate::hashing::{hash_bytes, PostingId, TokenFingerprint};
use crate::immutable_sketch::SketchReader;
use crate::query::{execute, IntersectConsumer};

use super::bmh::Finder;
use super::manifest::{Codec, Manifest};
use super::tokenize::{contains_grams_with, is_aligned, term_tokens_with};

pub const MANIFEST_FILE: &str = "manifest.dwm";
pub const BATCHES_FILE: &str = "batches.dwb";
pub const SKETCH_FILE: &str = "sketch.dwsk";

/// Read-only file contents. Empty files cannot be mapped and are held inline.
#[derive(Debug)]
pub enum FileBytes {
    Mapped(Mmap),
    Owned(Vec<u8>),
}

impl AsRef<[u8]> for FileBytes {
    fn as_ref(&self) -> &[u8] {
        match self {
            FileBytes::Mapped(m) => m,
            FileBytes::Owned(v) => v,
        }
    }
}

pub fn map_file(path: &Path) -> Result<FileBytes> {
    let file = File::open(path)?;
    if file.metadata()?.len() == 0 {
        return Ok(FileBytes::Owned(Vec::new()));
    }
    // SAFETY: segment files are never modified after they are published.
    let map = unsafe { Mmap::map(&file)? };
    Ok(FileBytes::Mapped(map))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMode {
    /// Whole-token match; candidates from the term's tokens.
    Term,
    /// Substring match; candidates from grams inside the needle.
    Contains,
    /// Substring match over every batch.
    Scan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryPlan {
    pub mode: PlanMode,
    /// Tokens whose posting sets are intersected.
    pub grams: Vec<Vec<u8>>,
    /// Post-filter needle, ASCII-lowercased.
    pub needle: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryKind {
    Term,
    Contains,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineMatch {
    pub posting: PostingId,
    /// Line index inside the batch.
    pub line_no: u32,
    pub line: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryOutcome {
    pub plan: QueryPlan,
    /// Batches the sketch could not rule out.
    pub candidates: usize,
    pub decompressed: usize,
    /// Candidate batches without a single match.
    pub false_positive_batches: usize,
    pub matches: Vec<LineMatch>,
}

enum Matcher {
    Substring(Finder),
    WholeToken(Finder),
}

impl Matcher {
    fn for_plan(plan: &QueryPlan) -> Self {
        let finder = Finder::new(&plan.needle);
        match plan.mode {
            PlanMode::Term => Matcher::WholeToken(finder),
            PlanMode::Contains | PlanMode::Scan => Matcher::Substring(finder),
        }
    }

    /// Calls `hit` for each matching line of a newline-joined batch.
    fn scan(&self, batch: &[u8], mut hit: impl FnMut(u32, &[u8])) {
        let (finder, whole) = match self {
            Matcher::Substring(f) => (f, false),
            Matcher::WholeToken(f) => (f, true),
        };
        let m = finder.needle().len();
        if m == 0 || finder.needle().contains(&b'\n') {
            return;
        }
        let mut line_no = 0u32;
        let mut line_start = 0usize;
        let mut from = 0usize;
        while let Some(at) = finder.find(batch, from) {
            line_no += count_newlines(&batch[line_start..at]);
            line_start = batch[..at].iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            let line_end = batch[at..].iter().position(|&b| b == b'\n').map_or(batch.len(), |i| at + i);
            let line = &batch[line_start..line_end];
            if !whole || is_aligned(line, at - line_start, at - line_start + m) {
                hit(line_no, line);
                if line_end == batch.len() {
                    return;
                }
                line_no += 1;
                line_start = line_end + 1;
                from = line_start;
            } else {
                from = at + 1;
            }
        }
    }
}

fn count_newlines(bytes: &[u8]) -> u32 {
    bytes.iter().filter(|&&b| b == b'\n').count() as u32
}

/// Splits a newline-joined batch into `line_count` lines.
pub fn split_batch(batch: &[u8], line_count: u32) -> Vec<&[u8]> {
    let lines: Vec<&[u8]> = batch.split(|&b| b == b'\n').collect();
    debug_assert_eq!(lines.len(), line_count as usize);
    lines
}

fn fingerprints(tokens: &[Vec<u8>]) -> Vec<TokenFingerprint> {
    tokens.iter().map(|t| TokenFingerprint(hash_bytes(t) as u32)).collect()
}

/// Immutable segment opened from its directory.
#[derive(Debug)]
pub struct Segment {
    dir: PathBuf,
    manifest: Manifest,
    data: FileBytes,
    sketch: SketchReader<FileBytes>,
    decompressions: AtomicU64,
}

impl Segment {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let data = map_file(&dir.join(BATCHES_FILE))?;
        let manifest = Manifest::decode(&fs::read(dir.join(MANIFEST_FILE))?, data.as_ref().len() as u64)?;
        let sketch = SketchReader::open(map_file(&dir.join(SKETCH_FILE))?)?;
        if sketch.capacity() != manifest.capacity {
            return Err(Error::CapacityMismatch(manifest.capacity, sketch.capacity()));
        }
        Ok(Segment {
            dir,
            manifest,
            data,
            sketch,
            decompressions: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn sketch(&self) -> &SketchReader<FileBytes> {
        &self.sketch
    }

    pub fn batch_count(&self) -> usize {
        self.manifest.batches.len()
    }

    pub fn line_count(&self) -> u64 {
        self.manifest.line_count()
    }

    /// Size of the batch data file.
    pub fn data_bytes(&self) -> u64 {
        self.data.as_ref().len() as u64
    }

    /// Size of the sketch file.
    pub fn sketch_bytes(&self) -> u64 {
        self.sketch.source().as_ref().len() as u64
    }

    /// Batches decompressed since the segment was opened.
    pub fn decompressions(&self) -> u64 {
        self.decompressions.load(Ordering::Relaxed)
    }

    /// Decompressed, newline-joined lines of batch `p`.
    pub fn read_batch(&self, p: PostingId) -> Result<Vec<u8>> {
        let entry = self.manifest.batches.get(p.index()).ok_or(Error::PostingOutOfRange {
            posting: p.0 as u32,
            capacity: self.batch_count() as u32,
        })?;
        let start = entry.offset as usize;
        let raw = &self.data.as_ref()[start..start + entry.compressed_len as usize];
        self.decompressions.fetch_add(1, Ordering::Relaxed);
        let out = match self.manifest.codec {
            Codec::None => raw.to_vec(),
            Codec::Zstd => zstd::bulk::decompress(raw, entry.uncompressed_len as usize)?,
        };
        if out.len() != entry.uncompressed_len as usize || count_newlines(&out) + 1 != entry.line_count {
            return Err(Error::Corrupt(format!("batch {} does not match its manifest entry", p.0)));
        }
        Ok(out)
    }

    pub fn batch_lines(&self, p: PostingId) -> Result<Vec<Vec<u8>>> {
        let batch = self.read_batch(p)?;
        Ok(split_batch(&batch, self.manifest.batches[p.index()].line_count)
            .into_iter()
            .map(<[u8]>::to_vec)
            .collect())
    }

    pub fn plan_term(&self, term: &[u8]) -> Result<QueryPlan> {
        if term.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(QueryPlan {
            mode: PlanMode::Term,
            grams: term_tokens_with(self.manifest.token_rules, term).into_iter().collect(),
            needle: term.to_ascii_lowercase(),
        })
    }

    pub fn plan_contains(&self, needle: &[u8]) -> Result<QueryPlan> {
        if needle.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let grams: Vec<Vec<u8>> = contains_grams_with(self.manifest.token_rules, needle).into_iter().collect();
        Ok(QueryPlan {
            mode: if grams.is_empty() { PlanMode::Scan } else { PlanMode::Contains },
            grams,
            needle: needle.to_ascii_lowercase(),
        })
    }

    pub fn plan_scan(&self, needle: &[u8]) -> Result<QueryPlan> {
        if needle.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(QueryPlan {
            mode: PlanMode::Scan,
            grams: Vec::new(),
            needle: needle.to_ascii_lowercase(),
        })
    }

    /// Batches that may hold a match.
    pub fn candidates(&self, plan: &QueryPlan) -> Result<Vec<PostingId>> {
        let all = || (0..self.batch_count() as u16).map(PostingId).collect();
        if plan.mode == PlanMode::Scan || plan.grams.is_empty() {
            return Ok(all());
        }
        let mut consumer = IntersectConsumer::default();
        execute(&self.sketch, &fingerprints(&plan.grams), &mut consumer)?;
        let postings = consumer.into_result();
        if let Some(p) = postings.iter().find(|p| p.index() >= self.batch_count()) {
            return Err(Error::Corrupt(format!("sketch references unknown batch {}", p.0)));
        }
        Ok(postings)
    }

    /// Runs `plan`. `collect` controls whether matching lines are kept.
    pub fn run(&self, plan: &QueryPlan, collect: bool) -> Result<(QueryOutcome, u64)> {
        let candidates = self.candidates(plan)?;
        let matcher = Matcher::for_plan(plan);
        let mut matches = Vec::new();
        let mut total = 0u64;
        let mut false_positive_batches = 0;
        for &p in &candidates {
            let batch = self.read_batch(p)?;
            let mut hits = 0u64;
            matcher.scan(&batch, |line_no, line| {
                hits += 1;
                if collect {
                    matches.push(LineMatch {
                        posting: p,
                        line_no,
                        line: line.to_vec(),
                    });
                }
            });
            if hits == 0 {
                false_positive_batches += 1;
            }
            total += hits;
        }
        let outcome = QueryOutcome {
            plan: plan.clone(),
            candidates: candidates.len(),
            decompressed: candidates.len(),
            false_positive_batches,
            matches,
        };
        Ok((outcome, total))
    }

    fn run_collect(&self, plan: QueryPlan) -> Result<QueryOutcome> {
        Ok(self.run(&plan, true)?.0)
    }

    /// Lines holding `term` as a whole token.
    pub fn query_term(&self, term: &[u8]) -> Result<QueryOutcome> {
        self.run_collect(self.plan_term(term)?)
    }

    /// Lines holding `needle` as a substring.
    pub fn query_contains(&self, needle: &[u8]) -> Result<QueryOutcome> {
        self.run_collect(self.plan_contains(needle)?)
    }

    /// Substring search over every batch without consulting the sketch.
    pub fn scan_query(&self, needle: &[u8]) -> Result<QueryOutcome> {
        self.run_collect(self.plan_scan(needle)?)
    }

    /// Whole-token search over every batch without consulting the sketch.
    pub fn scan_term(&self, term: &[u8]) -> Result<QueryOutcome> {
        let mut plan = self.plan_term(term)?;
        plan.grams.clear();
        self.run_collect(plan)
    }

    pub fn plan(&self, kind: QueryKind, text: &[u8]) -> Result<QueryPlan> {
        match kind {
            QueryKind::Term => self.plan_term(text),
            QueryKind::Contains => self.plan_contains(text),
        }
    }

    /// Candidate batches without a true match, over all batches.
    pub fn error_rate(&self, needle: &[u8], kind: QueryKind) -> Result<f64> {
        if self.batch_count() == 0 {
            return Ok(0.0);
        }
        let plan = self.plan(kind, needle)?;
        let (outcome, _) = self.run(&plan, false)?;
        Ok(outcome.false_positive_batches as f64 / self.batch_count() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines_of(m: &Matcher, batch: &str) -> Vec<(u32, String)> {
        let mut out = Vec::new();
        m.scan(batch.as_bytes(), |n, l| out.push((n, String::from_utf8(l.to_vec()).unwrap())));
        out
    }

    #[test]
    fn substring_scan_reports_each_line_once() {
        let m = Matcher::Substring(Finder::new(b"ab"));
        assert_eq!(
            lines_of(&m, "xab ab\nno\nAB\n\nzzab"),
            vec![(0, "xab ab".into()), (2, "AB".into()), (4, "zzab".into())]
        );
        assert!(lines_of(&m, "").is_empty());
        assert!(lines_of(&Matcher::Substring(Finder::new(b"a\nb")), "a\nb").is_empty());
    }

    #[test]
    fn whole_token_scan_needs_alignment() {
        let m = Matcher::WholeToken(Finder::new(b"info"));
        assert_eq!(
            lines_of(&m, "infos\nxinfo info\n[INFO]\ninformation"),
            vec![(1, "xinfo info".into()), (2, "[INFO]".into())]
        );
        // line edges count as boundaries even for symbol-led terms
        let m = Matcher::WholeToken(Finder::new(b"-x"));
        assert_eq!(lines_of(&m, "a\n-x\n--x"), vec![(1, "-x".into())]);
    }
}
