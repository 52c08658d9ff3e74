//! Segment ingestion.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{debug, info};

use crate::error::{Error, Result};
use crate::hashing::{hash_bytes, PostingId, TokenFingerprint};
use crate::immutable_sketch::{self, merge_segments, SketchConfig, SketchReader};
use crate::mutable_sketch::MutableSketch;

use super::manifest::{BatchEntry, Codec, Manifest};
use super::segment::{map_file, Segment, BATCHES_FILE, MANIFEST_FILE, SKETCH_FILE};
use super::tokenize::{TokenRules, Tokenizer};

const PARTIAL_SUFFIX: &str = "partial";

#[derive(Clone, Debug, PartialEq)]
pub struct StoreConfig {
    /// Maximum batches per segment, at most 2^16.
    pub capacity: u32,
    /// A batch seals once it holds this many lines.
    pub batch_lines: u32,
    /// A batch seals once its uncompressed size reaches this many bytes.
    pub batch_bytes: usize,
    pub signature_bits: u8,
    pub sample_interval: u32,
    /// Flush the mutable sketch to a temporary file when its estimated size
    /// reaches this many bytes.
    pub memory_limit: Option<usize>,
    /// Keep one open batch per source.
    pub group_by_source: bool,
    /// Open batches kept when grouping; the least recently used one seals first.
    pub max_open_batches: usize,
    pub codec: Codec,
    pub zstd_level: i32,
    pub token_rules: TokenRules,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            capacity: 1 << 16,
            batch_lines: 1024,
            batch_bytes: 256 * 1024,
            signature_bits: 8,
            sample_interval: 64,
            memory_limit: None,
            group_by_source: false,
            max_open_batches: 16,
            codec: Codec::Zstd,
            zstd_level: 3,
            token_rules: TokenRules::Full,
        }
    }
}

impl StoreConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.capacity == 0 || self.capacity > 1 << 16 {
            return Err(Error::InvalidCapacity(self.capacity));
        }
        if self.batch_lines == 0 {
            return bad("batch line limit must be positive");
        }
        if self.batch_bytes == 0 || self.batch_bytes > u32::MAX as usize / 2 {
            return bad("batch byte limit out of range");
        }
        if self.signature_bits > 32 {
            return bad("signature bits exceed 32");
        }
        if self.sample_interval == 0 {
            return bad("sample interval must be positive");
        }
        if self.max_open_batches == 0 {
            return bad("at least one open batch is required");
        }
        if matches!(self.memory_limit, Some(0)) {
            return bad("memory limit must be positive");
        }
        if !zstd::compression_level_range().contains(&self.zstd_level) {
            return bad("zstd level out of range");
        }
        Ok(())
    }

    fn sketch_config(&self, temporary: bool) -> SketchConfig {
        SketchConfig {
            signature_bits: self.signature_bits,
            sample_interval: self.sample_interval,
            temporary,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestStats {
    pub lines: u64,
    pub batches: u64,
    pub uncompressed_bytes: u64,
    pub compressed_bytes: u64,
    pub sketch_bytes: u64,
    pub flushes: u64,
    pub tokens: u64,
    /// Deduplicated lists with at least two postings.
    pub lists: u64,
    /// Lists in the sketch file, singletons included.
    pub stored_lists: u64,
    /// `1 - lists / tokens referencing a list`.
    pub dedup_ratio: f64,
    pub ingest_secs: f64,
    pub sketch_finish_secs: f64,
    pub data_finish_secs: f64,
}

#[derive(Debug)]
struct OpenBatch {
    source: Option<String>,
    posting: PostingId,
    buf: Vec<u8>,
    lines: u32,
}

/// Builds one segment. Files are written under `<dir>.partial` and renamed
/// to `<dir>` by [`SegmentWriter::finish`].
pub struct SegmentWriter {
    dir: PathBuf,
    work_dir: PathBuf,
    config: StoreConfig,
    sketch: MutableSketch,
    tokenizer: Tokenizer,
    fps: Vec<TokenFingerprint>,
    /// Least recently used first.
    open: Vec<OpenBatch>,
    data: BufWriter<File>,
    data_len: u64,
    entries: Vec<Option<BatchEntry>>,
    compressor: zstd::bulk::Compressor<'static>,
    temp_sketches: Vec<PathBuf>,
    stats: IngestStats,
    ingest_time: Duration,
}

impl std::fmt::Debug for SegmentWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegmentWriter")
            .field("dir", &self.dir)
            .field("batches", &self.entries.len())
            .field("lines", &self.stats.lines)
            .finish_non_exhaustive()
    }
}

pub fn partial_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(PARTIAL_SUFFIX);
    dir.with_file_name(name)
}

impl SegmentWriter {
    /// Starts a segment at `dir`, which must not exist yet.
    pub fn create(dir: impl AsRef<Path>, config: StoreConfig) -> Result<Self> {
        config.validate()?;
        let dir = dir.as_ref().to_path_buf();
        if dir.exists() {
            return Err(Error::InvalidConfig(format!("{} already exists", dir.display())));
        }
        let work_dir = partial_path(&dir);
        if work_dir.exists() {
            fs::remove_dir_all(&work_dir)?;
        }
        fs::create_dir_all(&work_dir)?;
        let data = BufWriter::new(File::create(work_dir.join(BATCHES_FILE))?);
        let compressor = zstd::bulk::Compressor::new(config.zstd_level)?;
        Ok(SegmentWriter {
            sketch: MutableSketch::new(config.capacity)?,
            dir,
            work_dir,
            config,
            tokenizer: Tokenizer::new(),
            fps: Vec::new(),
            open: Vec::new(),
            data,
            data_len: 0,
            entries: Vec::new(),
            compressor,
            temp_sketches: Vec::new(),
            stats: IngestStats::default(),
            ingest_time: Duration::ZERO,
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// The in-memory sketch since the last flush.
    pub fn sketch(&self) -> &MutableSketch {
        &self.sketch
    }

    pub fn lines(&self) -> u64 {
        self.stats.lines
    }

    /// Postings handed out so far, including open batches.
    pub fn batch_count(&self) -> usize {
        self.entries.len()
    }

    pub fn flushes(&self) -> u64 {
        self.stats.flushes
    }

    pub fn ingest(&mut self, line: &[u8]) -> Result<()> {
        self.ingest_from(None, line)
    }

    /// Appends a line. Embedded newlines split it into several records.
    /// Fails with [`Error::SegmentFull`] before touching any state when the
    /// record needs a new batch and every posting is taken.
    pub fn ingest_from(&mut self, source: Option<&str>, line: &[u8]) -> Result<()> {
        let start = Instant::now();
        let res = if line.contains(&b'\n') {
            line.split(|&b| b == b'\n').try_for_each(|piece| self.ingest_one(source, piece))
        } else {
            self.ingest_one(source, line)
        };
        self.ingest_time += start.elapsed();
        res
    }

    fn ingest_one(&mut self, source: Option<&str>, line: &[u8]) -> Result<()> {
        let key = if self.config.group_by_source { source } else { None };
        let idx = match self.open.iter().position(|b| b.source.as_deref() == key) {
            Some(i) => {
                let b = self.open.remove(i);
                self.open.push(b);
                self.open.len() - 1
            }
            None => {
                if self.entries.len() as u32 >= self.config.capacity {
                    return Err(Error::SegmentFull(self.config.capacity));
                }
                if self.open.len() >= self.config.max_open_batches {
                    self.seal(0)?;
                }
                let posting = PostingId(self.entries.len() as u16);
                self.entries.push(None);
                self.open.push(OpenBatch {
                    source: key.map(str::to_owned),
                    posting,
                    buf: Vec::new(),
                    lines: 0,
                });
                self.open.len() - 1
            }
        };

        let batch = &mut self.open[idx];
        if batch.lines > 0 {
            batch.buf.push(b'\n');
        }
        batch.buf.extend_from_slice(line);
        batch.lines += 1;
        let posting = batch.posting;
        let full = batch.lines >= self.config.batch_lines || batch.buf.len() >= self.config.batch_bytes;
        self.stats.lines += 1;

        self.fps.clear();
        let fps = &mut self.fps;
        self.tokenizer
            .for_each_token_with(self.config.token_rules, line, |t| fps.push(TokenFingerprint(hash_bytes(t) as u32)));
        self.fps.sort_unstable();
        self.fps.dedup();
        for &fp in &self.fps {
            self.sketch.add(fp, posting)?;
        }

        if full {
            self.seal(idx)?;
        }
        if let Some(limit) = self.config.memory_limit {
            if self.sketch.estimate_memory() >= limit {
                self.flush_sketch()?;
            }
        }
        Ok(())
    }

    fn seal(&mut self, idx: usize) -> Result<()> {
        let batch = self.open.remove(idx);
        let payload = match self.config.codec {
            Codec::Zstd => self.compressor.compress(&batch.buf)?,
            Codec::None => batch.buf.clone(),
        };
        self.data.write_all(&payload)?;
        self.entries[batch.posting.index()] = Some(BatchEntry {
            offset: self.data_len,
            compressed_len: payload.len() as u32,
            uncompressed_len: batch.buf.len() as u32,
            line_count: batch.lines,
        });
        self.data_len += payload.len() as u64;
        Ok(())
    }

    fn flush_sketch(&mut self) -> Result<()> {
        if self.sketch.is_empty() {
            return Ok(());
        }
        let bytes = immutable_sketch::build(&self.sketch, &self.config.sketch_config(true))?;
        let path = self
            .work_dir
            .join(format!(".tmp-sketch-{}.{}", self.temp_sketches.len(), immutable_sketch::FILE_EXTENSION));
        fs::write(&path, &bytes)?;
        debug!(
            "flushed {} tokens ({} bytes) to {}",
            self.sketch.token_count(),
            bytes.len(),
            path.display()
        );
        self.temp_sketches.push(path);
        self.sketch = MutableSketch::new(self.config.capacity)?;
        self.stats.flushes += 1;
        Ok(())
    }

    /// Seals open batches, writes the sketch and manifest, and publishes the
    /// segment directory.
    pub fn finish(mut self) -> Result<(Segment, IngestStats)> {
        let data_start = Instant::now();
        while !self.open.is_empty() {
            self.seal(0)?;
        }
        self.data.flush()?;
        self.data.get_ref().sync_all()?;
        let manifest = Manifest {
            codec: self.config.codec,
            token_rules: self.config.token_rules,
            capacity: self.config.capacity,
            batches: self
                .entries
                .iter()
                .map(|e| e.expect("every handed-out posting is sealed"))
                .collect(),
        };
        fs::write(self.work_dir.join(MANIFEST_FILE), manifest.encode())?;
        let data_secs = data_start.elapsed().as_secs_f64();

        let sketch_start = Instant::now();
        let merged;
        let sketch = if self.temp_sketches.is_empty() {
            &self.sketch
        } else {
            self.flush_sketch()?;
            let maps = self
                .temp_sketches
                .iter()
                .map(|p| map_file(p))
                .collect::<Result<Vec<_>>>()?;
            let readers = maps
                .into_iter()
                .map(SketchReader::open)
                .collect::<Result<Vec<_>>>()?;
            merged = merge_segments(&readers)?;
            &merged
        };
        let stats = sketch.stats();
        let bytes = immutable_sketch::build(sketch, &self.config.sketch_config(false))?;
        fs::write(self.work_dir.join(SKETCH_FILE), &bytes)?;
        for p in &self.temp_sketches {
            fs::remove_file(p)?;
        }
        let sketch_secs = sketch_start.elapsed().as_secs_f64();

        fs::rename(&self.work_dir, &self.dir)?;
        let segment = Segment::open(&self.dir)?;
        let out = IngestStats {
            lines: self.stats.lines,
            batches: manifest.batches.len() as u64,
            uncompressed_bytes: manifest.uncompressed_bytes(),
            compressed_bytes: manifest.compressed_bytes(),
            sketch_bytes: bytes.len() as u64,
            flushes: self.stats.flushes,
            tokens: stats.token_count as u64,
            lists: stats.list_count as u64,
            stored_lists: segment.sketch().list_count(),
            dedup_ratio: stats.dedup_ratio,
            ingest_secs: self.ingest_time.as_secs_f64(),
            sketch_finish_secs: sketch_secs,
            data_finish_secs: data_secs,
        };
        info!(
            "segment {}: {} lines, {} batches, {} tokens, {} lists",
            self.dir.display(),
            out.lines,
            out.batches,
            out.tokens,
            out.lists
        );
        Ok((segment, out))
    }
}
