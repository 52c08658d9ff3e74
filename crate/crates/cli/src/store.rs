//! A store is a directory of segments `seg-00000`, `seg-00001`, ...; a path
//! holding a manifest is treated as a single segment.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dynawarp_core::logstore::{IngestStats, MANIFEST_FILE};
use dynawarp_core::{Error, Segment, SegmentWriter, StoreConfig};
use serde::Serialize;

const SEGMENT_PREFIX: &str = "seg-";

fn segment_index(name: &str) -> Option<u32> {
    let digits = name.strip_prefix(SEGMENT_PREFIX)?;
    if digits.len() != 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn segment_dirs(store: &Path) -> Result<Vec<PathBuf>> {
    if store.join(MANIFEST_FILE).is_file() {
        return Ok(vec![store.to_path_buf()]);
    }
    if !store.is_dir() {
        bail!("no store at {}", store.display());
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(store).with_context(|| format!("listing {}", store.display()))? {
        let entry = entry?;
        if let Some(i) = entry.file_name().to_str().and_then(segment_index) {
            found.push((i, entry.path()));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn open_segments(store: &Path) -> Result<Vec<(String, Segment)>> {
    segment_dirs(store)?
        .into_iter()
        .map(|dir| {
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let seg = Segment::open(&dir).with_context(|| format!("opening segment {}", dir.display()))?;
            Ok((name, seg))
        })
        .collect()
}

/// Input records: raw line bytes with an optional source id.
pub struct Records {
    inner: Box<dyn BufRead>,
    source_tab: bool,
    buf: Vec<u8>,
}

pub struct Record {
    pub source: Option<String>,
    pub line: Vec<u8>,
}

impl Records {
    pub fn open(input: Option<&Path>, source_tab: bool) -> Result<Self> {
        let inner: Box<dyn BufRead> = match input {
            None => Box::new(BufReader::new(io::stdin())),
            Some(p) if p == Path::new("-") => Box::new(BufReader::new(io::stdin())),
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening input {}", p.display()))?;
                Box::new(BufReader::with_capacity(1 << 20, f))
            }
        };
        Ok(Records {
            inner,
            source_tab,
            buf: Vec::new(),
        })
    }
}

impl Iterator for Records {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.inner.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                if self.buf.last() == Some(&b'\n') {
                    self.buf.pop();
                }
                let tab = if self.source_tab {
                    self.buf.iter().position(|&b| b == b'\t')
                } else {
                    None
                };
                Some(Ok(match tab {
                    Some(t) => Record {
                        source: Some(String::from_utf8_lossy(&self.buf[..t]).into_owned()),
                        line: self.buf[t + 1..].to_vec(),
                    },
                    None => Record {
                        source: None,
                        line: self.buf.clone(),
                    },
                }))
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    pub segment: String,
    pub lines: u64,
    pub batches: u64,
    pub compressed_bytes: u64,
    pub sketch_bytes: u64,
    pub tokens: u64,
    pub lists: u64,
    pub dedup_ratio: f64,
    pub flushes: u64,
    pub ingest_secs: f64,
    pub sketch_finish_secs: f64,
    pub data_finish_secs: f64,
}

impl SegmentReport {
    pub const HEADER: [&'static str; 12] = [
        "segment",
        "lines",
        "batches",
        "compressed_bytes",
        "sketch_bytes",
        "tokens",
        "lists",
        "dedup_ratio",
        "flushes",
        "ingest_s",
        "sketch_finish_s",
        "data_finish_s",
    ];

    fn new(segment: String, s: &IngestStats) -> Self {
        SegmentReport {
            segment,
            lines: s.lines,
            batches: s.batches,
            compressed_bytes: s.compressed_bytes,
            sketch_bytes: s.sketch_bytes,
            tokens: s.tokens,
            lists: s.lists,
            dedup_ratio: s.dedup_ratio,
            flushes: s.flushes,
            ingest_secs: s.ingest_secs,
            sketch_finish_secs: s.sketch_finish_secs,
            data_finish_secs: s.data_finish_secs,
        }
    }

    pub fn row(&self) -> Vec<String> {
        vec![
            self.segment.clone(),
            self.lines.to_string(),
            self.batches.to_string(),
            self.compressed_bytes.to_string(),
            self.sketch_bytes.to_string(),
            self.tokens.to_string(),
            self.lists.to_string(),
            format!("{:.4}", self.dedup_ratio),
            self.flushes.to_string(),
            format!("{:.3}", self.ingest_secs),
            format!("{:.3}", self.sketch_finish_secs),
            format!("{:.3}", self.data_finish_secs),
        ]
    }
}

/// Appends new segments to `store`, rolling over whenever one is full.
pub fn ingest(store: &Path, config: &StoreConfig, records: Records) -> Result<Vec<SegmentReport>> {
    fs::create_dir_all(store).with_context(|| format!("creating {}", store.display()))?;
    if store.join(MANIFEST_FILE).exists() {
        bail!("{} is a segment, not a store", store.display());
    }
    let mut next = segment_dirs(store)?
        .last()
        .and_then(|p| p.file_name()?.to_str().and_then(segment_index))
        .map_or(0, |i| i + 1);
    let mut reports = Vec::new();
    let open = |next: &mut u32| -> Result<(String, SegmentWriter)> {
        let name = format!("{SEGMENT_PREFIX}{:05}", *next);
        *next += 1;
        let w = SegmentWriter::create(store.join(&name), config.clone())
            .with_context(|| format!("creating segment {name}"))?;
        Ok((name, w))
    };
    let (mut name, mut writer) = open(&mut next)?;
    for record in records {
        let Record { source, line } = record?;
        match writer.ingest_from(source.as_deref(), &line) {
            Ok(()) => {}
            Err(Error::SegmentFull(_)) => {
                let (new_name, new_writer) = open(&mut next)?;
                let full_name = std::mem::replace(&mut name, new_name);
                let full = std::mem::replace(&mut writer, new_writer);
                let (_, stats) = full.finish().with_context(|| format!("finishing {full_name}"))?;
                log::info!("{full_name}: {} lines, {} batches", stats.lines, stats.batches);
                reports.push(SegmentReport::new(full_name, &stats));
                writer.ingest_from(source.as_deref(), &line)?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (_, stats) = writer.finish().with_context(|| format!("finishing {name}"))?;
    reports.push(SegmentReport::new(name, &stats));
    Ok(reports)
}
