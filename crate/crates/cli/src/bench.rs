//! Throughput of sketch-pruned versus full-scan queries, per query class.
//!
//! Query file lines are `class<TAB>kind<TAB>text` or `kind<TAB>text`, where
//! kind is `term` or `contains`; `#` starts a comment line.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use dynawarp_core::logstore::QueryKind;
use dynawarp_core::Segment;
use serde::Serialize;

use crate::config::Mode;
use crate::query::plan_for;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchQuery {
    pub class: String,
    pub kind: QueryKind,
    pub text: Vec<u8>,
}

pub fn parse_queries(text: &str) -> Result<Vec<BenchQuery>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        let (class, kind, text) = match fields.as_slice() {
            [kind, text] => (*kind, *kind, *text),
            [class, kind, text] => (*class, *kind, *text),
            _ => bail!("query line {}: expected [class<TAB>]kind<TAB>text", i + 1),
        };
        let kind = match kind {
            "term" => QueryKind::Term,
            "contains" => QueryKind::Contains,
            other => bail!("query line {}: unknown kind {other:?}", i + 1),
        };
        if text.is_empty() {
            bail!("query line {}: empty query", i + 1);
        }
        out.push(BenchQuery {
            class: class.to_string(),
            kind,
            text: text.as_bytes().to_vec(),
        });
    }
    Ok(out)
}

pub fn load_queries(path: &Path) -> Result<Vec<BenchQuery>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading queries {}", path.display()))?;
    parse_queries(&text)
}

#[derive(Clone, Copy, Debug)]
pub struct BenchOptions {
    /// Measured passes over each class.
    pub iterations: u32,
    /// When set, measured passes repeat until this much time has passed.
    pub min_time: Option<Duration>,
    pub parallel: usize,
}

#[derive(Debug, Serialize)]
pub struct ClassResult {
    pub class: String,
    pub kind: &'static str,
    pub queries: usize,
    pub hits: u64,
    pub sketch_qps: f64,
    pub scan_qps: f64,
    pub speedup: f64,
    /// Mean over queries of false-positive candidate batches / all batches.
    pub error_rate: f64,
}

impl ClassResult {
    pub const HEADER: [&'static str; 8] = [
        "class",
        "kind",
        "queries",
        "hits",
        "sketch_qps",
        "scan_qps",
        "speedup",
        "error_rate",
    ];

    pub fn row(&self) -> Vec<String> {
        vec![
            self.class.clone(),
            self.kind.to_string(),
            self.queries.to_string(),
            self.hits.to_string(),
            format!("{:.3}", self.sketch_qps),
            format!("{:.3}", self.scan_qps),
            format!("{:.2}", self.speedup),
            format!("{:.6}", self.error_rate),
        ]
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    hits: u64,
    false_positive_batches: u64,
}

fn run_one(seg: &Segment, q: &BenchQuery, mode: Mode) -> Result<Tally> {
    let plan = plan_for(seg, q.kind, &q.text, mode)?;
    let (outcome, hits) = seg.run(&plan, false)?;
    Ok(Tally {
        hits,
        false_positive_batches: outcome.false_positive_batches as u64,
    })
}

/// Runs `q` over every segment, `parallel` segments at a time.
fn run_store(segments: &[Segment], q: &BenchQuery, mode: Mode, parallel: usize) -> Result<Tally> {
    let add = |a: Tally, b: Tally| Tally {
        hits: a.hits + b.hits,
        false_positive_batches: a.false_positive_batches + b.false_positive_batches,
    };
    if parallel <= 1 || segments.len() <= 1 {
        return segments
            .iter()
            .try_fold(Tally::default(), |acc, s| Ok(add(acc, run_one(s, q, mode)?)));
    }
    let chunk = segments.len().div_ceil(parallel);
    std::thread::scope(|scope| {
        let handles: Vec<_> = segments
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .try_fold(Tally::default(), |acc, s| Ok::<_, anyhow::Error>(add(acc, run_one(s, q, mode)?)))
                })
            })
            .collect();
        handles.into_iter().try_fold(Tally::default(), |acc, h| {
            let t = h.join().map_err(|_| anyhow::anyhow!("query thread panicked"))??;
            Ok(add(acc, t))
        })
    })
}

fn pass(segments: &[Segment], qs: &[&BenchQuery], mode: Mode, parallel: usize) -> Result<Vec<Tally>> {
    qs.iter().map(|q| run_store(segments, q, mode, parallel)).collect()
}

/// Queries per second over measured passes.
fn measure(segments: &[Segment], qs: &[&BenchQuery], mode: Mode, opts: &BenchOptions) -> Result<f64> {
    let started = Instant::now();
    let mut passes = 0u64;
    loop {
        pass(segments, qs, mode, opts.parallel)?;
        passes += 1;
        let elapsed = started.elapsed();
        let time_left = opts.min_time.is_some_and(|t| elapsed < t);
        if passes >= opts.iterations as u64 && !time_left {
            return Ok((passes * qs.len() as u64) as f64 / elapsed.as_secs_f64().max(1e-9));
        }
    }
}

pub fn run(segments: &[Segment], queries: &[BenchQuery], opts: &BenchOptions) -> Result<Vec<ClassResult>> {
    let total_batches: u64 = segments.iter().map(|s| s.batch_count() as u64).sum();
    let mut classes: Vec<(&str, QueryKind)> = Vec::new();
    for q in queries {
        if !classes.contains(&(q.class.as_str(), q.kind)) {
            classes.push((q.class.as_str(), q.kind));
        }
    }
    let mut results = Vec::new();
    for (class, kind) in classes {
        let qs: Vec<&BenchQuery> = queries.iter().filter(|q| q.class == class && q.kind == kind).collect();
        // warm-up passes double as the error-rate measurement and oracle check
        let sketch = pass(segments, &qs, Mode::Sketch, opts.parallel)?;
        let scan = pass(segments, &qs, Mode::Scan, opts.parallel)?;
        for ((q, a), b) in qs.iter().zip(&sketch).zip(&scan) {
            if a.hits != b.hits {
                bail!(
                    "{:?}: sketch found {} lines, scan {}",
                    String::from_utf8_lossy(&q.text),
                    a.hits,
                    b.hits
                );
            }
        }
        let sketch_qps = measure(segments, &qs, Mode::Sketch, opts)?;
        let scan_qps = measure(segments, &qs, Mode::Scan, opts)?;
        let error_rate = if total_batches == 0 {
            0.0
        } else {
            sketch
                .iter()
                .map(|t| t.false_positive_batches as f64 / total_batches as f64)
                .sum::<f64>()
                / qs.len() as f64
        };
        results.push(ClassResult {
            class: class.to_string(),
            kind: match kind {
                QueryKind::Term => "term",
                QueryKind::Contains => "contains",
            },
            queries: qs.len(),
            hits: sketch.iter().map(|t| t.hits).sum(),
            sketch_qps,
            scan_qps,
            speedup: sketch_qps / scan_qps,
            error_rate,
        });
    }
    Ok(results)
}
