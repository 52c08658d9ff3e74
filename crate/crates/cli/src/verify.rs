//! Rebuilds the token oracle from stored batches and checks the sketch
//! against it: no false negatives, exact dedup counts, and optionally that
//! the store holds exactly the original input.

use std::collections::{BTreeSet, HashMap, HashSet};

use anyhow::Result;
use dynawarp_core::logstore::Tokenizer;
use dynawarp_core::{fingerprint, PostingId, Segment};
use serde::Serialize;

use crate::store::Records;

#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub ok: bool,
    pub segments: usize,
    pub lines: u64,
    pub batches: u64,
    pub tokens: u64,
    pub distinct_sets: u64,
    pub dedup_ratio: f64,
    /// `None` when no input was given.
    pub input_matches: Option<bool>,
    pub input_order_preserved: Option<bool>,
    pub failure: Option<String>,
}

struct Failure(String);

fn check_segment(name: &str, seg: &Segment, report: &mut Report, stored: &mut Vec<Vec<u8>>) -> Result<(), Failure> {
    let fail = |msg: String| Failure(format!("{name}: {msg}"));
    let rules = seg.manifest().token_rules;
    let mut tokenizer = Tokenizer::new();
    let mut oracle: HashMap<Vec<u8>, Vec<u16>> = HashMap::new();
    for p in 0..seg.batch_count() {
        let lines = seg
            .batch_lines(PostingId(p as u16))
            .map_err(|e| fail(format!("batch {p}: {e}")))?;
        for line in lines {
            tokenizer.for_each_token_with(rules, &line, |t| {
                let e = oracle.entry(t.to_vec()).or_default();
                if e.last() != Some(&(p as u16)) {
                    e.push(p as u16);
                }
            });
            stored.push(line);
        }
    }

    let sketch = seg.sketch();
    let mut by_fp: HashMap<u32, BTreeSet<u16>> = HashMap::new();
    let mut tokens: Vec<_> = oracle.into_iter().collect();
    tokens.sort();
    for (token, want) in &tokens {
        let shown = String::from_utf8_lossy(token);
        let fp = fingerprint(token).map_err(|e| fail(format!("token {shown:?}: {e}")))?;
        let id = sketch
            .is_present(fp)
            .map_err(|e| fail(format!("token {shown:?}: {e}")))?
            .ok_or_else(|| fail(format!("token {shown:?} missing from the sketch")))?;
        let got: HashSet<u16> = sketch
            .decode_list(id)
            .map_err(|e| fail(format!("token {shown:?}: {e}")))?
            .iter()
            .map(|p| p.0)
            .collect();
        if let Some(p) = want.iter().find(|p| !got.contains(p)) {
            return Err(fail(format!("token {shown:?} occurs in batch {p} but the sketch omits it")));
        }
        by_fp.entry(fp.0).or_default().extend(want.iter().copied());
    }
    let distinct: HashSet<&BTreeSet<u16>> = by_fp.values().collect();
    if sketch.token_count() != by_fp.len() as u64 {
        return Err(fail(format!(
            "sketch holds {} tokens, oracle {}",
            sketch.token_count(),
            by_fp.len()
        )));
    }
    if sketch.list_count() != distinct.len() as u64 {
        return Err(fail(format!(
            "sketch holds {} lists, oracle {} distinct sets",
            sketch.list_count(),
            distinct.len()
        )));
    }
    report.lines += seg.line_count();
    report.batches += seg.batch_count() as u64;
    report.tokens += by_fp.len() as u64;
    report.distinct_sets += distinct.len() as u64;
    Ok(())
}

pub fn run(segments: &[(String, Segment)], input: Option<Records>) -> Result<Report> {
    let mut report = Report {
        segments: segments.len(),
        ..Report::default()
    };
    let mut stored = Vec::new();
    for (name, seg) in segments {
        if let Err(Failure(msg)) = check_segment(name, seg, &mut report, &mut stored) {
            report.failure = Some(msg);
            return Ok(report);
        }
    }
    report.dedup_ratio = dedup_ratio(report.distinct_sets, report.tokens);
    if let Some(records) = input {
        let mut original = Vec::new();
        for r in records {
            let r = r?;
            original.push(r.line);
        }
        let in_order = original == stored;
        original.sort();
        stored.sort();
        let matches = original == stored;
        report.input_matches = Some(matches);
        report.input_order_preserved = Some(in_order);
        if !matches {
            report.failure = Some(format!(
                "store holds {} lines, input {}, contents differ",
                stored.len(),
                original.len()
            ));
            return Ok(report);
        }
    }
    report.ok = true;
    Ok(report)
}

/// Share of tokens that do not need a list of their own.
pub fn dedup_ratio(lists: u64, tokens: u64) -> f64 {
    if tokens == 0 {
        0.0
    } else {
        1.0 - lists as f64 / tokens as f64
    }
}
