use anyhow::Result;
use dynawarp_core::Segment;
use serde::Serialize;

use crate::verify::dedup_ratio;

#[derive(Debug, Default, Serialize)]
pub struct SegmentStats {
    pub segment: String,
    pub lines: u64,
    pub batches: u64,
    pub data_bytes: u64,
    pub sketch_bytes: u64,
    pub sketch_data_ratio: f64,
    pub tokens: u64,
    pub lists: u64,
    pub dedup_ratio: f64,
    pub bits_per_token: f64,
    /// Slots per rank-code width; index is the width in bits.
    pub rank_width_histogram: Vec<u64>,
}

impl SegmentStats {
    pub const HEADER: [&'static str; 11] = [
        "segment",
        "lines",
        "batches",
        "data_bytes",
        "sketch_bytes",
        "sketch_data_ratio",
        "tokens",
        "lists",
        "dedup_ratio",
        "bits_per_token",
        "rank_width_histogram",
    ];

    fn derive_ratios(&mut self) {
        self.sketch_data_ratio = ratio(self.sketch_bytes as f64, self.data_bytes as f64);
        self.dedup_ratio = dedup_ratio(self.lists, self.tokens);
        self.bits_per_token = ratio(self.sketch_bytes as f64 * 8.0, self.tokens as f64);
    }

    pub fn row(&self) -> Vec<String> {
        vec![
            self.segment.clone(),
            self.lines.to_string(),
            self.batches.to_string(),
            self.data_bytes.to_string(),
            self.sketch_bytes.to_string(),
            format!("{:.4}", self.sketch_data_ratio),
            self.tokens.to_string(),
            self.lists.to_string(),
            format!("{:.4}", self.dedup_ratio),
            format!("{:.2}", self.bits_per_token),
            self.rank_width_histogram
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        ]
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// One row per segment followed by a `total` row.
pub fn collect(segments: &[(String, Segment)]) -> Result<Vec<SegmentStats>> {
    let mut rows = Vec::with_capacity(segments.len() + 1);
    let mut total = SegmentStats {
        segment: "total".into(),
        ..SegmentStats::default()
    };
    for (name, seg) in segments {
        let sk = seg.sketch();
        let mut s = SegmentStats {
            segment: name.clone(),
            lines: seg.line_count(),
            batches: seg.batch_count() as u64,
            data_bytes: seg.data_bytes(),
            sketch_bytes: seg.sketch_bytes(),
            tokens: sk.token_count(),
            lists: sk.list_count(),
            rank_width_histogram: sk.rank_width_histogram()?,
            ..SegmentStats::default()
        };
        s.derive_ratios();
        total.lines += s.lines;
        total.batches += s.batches;
        total.data_bytes += s.data_bytes;
        total.sketch_bytes += s.sketch_bytes;
        total.tokens += s.tokens;
        total.lists += s.lists;
        let hist = &mut total.rank_width_histogram;
        if hist.len() < s.rank_width_histogram.len() {
            hist.resize(s.rank_width_histogram.len(), 0);
        }
        for (t, v) in hist.iter_mut().zip(&s.rank_width_histogram) {
            *t += v;
        }
        rows.push(s);
    }
    total.derive_ratios();
    rows.push(total);
    Ok(rows)
}
