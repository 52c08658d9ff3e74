use std::io::Write;

use anyhow::Result;
use dynawarp_core::logstore::{PlanMode, QueryKind, QueryOutcome, QueryPlan};
use dynawarp_core::Segment;
use serde::Serialize;

use crate::config::Mode;

/// Plan for `text` on `seg`; scan mode keeps the post-filter but drops grams.
pub fn plan_for(seg: &Segment, kind: QueryKind, text: &[u8], mode: Mode) -> Result<QueryPlan> {
    let plan = match (kind, mode) {
        (_, Mode::Sketch) => seg.plan(kind, text)?,
        (QueryKind::Contains, Mode::Scan) => seg.plan_scan(text)?,
        (QueryKind::Term, Mode::Scan) => QueryPlan {
            grams: Vec::new(),
            ..seg.plan_term(text)?
        },
    };
    Ok(plan)
}

#[derive(Debug, Serialize)]
pub struct Explain {
    pub segment: String,
    pub mode: &'static str,
    pub grams: Vec<String>,
    pub batches: usize,
    pub candidates: usize,
    pub decompressed: usize,
    pub false_positive_batches: usize,
}

pub fn mode_name(m: PlanMode) -> &'static str {
    match m {
        PlanMode::Term => "term",
        PlanMode::Contains => "contains",
        PlanMode::Scan => "scan",
    }
}

impl Explain {
    fn new(segment: &str, seg: &Segment, o: &QueryOutcome) -> Self {
        Explain {
            segment: segment.to_string(),
            mode: if o.plan.grams.is_empty() && o.plan.mode == PlanMode::Term {
                "scan"
            } else {
                mode_name(o.plan.mode)
            },
            grams: o.plan.grams.iter().map(|g| String::from_utf8_lossy(g).into_owned()).collect(),
            batches: seg.batch_count(),
            candidates: o.candidates,
            decompressed: o.decompressed,
            false_positive_batches: o.false_positive_batches,
        }
    }
}

#[derive(Debug, Serialize)]
struct JsonResult {
    count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lines: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explain: Option<Vec<Explain>>,
}

pub struct QueryArgs<'a> {
    pub kind: QueryKind,
    pub text: &'a [u8],
    pub mode: Mode,
    pub count_only: bool,
    pub explain: bool,
    pub json: bool,
}

pub fn run(segments: &[(String, Segment)], a: &QueryArgs<'_>, out: &mut impl Write) -> Result<u64> {
    let mut count = 0u64;
    let mut explains = Vec::new();
    let mut lines = Vec::new();
    for (name, seg) in segments {
        let plan = plan_for(seg, a.kind, a.text, a.mode)?;
        let (outcome, hits) = seg.run(&plan, !a.count_only)?;
        count += hits;
        if a.explain {
            explains.push(Explain::new(name, seg, &outcome));
        }
        for m in &outcome.matches {
            if a.json {
                lines.push(String::from_utf8_lossy(&m.line).into_owned());
            } else {
                out.write_all(&m.line)?;
                out.write_all(b"\n")?;
            }
        }
    }
    if a.json {
        let result = JsonResult {
            count,
            lines: (!a.count_only).then_some(lines),
            explain: a.explain.then_some(explains),
        };
        serde_json::to_writer(&mut *out, &result)?;
        writeln!(out)?;
        return Ok(count);
    }
    if a.count_only {
        writeln!(out, "{count}")?;
    }
    if a.explain {
        let mut err = std::io::stderr().lock();
        writeln!(err, "segment\tmode\tgrams\tbatches\tcandidates\tdecompressed\tfalse_positive_batches")?;
        for e in &explains {
            writeln!(
                err,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.segment,
                e.mode,
                e.grams.join(","),
                e.batches,
                e.candidates,
                e.decompressed,
                e.false_positive_batches
            )?;
        }
    }
    Ok(count)
}
