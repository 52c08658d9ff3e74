//! Log line tokenizer.
//!
//! A line is split into maximal runs of three byte classes: alphanumeric
//! ASCII, other ASCII, and non-ASCII. Tokens are:
//!
//! 1. every alphanumeric run
//! 2. every other-ASCII run
//! 3. every non-ASCII run
//! 4. `alnum sep alnum` for a single separator in `. : _ - / @`
//! 5. `alnum . alnum . alnum`
//! 6. all 3-grams of each alphanumeric run
//! 7. all 1-, 2- and 3-grams of each other-ASCII run
//! 8. all 2-grams of each non-ASCII run, counted in Unicode scalar values
//!
//! Tokens are ASCII-lowercased. Invalid UTF-8 bytes count as one unit each.
//! [`TokenRules::Words`] keeps rule 1 only.

use std::collections::BTreeSet;
use std::ops::Range;

use crate::error::{Error, Result};

pub const COMPOSITE_SEPARATORS: &[u8] = b".:_-/@";

/// Which tokenizer rules a segment was indexed with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TokenRules {
    /// Rules 1 to 8.
    #[default]
    Full,
    /// Alphanumeric runs only.
    Words,
}

impl TokenRules {
    pub fn id(self) -> u8 {
        match self {
            TokenRules::Full => 0,
            TokenRules::Words => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(TokenRules::Full),
            1 => Ok(TokenRules::Words),
            other => Err(Error::Corrupt(format!("unknown token rules {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CharClass {
    Alnum,
    Symbol,
    NonAscii,
}

#[inline]
pub fn class_of(b: u8) -> CharClass {
    if b.is_ascii_alphanumeric() {
        CharClass::Alnum
    } else if b.is_ascii() {
        CharClass::Symbol
    } else {
        CharClass::NonAscii
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    pub class: CharClass,
    pub range: Range<usize>,
}

impl Run {
    fn len(&self) -> usize {
        self.range.len()
    }
}

/// Maximal same-class runs of `bytes`, appended to `out`.
pub fn split_runs(bytes: &[u8], out: &mut Vec<Run>) {
    let mut start = 0;
    while start < bytes.len() {
        let class = class_of(bytes[start]);
        let mut end = start + 1;
        while end < bytes.len() && class_of(bytes[end]) == class {
            end += 1;
        }
        out.push(Run {
            class,
            range: start..end,
        });
        start = end;
    }
}

/// Start offsets of the scalar-value units of a non-ASCII run, followed by
/// the run's end.
pub fn unit_boundaries(bytes: &[u8], base: usize, out: &mut Vec<usize>) {
    let mut at = base;
    for chunk in bytes.utf8_chunks() {
        let valid = chunk.valid();
        out.extend(valid.char_indices().map(|(i, _)| at + i));
        at += valid.len();
        for _ in chunk.invalid() {
            out.push(at);
            at += 1;
        }
    }
    out.push(at);
}

/// Reusable tokenizer state.
#[derive(Debug, Default)]
pub struct Tokenizer {
    lower: Vec<u8>,
    runs: Vec<Run>,
    units: Vec<usize>,
}

impl Tokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, line: &[u8]) {
        self.lower.clear();
        self.lower.extend(line.iter().map(u8::to_ascii_lowercase));
        self.runs.clear();
        split_runs(&self.lower, &mut self.runs);
    }

    /// Calls `emit` for every token of `line`. A token may be emitted more
    /// than once.
    pub fn for_each_token(&mut self, line: &[u8], emit: impl FnMut(&[u8])) {
        self.for_each_token_with(TokenRules::Full, line, emit)
    }

    pub fn for_each_token_with(&mut self, rules: TokenRules, line: &[u8], mut emit: impl FnMut(&[u8])) {
        self.prepare(line);
        if rules == TokenRules::Words {
            for run in self.runs.iter().filter(|r| r.class == CharClass::Alnum) {
                emit(&self.lower[run.range.clone()]);
            }
            return;
        }
        self.emit_top_level(&mut emit);
        for run in &self.runs {
            let r = run.range.clone();
            match run.class {
                CharClass::Alnum => {
                    if r.len() > 3 {
                        for w in self.lower[r].windows(3) {
                            emit(w);
                        }
                    }
                }
                CharClass::Symbol => {
                    for n in 1..=3.min(r.len()) {
                        if n == r.len() {
                            break;
                        }
                        for w in self.lower[r.clone()].windows(n) {
                            emit(w);
                        }
                    }
                }
                CharClass::NonAscii => {
                    self.units.clear();
                    unit_boundaries(&self.lower[r.clone()], r.start, &mut self.units);
                    // a run of exactly two units is its own 2-gram
                    if self.units.len() > 3 {
                        for w in self.units.windows(3) {
                            emit(&self.lower[w[0]..w[2]]);
                        }
                    }
                }
            }
        }
    }

    /// Calls `emit` for the whole-run and composite tokens of `term`.
    pub fn for_each_term_token(&mut self, term: &[u8], emit: impl FnMut(&[u8])) {
        self.for_each_term_token_with(TokenRules::Full, term, emit)
    }

    pub fn for_each_term_token_with(&mut self, rules: TokenRules, term: &[u8], mut emit: impl FnMut(&[u8])) {
        if rules == TokenRules::Words {
            self.for_each_token_with(rules, term, emit);
            return;
        }
        self.prepare(term);
        self.emit_top_level(&mut emit);
    }

    fn emit_top_level(&self, emit: &mut impl FnMut(&[u8])) {
        let runs = &self.runs;
        let is_sep = |i: usize, allowed: &[u8]| {
            runs[i].class == CharClass::Symbol && runs[i].len() == 1 && allowed.contains(&self.lower[runs[i].range.start])
        };
        for (i, run) in runs.iter().enumerate() {
            emit(&self.lower[run.range.clone()]);
            if run.class != CharClass::Alnum {
                continue;
            }
            if i + 2 < runs.len() && is_sep(i + 1, COMPOSITE_SEPARATORS) && runs[i + 2].class == CharClass::Alnum {
                emit(&self.lower[run.range.start..runs[i + 2].range.end]);
            }
            if i + 4 < runs.len()
                && is_sep(i + 1, b".")
                && runs[i + 2].class == CharClass::Alnum
                && is_sep(i + 3, b".")
                && runs[i + 4].class == CharClass::Alnum
            {
                emit(&self.lower[run.range.start..runs[i + 4].range.end]);
            }
        }
    }
}

/// Distinct tokens of `line`.
pub fn tokenize(line: &[u8]) -> BTreeSet<Vec<u8>> {
    let mut out = BTreeSet::new();
    Tokenizer::new().for_each_token(line, |t| {
        out.insert(t.to_vec());
    });
    out
}

/// Distinct whole-run and composite tokens of `term`.
pub fn term_tokens(term: &[u8]) -> BTreeSet<Vec<u8>> {
    term_tokens_with(TokenRules::Full, term)
}

pub fn term_tokens_with(rules: TokenRules, term: &[u8]) -> BTreeSet<Vec<u8>> {
    let mut out = BTreeSet::new();
    Tokenizer::new().for_each_term_token_with(rules, term, |t| {
        out.insert(t.to_vec());
    });
    out
}

/// Grams of `needle` that the tokenizer is guaranteed to have indexed for
/// any line containing it: grams lying inside one run of the needle.
pub fn contains_grams(needle: &[u8]) -> BTreeSet<Vec<u8>> {
    contains_grams_with(TokenRules::Full, needle)
}

pub fn contains_grams_with(rules: TokenRules, needle: &[u8]) -> BTreeSet<Vec<u8>> {
    let lower = needle.to_ascii_lowercase();
    let mut runs = Vec::new();
    split_runs(&lower, &mut runs);
    let mut out = BTreeSet::new();
    if rules == TokenRules::Words {
        // only runs bounded on both sides inside the needle are whole words
        let n = runs.len();
        for run in runs.iter().take(n.saturating_sub(1)).skip(1) {
            if run.class == CharClass::Alnum {
                out.insert(lower[run.range.clone()].to_vec());
            }
        }
        return out;
    }
    for run in runs {
        let bytes = &lower[run.range.clone()];
        match run.class {
            CharClass::Alnum => out.extend(bytes.windows(3).map(<[u8]>::to_vec)),
            CharClass::Symbol => {
                for n in 1..=3 {
                    out.extend(bytes.windows(n).map(<[u8]>::to_vec));
                }
            }
            CharClass::NonAscii => {
                // a cut character could decode differently inside the line
                if std::str::from_utf8(bytes).is_err() {
                    continue;
                }
                let mut units = Vec::new();
                unit_boundaries(bytes, 0, &mut units);
                for w in units.windows(3) {
                    out.insert(bytes[w[0]..w[2]].to_vec());
                }
            }
        }
    }
    out
}

/// Whether `line[start..end]` is bounded by class changes or line edges.
#[inline]
pub fn is_aligned(line: &[u8], start: usize, end: usize) -> bool {
    debug_assert!(start < end && end <= line.len());
    (start == 0 || class_of(line[start - 1]) != class_of(line[start]))
        && (end == line.len() || class_of(line[end]) != class_of(line[end - 1]))
}
