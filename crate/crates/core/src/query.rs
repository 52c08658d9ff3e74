//! Query execution shared by mutable and immutable sketches.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::hashing::{PostingId, TokenFingerprint};
use crate::immutable_sketch::{ByteSource, SketchReader};
use crate::mutable_sketch::{ListId, MutableSketch};

/// Read access common to both sketch forms. Equal posting sets have equal
/// list ids within one view.
pub trait SketchView {
    fn present(&self, fp: TokenFingerprint) -> Result<Option<ListId>>;
    fn decode(&self, id: ListId) -> Result<Vec<PostingId>>;
}

impl SketchView for MutableSketch {
    fn present(&self, fp: TokenFingerprint) -> Result<Option<ListId>> {
        Ok(self.list_id(fp))
    }

    fn decode(&self, id: ListId) -> Result<Vec<PostingId>> {
        self.decode_list_id(id)
    }
}

impl<B: ByteSource> SketchView for SketchReader<B> {
    fn present(&self, fp: TokenFingerprint) -> Result<Option<ListId>> {
        self.list_id(fp)
    }

    fn decode(&self, id: ListId) -> Result<Vec<PostingId>> {
        self.decode_list(id.0)
    }
}

impl<V: SketchView + ?Sized> SketchView for &V {
    fn present(&self, fp: TokenFingerprint) -> Result<Option<ListId>> {
        (**self).present(fp)
    }

    fn decode(&self, id: ListId) -> Result<Vec<PostingId>> {
        (**self).decode(id)
    }
}

/// Receives posting lists from [`execute`]. An absent token arrives as an
/// empty slice.
pub trait PostingsConsumer {
    fn accept(&mut self, postings: &[PostingId]);

    fn should_stop(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub absent: usize,
    pub decoded: usize,
    pub stopped_early: bool,
}

/// Resolves every token, reports absent ones immediately, then decodes each
/// distinct list once.
pub fn execute<V, C>(view: &V, tokens: &[TokenFingerprint], consumer: &mut C) -> Result<ExecStats>
where
    V: SketchView + ?Sized,
    C: PostingsConsumer + ?Sized,
{
    let mut stats = ExecStats::default();
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    for &fp in tokens {
        match view.present(fp)? {
            None => {
                stats.absent += 1;
                consumer.accept(&[]);
                if consumer.should_stop() {
                    stats.stopped_early = true;
                    return Ok(stats);
                }
            }
            Some(id) => {
                if seen.insert(id) {
                    ids.push(id);
                }
            }
        }
    }
    for id in ids {
        let postings = view.decode(id)?;
        stats.decoded += 1;
        consumer.accept(&postings);
        if consumer.should_stop() {
            stats.stopped_early = true;
            break;
        }
    }
    Ok(stats)
}

/// Running sorted intersection; stops once it is empty.
#[derive(Debug, Default)]
pub struct IntersectConsumer {
    acc: Option<Vec<PostingId>>,
}

impl IntersectConsumer {
    pub fn into_result(self) -> Vec<PostingId> {
        self.acc.unwrap_or_default()
    }
}

impl PostingsConsumer for IntersectConsumer {
    fn accept(&mut self, postings: &[PostingId]) {
        self.acc = Some(match self.acc.take() {
            None => postings.to_vec(),
            Some(acc) => intersect_sorted(&acc, postings),
        });
    }

    fn should_stop(&self) -> bool {
        matches!(&self.acc, Some(a) if a.is_empty())
    }
}

/// Sorted union of everything accepted.
#[derive(Debug, Default)]
pub struct UnionConsumer {
    acc: Vec<PostingId>,
}

impl UnionConsumer {
    pub fn into_result(self) -> Vec<PostingId> {
        self.acc
    }
}

impl PostingsConsumer for UnionConsumer {
    fn accept(&mut self, postings: &[PostingId]) {
        if !postings.is_empty() {
            self.acc = union_sorted(&self.acc, postings);
        }
    }
}

pub fn intersect_sorted(a: &[PostingId], b: &[PostingId]) -> Vec<PostingId> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

pub fn union_sorted(a: &[PostingId], b: &[PostingId]) -> Vec<PostingId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Postings containing every token. An empty token list has no defined
/// identity and is rejected.
pub fn intersect_all<V: SketchView + ?Sized>(view: &V, tokens: &[TokenFingerprint]) -> Result<Vec<PostingId>> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut c = IntersectConsumer::default();
    execute(view, tokens, &mut c)?;
    Ok(c.into_result())
}

/// Postings containing any token.
pub fn union_all<V: SketchView + ?Sized>(view: &V, tokens: &[TokenFingerprint]) -> Result<Vec<PostingId>> {
    let mut c = UnionConsumer::default();
    execute(view, tokens, &mut c)?;
    Ok(c.into_result())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::fingerprint;
    use crate::immutable_sketch::{build, SketchConfig};
    use proptest::prelude::*;
    use std::cell::Cell;
    use std::collections::{BTreeSet, HashMap};

    fn fp(s: &str) -> TokenFingerprint {
        fingerprint(s.as_bytes()).unwrap()
    }

    fn ids(v: &[u16]) -> Vec<PostingId> {
        v.iter().map(|&p| PostingId(p)).collect()
    }

    fn running_example() -> MutableSketch {
        let lines = [
            "INFO: Connection to host established",
            "INFO: Start processing",
            "ERROR: Host connection terminated",
            "INFO: Restart triggered",
        ];
        let mut s = MutableSketch::new(4).unwrap();
        for (i, line) in lines.iter().enumerate() {
            for w in line.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()) {
                s.add_token(w.to_ascii_lowercase().as_bytes(), PostingId(i as u16)).unwrap();
            }
        }
        s
    }

    /// Counts decodes on top of another view.
    struct Counting<V> {
        inner: V,
        decodes: Cell<usize>,
    }

    impl<V: SketchView> SketchView for Counting<V> {
        fn present(&self, fp: TokenFingerprint) -> Result<Option<ListId>> {
            self.inner.present(fp)
        }

        fn decode(&self, id: ListId) -> Result<Vec<PostingId>> {
            self.decodes.set(self.decodes.get() + 1);
            self.inner.decode(id)
        }
    }

    #[derive(Default)]
    struct Recorder {
        accepted: Vec<Vec<PostingId>>,
        stop_after: Option<usize>,
    }

    impl PostingsConsumer for Recorder {
        fn accept(&mut self, postings: &[PostingId]) {
            self.accepted.push(postings.to_vec());
        }

        fn should_stop(&self) -> bool {
            self.stop_after.is_some_and(|n| self.accepted.len() >= n)
        }
    }

    fn both_views(f: impl Fn(&dyn SketchView)) {
        let m = running_example();
        f(&m);
        let bytes = build(&m, &SketchConfig::temporary()).unwrap();
        let r = SketchReader::open(bytes.as_slice()).unwrap();
        f(&r);
    }

    #[test]
    fn shared_list_decoded_once() {
        both_views(|v| {
            let counting = Counting { inner: v, decodes: Cell::new(0) };
            let mut rec = Recorder::default();
            let stats = execute(&counting, &[fp("connection"), fp("host")], &mut rec).unwrap();
            assert_eq!(counting.decodes.get(), 1);
            assert_eq!(stats.decoded, 1);
            assert_eq!(rec.accepted, vec![ids(&[0, 2])]);
        });
    }

    #[test]
    fn absent_tokens_accept_empty_without_decoding() {
        both_views(|v| {
            let counting = Counting { inner: v, decodes: Cell::new(0) };
            let mut rec = Recorder::default();
            let tokens = [fp("nope"), fp("missing"), fp("gone")];
            execute(&counting, &tokens, &mut rec).unwrap();
            assert_eq!(counting.decodes.get(), 0);
            assert_eq!(rec.accepted, vec![Vec::<PostingId>::new(); 3]);
        });
    }

    #[test]
    fn stopping_consumer_halts_decoding() {
        both_views(|v| {
            let counting = Counting { inner: v, decodes: Cell::new(0) };
            let mut rec = Recorder {
                stop_after: Some(1),
                ..Recorder::default()
            };
            let stats = execute(&counting, &[fp("info"), fp("connection"), fp("start")], &mut rec).unwrap();
            assert_eq!(counting.decodes.get(), 1);
            assert!(stats.stopped_early);
        });
    }

    #[test]
    fn running_example_combinators() {
        both_views(|v| {
            assert_eq!(intersect_all(v, &[fp("info")]).unwrap(), ids(&[0, 1, 3]));
            assert_eq!(intersect_all(v, &[fp("info"), fp("connection")]).unwrap(), ids(&[0]));
            assert_eq!(intersect_all(v, &[fp("info"), fp("absent")]).unwrap(), ids(&[]));
            assert_eq!(union_all(v, &[fp("connection"), fp("start")]).unwrap(), ids(&[0, 1, 2]));
            assert_eq!(union_all(v, &[fp("error")]).unwrap(), ids(&[2]));
            assert_eq!(union_all(v, &[]).unwrap(), ids(&[]));
            assert!(matches!(intersect_all(v, &[]), Err(Error::EmptyQuery)));
        });
    }

    fn oracle_sketch(sets: &HashMap<u32, BTreeSet<u16>>) -> MutableSketch {
        let mut s = MutableSketch::new(64).unwrap();
        for (&k, set) in sets {
            for &p in set {
                s.add(TokenFingerprint(k), PostingId(p)).unwrap();
            }
        }
        s
    }

    proptest! {
        #[test]
        fn combinators_match_set_algebra(
            sets in proptest::collection::hash_map(0u32..40, proptest::collection::btree_set(0u16..64, 1..20), 1..30),
            query in proptest::collection::vec(0u32..50, 1..6),
        ) {
            let sketch = oracle_sketch(&sets);
            let tokens: Vec<TokenFingerprint> = query.iter().map(|&k| TokenFingerprint(k)).collect();
            let empty = BTreeSet::new();
            let operand = |k: &u32| sets.get(k).unwrap_or(&empty).clone();
            let want_and = query.iter().map(operand).reduce(|a, b| &a & &b).unwrap();
            let want_or = query.iter().map(operand).fold(BTreeSet::new(), |a, b| &a | &b);
            let got_and = intersect_all(&sketch, &tokens).unwrap();
            let got_or = union_all(&sketch, &tokens).unwrap();
            prop_assert_eq!(got_and.iter().map(|p| p.0).collect::<BTreeSet<_>>(), want_and);
            prop_assert_eq!(got_or.iter().map(|p| p.0).collect::<BTreeSet<_>>(), want_or);
            prop_assert!(got_and.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(got_or.windows(2).all(|w| w[0] < w[1]));

            let mut rec = Recorder::default();
            execute(&sketch, &tokens, &mut rec).unwrap();
            let absent = query.iter().filter(|k| !sets.contains_key(k)).count();
            let distinct: HashSet<ListId> = tokens.iter().filter_map(|&t| sketch.list_id(t)).collect();
            prop_assert_eq!(rec.accepted.len(), absent + distinct.len());

            let mut reversed = tokens.clone();
            reversed.reverse();
            prop_assert_eq!(intersect_all(&sketch, &reversed).unwrap(), got_and);
            prop_assert_eq!(union_all(&sketch, &reversed).unwrap(), got_or);
        }
    }
}
