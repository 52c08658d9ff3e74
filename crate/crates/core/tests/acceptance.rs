//! Acceptance criteria 1-8. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.
//!
//! `cargo test -p dynawarp-core --test acceptance -- 3 7` runs a subset.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use dynawarp_core::corpus::{alien_ids, generate, Corpus, CorpusConfig};
use dynawarp_core::hashing::{element_hash, extend_hash, postings_hash};
use dynawarp_core::logstore::{split_batch, tokenize, IngestStats, QueryKind, Segment, SegmentWriter, StoreConfig};
use dynawarp_core::mphf::{Mphf, MphfView, DEFAULT_GAMMA};
use dynawarp_core::mutable_sketch::LookupMap;
use dynawarp_core::postings_codec::{bic_decode, bic_encode};
use dynawarp_core::{
    fingerprint, ListConfig, MutablePostingList, MutableSketch, PostingId, PostingsHash, TokenFingerprint,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const BASE_LINES: usize = 100_000;
const LARGE_LINES: usize = 1_000_000;

/// Shared 10^5-line segment plus its brute-force token oracle.
struct Base {
    corpus: Corpus,
    seg: Segment,
    stats: IngestStats,
    /// The writer's mutable sketch just before it was finished.
    mutable: MutableSketch,
    /// Token -> sorted batches, recomputed from the stored batches.
    oracle: HashMap<Vec<u8>, Vec<u16>>,
    _dir: TempDir,
}

static BASE: OnceLock<Base> = OnceLock::new();

fn corpus(lines: usize) -> Corpus {
    generate(&CorpusConfig {
        lines,
        ..CorpusConfig::default()
    })
}

fn ingest_all(w: &mut SegmentWriter, lines: &[String]) {
    for l in lines {
        w.ingest(l.as_bytes()).unwrap();
    }
}

fn base() -> &'static Base {
    BASE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = corpus(BASE_LINES);
        let mut w = SegmentWriter::create(dir.path().join("base"), StoreConfig::default()).unwrap();
        ingest_all(&mut w, &corpus.lines);
        let mutable = w.sketch().clone();
        let (seg, stats) = w.finish().unwrap();

        let mut oracle: HashMap<Vec<u8>, Vec<u16>> = HashMap::new();
        let mut stored = Vec::with_capacity(corpus.lines.len());
        for p in 0..seg.batch_count() {
            let batch = seg.read_batch(PostingId(p as u16)).unwrap();
            for line in split_batch(&batch, seg.manifest().batches[p].line_count) {
                for t in tokenize(line) {
                    let e = oracle.entry(t).or_default();
                    if e.last() != Some(&(p as u16)) {
                        e.push(p as u16);
                    }
                }
                stored.push(line.to_vec());
            }
        }
        assert!(stored.iter().map(Vec::as_slice).eq(corpus.lines.iter().map(String::as_bytes)));
        Base {
            corpus,
            seg,
            stats,
            mutable,
            oracle,
            _dir: dir,
        }
    })
}

fn immutable_postings(seg: &Segment, fp: TokenFingerprint) -> Option<Vec<u16>> {
    let sk = seg.sketch();
    sk.is_present(fp)
        .unwrap()
        .map(|id| sk.decode_list(id).unwrap().iter().map(|p| p.0).collect())
}

fn check_budget(started: Instant, limit: Duration) {
    let took = started.elapsed();
    assert!(took <= limit, "took {took:.1?}, budget {limit:?}");
}

/// Lowercased maximal runs of the three byte classes.
fn runs(s: &[u8]) -> Vec<Vec<u8>> {
    let class = |b: u8| match b {
        _ if b.is_ascii_alphanumeric() => 0,
        _ if b.is_ascii() => 1,
        _ => 2,
    };
    let mut out: Vec<Vec<u8>> = Vec::new();
    let mut prev = None;
    for &b in s {
        if prev == Some(class(b)) {
            out.last_mut().unwrap().push(b.to_ascii_lowercase());
        } else {
            out.push(vec![b.to_ascii_lowercase()]);
        }
        prev = Some(class(b));
    }
    out
}

fn c1_no_false_negatives() -> String {
    let started = Instant::now();
    let b = base();
    for (token, want) in &b.oracle {
        let got = immutable_postings(&b.seg, fingerprint(token).unwrap())
            .unwrap_or_else(|| panic!("token {:?} missing", String::from_utf8_lossy(token)));
        let got: HashSet<u16> = got.into_iter().collect();
        assert!(
            want.iter().all(|p| got.contains(p)),
            "token {:?} lost postings",
            String::from_utf8_lossy(token)
        );
    }

    // term queries are exact after post-filtering
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let line_runs: Vec<Vec<Vec<u8>>> = b.corpus.lines.iter().map(|l| runs(l.as_bytes())).collect();
    let terms = 300;
    for _ in 0..terms {
        let r = line_runs.choose(&mut rng).unwrap();
        let start = rng.gen_range(0..r.len());
        let len = rng.gen_range(1..=3).min(r.len() - start);
        let term = r[start..start + len].concat();
        let want: Vec<&[u8]> = b
            .corpus
            .lines
            .iter()
            .zip(&line_runs)
            .filter(|(_, lr)| lr.windows(len).any(|w| w == &r[start..start + len]))
            .map(|(l, _)| l.as_bytes())
            .collect();
        let got = b.seg.query_term(&term).unwrap();
        assert!(
            got.matches.iter().map(|m| m.line.as_slice()).eq(want.iter().copied()),
            "term {:?}",
            String::from_utf8_lossy(&term)
        );
    }
    check_budget(started, Duration::from_secs(120));
    format!(
        "{} tokens over {} batches are supersets of the oracle; {terms} term queries exact",
        b.oracle.len(),
        b.seg.batch_count()
    )
}

fn c2_alien_error_rate() -> String {
    let started = Instant::now();
    let b = base();
    let dir = tempfile::tempdir().unwrap();
    let mut w = SegmentWriter::create(
        dir.path().join("b12"),
        StoreConfig {
            signature_bits: 12,
            ..StoreConfig::default()
        },
    )
    .unwrap();
    ingest_all(&mut w, &b.corpus.lines);
    let (seg12, _) = w.finish().unwrap();

    let aliens = alien_ids(&b.corpus, 10_000, 21);
    let measured = |seg: &Segment, kind| {
        aliens
            .iter()
            .map(|id| seg.error_rate(id.as_bytes(), kind).unwrap())
            .sum::<f64>()
            / aliens.len() as f64
    };
    let rate8 = measured(&b.seg, QueryKind::Term);
    let contains8 = measured(&b.seg, QueryKind::Contains);
    assert!(rate8 <= 1.0 / 128.0, "b=8 error rate {rate8:.5}");

    // the scaling check needs more probes than 10^4 to see the b=12 rate
    let probes = alien_ids(&b.corpus, 1_000_000, 22);
    let fp_batches = |seg: &Segment| -> u64 {
        probes
            .iter()
            .map(|id| seg.candidates(&seg.plan_term(id.as_bytes()).unwrap()).unwrap().len() as u64)
            .sum()
    };
    let batches = (probes.len() * b.seg.batch_count()) as f64;
    let wide8 = fp_batches(&b.seg) as f64 / batches;
    let wide12 = fp_batches(&seg12) as f64 / batches;
    assert!(wide12 > 0.0, "no b=12 false positives in {} probes", probes.len());
    let factor = wide8 / wide12;
    assert!((8.0..=32.0).contains(&factor), "b=8/b=12 factor {factor:.2}");
    check_budget(started, Duration::from_secs(120));
    format!(
        "b=8 term rate {rate8:.5} <= {:.5} (contains {contains8:.6}); over 10^6 probes b=8 {wide8:.6}, b=12 {wide12:.7}, factor {factor:.1}",
        1.0 / 128.0
    )
}

fn c3_dedup() -> String {
    let started = Instant::now();
    let b = base();
    // posting sets are per fingerprint: colliding tokens share one set
    let mut by_fp: HashMap<u32, BTreeSet<u16>> = HashMap::new();
    for (token, batches) in &b.oracle {
        by_fp
            .entry(fingerprint(token).unwrap().0)
            .or_default()
            .extend(batches.iter().copied());
    }
    let distinct: HashSet<&BTreeSet<u16>> = by_fp.values().collect();
    let multi = distinct.iter().filter(|s| s.len() >= 2).count();
    let stored = b.seg.sketch().list_count();
    assert_eq!(stored, distinct.len() as u64, "stored lists vs oracle distinct sets");
    assert_eq!(b.stats.lists, multi as u64, "mutable lists vs oracle multi-posting sets");
    assert_eq!(b.seg.sketch().token_count(), by_fp.len() as u64);
    let share = stored as f64 / b.oracle.len() as f64;
    assert!(share <= 0.5, "{stored} lists for {} tokens", b.oracle.len());
    check_budget(started, Duration::from_secs(60));
    format!(
        "{stored} distinct sets (oracle {}), {:.1}% of {} tokens",
        distinct.len(),
        share * 100.0,
        b.oracle.len()
    )
}

fn c4_needle_speedup() -> String {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(LARGE_LINES);
    let mut w = SegmentWriter::create(dir.path().join("large"), StoreConfig::default()).unwrap();
    ingest_all(&mut w, &corpus.lines);
    let (seg, stats) = w.finish().unwrap();
    let needles: Vec<&String> = corpus.needles.iter().take(200).collect();
    assert!(needles.len() >= 20, "only {} needles", needles.len());

    let timed = |f: &dyn Fn(&[u8]) -> usize, qs: &[&String]| {
        f(qs[0].as_bytes());
        let t = Instant::now();
        let mut hits = 0;
        for q in qs {
            hits += f(q.as_bytes());
        }
        (qs.len() as f64 / t.elapsed().as_secs_f64(), hits)
    };
    let (sketch_qps, sketch_hits) =
        timed(&|q: &[u8]| seg.query_contains(q).unwrap().matches.len(), &needles);
    let scan_set = &needles[..5];
    let (scan_qps, scan_hits) = timed(&|q: &[u8]| seg.scan_query(q).unwrap().matches.len(), scan_set);
    let sketch_hits_on_scan_set: usize =
        scan_set.iter().map(|q| seg.query_contains(q.as_bytes()).unwrap().matches.len()).sum();
    assert_eq!(sketch_hits_on_scan_set, scan_hits);
    assert!(sketch_hits >= needles.len());
    let speedup = sketch_qps / scan_qps;
    assert!(speedup >= 50.0, "speedup {speedup:.1}");
    check_budget(started, Duration::from_secs(600));
    format!(
        "{} lines, {} batches: sketch {sketch_qps:.0} q/s, scan {scan_qps:.2} q/s, speedup {speedup:.0}x; sketch/data {:.3}",
        stats.lines,
        stats.batches,
        stats.sketch_bytes as f64 / stats.compressed_bytes as f64
    )
}

fn c5_storage_overhead() -> String {
    let b = base();
    let ratio = b.seg.sketch_bytes() as f64 / b.seg.data_bytes() as f64;
    assert!(ratio <= 0.40, "sketch/data {ratio:.3}");
    format!(
        "sketch {} B / compressed data {} B = {:.1}%",
        b.seg.sketch_bytes(),
        b.seg.data_bytes(),
        ratio * 100.0
    )
}

fn c6_flush_equivalence() -> String {
    let started = Instant::now();
    let b = base();
    let limit = b.mutable.estimate_memory() / 5;
    let dir = tempfile::tempdir().unwrap();
    let mut w = SegmentWriter::create(
        dir.path().join("split"),
        StoreConfig {
            memory_limit: Some(limit),
            ..StoreConfig::default()
        },
    )
    .unwrap();
    ingest_all(&mut w, &b.corpus.lines);
    let (split, stats) = w.finish().unwrap();
    assert!(stats.flushes >= 3, "{} flushes", stats.flushes);
    for token in b.oracle.keys() {
        let fp = fingerprint(token).unwrap();
        assert_eq!(
            immutable_postings(&split, fp),
            immutable_postings(&b.seg, fp),
            "token {:?}",
            String::from_utf8_lossy(token)
        );
    }
    assert_eq!(split.sketch().list_count(), b.seg.sketch().list_count());
    check_budget(started, Duration::from_secs(120));
    format!(
        "{} flushes under a {limit} B limit; {} tokens answer identically",
        stats.flushes,
        b.oracle.len()
    )
}

fn mphf_bijection() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut largest = 0;
    for n in [0usize, 1, 2, 3, 100, 10_000, 250_000, 1_000_000] {
        let mut keys = HashSet::with_capacity(n);
        while keys.len() < n {
            keys.insert(rng.gen::<u32>());
        }
        let mut keys: Vec<TokenFingerprint> = keys.into_iter().map(TokenFingerprint).collect();
        keys.sort_unstable();
        let f = Mphf::build(&keys, DEFAULT_GAMMA).unwrap();
        let bytes = f.to_bytes();
        let view = MphfView::new(&bytes).unwrap();
        let mut hit = vec![false; n];
        for &k in &keys {
            let i = f.evaluate(k).unwrap() as usize;
            assert!(i < n && !hit[i], "n={n}: slot {i} reused or out of range");
            assert_eq!(view.evaluate(k), Some(i as u64));
            hit[i] = true;
        }
        assert!(hit.iter().all(|&h| h));
        largest = n;
    }
    largest
}

fn bic_round_trips() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let sets = 10_000;
    for _ in 0..sets {
        let lo = rng.gen_range(0..=u16::MAX as u32);
        let hi = rng.gen_range(lo..=u16::MAX as u32);
        let span = hi - lo + 1;
        let count = match rng.gen_range(0..4) {
            0 => 0,
            1 => rng.gen_range(0..=span.min(8)),
            2 => span.min(rng.gen_range(0..=2000)),
            _ => rng.gen_range(0..=span.min(5000)),
        };
        let mut set: Vec<u32> = rand::seq::index::sample(&mut rng, span as usize, count as usize)
            .into_iter()
            .map(|i| lo + i as u32)
            .collect();
        set.sort_unstable();
        let postings: Vec<PostingId> = set.iter().map(|&v| PostingId(v as u16)).collect();
        let bits = bic_encode(&postings, lo, hi).unwrap();
        let (back, used) = bic_decode(bits.as_bytes(), bits.bit_len(), 0, count, lo, hi).unwrap();
        assert_eq!(back, postings);
        assert_eq!(used, bits.bit_len());
    }
    sets
}

fn fold(order: impl Iterator<Item = u16>) -> PostingsHash {
    postings_hash(order.map(PostingId))
}

/// Every subset of size `k` of `0..n` as a bit mask, via Gosper's hack.
fn for_each_subset(n: u32, k: u32, mut f: impl FnMut(u32)) {
    if k == 0 {
        f(0);
        return;
    }
    let mut s: u64 = (1 << k) - 1;
    while s < 1 << n {
        f(s as u32);
        let c = s & s.wrapping_neg();
        let r = s + c;
        s = (((r ^ s) >> 2) / c) | r;
    }
}

fn permutations(items: &mut [u16], k: usize, f: &mut impl FnMut(&[u16])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, f);
        items.swap(k, i);
    }
}

fn commutativity() -> u64 {
    let mut checked = 0u64;
    for k in 0..=8 {
        for_each_subset(32, k, |mask| {
            let set: Vec<u16> = (0..32u16).filter(|i| mask >> i & 1 == 1).collect();
            let want = fold(set.iter().copied());
            assert_eq!(fold(set.iter().rev().copied()), want);
            let n = set.len().max(1);
            for rot in [1, n / 2, n - 1] {
                assert_eq!(fold(set.iter().cycle().skip(rot).take(set.len()).copied()), want);
            }
            // incremental extension in descending order
            let inc = set.iter().rev().fold(PostingsHash(0), |h, &p| extend_hash(h, PostingId(p)));
            assert_eq!(inc, want);
            if k <= 5 {
                let mut items = set.clone();
                permutations(&mut items, 0, &mut |perm| assert_eq!(fold(perm.iter().copied()), want));
            }
            checked += 1;
        });
    }
    assert_eq!(checked, (0..=8).map(|k| binomial(32, k)).sum::<u64>());

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let config = ListConfig::new(1 << 16).unwrap();
    for _ in 0..2000 {
        let n = rng.gen_range(9..=3000);
        let mut set: Vec<u16> = rand::seq::index::sample(&mut rng, 1 << 16, n)
            .into_iter()
            .map(|i| i as u16)
            .collect();
        let want = fold({
            let mut s = set.clone();
            s.sort_unstable();
            s.into_iter()
        });
        set.shuffle(&mut rng);
        assert_eq!(fold(set.iter().copied()), want);
        let mut list = MutablePostingList::new(config);
        for &p in &set {
            list.insert(PostingId(p)).unwrap();
        }
        assert_eq!(list.postings_hash(), want);
    }
    checked
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn lookup_map_fuzz() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut map = LookupMap::new();
    let mut live: Vec<(u32, u64)> = Vec::new();
    let mut next = 0u32;
    let ops = 200_000;
    for step in 0..ops {
        if live.is_empty() || (live.len() < 3000 && rng.gen_bool(0.55)) {
            // a narrow hash space forces collisions, clusters and wrap-around
            let hash = if rng.gen_bool(0.5) {
                rng.gen_range(0..128u64)
            } else {
                u64::MAX - rng.gen_range(0..16u64)
            };
            assert_eq!(map.insert_with(PostingsHash(hash), next, |_| false), None);
            live.push((next, hash));
            next += 1;
        } else {
            let (h, hash) = live.swap_remove(rng.gen_range(0..live.len()));
            map.remove(PostingsHash(hash), h);
            assert_eq!(map.find(PostingsHash(hash), |c| c == h), None);
        }
        if step % 500 == 0 {
            assert!(map.probe_invariant_holds(), "step {step}");
            assert_eq!(map.len(), live.len());
            for &(h, hash) in &live {
                assert_eq!(map.find(PostingsHash(hash), |c| c == h), Some(h));
            }
        }
    }
    ops
}

fn sketch_fuzz() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let capacity = 64;
    let mut sketch = MutableSketch::new(capacity).unwrap();
    let mut model: HashMap<u32, BTreeSet<u16>> = HashMap::new();
    let ops = 200_000;
    for step in 0..ops {
        // skewed token popularity keeps many lists shared
        let fp = if rng.gen_bool(0.7) {
            rng.gen_range(0..300u32)
        } else {
            rng.gen_range(0..20_000u32)
        };
        let p = if rng.gen_bool(0.5) {
            rng.gen_range(0..8u16)
        } else {
            rng.gen_range(0..capacity as u16)
        };
        sketch.add(TokenFingerprint(fp), PostingId(p)).unwrap();
        model.entry(fp).or_default().insert(p);
        if step % 5000 == 0 {
            sketch.check_invariants().unwrap();
        }
    }
    sketch.check_invariants().unwrap();
    assert_eq!(sketch.token_count(), model.len());
    for (&fp, want) in &model {
        let got = sketch.get_postings(TokenFingerprint(fp)).unwrap();
        assert!(got.iter().map(|p| p.0).eq(want.iter().copied()), "token {fp}");
    }
    let distinct: HashSet<&BTreeSet<u16>> = model.values().filter(|s| s.len() >= 2).collect();
    assert_eq!(sketch.lists().count(), distinct.len());
    ops
}

fn worked_xor_fixture() {
    for order in [[0xad_u64, 0x61, 0x2d], [0x2d, 0xad, 0x61], [0x61, 0x2d, 0xad]] {
        assert_eq!(order.iter().fold(0, |h, v| h ^ v), 0xe1);
    }
    // same fold applied to real element hashes
    let a = element_hash(PostingId(0)) ^ element_hash(PostingId(1)) ^ element_hash(PostingId(3));
    assert_eq!(postings_hash([PostingId(3), PostingId(0), PostingId(1)]), PostingsHash(a));
}

fn c7_component_oracles() -> String {
    let started = Instant::now();
    let n = mphf_bijection();
    let sets = bic_round_trips();
    let subsets = commutativity();
    let lookup_ops = lookup_map_fuzz();
    let sketch_ops = sketch_fuzz();
    worked_xor_fixture();
    check_budget(started, Duration::from_secs(180));
    format!(
        "MPHF bijective up to n={n}; {sets} BIC sets; {subsets} subsets order-invariant; fuzz {lookup_ops} lookup + {sketch_ops} sketch ops; 0xe1 fixture"
    )
}

fn c8_mutable_immutable_agreement() -> String {
    let started = Instant::now();
    let b = base();
    let mut checked = 0;
    for (fp, _) in b.mutable.entries() {
        let want: Vec<u16> = b.mutable.get_postings(fp).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(immutable_postings(&b.seg, fp), Some(want), "{fp:?}");
        checked += 1;
    }
    for token in b.oracle.keys() {
        let fp = fingerprint(token).unwrap();
        let want = b.mutable.get_postings(fp).map(|v| v.iter().map(|p| p.0).collect());
        assert_eq!(immutable_postings(&b.seg, fp), want);
    }
    assert_eq!(checked as u64, b.seg.sketch().token_count());
    check_budget(started, Duration::from_secs(60));
    format!("{checked} fingerprints agree")
}

type Criterion = (u32, &'static str, fn() -> String);

const CRITERIA: [Criterion; 8] = [
    (1, "no false negatives", c1_no_false_negatives),
    (2, "alien-token error rate", c2_alien_error_rate),
    (3, "dedup exactness and effectiveness", c3_dedup),
    (4, "needle-in-haystack speedup", c4_needle_speedup),
    (5, "sketch storage overhead", c5_storage_overhead),
    (6, "segmentation equivalence", c6_flush_equivalence),
    (7, "component oracles", c7_component_oracles),
    (8, "mutable/immutable agreement", c8_mutable_immutable_agreement),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{secs:.1}s]"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {id} ({name}): {msg} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
