mod bench;
mod config;
mod query;
mod stats;
mod store;
mod verify;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynawarp_core::corpus::{alien_ids, generate, CorpusConfig};
use dynawarp_core::logstore::QueryKind;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use config::{ConfigFile, Mode, StoreArgs};

#[derive(Parser, Debug)]
#[command(name = "dynawarp", version, about = "Log store with sketch-based batch pruning")]
struct Cli {
    /// `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Structured output instead of tab-separated tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct StoreLocation {
    /// Store directory (or a single segment directory).
    #[arg(long, short = 's')]
    store: Option<PathBuf>,
}

impl StoreLocation {
    fn resolve(&self, file: &ConfigFile) -> Result<PathBuf> {
        self.store
            .clone()
            .or_else(|| file.store())
            .context("no store given: pass --store or set `store` in the config file")
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Append newline-delimited log lines to a store.
    Ingest {
        #[command(flatten)]
        location: StoreLocation,
        /// Input file; `-` or absent reads standard input.
        input: Option<PathBuf>,
        /// Lines are `source<TAB>line`.
        #[arg(long)]
        source_tab: bool,
        #[command(flatten)]
        settings: StoreArgs,
    },
    /// Print lines holding a term or substring.
    Query {
        #[command(flatten)]
        location: StoreLocation,
        /// Whole-token match.
        #[arg(long, conflicts_with = "contains", required_unless_present = "contains")]
        term: Option<String>,
        /// Case-insensitive substring match.
        #[arg(long)]
        contains: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Print only the number of matching lines.
        #[arg(long)]
        count_only: bool,
        /// Print the plan and pruning counters per segment to standard error.
        #[arg(long)]
        explain: bool,
    },
    /// Check every segment against an oracle rebuilt from its stored lines.
    Verify {
        #[command(flatten)]
        location: StoreLocation,
        /// Original input, compared line by line with the store.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        source_tab: bool,
    },
    /// Sizes and counts per segment.
    Stats {
        #[command(flatten)]
        location: StoreLocation,
    },
    /// Measure sketch and scan query throughput per query class.
    Bench {
        #[command(flatten)]
        location: StoreLocation,
        /// Ingest this corpus into a scratch store instead of using --store.
        #[arg(long, conflicts_with = "store")]
        input: Option<PathBuf>,
        /// Query file: `[class<TAB>]term|contains<TAB>text` per line.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 1)]
        iterations: u32,
        /// Keep measuring each mode for at least this many seconds.
        #[arg(long)]
        seconds: Option<f64>,
        /// Segments queried concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        settings: StoreArgs,
    },
    /// Write a synthetic log corpus and, optionally, a matching query file.
    Generate {
        #[arg(long, default_value_t = 100_000)]
        lines: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Share of lines carrying a 16-letter request id.
        #[arg(long, default_value_t = 0.002)]
        needle_rate: f64,
        /// Corpus destination; standard output when absent.
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
        /// Also write queries: needle ids, absent ids and extracted terms.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Queries per class.
        #[arg(long, default_value_t = 50)]
        per_class: usize,
    },
}

fn print_table(out: &mut impl Write, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    writeln!(out, "{}", header.join("\t"))?;
    for r in rows {
        writeln!(out, "{}", r.join("\t"))?;
    }
    Ok(())
}

fn print_json(out: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Ingest {
            location,
            input,
            source_tab,
            settings,
        } => {
            let config = settings.resolve(&file)?;
            let store = location.resolve(&file)?;
            let records = store::Records::open(input.as_deref(), source_tab)?;
            let reports = store::ingest(&store, &config, records)?;
            if cli.json {
                print_json(&mut out, &reports)?;
            } else {
                print_table(&mut out, &store::SegmentReport::HEADER, reports.iter().map(|r| r.row()))?;
            }
        }
        Command::Query {
            location,
            term,
            contains,
            mode,
            count_only,
            explain,
        } => {
            let mode = match mode {
                Some(m) => m,
                None => file.mode()?.unwrap_or_default(),
            };
            let (kind, text) = match (term, contains) {
                (Some(t), None) => (QueryKind::Term, t),
                (None, Some(c)) => (QueryKind::Contains, c),
                _ => bail!("give exactly one of --term or --contains"),
            };
            if text.is_empty() {
                bail!("empty query");
            }
            let segments = store::open_segments(&location.resolve(&file)?)?;
            let args = query::QueryArgs {
                kind,
                text: text.as_bytes(),
                mode,
                count_only,
                explain,
                json: cli.json,
            };
            query::run(&segments, &args, &mut out)?;
        }
        Command::Verify {
            location,
            input,
            source_tab,
        } => {
            let segments = store::open_segments(&location.resolve(&file)?)?;
            let records = input
                .as_deref()
                .map(|p| store::Records::open(Some(p), source_tab))
                .transpose()?;
            let report = verify::run(&segments, records)?;
            if cli.json {
                print_json(&mut out, &report)?;
            } else {
                let opt = |b: Option<bool>| b.map_or("-".to_string(), |b| b.to_string());
                let rows = [
                    ("ok", report.ok.to_string()),
                    ("segments", report.segments.to_string()),
                    ("lines", report.lines.to_string()),
                    ("batches", report.batches.to_string()),
                    ("tokens", report.tokens.to_string()),
                    ("distinct_sets", report.distinct_sets.to_string()),
                    ("dedup_ratio", format!("{:.4}", report.dedup_ratio)),
                    ("input_matches", opt(report.input_matches)),
                    ("input_order_preserved", opt(report.input_order_preserved)),
                    ("failure", report.failure.clone().unwrap_or_else(|| "-".into())),
                ];
                print_table(&mut out, &["check", "value"], rows.into_iter().map(|(k, v)| vec![k.to_string(), v]))?;
            }
            if let Some(f) = &report.failure {
                out.flush()?;
                eprintln!("verification failed: {f}");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Stats { location } => {
            let segments = store::open_segments(&location.resolve(&file)?)?;
            let rows = stats::collect(&segments)?;
            if cli.json {
                print_json(&mut out, &rows)?;
            } else {
                print_table(&mut out, &stats::SegmentStats::HEADER, rows.iter().map(|r| r.row()))?;
            }
        }
        Command::Bench {
            location,
            input,
            queries,
            iterations,
            seconds,
            parallel,
            settings,
        } => {
            let queries = bench::load_queries(&queries)?;
            let opts = bench::BenchOptions {
                iterations: iterations.max(1),
                min_time: seconds.map(Duration::from_secs_f64),
                parallel: parallel.max(1),
            };
            let scratch = match &input {
                Some(corpus) => {
                    let dir = std::env::temp_dir().join(format!("dynawarp-bench-{}", std::process::id()));
                    let config = settings.resolve(&file)?;
                    let reports = store::ingest(&dir, &config, store::Records::open(Some(corpus), false)?);
                    if let Err(e) = reports {
                        let _ = fs::remove_dir_all(&dir);
                        return Err(e);
                    }
                    Some(dir)
                }
                None => None,
            };
            let store_path = match &scratch {
                Some(dir) => dir.clone(),
                None => location.resolve(&file)?,
            };
            let result = store::open_segments(&store_path)
                .and_then(|segs| bench::run(&segs.into_iter().map(|(_, s)| s).collect::<Vec<_>>(), &queries, &opts));
            if let Some(dir) = &scratch {
                let _ = fs::remove_dir_all(dir);
            }
            let results = result?;
            if cli.json {
                print_json(&mut out, &results)?;
            } else {
                print_table(&mut out, &bench::ClassResult::HEADER, results.iter().map(|r| r.row()))?;
            }
        }
        Command::Generate {
            lines,
            seed,
            needle_rate,
            output,
            queries,
            per_class,
        } => {
            let corpus = generate(&CorpusConfig {
                lines,
                seed,
                needle_rate,
            });
            match &output {
                Some(p) => write_lines(p, corpus.lines.iter().map(String::as_str))?,
                None => {
                    for l in &corpus.lines {
                        writeln!(out, "{l}")?;
                    }
                }
            }
            if let Some(p) = &queries {
                write_lines(p, generated_queries(&corpus, seed, per_class).iter().map(String::as_str))?;
            }
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn write_lines<'a>(path: &Path, lines: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// Needle ids as substrings, absent ids as terms, and single-word terms
/// drawn from random lines.
fn generated_queries(corpus: &dynawarp_core::corpus::Corpus, seed: u64, per_class: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::new();
    for id in corpus.needles.choose_multiple(&mut rng, per_class) {
        out.push(format!("needle\tcontains\t{id}"));
    }
    for id in alien_ids(corpus, per_class, seed ^ 0xa11e) {
        out.push(format!("alien\tterm\t{id}"));
    }
    let mut terms = Vec::new();
    while terms.len() < per_class && !corpus.lines.is_empty() {
        let line = corpus.lines.choose(&mut rng).unwrap();
        let words: Vec<&str> = line
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| w.len() >= 4)
            .collect();
        if let Some(w) = words.choose(&mut rng) {
            terms.push(format!("term\tterm\t{}", w.to_ascii_lowercase()));
        }
    }
    out.extend(terms);
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DYNAWARP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dynawarp: {e:#}");
            ExitCode::from(2)
        }
    }
}
