//! Synthetic log corpora shaped like public system-log collections
//! (HDFS, OpenSSH, Apache, Spark, ZooKeeper).
//!
//! Variables come from bounded pools that drift over time, so values recur
//! locally the way host names, block ids and sessions do in real logs. A
//! small share of lines carries a random 16-letter request id; those ids are
//! the needles for needle-in-the-haystack queries.

use std::collections::HashSet;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ID_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub lines: usize,
    pub seed: u64,
    /// Share of lines carrying a needle id.
    pub needle_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            lines: 100_000,
            seed: 1,
            needle_rate: 0.002,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub lines: Vec<String>,
    /// Distinct needle ids planted in the corpus, in first-use order.
    pub needles: Vec<String>,
}

/// `len` random lowercase letters.
pub fn random_letters<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

/// `n` distinct random 16-letter ids, none of them a substring of any line
/// in `corpus` (checked case-insensitively).
pub fn alien_ids(corpus: &Corpus, n: usize, seed: u64) -> Vec<String> {
    // a 16-letter id can only occur inside a letter run at least that long
    let mut long_runs: Vec<Vec<u8>> = Vec::new();
    for line in &corpus.lines {
        for run in line.as_bytes().split(|b| !b.is_ascii_alphabetic()) {
            if run.len() >= ID_LEN {
                long_runs.push(run.to_ascii_lowercase());
            }
        }
    }
    let windows: HashSet<&[u8]> = long_runs.iter().flat_map(|r| r.windows(ID_LEN)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let id = random_letters(&mut rng, ID_LEN);
        if !windows.contains(id.as_bytes()) && seen.insert(id.clone()) {
            out.push(id);
        }
    }
    out
}

struct Pools {
    hosts: Vec<String>,
    ips: Vec<String>,
    users: Vec<String>,
    paths: Vec<String>,
    blocks: Vec<i64>,
    classes: Vec<&'static str>,
}

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "kafka", "redis", "nginx", "proxy", "cache", "store", "index", "query",
    "shard", "node", "pool", "queue", "batch", "stream", "token", "session", "worker", "daemon", "backup",
    "mirror", "bucket", "ledger", "report", "upload", "assets", "static", "images", "admin", "login", "api",
];

const USERS: &[&str] = &[
    "root", "admin", "oracle", "test", "guest", "ubuntu", "hadoop", "spark", "mysql", "postgres", "git",
    "jenkins", "deploy", "www", "ftp", "nagios", "backup", "support", "user", "operator",
];

const CLASSES: &[&str] = &[
    "dfs.DataNode$PacketResponder",
    "dfs.DataNode$DataXceiver",
    "dfs.FSNamesystem",
    "dfs.DataBlockScanner",
    "executor.Executor",
    "storage.BlockManager",
    "scheduler.TaskSetManager",
    "server.NIOServerCnxn",
    "quorum.QuorumCnxManager",
    "api.RequestHandler",
];

impl Pools {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let hosts = (0..40)
            .map(|i| format!("{}-{}{:02}", WORDS[i % WORDS.len()], ["node", "srv", "db"][i % 3], i))
            .collect();
        let ips = (0..300)
            .map(|_| format!("10.{}.{}.{}", rng.gen_range(0..4), rng.gen_range(0..32), rng.gen_range(1..255)))
            .collect();
        let users = (0..200)
            .map(|i| {
                if i < USERS.len() {
                    USERS[i].to_string()
                } else {
                    format!("{}{}", USERS[i % USERS.len()], rng.gen_range(1..100))
                }
            })
            .collect();
        let paths = (0..300)
            .map(|_| {
                let depth = rng.gen_range(1..4);
                let mut p = String::new();
                for _ in 0..depth {
                    p.push('/');
                    p.push_str(WORDS.choose(rng).unwrap());
                }
                let _ = write!(p, "/{}.{}", WORDS.choose(rng).unwrap(), ["html", "php", "js", "png", "css"][rng.gen_range(0..5)]);
                p
            })
            .collect();
        let blocks = (0..64).map(|_| rng.gen::<i64>()).collect();
        Pools {
            hosts,
            ips,
            users,
            paths,
            blocks,
            classes: CLASSES.to_vec(),
        }
    }

    /// Replaces one active block id now and then.
    fn churn(&mut self, rng: &mut ChaCha8Rng) {
        if rng.gen_bool(0.15) {
            let i = rng.gen_range(0..self.blocks.len());
            self.blocks[i] = rng.gen();
        }
        if rng.gen_bool(0.002) {
            let i = rng.gen_range(0..self.ips.len());
            self.ips[i] = format!("10.{}.{}.{}", rng.gen_range(0..4), rng.gen_range(0..32), rng.gen_range(1..255));
        }
    }
}

struct Clock {
    secs: u64,
    millis: u32,
}

impl Clock {
    fn tick(&mut self, rng: &mut ChaCha8Rng) {
        self.millis += rng.gen_range(0..120);
        if self.millis >= 1000 {
            self.secs += (self.millis / 1000) as u64;
            self.millis %= 1000;
        }
    }

    fn parts(&self) -> (u64, u64, u64, u64, u64, u64) {
        let day = self.secs / 86_400;
        let rem = self.secs % 86_400;
        // 28-day months keep the calendar arithmetic trivial
        let month = 1 + (day / 28) % 12;
        let dom = 1 + day % 28;
        let year = 2015 + day / 336;
        (year, month, dom, rem / 3600, (rem / 60) % 60, rem % 60)
    }

    fn iso(&self) -> String {
        let (y, mo, d, h, mi, s) = self.parts();
        format!("{y}-{mo:02}-{d:02} {h:02}:{mi:02}:{s:02},{:03}", self.millis)
    }

    fn syslog(&self) -> String {
        const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
        let (_, mo, d, h, mi, s) = self.parts();
        format!("{} {d:2} {h:02}:{mi:02}:{s:02}", MONTHS[mo as usize - 1])
    }

    fn apache(&self) -> String {
        const DAYS: [&str; 7] = ["Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"];
        const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
        let (y, mo, d, h, mi, s) = self.parts();
        format!(
            "{} {} {d:02} {h:02}:{mi:02}:{s:02} {y}",
            DAYS[(self.secs / 86_400 % 7) as usize],
            MONTHS[mo as usize - 1]
        )
    }
}

/// Generates a corpus. Identical configs give identical corpora.
pub fn generate(cfg: &CorpusConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pools = Pools::new(&mut rng);
    let mut clock = Clock {
        secs: 3 * 3600,
        millis: 0,
    };
    let mut lines = Vec::with_capacity(cfg.lines);
    let mut needles: Vec<String> = Vec::new();
    let mut live_needle: Option<(String, u32)> = None;
    for _ in 0..cfg.lines {
        clock.tick(&mut rng);
        pools.churn(&mut rng);
        let carry_needle = rng.gen_bool(cfg.needle_rate.clamp(0.0, 1.0));
        let line = if carry_needle {
            // an id shows up in a short burst of related lines
            let id = match live_needle.take() {
                Some((id, left)) if left > 0 => {
                    live_needle = Some((id.clone(), left - 1));
                    id
                }
                _ => {
                    let id = random_letters(&mut rng, ID_LEN);
                    needles.push(id.clone());
                    live_needle = Some((id.clone(), rng.gen_range(0..3)));
                    id
                }
            };
            request_line(&mut rng, &pools, &clock, &id)
        } else {
            template_line(&mut rng, &pools, &clock)
        };
        lines.push(line);
    }
    Corpus { lines, needles }
}

fn request_line(rng: &mut ChaCha8Rng, pools: &Pools, clock: &Clock, id: &str) -> String {
    let status = [200, 200, 200, 404, 500, 302][rng.gen_range(0..6)];
    format!(
        "{} INFO api.RequestHandler: request id={id} user={} path={} status={status} latency={}ms",
        clock.iso(),
        pools.users.choose(rng).unwrap(),
        pools.paths.choose(rng).unwrap(),
        rng.gen_range(1..400)
    )
}

fn template_line(rng: &mut ChaCha8Rng, pools: &Pools, clock: &Clock) -> String {
    let pick_ip = |rng: &mut ChaCha8Rng| pools.ips.choose(rng).unwrap().as_str();
    let port = |rng: &mut ChaCha8Rng| 50010 + rng.gen_range(0..8) * 10;
    let host = pools.hosts.choose(rng).unwrap();
    let block = pools.blocks.choose(rng).unwrap();
    match rng.gen_range(0..100) {
        0..=17 => format!(
            "{} INFO {}: PacketResponder {} for block blk_{block} terminating",
            clock.iso(),
            pools.classes[0],
            rng.gen_range(0..3)
        ),
        18..=33 => format!(
            "{} INFO {}: Receiving block blk_{block} src: /{}:{} dest: /{}:{}",
            clock.iso(),
            pools.classes[1],
            pick_ip(rng),
            port(rng),
            pick_ip(rng),
            port(rng)
        ),
        34..=45 => format!(
            "{} INFO {}: BLOCK* NameSystem.addStoredBlock: blockMap updated: {}:{} is added to blk_{block} size {}",
            clock.iso(),
            pools.classes[2],
            pick_ip(rng),
            port(rng),
            [67108864, 67108864, 3552256, 91178][rng.gen_range(0..4)]
        ),
        46..=51 => format!(
            "{} INFO {}: Verification succeeded for blk_{block}",
            clock.iso(),
            pools.classes[3]
        ),
        52..=61 => format!(
            "{} {host} sshd[{}]: Failed password for invalid user {} from {} port {} ssh2",
            clock.syslog(),
            rng.gen_range(1000..1400),
            pools.users.choose(rng).unwrap(),
            pick_ip(rng),
            rng.gen_range(40000..40400)
        ),
        62..=66 => format!(
            "{} {host} sshd[{}]: Accepted publickey for {} from {} port {} ssh2",
            clock.syslog(),
            rng.gen_range(1000..1400),
            pools.users.choose(rng).unwrap(),
            pick_ip(rng),
            rng.gen_range(40000..40400)
        ),
        67..=71 => format!(
            "{} {host} sshd[{}]: pam_unix(sshd:session): session closed for user {}",
            clock.syslog(),
            rng.gen_range(1000..1400),
            pools.users.choose(rng).unwrap()
        ),
        72..=79 => format!(
            "[{}] [error] [client {}] File does not exist: /var/www/html{}",
            clock.apache(),
            pick_ip(rng),
            pools.paths.choose(rng).unwrap()
        ),
        80..=83 => format!(
            "[{}] [notice] jk2_init() Found child {} in scoreboard slot {}",
            clock.apache(),
            rng.gen_range(5000..5400),
            rng.gen_range(6..12)
        ),
        84..=89 => {
            let stage = rng.gen_range(0..40);
            format!(
                "{} INFO {}: Finished task {}.0 in stage {stage}.0 (TID {}) in {} ms on {host} (executor {}) ({}/{})",
                clock.iso(),
                pools.classes[6],
                rng.gen_range(0..64),
                rng.gen_range(0..4000),
                rng.gen_range(10..2000),
                rng.gen_range(1..16),
                rng.gen_range(1..64),
                64
            )
        }
        90..=93 => format!(
            "{} WARN {}: Exception in task {}.0 in stage {}.0 (TID {}): java.io.IOException: Connection reset by peer",
            clock.iso(),
            pools.classes[4],
            rng.gen_range(0..64),
            rng.gen_range(0..40),
            rng.gen_range(0..4000)
        ),
        94..=96 => format!(
            "{} WARN  [RecvWorker:{}:{}] - Connection broken for id {}, my id = {}, error = ",
            clock.iso(),
            rng.gen_range(1..6),
            pools.classes[8],
            rng.gen_range(1..6),
            rng.gen_range(1..6)
        ),
        _ => format!(
            "{} INFO  [NIOServerCxn.Factory:0.0.0.0/0.0.0.0:2181:{}] - Accepted socket connection from /{}:{}",
            clock.iso(),
            pools.classes[7],
            pick_ip(rng),
            rng.gen_range(50000..50400)
        ),
    }
}
