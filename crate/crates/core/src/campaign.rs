//! A fuzzing campaign with an output directory:
//!
//! ```text
//! out/corpus/000000-1a2b3c4d        admitted inputs
//! out/crashes/000000-5e6f7a8b       one input per unique (kind, pc)
//! out/crashes/000000-5e6f7a8b.json  sidecar: outcome, pc, input length
//! out/hangs/...                     same layout, keyed by last pc
//! out/stats.jsonl                   one sample per line
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{run_batch, CrashRecord, Fuzzer, BATCH};
use crate::harness::Executor;
use crate::machine::Verdict;
use crate::stats::{self, StatsSample};

#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    pub out: PathBuf,
    /// Starting inputs. Empty means one random 64-byte input.
    pub seeds: Vec<Vec<u8>>,
    pub max_execs: Option<u64>,
    pub max_seconds: Option<f64>,
    /// Also sample stats every this many executions.
    pub stats_every: Option<u64>,
    /// Set from outside (e.g. a signal handler) to stop after the current
    /// batch.
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone)]
pub struct CampaignSummary {
    pub execs: u64,
    pub seconds: f64,
    pub edges: usize,
    pub corpus_size: usize,
    pub crashes: Vec<CrashRecord>,
    pub hangs: Vec<CrashRecord>,
    pub samples: Vec<StatsSample>,
}

/// Sidecar metadata stored next to each crash or hang input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    /// `"fault"` or `"hang"`.
    pub outcome: String,
    pub kind: Option<String>,
    pub pc: String,
    pub address: Option<String>,
    pub input_len: usize,
    pub found_at_exec: u64,
}

impl Sidecar {
    pub fn of(record: &CrashRecord) -> Sidecar {
        let (outcome, kind, pc, address) = match record.verdict {
            Verdict::Fault { kind, pc, address } => ("fault", Some(kind.name().to_string()), pc, address),
            Verdict::Hang { last_pc } => ("hang", None, last_pc, None),
            Verdict::Exit { .. } => unreachable!("exits are not recorded"),
        };
        Sidecar {
            outcome: outcome.into(),
            kind,
            pc: format!("0x{pc:08x}"),
            address: address.map(|a| format!("0x{a:08x}")),
            input_len: record.input.len(),
            found_at_exec: record.found_at_exec,
        }
    }
}

/// `{index:06}-{first 8 hex digits of sha256}`.
pub fn entry_name(index: usize, input: &[u8]) -> String {
    let digest = Sha256::digest(input);
    format!("{index:06}-{:02x}{:02x}{:02x}{:02x}", digest[0], digest[1], digest[2], digest[3])
}

/// Reads seeds from a file or from every regular file in a directory
/// (sorted by name, sidecars and dotfiles skipped).
pub fn load_seeds(path: &Path) -> anyhow::Result<Vec<Vec<u8>>> {
    if path.is_file() {
        return Ok(vec![fs::read(path)?]);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading seeds from {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            !name.starts_with('.') && !name.ends_with(".json")
        })
        .collect();
    names.sort();
    names.iter().map(|p| fs::read(p).with_context(|| p.display().to_string())).collect()
}

/// Loads every stored input of a campaign subdirectory with its sidecar.
pub fn load_records(dir: &Path) -> anyhow::Result<Vec<(PathBuf, Vec<u8>, Sidecar)>> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.extension().is_some_and(|e| e == "json") {
            continue;
        }
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(p.with_extension("json"))?)?;
        out.push((p.clone(), fs::read(&p)?, side));
    }
    Ok(out)
}

struct Output {
    corpus: PathBuf,
    crashes: PathBuf,
    hangs: PathBuf,
    stats: fs::File,
}

impl Output {
    fn create(out: &Path) -> anyhow::Result<Output> {
        let corpus = out.join("corpus");
        let crashes = out.join("crashes");
        let hangs = out.join("hangs");
        for d in [&corpus, &crashes, &hangs] {
            if d.exists() && fs::read_dir(d)?.next().is_some() {
                bail!("{} is not empty; pick a fresh output directory", d.display());
            }
            fs::create_dir_all(d).with_context(|| d.display().to_string())?;
        }
        let stats = fs::File::create(out.join("stats.jsonl"))?;
        Ok(Output { corpus, crashes, hangs, stats })
    }

    fn record(&self, dir: &Path, record: &CrashRecord) -> std::io::Result<()> {
        let name = entry_name(record.index, &record.input);
        fs::write(dir.join(&name), &record.input)?;
        let side = serde_json::to_string_pretty(&Sidecar::of(record)).expect("sidecar serializes");
        fs::write(dir.join(format!("{name}.json")), side + "\n")
    }
}

fn sample(f: &Fuzzer, start: Instant) -> StatsSample {
    let seconds = start.elapsed().as_secs_f64();
    StatsSample {
        execs: f.execs(),
        seconds,
        edges: f.edges(),
        corpus_size: f.corpus().len(),
        unique_crashes: f.crashes().len(),
        unique_hangs: f.hangs().len(),
        execs_per_sec: if seconds > 0.0 { f.execs() as f64 / seconds } else { 0.0 },
    }
}

/// Runs a campaign to its budget (or until stopped) and writes the output
/// directory as it goes.
pub fn run_campaign<E: Executor + Send>(
    workers: &mut [E],
    prng_seed: u64,
    opts: &CampaignOptions,
) -> anyhow::Result<CampaignSummary> {
    anyhow::ensure!(!workers.is_empty(), "need at least one worker");
    let mut out = Output::create(&opts.out)?;
    let mut fuzzer = Fuzzer::new(prng_seed);
    let start = Instant::now();
    let mut samples = Vec::new();
    let mut io_err: Option<std::io::Error> = None;

    let emit = |f: &Fuzzer, out: &mut Output, samples: &mut Vec<StatsSample>| -> std::io::Result<()> {
        let s = sample(f, start);
        stats::append(&mut out.stats, &s)?;
        out.stats.flush()?;
        samples.push(s);
        Ok(())
    };

    let remaining = |f: &Fuzzer| opts.max_execs.map_or(usize::MAX, |m| m.saturating_sub(f.execs()) as usize);
    let stopped = || opts.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed));
    let timed_out = || opts.max_seconds.is_some_and(|m| start.elapsed().as_secs_f64() >= m);

    let mut seeds = opts.seeds.clone();
    if seeds.is_empty() {
        seeds.push(fuzzer.random_seed());
    }
    let mut next_tick = 1.0;
    let mut next_exec_sample = opts.stats_every.unwrap_or(u64::MAX);
    let mut first = true;
    loop {
        let batch = if first {
            first = false;
            seeds.truncate(remaining(&fuzzer));
            std::mem::take(&mut seeds)
        } else {
            let n = remaining(&fuzzer).min(BATCH);
            if n == 0 || stopped() || timed_out() {
                break;
            }
            fuzzer.next_batch(n)
        };
        let dirs = (out.corpus.clone(), out.crashes.clone(), out.hangs.clone());
        let out_ref = &out;
        run_batch(&mut fuzzer, workers, &batch, |f, input, outcome, ev| {
            let res = (|| {
                if ev.admitted {
                    let e = f.corpus().last().expect("admitted");
                    fs::write(dirs.0.join(entry_name(e.index, input)), input)?;
                }
                if ev.new_crash {
                    if outcome.verdict.is_hang() {
                        out_ref.record(&dirs.2, f.hangs().last().expect("hang"))?;
                    } else {
                        out_ref.record(&dirs.1, f.crashes().last().expect("crash"))?;
                    }
                }
                Ok(())
            })();
            if let Err(e) = res {
                io_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = io_err.take() {
            return Err(e.into());
        }
        let elapsed = start.elapsed().as_secs_f64();
        if samples.is_empty() || elapsed >= next_tick || fuzzer.execs() >= next_exec_sample {
            emit(&fuzzer, &mut out, &mut samples)?;
            while next_tick <= elapsed {
                next_tick += 1.0;
            }
            if let Some(every) = opts.stats_every {
                while next_exec_sample <= fuzzer.execs() {
                    next_exec_sample += every;
                }
            }
        }
    }
    if samples.last().is_none_or(|s| s.execs != fuzzer.execs()) {
        emit(&fuzzer, &mut out, &mut samples)?;
    }
    Ok(CampaignSummary {
        execs: fuzzer.execs(),
        seconds: start.elapsed().as_secs_f64(),
        edges: fuzzer.edges(),
        corpus_size: fuzzer.corpus().len(),
        crashes: fuzzer.crashes().to_vec(),
        hangs: fuzzer.hangs().to_vec(),
        samples,
    })
}
