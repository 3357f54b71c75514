//! The coverage-guided fuzzing loop: corpus, scheduling, novelty checks and
//! crash/hang deduplication.
//!
//! Candidates are generated in fixed-size batches from the scheduler state
//! at the start of each batch and evaluated in batch order. The outcome of a
//! campaign therefore depends only on the seed, the inputs and the batch
//! size, never on how many workers executed the batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coverage::{CoverageMap, SeenBits};
use crate::harness::{Executor, HarnessError};
use crate::machine::{FaultKind, RunOutcome, Verdict};
use crate::mutate::{havoc, Deterministic, DETERMINISTIC_LIMIT};

pub const BATCH: usize = 64;
pub const HAVOC_ROUND: usize = 256;
pub const RANDOM_SEED_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub input: Vec<u8>,
    /// Discovery index.
    pub index: usize,
    /// Instructions executed by the admitting run.
    pub executed: u64,
    /// Input bytes the admitting run consumed.
    pub consumed: usize,
    pub found_at_exec: u64,
}

/// Deduplication key for crashes and hangs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrashKey {
    Fault { kind: FaultKind, pc: u32 },
    Hang { last_pc: u32 },
}

impl CrashKey {
    pub fn of(verdict: &Verdict) -> Option<CrashKey> {
        match *verdict {
            Verdict::Exit { .. } => None,
            Verdict::Fault { kind, pc, .. } => Some(CrashKey::Fault { kind, pc }),
            Verdict::Hang { last_pc } => Some(CrashKey::Hang { last_pc }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashRecord {
    pub input: Vec<u8>,
    pub verdict: Verdict,
    pub key: CrashKey,
    /// Index within its directory (crashes and hangs count separately).
    pub index: usize,
    pub found_at_exec: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Evaluation {
    pub admitted: bool,
    pub new_crash: bool,
}

/// Fuzzer state with no I/O: feed it outcomes, ask it for candidates.
pub struct Fuzzer {
    rng: ChaCha8Rng,
    seen: SeenBits,
    corpus: Vec<CorpusEntry>,
    crashes: Vec<CrashRecord>,
    hangs: Vec<CrashRecord>,
    keys: std::collections::HashSet<CrashKey>,
    deterministic: Vec<Deterministic>,
    havoc_entry: usize,
    havoc_left: usize,
    execs: u64,
}

impl Fuzzer {
    pub fn new(prng_seed: u64) -> Fuzzer {
        Fuzzer {
            rng: ChaCha8Rng::seed_from_u64(prng_seed),
            seen: SeenBits::default(),
            corpus: Vec::new(),
            crashes: Vec::new(),
            hangs: Vec::new(),
            keys: Default::default(),
            deterministic: Vec::new(),
            havoc_entry: 0,
            havoc_left: 0,
            execs: 0,
        }
    }

    /// A random starting input drawn from the campaign PRNG.
    pub fn random_seed(&mut self) -> Vec<u8> {
        let mut v = vec![0u8; RANDOM_SEED_LEN];
        self.rng.fill(&mut v[..]);
        v
    }

    pub fn seen(&self) -> &SeenBits {
        &self.seen
    }

    pub fn corpus(&self) -> &[CorpusEntry] {
        &self.corpus
    }

    pub fn crashes(&self) -> &[CrashRecord] {
        &self.crashes
    }

    pub fn hangs(&self) -> &[CrashRecord] {
        &self.hangs
    }

    pub fn execs(&self) -> u64 {
        self.execs
    }

    pub fn edges(&self) -> usize {
        self.seen.edge_count()
    }

    /// Records one completed run. `map` may be `None` when the caller has
    /// already established that it holds nothing new.
    pub fn evaluate(&mut self, input: &[u8], outcome: &RunOutcome, map: Option<&CoverageMap>) -> Evaluation {
        self.execs += 1;
        let mut ev = Evaluation::default();
        if map.is_some_and(|m| self.seen.merge_map(m)) {
            ev.admitted = true;
            let entry = CorpusEntry {
                input: input.to_vec(),
                index: self.corpus.len(),
                executed: outcome.executed,
                consumed: outcome.consumed,
                found_at_exec: self.execs,
            };
            if entry.input.len() <= DETERMINISTIC_LIMIT && !entry.input.is_empty() {
                // Bytes past the consumed prefix cannot influence the run.
                let limit = outcome.consumed.max(1);
                self.deterministic.push(Deterministic::new(entry.input.clone(), limit));
            }
            self.corpus.push(entry);
        }
        if let Some(key) = CrashKey::of(&outcome.verdict) {
            if self.keys.insert(key) {
                ev.new_crash = true;
                let list = if outcome.verdict.is_hang() { &mut self.hangs } else { &mut self.crashes };
                list.push(CrashRecord {
                    input: input.to_vec(),
                    verdict: outcome.verdict,
                    key,
                    index: list.len(),
                    found_at_exec: self.execs,
                });
            }
        }
        ev
    }

    fn next_candidate(&mut self, out: &mut Vec<u8>) {
        while let Some(top) = self.deterministic.last_mut() {
            if top.next_into(out) {
                return;
            }
            self.deterministic.pop();
        }
        if self.corpus.is_empty() {
            *out = self.random_seed();
            return;
        }
        if self.havoc_left == 0 {
            self.havoc_entry = (self.havoc_entry + 1) % self.corpus.len();
            self.havoc_left = HAVOC_ROUND;
        }
        self.havoc_left -= 1;
        let other = if self.corpus.len() > 1 { Some(self.rng.random_range(0..self.corpus.len())) } else { None };
        let base = &self.corpus[self.havoc_entry].input;
        let other = other.map(|i| self.corpus[i].input.as_slice());
        havoc(&mut self.rng, base, other, out);
    }

    /// The next `n` candidates.
    pub fn next_batch(&mut self, n: usize) -> Vec<Vec<u8>> {
        (0..n)
            .map(|_| {
                let mut v = Vec::new();
                self.next_candidate(&mut v);
                v
            })
            .collect()
    }
}

/// One executed candidate, as reported back by a worker.
struct Executed {
    outcome: RunOutcome,
    /// Present only when the map had bits missing from the batch-start
    /// snapshot of the seen set.
    map: Option<CoverageMap>,
}

/// Executes `inputs` and evaluates them in order. Each worker takes a
/// contiguous slice.
pub fn run_batch<E: Executor + Send>(
    fuzzer: &mut Fuzzer,
    workers: &mut [E],
    inputs: &[Vec<u8>],
    mut on_eval: impl FnMut(&Fuzzer, &[u8], &RunOutcome, Evaluation),
) -> Result<(), HarnessError> {
    if workers.len() <= 1 {
        let ex = workers.first_mut().expect("at least one worker");
        for input in inputs {
            let outcome = ex.execute(input)?;
            let ev = fuzzer.evaluate(input, &outcome, Some(ex.coverage()));
            on_eval(fuzzer, input, &outcome, ev);
        }
        return Ok(());
    }
    let chunk = inputs.len().div_ceil(workers.len()).max(1);
    let seen = &fuzzer.seen;
    let results: Vec<Result<Vec<Executed>, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = workers
            .iter_mut()
            .zip(inputs.chunks(chunk))
            .map(|(ex, part)| {
                s.spawn(move || {
                    part.iter()
                        .map(|input| {
                            let outcome = ex.execute(input)?;
                            let map = seen.has_new(ex.coverage()).then(|| ex.coverage().clone());
                            Ok(Executed { outcome, map })
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut done = Vec::with_capacity(inputs.len());
    for r in results {
        done.extend(r?);
    }
    for (input, e) in inputs.iter().zip(done) {
        let ev = fuzzer.evaluate(input, &e.outcome, e.map.as_ref());
        on_eval(fuzzer, input, &e.outcome, ev);
    }
    Ok(())
}
