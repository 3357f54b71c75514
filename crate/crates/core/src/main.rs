use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use vpfuzz::asm::assemble;
use vpfuzz::campaign::{load_seeds, run_campaign, CampaignOptions};
use vpfuzz::config::{load_target, LoadedTarget};
use vpfuzz::harness::InProcess;
use vpfuzz::machine::{ExecMode, Machine, Verdict};
use vpfuzz::protocol::{child_serve, ChildExecutor, EXIT_CONFIG, EXIT_PROTOCOL};
use vpfuzz::stats;

const EXIT_FAULT: u8 = 10;
const EXIT_HANG: u8 = 11;

#[derive(Parser)]
#[command(name = "vpfuzz", version, about = "Stateful firmware fuzzing on a virtual prototype")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct TargetArgs {
    #[arg(long)]
    config: PathBuf,
    /// Raw image, or `.s` source assembled on the fly.
    #[arg(long)]
    firmware: PathBuf,
    #[arg(long)]
    symbols: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum Mode {
    Stateful,
    Stateless,
}

impl From<Mode> for ExecMode {
    fn from(m: Mode) -> ExecMode {
        match m {
            Mode::Stateful => ExecMode::Stateful,
            Mode::Stateless => ExecMode::Stateless,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one input and report the outcome.
    Run {
        #[command(flatten)]
        target: TargetArgs,
        /// Input file, `-` for stdin.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a fuzzing campaign.
    Fuzz {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        out: PathBuf,
        /// Seed file or directory.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        max_execs: Option<u64>,
        #[arg(long)]
        max_seconds: Option<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Also write a stats sample every N executions.
        #[arg(long)]
        stats_every: Option<u64>,
        /// Execute through child processes speaking the pipe protocol.
        #[arg(long)]
        child: bool,
    },
    /// Assemble a source file.
    Asm {
        source: PathBuf,
        #[arg(short = 'o', long)]
        output: PathBuf,
        #[arg(long)]
        symbols: Option<PathBuf>,
    },
    /// Convert a campaign's stats.jsonl to CSV.
    Stats {
        #[arg(long)]
        out: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Child side of the execution protocol on stdin/stdout.
    #[command(hide = true)]
    Serve {
        #[command(flatten)]
        target: TargetArgs,
    },
}

fn load(t: &TargetArgs) -> Result<LoadedTarget, ExitCode> {
    load_target(&t.config, &t.firmware, t.symbols.as_deref(), t.mode.map(Into::into)).map_err(|e| {
        eprintln!("vpfuzz: {e}");
        ExitCode::from(EXIT_CONFIG as u8)
    })
}

fn machine(t: &LoadedTarget) -> Result<Machine, ExitCode> {
    Machine::new(&t.image, &t.config.machine).map_err(|e| {
        eprintln!("vpfuzz: {e}");
        ExitCode::from(EXIT_CONFIG as u8)
    })
}

fn read_input(path: &Path) -> anyhow::Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut v = Vec::new();
        std::io::stdin().read_to_end(&mut v)?;
        return Ok(v);
    }
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_run(target: &TargetArgs, input: &Path) -> anyhow::Result<ExitCode> {
    let t = match load(target) {
        Ok(t) => t,
        Err(code) => return Ok(code),
    };
    let mut m = match machine(&t) {
        Ok(m) => m,
        Err(code) => return Ok(code),
    };
    m.reset(&read_input(input)?);
    let out = m.run();
    let edges = m.coverage().edge_count();
    println!("{}", out.verdict);
    println!("executed={} consumed={} edges={edges}", out.executed, out.consumed);
    let (kind, pc, address, code) = match out.verdict {
        Verdict::Exit { code } => ("exit", None, None, Some(code)),
        Verdict::Fault { kind, pc, address } => (kind.name(), Some(pc), address, None),
        Verdict::Hang { last_pc } => ("hang", Some(last_pc), None, None),
    };
    let json = serde_json::json!({
        "outcome": kind,
        "exit_code": code,
        "pc": pc.map(|p| format!("0x{p:08x}")),
        "address": address.map(|a| format!("0x{a:08x}")),
        "executed": out.executed,
        "consumed": out.consumed,
        "edges": edges,
    });
    println!("{json}");
    Ok(match out.verdict {
        Verdict::Exit { .. } => ExitCode::SUCCESS,
        Verdict::Fault { .. } => ExitCode::from(EXIT_FAULT),
        Verdict::Hang { .. } => ExitCode::from(EXIT_HANG),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuzz(
    target: &TargetArgs,
    out: PathBuf,
    seeds: Option<PathBuf>,
    max_execs: Option<u64>,
    max_seconds: Option<f64>,
    workers: usize,
    stats_every: Option<u64>,
    child: bool,
) -> anyhow::Result<ExitCode> {
    let t = match load(target) {
        Ok(t) => t,
        Err(code) => return Ok(code),
    };
    if let Err(code) = machine(&t) {
        return Ok(code);
    }
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed)).context("installing signal handler")?;
    }
    let opts = CampaignOptions {
        out,
        seeds: seeds.as_deref().map(load_seeds).transpose()?.unwrap_or_default(),
        max_execs,
        max_seconds,
        stats_every,
        stop: Some(stop),
    };
    let workers = workers.max(1);
    let summary = if child {
        let exe = std::env::current_exe()?;
        let mut ex = Vec::new();
        for _ in 0..workers {
            let mut cmd = Command::new(&exe);
            cmd.arg("serve").arg("--config").arg(&target.config).arg("--firmware").arg(&target.firmware);
            if let Some(s) = &target.symbols {
                cmd.arg("--symbols").arg(s);
            }
            if let Some(m) = target.mode {
                cmd.arg("--mode").arg(match m {
                    Mode::Stateful => "stateful",
                    Mode::Stateless => "stateless",
                });
            }
            ex.push(ChildExecutor::spawn(cmd)?);
        }
        run_campaign(&mut ex, t.config.prng_seed, &opts)?
    } else {
        let mut ex: Vec<InProcess> =
            (0..workers).map(|_| InProcess::new(&t.image, &t.config.machine)).collect::<Result<_, _>>()?;
        run_campaign(&mut ex, t.config.prng_seed, &opts)?
    };
    println!(
        "execs={} seconds={:.2} edges={} corpus={} unique_crashes={} unique_hangs={}",
        summary.execs,
        summary.seconds,
        summary.edges,
        summary.corpus_size,
        summary.crashes.len(),
        summary.hangs.len()
    );
    for c in summary.crashes.iter().chain(&summary.hangs) {
        println!("  {} (exec {})", c.verdict, c.found_at_exec);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_asm(source: &Path, output: &Path, symbols: Option<&Path>) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(source).with_context(|| format!("reading {}", source.display()))?;
    let asm = match assemble(&text) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{}:{}: {}", source.display(), e.line, e.kind);
            return Ok(ExitCode::FAILURE);
        }
    };
    std::fs::write(output, &asm.image)?;
    if let Some(p) = symbols {
        std::fs::write(p, asm.symbols.to_text())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(out: &Path, csv: Option<&Path>) -> anyhow::Result<ExitCode> {
    let samples = stats::read_jsonl(&out.join("stats.jsonl"))?;
    let text = stats::to_csv(&samples);
    match csv {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(target: &TargetArgs) -> ExitCode {
    let t = match load(target) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut m = match machine(&t) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    let mut r = std::io::BufReader::new(stdin);
    let mut w = std::io::BufWriter::with_capacity(1 << 17, stdout);
    match child_serve(&mut m, &mut r, &mut w) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vpfuzz serve: {e}");
            ExitCode::from(EXIT_PROTOCOL as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { target, input } => cmd_run(&target, &input),
        Cmd::Fuzz { target, out, seeds, max_execs, max_seconds, workers, stats_every, child } => {
            cmd_fuzz(&target, out, seeds, max_execs, max_seconds, workers, stats_every, child)
        }
        Cmd::Asm { source, output, symbols } => cmd_asm(&source, &output, symbols.as_deref()),
        Cmd::Stats { out, csv } => cmd_stats(&out, csv.as_deref()),
        Cmd::Serve { target } => return cmd_serve(&target),
    };
    result.unwrap_or_else(|e| {
        eprintln!("vpfuzz: {e:#}");
        ExitCode::FAILURE
    })
}
