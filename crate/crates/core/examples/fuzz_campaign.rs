//! Run a short campaign against a bundled firmware and write the usual
//! output directory (corpus/, crashes/, hangs/, stats.jsonl).
//!
//! cargo run --release --example fuzz_campaign [FIRMWARE] [EXECS] [WORKERS]

use vpfuzz::campaign::{run_campaign, CampaignOptions};
use vpfuzz::firmware::by_name;
use vpfuzz::harness::InProcess;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "fw_i2c_len".into());
    let execs: u64 = args.next().map_or(Ok(20_000), |s| s.parse())?;
    let workers: usize = args.next().map_or(Ok(1), |s| s.parse())?;
    let fw = by_name(&name).ok_or_else(|| anyhow::anyhow!("unknown firmware {name}"))?;
    let (image, cfg) = fw.build();

    let dir = tempfile_dir(&name)?;
    let opts = CampaignOptions { out: dir.clone(), max_execs: Some(execs), ..Default::default() };
    let mut ex: Vec<InProcess> = (0..workers.max(1)).map(|_| InProcess::new(&image, &cfg.machine)).collect::<Result<_, _>>()?;
    let sum = run_campaign(&mut ex, cfg.prng_seed, &opts)?;

    println!("{name}: {} execs in {:.2}s, {} edges, corpus {}", sum.execs, sum.seconds, sum.edges, sum.corpus_size);
    for c in sum.crashes.iter().chain(&sum.hangs) {
        println!("  {} found at exec {} ({} byte input)", c.verdict, c.found_at_exec, c.input.len());
    }
    println!("output in {}", dir.display());
    Ok(())
}

fn tempfile_dir(name: &str) -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("vpfuzz-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
