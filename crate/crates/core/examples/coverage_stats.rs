//! Edge coverage: the hash, one run's hit-count map, how bucketing decides
//! novelty, and the stats a campaign samples.
//!
//! cargo run --release --example coverage_stats

use vpfuzz::campaign::{run_campaign, CampaignOptions};
use vpfuzz::coverage::{record_edge, SeenBits};
use vpfuzz::firmware::FW_UART_ECHO;
use vpfuzz::harness::{run_one, InProcess};
use vpfuzz::stats;

fn main() -> anyhow::Result<()> {
    let (mut prev, mut trail) = (0, Vec::new());
    for pc in [0x100, 0x104, 0x108, 0x100] {
        let (index, next) = record_edge(prev, pc);
        trail.push(format!("{pc:#x}->[{index:#06x}]"));
        prev = next;
    }
    println!("edge indices: {}", trail.join(" "));

    let (image, cfg) = FW_UART_ECHO.build();
    let mut seen = SeenBits::default();
    for input in [&[0u8; 8][..], &[0u8; 8], &[0, 0, 0, 0], &[0u8; 12]] {
        let (out, map) = run_one(&image, &cfg.machine, input)?;
        let hot = (0..map.as_bytes().len()).filter(|&i| map.get(i) > 0).map(|i| map.get(i)).max().unwrap_or(0);
        let new = seen.merge_map(&map);
        println!(
            "{} bytes -> {} edges, hottest count {hot}, new coverage: {new} ({})",
            input.len(),
            map.edge_count(),
            out.verdict
        );
    }

    let out = std::env::temp_dir().join(format!("vpfuzz-stats-{}", std::process::id()));
    let opts = CampaignOptions { out: out.clone(), max_execs: Some(20_000), stats_every: Some(5_000), ..Default::default() };
    run_campaign(&mut [InProcess::new(&image, &cfg.machine)?], cfg.prng_seed, &opts)?;
    print!("{}", stats::to_csv(&stats::read_jsonl(&out.join("stats.jsonl"))?));
    Ok(())
}
