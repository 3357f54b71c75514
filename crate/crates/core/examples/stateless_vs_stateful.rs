//! Fuzz the two false-positive probes in both execution modes. Stateful
//! peripheral models keep the firmware's assumptions true; stateless MMIO
//! (every read fed from the input) breaks them and reports spurious bugs.
//!
//! cargo run --release --example stateless_vs_stateful [EXECS]

use vpfuzz::campaign::{run_campaign, CampaignOptions};
use vpfuzz::firmware::{FW_CAN_FILTER, FW_TXE_POLL};
use vpfuzz::harness::InProcess;
use vpfuzz::machine::ExecMode;

fn main() -> anyhow::Result<()> {
    let execs: u64 = std::env::args().nth(1).map_or(Ok(5_000), |s| s.parse())?;
    let root = std::env::temp_dir().join(format!("vpfuzz-modes-{}", std::process::id()));
    for fw in [FW_TXE_POLL, FW_CAN_FILTER] {
        for mode in [ExecMode::Stateful, ExecMode::Stateless] {
            let (image, cfg) = fw.build();
            let mut mc = cfg.machine;
            mc.mode = mode;
            let opts = CampaignOptions {
                out: root.join(format!("{}-{mode:?}", fw.name)),
                max_execs: Some(execs),
                ..Default::default()
            };
            let sum = run_campaign(&mut [InProcess::new(&image, &mc)?], cfg.prng_seed, &opts)?;
            println!(
                "{:<14} {:<9} crashes {:>2}  hangs {:>2}",
                fw.name,
                format!("{mode:?}"),
                sum.crashes.len(),
                sum.hangs.len()
            );
            for c in sum.crashes.iter().chain(&sum.hangs) {
                println!("    {} at exec {}", c.verdict, c.found_at_exec);
            }
        }
    }
    // Stateless hangs on fw_txe_poll need a long campaign (tens of
    // thousands of execs): the input has to keep TX-empty clear.
    Ok(())
}
