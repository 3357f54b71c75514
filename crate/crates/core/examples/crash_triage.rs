//! Triage a campaign's findings: reload each stored crash or hang with its
//! sidecar, replay it, confirm the dedup key, and show the faulting
//! instruction.
//!
//! cargo run --release --example crash_triage [FIRMWARE]

use vpfuzz::campaign::{load_records, run_campaign, CampaignOptions};
use vpfuzz::engine::CrashKey;
use vpfuzz::firmware::by_name;
use vpfuzz::harness::{run_one, InProcess};
use vpfuzz::isa::decode;

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fw_uart_echo".into());
    let fw = by_name(&name).ok_or_else(|| anyhow::anyhow!("unknown firmware {name}"))?;
    let (image, cfg) = fw.build();
    let out = std::env::temp_dir().join(format!("vpfuzz-triage-{}", std::process::id()));
    let opts = CampaignOptions { out: out.clone(), max_execs: Some(20_000), ..Default::default() };
    run_campaign(&mut [InProcess::new(&image, &cfg.machine)?], cfg.prng_seed, &opts)?;

    for sub in ["crashes", "hangs"] {
        for (path, input, side) in load_records(&out.join(sub))? {
            let (replay, _) = run_one(&image, &cfg.machine, &input)?;
            let pc = u32::from_str_radix(side.pc.trim_start_matches("0x"), 16)?;
            let insn = image
                .get(pc as usize..pc as usize + 4)
                .map(|w| decode(u32::from_le_bytes(w.try_into().unwrap())).to_string())
                .unwrap_or_default();
            println!("{}", path.file_name().unwrap().to_string_lossy());
            println!("  stored : {} {} at {} (exec {})", side.outcome, side.kind.as_deref().unwrap_or("-"), side.pc, side.found_at_exec);
            println!("  replay : {}  key {:?}", replay.verdict, CrashKey::of(&replay.verdict).unwrap());
            println!("  insn   : {insn}");
            println!("  input  : {input:02x?}");
        }
    }
    Ok(())
}
