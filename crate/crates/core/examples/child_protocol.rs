//! The parent/child execution protocol. Run without arguments, this example
//! spawns itself with `--child`; the child serves executions over
//! stdin/stdout and the parent compares each reply with an in-process run.
//!
//! cargo run --example child_protocol

use std::process::Command;

use vpfuzz::firmware::FW_I2C_LEN;
use vpfuzz::harness::{run_one, Executor};
use vpfuzz::machine::Machine;
use vpfuzz::protocol::{child_serve, ChildExecutor, ReplyHeader};

fn main() -> anyhow::Result<()> {
    let (image, cfg) = FW_I2C_LEN.build();
    if std::env::args().any(|a| a == "--child") {
        let mut m = Machine::new(&image, &cfg.machine)?;
        let mut r = std::io::stdin().lock();
        let mut w = std::io::BufWriter::new(std::io::stdout().lock());
        child_serve(&mut m, &mut r, &mut w)?;
        return Ok(());
    }

    let mut cmd = Command::new(std::env::current_exe()?);
    cmd.arg("--child");
    let mut child = ChildExecutor::spawn(cmd)?;
    let inputs: [&[u8]; 4] = [&[4, 1, 2, 3, 4], &[3, 9, 9, 9], &[32], &[]];
    for input in inputs {
        let remote = child.execute(input)?;
        let header = child.last_reply().unwrap();
        let (local, map) = run_one(&image, &cfg.machine, input)?;
        let agree = header == ReplyHeader::of(&local) && map.as_bytes() == child.coverage().as_bytes();
        println!("{input:02x?} -> {} (executed {}) agree={agree}", remote.verdict, remote.executed);
    }
    let status = child.finish()?;
    println!("child exited with {status}");
    Ok(())
}
