//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run with `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpfuzz::asm::assemble;
use vpfuzz::bus::{MemoryMap, PeripheralId, Target};
use vpfuzz::campaign::{load_records, run_campaign, CampaignOptions, CampaignSummary};
use vpfuzz::coverage::record_edge;
use vpfuzz::engine::CrashKey;
use vpfuzz::events::EventQueue;
use vpfuzz::firmware::{Firmware, ALL, FW_CAN_FILTER, FW_CAN_TIMER, FW_HANG_NOEI, FW_I2C_LEN, FW_TXE_POLL, FW_UART_ECHO};
use vpfuzz::harness::{run_one, Executor, InProcess};
use vpfuzz::inject::{deliver_can, StreamCursor};
use vpfuzz::isa::{decode, Form, Opcode};
use vpfuzz::machine::{ExecMode, FaultKind, Verdict};
use vpfuzz::periph::{Platform, Timing};
use vpfuzz::protocol::{ChildExecutor, ReplyHeader};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn campaign(fw: Firmware, mode: ExecMode, max_execs: u64, out: &Path) -> Result<CampaignSummary, String> {
    let (image, cfg) = fw.build();
    let mut mc = cfg.machine;
    mc.mode = mode;
    let mut ex = [InProcess::new(&image, &mc).map_err(|e| e.to_string())?];
    let opts = CampaignOptions { out: out.to_path_buf(), max_execs: Some(max_execs), ..Default::default() };
    run_campaign(&mut ex, cfg.prng_seed, &opts).map_err(|e| format!("{e:#}"))
}

fn replay_key(fw: Firmware, mode: ExecMode, input: &[u8]) -> Option<CrashKey> {
    let (image, cfg) = fw.build();
    let mut mc = cfg.machine;
    mc.mode = mode;
    CrashKey::of(&run_one(&image, &mc, input).ok()?.0.verdict)
}

fn first_crash(sum: &CampaignSummary, pred: impl Fn(FaultKind) -> bool) -> Option<&vpfuzz::engine::CrashRecord> {
    sum.crashes.iter().find(|c| matches!(c.verdict, Verdict::Fault { kind, .. } if pred(kind)))
}

fn c1_divide_by_zero(tmp: &Path) -> Check {
    let start = Instant::now();
    let sum = campaign(FW_CAN_TIMER, ExecMode::Stateful, 10_000, &tmp.join("c1"))?;
    let elapsed = start.elapsed();
    let c = first_crash(&sum, |k| k == FaultKind::DivideByZero).ok_or("no DivideByZero crash in 10,000 execs")?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    ensure(replay_key(FW_CAN_TIMER, ExecMode::Stateful, &c.input) == Some(c.key), "crash does not replay")?;
    Ok(format!("DivideByZero at exec {} ({:.2}s)", c.found_at_exec, elapsed.as_secs_f64()))
}

fn c2_bruteforce(tmp: &Path) -> Check {
    let dir = common::firmware_dir();
    let mut faulting = Vec::new();
    for hz in 0..=255u8 {
        let input = tmp.join("hz");
        std::fs::write(&input, [0x00, 0x01, 0x01, hz]).map_err(|e| e.to_string())?;
        let out = Command::new(common::bin())
            .arg("run")
            .arg("--config")
            .arg(dir.join("fw_can_timer.json"))
            .arg("--firmware")
            .arg(dir.join("fw_can_timer.s"))
            .arg("--input")
            .arg(&input)
            .output()
            .map_err(|e| e.to_string())?;
        match out.status.code() {
            Some(10) => {
                let text = String::from_utf8_lossy(&out.stdout);
                ensure(text.starts_with("FAULT DivideByZero"), format!("hz {hz}: {text}"))?;
                faulting.push(hz);
            }
            Some(0) => {}
            other => return Err(format!("hz {hz}: status {other:?}")),
        }
    }
    ensure(faulting == [0], format!("faulting hz values {faulting:?}"))?;
    // Every stored crash of the criterion-1 campaign replays to its key.
    let records = load_records(&tmp.join("c1/crashes")).map_err(|e| e.to_string())?;
    ensure(!records.is_empty(), "no stored crashes to replay")?;
    for (path, input, side) in &records {
        let key = replay_key(FW_CAN_TIMER, ExecMode::Stateful, input).ok_or("stored crash exits on replay")?;
        let CrashKey::Fault { kind, pc } = key else { return Err(format!("{} replays to a hang", path.display())) };
        ensure(
            side.kind.as_deref() == Some(kind.name()) && side.pc == format!("0x{pc:08x}"),
            format!("{} replays to {key:?}", path.display()),
        )?;
    }
    Ok(format!("only hz=0 faults; {} stored crash(es) replay", records.len()))
}

fn c3_invalid_access(tmp: &Path) -> Check {
    let start = Instant::now();
    let sum = campaign(FW_UART_ECHO, ExecMode::Stateful, 100_000, &tmp.join("c3"))?;
    let c = first_crash(&sum, |k| k == FaultKind::BusFault).ok_or("no BusFault in 100,000 execs")?;
    ensure(start.elapsed() < Duration::from_secs(300), "over 5 minutes")?;
    let (image, cfg) = FW_UART_ECHO.build();
    let map = MemoryMap { ram_size: cfg.machine.ram_size, peripherals: cfg.machine.peripherals };
    let oracle: Vec<u8> = (0..=255u8)
        .filter(|&b| {
            let addr = 0x4000_0000 + b as u32;
            !addr.is_multiple_of(4) || map.decode(addr) == Target::Unmapped
        })
        .collect();
    let mut ex = InProcess::new(&image, &cfg.machine).map_err(|e| e.to_string())?;
    let mut observed = Vec::new();
    for b in 0..=255u8 {
        if ex.execute(&[b; 8]).map_err(|e| e.to_string())?.verdict.is_crash() {
            observed.push(b);
        }
    }
    ensure(observed == oracle, format!("faulting set differs: {} observed vs {} expected", observed.len(), oracle.len()))?;
    Ok(format!("BusFault at exec {}; {} faulting byte values match the map", c.found_at_exec, oracle.len()))
}

fn c4_length_trust(tmp: &Path) -> Check {
    let sum = campaign(FW_I2C_LEN, ExecMode::Stateful, 50_000, &tmp.join("c4"))?;
    let c = first_crash(&sum, |k| matches!(k, FaultKind::Alignment | FaultKind::BusFault))
        .ok_or("no Alignment/BusFault in 50,000 execs")?;
    for _ in 0..3 {
        ensure(replay_key(FW_I2C_LEN, ExecMode::Stateful, &c.input) == Some(c.key), "replay differs")?;
    }
    Ok(format!("{:?} at exec {}", c.key, c.found_at_exec))
}

fn c5_hang(tmp: &Path) -> Check {
    let sum = campaign(FW_HANG_NOEI, ExecMode::Stateful, 100, &tmp.join("c5"))?;
    let h = sum.hangs.first().ok_or("no hang in the first 100 execs")?;
    ensure(h.found_at_exec <= 100, "late")?;
    Ok(format!("hang at exec {}", h.found_at_exec))
}

fn c6_false_positives(tmp: &Path) -> Check {
    let mut notes = Vec::new();
    for fw in [FW_TXE_POLL, FW_CAN_FILTER] {
        let sum = campaign(fw, ExecMode::Stateful, 50_000, &tmp.join(format!("c6-{}-sf", fw.name)))?;
        ensure(sum.execs == 50_000, "short campaign")?;
        ensure(
            sum.crashes.is_empty() && sum.hangs.is_empty(),
            format!("{} stateful: {} crashes, {} hangs", fw.name, sum.crashes.len(), sum.hangs.len()),
        )?;
    }
    let txe = campaign(FW_TXE_POLL, ExecMode::Stateless, 50_000, &tmp.join("c6-txe-sl"))?;
    ensure(!txe.hangs.is_empty(), "stateless fw_txe_poll found no hang")?;
    notes.push(format!("txe stateless hang at exec {}", txe.hangs[0].found_at_exec));
    let filt = campaign(FW_CAN_FILTER, ExecMode::Stateless, 50_000, &tmp.join("c6-filter-sl"))?;
    let a = first_crash(&filt, |k| k == FaultKind::AssertFailure).ok_or("stateless fw_can_filter found no AssertFailure")?;
    notes.push(format!("filter stateless assert at exec {}", a.found_at_exec));
    Ok(format!("stateful 0/0 on both; {}", notes.join("; ")))
}

fn c7_can_truncation() -> Check {
    let mut stream = vec![0x23, 0x01, 0x0C];
    stream.extend(1..=12u8);
    let mut cursor = StreamCursor::new(&stream);
    let frame = deliver_can(&mut cursor).ok_or("frame not decoded")?;
    ensure(cursor.position() == 11, format!("consumed {} bytes", cursor.position()))?;
    let mut p = Platform::new(Timing::default());
    let mut ev = EventQueue::default();
    let can = PeripheralId::Can0;
    p.write(can, 0x00, 1, 0, &mut ev);
    p.write(can, 0x20, 0, 0, &mut ev);
    let accepted = p.with_ctx(0, &mut ev, |parts, ctx| parts.can.receive(frame, ctx));
    ensure(accepted && p.can.queued() == 1, "frame dropped")?;
    let rxid = p.read(can, 0x08, 1, &mut ev);
    let dlc = p.read(can, 0x0C, 1, &mut ev);
    let d0 = p.read(can, 0x10, 1, &mut ev);
    let d1 = p.read(can, 0x14, 1, &mut ev);
    ensure(rxid == 0x123, format!("RXID {rxid:#x}"))?;
    ensure(dlc == 12, format!("RXDLC {dlc}"))?;
    ensure(p.can.head().map(|f| f.payload().len()) == Some(8), "stored payload is not 8 bytes")?;
    ensure(d0 == 0x0403_0201 && d1 == 0x0807_0605, format!("RXDATA {d0:#x} {d1:#x}"))?;
    Ok("RXDLC=12, 8 bytes stored, frame kept".into())
}

fn c8_determinism() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let built: Vec<_> = ALL.iter().map(|fw| fw.build()).collect();
    let mut local: Vec<InProcess> =
        built.iter().map(|(img, cfg)| InProcess::new(img, &cfg.machine).unwrap()).collect();
    let dir = common::firmware_dir();
    let mut children: Vec<ChildExecutor> = ALL
        .iter()
        .map(|fw| {
            let mut c = Command::new(common::bin());
            c.arg("serve")
                .arg("--config")
                .arg(dir.join(format!("{}.json", fw.name)))
                .arg("--firmware")
                .arg(dir.join(format!("{}.s", fw.name)));
            ChildExecutor::spawn(c).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    for i in 0..1000 {
        let which = rng.random_range(0..ALL.len());
        let len = rng.random_range(0..128);
        let input: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let (image, cfg) = &built[which];
        let (a, map_a) = run_one(image, &cfg.machine, &input).map_err(|e| e.to_string())?;
        let b = local[which].execute(&input).map_err(|e| e.to_string())?;
        let c = children[which].execute(&input).map_err(|e| e.to_string())?;
        let same = a == b
            && map_a.as_bytes() == local[which].coverage().as_bytes()
            && ReplyHeader::of(&a) == ReplyHeader::of(&c)
            && map_a.as_bytes() == children[which].coverage().as_bytes();
        ensure(same, format!("pair {i} ({}) diverged", ALL[which].name))?;
    }
    Ok("1000 pairs identical across fresh, reused and child execution".into())
}

fn c9_vectors() -> Check {
    let v = common::edge_vectors();
    ensure(v.len() >= 10, "fewer than 10 vectors")?;
    for &(prev, pc, index, next) in &v {
        ensure(record_edge(prev, pc) == (index, next), format!("vector ({prev:#x}, {pc:#x})"))?;
        ensure(common::edge_oracle(prev, pc) == (index, next), format!("oracle ({prev:#x}, {pc:#x})"))?;
    }
    Ok(format!("{} vectors", v.len()))
}

fn c10_throughput(tmp: &Path) -> Check {
    let execs = 50_000;
    let start = Instant::now();
    let sum = campaign(FW_CAN_TIMER, ExecMode::Stateful, execs, &tmp.join("c10"))?;
    let rate = sum.execs as f64 / start.elapsed().as_secs_f64();
    ensure(rate >= 5_000.0, format!("{rate:.0} execs/s"))?;
    Ok(format!("{rate:.0} execs/s"))
}

fn c11_roundtrip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ops: Vec<Opcode> = Opcode::all().collect();
    let at = 0x100u32;
    let n = 10_000;
    for i in 0..n {
        let op = ops[rng.random_range(0..ops.len())];
        let (rd, rs1, rs2): (u8, u8, u8) = (rng.random_range(0..16), rng.random_range(0..16), rng.random_range(0..16));
        let imm: i16 = rng.random();
        let target = (at + 4).wrapping_add((imm as i32 * 4) as u32);
        let operands = match op.form() {
            Form::None => String::new(),
            Form::Reg3 => format!("r{rd}, r{rs1}, r{rs2}"),
            Form::RegImm => format!("r{rd}, r{rs1}, {imm}"),
            Form::Upper => format!("r{rd}, {:#x}", imm as u16),
            Form::Mem => format!("r{rd}, {imm}(r{rs1})"),
            Form::Branch => format!("r{rd}, r{rs1}, {target:#x}"),
            Form::Jump => format!("r{rd}, {target:#x}"),
        };
        let src = format!(".org {at:#x}\n{} {operands}\n", op.mnemonic().unwrap());
        let asm = assemble(&src).map_err(|e| format!("#{i} `{src}`: {e}"))?;
        let word = u32::from_le_bytes(asm.image[at as usize..at as usize + 4].try_into().unwrap());
        let d = decode(word);
        let want = match op.form() {
            Form::None => (0, 0, 0, 0),
            Form::Reg3 => (rd, rs1, rs2, (rs2 as i16) << 12),
            Form::Upper | Form::Jump => (rd, 0, (imm as u16 >> 12) as u8, imm),
            Form::RegImm | Form::Mem | Form::Branch => (rd, rs1, (imm as u16 >> 12) as u8, imm),
        };
        ensure(d.opcode == op && (d.rd, d.rs1, d.rs2, d.imm16) == want, format!("#{i} `{src}` decoded as {d:?}"))?;
    }
    Ok(format!("{n} instructions"))
}

fn main() {
    // Ignore libtest-style arguments such as --nocapture.
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("1 divide-by-zero found by fuzzing fw_can_timer", Box::new(|| c1_divide_by_zero(t))),
        ("2 brute-force hz oracle and crash replay", Box::new(|| c2_bruteforce(t))),
        ("3 invalid memory access in fw_uart_echo", Box::new(|| c3_invalid_access(t))),
        ("4 length trusting in fw_i2c_len", Box::new(|| c4_length_trust(t))),
        ("5 hang in fw_hang_noei within 100 execs", Box::new(|| c5_hang(t))),
        ("6 false positives: stateful none, stateless some", Box::new(|| c6_false_positives(t))),
        ("7 CAN dlc=12 truncation", Box::new(c7_can_truncation)),
        ("8 determinism in-process x2 and child", Box::new(c8_determinism)),
        ("9 record_edge test vectors", Box::new(c9_vectors)),
        ("10 throughput >= 5,000 execs/s", Box::new(|| c10_throughput(t))),
        ("11 assembler round-trip", Box::new(c11_roundtrip)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(note) => println!("PASS  criterion {name}: {note} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
