//! How trigger rules gate input injection. The same firmware and input are
//! run with the bundled trigger, with a trigger that never fires, and in
//! stateless mode where MMIO reads come straight from the input.
//!
//! cargo run --example injection_triggers

use vpfuzz::bus::PeripheralId;
use vpfuzz::firmware::FW_CAN_TIMER;
use vpfuzz::harness::run_one;
use vpfuzz::inject::{deliver_can, AccessKind, StreamCursor, TriggerRule};
use vpfuzz::machine::ExecMode;

fn main() {
    let (image, cfg) = FW_CAN_TIMER.build();
    let input = [0x00, 0x01, 0x02, 0x00, 0x05];

    // The stream framing the CAN injector consumes.
    let mut cursor = StreamCursor::new(&input);
    let frame = deliver_can(&mut cursor).unwrap();
    println!("decoded frame: {frame:?}, {} byte(s) consumed", cursor.position());

    let (out, _) = run_one(&image, &cfg.machine, &input).unwrap();
    println!("bundled trigger (CAN IE access): {}", out.verdict);

    // Arm on a register the firmware never touches: nothing is delivered
    // and the firmware sleeps forever.
    let mut never = cfg.machine.clone();
    never.injectors[0].trigger = TriggerRule::new(PeripheralId::Can0, 0x3C, AccessKind::Write);
    let (out, _) = run_one(&image, &never, &input).unwrap();
    println!("trigger on unused register:      {}", out.verdict);

    let mut stateless = cfg.machine.clone();
    stateless.mode = ExecMode::Stateless;
    let (out, _) = run_one(&image, &stateless, &input).unwrap();
    println!("stateless mode:                  {} (consumed {})", out.verdict, out.consumed);
}
