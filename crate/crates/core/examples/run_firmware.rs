//! Execute the bundled firmware once each on its benign seed and on a
//! crafted crashing input.
//!
//! cargo run --example run_firmware

use vpfuzz::firmware::{ALL, FW_CAN_TIMER};
use vpfuzz::harness::run_one;

fn main() {
    for fw in ALL {
        let (image, cfg) = fw.build();
        let (out, map) = run_one(&image, &cfg.machine, fw.seed).expect("bundled firmware loads");
        println!(
            "{:<14} seed {:02x?} -> {} (executed {}, consumed {}, edges {})",
            fw.name,
            fw.seed,
            out.verdict,
            out.executed,
            out.consumed,
            map.edge_count()
        );
    }

    // A CAN frame whose first payload byte is zero reaches the divide.
    let (image, cfg) = FW_CAN_TIMER.build();
    let (out, _) = run_one(&image, &cfg.machine, &[0x00, 0x01, 0x01, 0x00]).unwrap();
    println!("fw_can_timer hz=0 -> {}", out.verdict);
}
