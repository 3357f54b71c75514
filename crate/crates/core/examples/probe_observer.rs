//! Attach read-only bus observers to a machine and trace its MMIO traffic.
//! Observers see every peripheral access but cannot change the run.
//!
//! cargo run --example probe_observer

use std::sync::{Arc, Mutex};

use vpfuzz::bus::{BusTransaction, Direction, PeripheralId};
use vpfuzz::firmware::FW_UART_ECHO;
use vpfuzz::machine::Machine;

fn main() {
    let (image, cfg) = FW_UART_ECHO.build();
    let mut m = Machine::new(&image, &cfg.machine).unwrap();
    let trace: Arc<Mutex<Vec<BusTransaction>>> = Arc::default();
    let t = trace.clone();
    m.register_observer(Box::new(move |txn| t.lock().unwrap().push(*txn)));

    // Bytes that are word-aligned offsets inside the INTC window are benign.
    let input = [0x00, 0x04, 0x08, 0x0c, 0x00, 0x04, 0x08, 0x0c];
    m.reset(&input);
    let out = m.run();
    println!("verdict: {}", out.verdict);

    let trace = trace.lock().unwrap();
    println!("{} MMIO accesses observed; first 12:", trace.len());
    for txn in trace.iter().take(12) {
        let dir = match txn.direction {
            Direction::Read => "R",
            Direction::Write => "W",
        };
        println!("  cycle {:>6}  {dir} {:#010x} w{} {:#x}", txn.cycle, txn.address, txn.width, txn.value);
    }
    let tx = &m.platform.uart(PeripheralId::Uart0).tx_log;
    println!("echoed: {tx:02x?}");
}
