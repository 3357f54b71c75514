#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn firmware_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("firmware")
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vpfuzz"))
}

fn hex(s: &str) -> u32 {
    u32::from_str_radix(s.trim_start_matches("0x"), 16).expect("hex")
}

/// (prev_loc, pc, index, next_prev_loc) rows.
pub fn edge_vectors() -> Vec<(u32, u32, usize, u32)> {
    std::fs::read_to_string(data("record_edge.txt"))
        .expect("vector file")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<u32> = l.split_whitespace().map(hex).collect();
            (f[0], f[1], f[2] as usize, f[3])
        })
        .collect()
}

/// Scalar reference for the edge hash using 64-bit arithmetic.
pub fn edge_oracle(prev: u32, pc: u32) -> (usize, u32) {
    let cur = (((pc as u64 >> 2) * 0x9E37_79B1) % (1 << 32)) >> 16;
    (((prev as u64 ^ cur) % 65536) as usize, (cur >> 1) as u32)
}

/// Independent model of which bytes make fw_uart_echo's store fault:
/// misaligned word stores, or aligned ones outside the interrupt
/// controller's register window.
pub fn uart_echo_faulting_bytes() -> Vec<u8> {
    (0..=255u8).filter(|&b| b % 4 != 0 || b as u32 >= 0x40).collect()
}

/// Independent model of fw_i2c_len: which length bytes fault and how.
pub fn i2c_len_fault(len: u8) -> Option<&'static str> {
    if len >= 16 {
        Some("BusFault")
    } else if !len.is_multiple_of(4) {
        Some("Alignment")
    } else {
        None
    }
}
