//! Assemble a small program, list its symbols and disassemble the image.
//!
//! cargo run --example assemble_firmware [SOURCE.s]

use vpfuzz::asm::assemble;
use vpfuzz::isa::decode;

const DEMO: &str = "
    .equ RAM, 0x20000000
    .org 0x100
start:
    lui   r1, 0x2000        ; r1 = RAM
    addi  r2, r0, 10
loop:
    sw    r2, 0(r1)
    addi  r2, r2, -1
    bne   r2, r0, loop
exit:
    ecall
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEMO.to_string(),
    };
    let asm = assemble(&source)?;
    println!("image: {} bytes", asm.image.len());
    for (name, addr) in asm.symbols.iter() {
        println!("  {addr:#010x}  {name}");
    }
    let start = asm.symbols.get("start").unwrap_or(0) as usize;
    for (i, word) in asm.image[start..].chunks_exact(4).enumerate() {
        let w = u32::from_le_bytes(word.try_into().unwrap());
        println!("{:#06x}: {w:08x}  {}", start + 4 * i, decode(w));
    }

    // Errors carry the offending line.
    let err = assemble("nop\nbogus r1, r2\n").unwrap_err();
    println!("error example -> {err}");
    Ok(())
}
