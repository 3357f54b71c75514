use proptest::prelude::*;
use vpfuzz::asm::assemble;
use vpfuzz::isa::{decode, Form, Opcode};

/// Where the instruction under test is placed.
const AT: u32 = 0x100;

fn operands(op: Opcode, rd: u8, rs1: u8, rs2: u8, imm: i16) -> String {
    let target = (AT + 4).wrapping_add((imm as i32 * 4) as u32);
    match op.form() {
        Form::None => String::new(),
        Form::Reg3 => format!("r{rd}, r{rs1}, r{rs2}"),
        Form::RegImm => format!("r{rd}, r{rs1}, {imm}"),
        Form::Upper => format!("r{rd}, {:#x}", imm as u16),
        Form::Mem => format!("r{rd}, {imm}(r{rs1})"),
        Form::Branch => format!("r{rd}, r{rs1}, {target:#x}"),
        Form::Jump => format!("r{rd}, {target:#x}"),
    }
}

fn opcode() -> impl Strategy<Value = Opcode> {
    let all: Vec<Opcode> = Opcode::all().collect();
    proptest::sample::select(all)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn decode_inverts_assemble(op in opcode(), rd in 0u8..16, rs1 in 0u8..16, rs2 in 0u8..16, imm: i16) {
        let src = format!(".org {AT:#x}\n{} {}\n", op.mnemonic().unwrap(), operands(op, rd, rs1, rs2, imm));
        let asm = assemble(&src).map_err(|e| TestCaseError::fail(format!("{src}: {e}")))?;
        let word = u32::from_le_bytes(asm.image[AT as usize..AT as usize + 4].try_into().unwrap());
        let insn = decode(word);
        prop_assert_eq!(insn.opcode, op);
        let (want_rd, want_rs1, want_imm) = match op.form() {
            Form::None => (0, 0, 0),
            Form::Reg3 => (rd, rs1, (rs2 as i16) << 12),
            Form::Upper | Form::Jump => (rd, 0, imm),
            Form::RegImm | Form::Mem | Form::Branch => (rd, rs1, imm),
        };
        prop_assert_eq!(insn.rd, want_rd);
        prop_assert_eq!(insn.rs1, want_rs1);
        prop_assert_eq!(insn.imm16, want_imm);
        prop_assert_eq!(insn.rs2, (insn.imm16 as u16 >> 12) as u8);
        // Disassembly reassembles to the same word.
        let text = format!(".org {AT:#x}\n{insn}\n");
        if let Ok(again) = assemble(&text) {
            prop_assert_eq!(&again.image[AT as usize..], &asm.image[AT as usize..]);
        }
    }
}

#[test]
fn spec_encodings() {
    assert_eq!(assemble("ecall").unwrap().image, [0x00, 0x00, 0x00, 0x60]);
    assert_eq!(assemble("loop: jal r0, loop").unwrap().image, [0xFF, 0xFF, 0x00, 0x40]);
    let fwd = assemble("jal r0, end\nnop\nend: ecall").unwrap();
    let back = assemble("nop\nnop\nend: ecall").unwrap();
    let direct = assemble("jal r0, 8\nnop\necall").unwrap();
    assert_eq!(fwd.image, direct.image);
    assert_eq!(&fwd.image[4..], &back.image[4..]);
}
