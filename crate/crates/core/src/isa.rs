//! The M32 guest instruction set.
//!
//! Every instruction is one little-endian 32-bit word:
//!
//! ```text
//!  31      24 23  20 19  16 15  12 11            0
//! +----------+------+------+------+---------------+
//! |  opcode  |  rd  | rs1  | rs2  |               |
//! +----------+------+------+------+---------------+
//!                          |<------- imm16 ------>|
//! ```
//!
//! `rs2` and `imm16` overlap; which one an opcode uses is a property of the
//! opcode, so decoding always extracts both.

use std::fmt;

/// Operation selected by the top byte of an instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Nop,
    Add,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Mul,
    Divu,
    Addi,
    Lui,
    Lw,
    Lb,
    Sw,
    Sb,
    Beq,
    Bne,
    Bltu,
    Jal,
    Jalr,
    Wfi,
    Iret,
    Ei,
    Di,
    Ecall,
    /// Decodes fine, raises `UsageFault` when executed.
    Unknown(u8),
}

/// Operand layout used by the assembler and disassembler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// No operands.
    None,
    /// `rd, rs1, rs2`
    Reg3,
    /// `rd, rs1, imm`
    RegImm,
    /// `rd, imm`
    Upper,
    /// `rd, imm(rs1)`; for stores `rd` is the source register.
    Mem,
    /// `rd, rs1, target` with a pc-relative word offset.
    Branch,
    /// `rd, target` with a pc-relative word offset.
    Jump,
}

const TABLE: &[(Opcode, u8, &str, Form)] = &[
    (Opcode::Nop, 0x00, "nop", Form::None),
    (Opcode::Add, 0x01, "add", Form::Reg3),
    (Opcode::Sub, 0x02, "sub", Form::Reg3),
    (Opcode::And, 0x03, "and", Form::Reg3),
    (Opcode::Or, 0x04, "or", Form::Reg3),
    (Opcode::Xor, 0x05, "xor", Form::Reg3),
    (Opcode::Shl, 0x06, "shl", Form::Reg3),
    (Opcode::Shr, 0x07, "shr", Form::Reg3),
    (Opcode::Mul, 0x08, "mul", Form::Reg3),
    (Opcode::Divu, 0x09, "divu", Form::Reg3),
    (Opcode::Addi, 0x10, "addi", Form::RegImm),
    (Opcode::Lui, 0x11, "lui", Form::Upper),
    (Opcode::Lw, 0x20, "lw", Form::Mem),
    (Opcode::Lb, 0x21, "lb", Form::Mem),
    (Opcode::Sw, 0x22, "sw", Form::Mem),
    (Opcode::Sb, 0x23, "sb", Form::Mem),
    (Opcode::Beq, 0x30, "beq", Form::Branch),
    (Opcode::Bne, 0x31, "bne", Form::Branch),
    (Opcode::Bltu, 0x32, "bltu", Form::Branch),
    (Opcode::Jal, 0x40, "jal", Form::Jump),
    (Opcode::Jalr, 0x41, "jalr", Form::RegImm),
    (Opcode::Wfi, 0x50, "wfi", Form::None),
    (Opcode::Iret, 0x51, "iret", Form::None),
    (Opcode::Ei, 0x52, "ei", Form::None),
    (Opcode::Di, 0x53, "di", Form::None),
    (Opcode::Ecall, 0x60, "ecall", Form::None),
];

impl Opcode {
    pub fn from_byte(byte: u8) -> Opcode {
        TABLE
            .iter()
            .find(|(_, b, _, _)| *b == byte)
            .map(|(op, _, _, _)| *op)
            .unwrap_or(Opcode::Unknown(byte))
    }

    pub fn byte(self) -> u8 {
        match self {
            Opcode::Unknown(b) => b,
            op => TABLE.iter().find(|(o, _, _, _)| *o == op).map(|e| e.1).unwrap_or(0),
        }
    }

    pub fn mnemonic(self) -> Option<&'static str> {
        TABLE.iter().find(|(o, _, _, _)| *o == self).map(|e| e.2)
    }

    pub fn form(self) -> Form {
        TABLE
            .iter()
            .find(|(o, _, _, _)| *o == self)
            .map(|e| e.3)
            .unwrap_or(Form::None)
    }

    /// Case-insensitive mnemonic lookup.
    pub fn from_mnemonic(name: &str) -> Option<Opcode> {
        TABLE
            .iter()
            .find(|(_, _, m, _)| m.eq_ignore_ascii_case(name))
            .map(|e| e.0)
    }

    /// All defined opcodes, in encoding order.
    pub fn all() -> impl Iterator<Item = Opcode> {
        TABLE.iter().map(|e| e.0)
    }
}

/// A decoded instruction word. All fields are always populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm16: i16,
}

impl Instruction {
    pub fn new(opcode: Opcode, rd: u8, rs1: u8, imm16: i16) -> Self {
        Instruction {
            opcode,
            rd: rd & 0xF,
            rs1: rs1 & 0xF,
            rs2: ((imm16 as u16) >> 12) as u8,
            imm16,
        }
    }

    pub fn reg3(opcode: Opcode, rd: u8, rs1: u8, rs2: u8) -> Self {
        Self::new(opcode, rd, rs1, ((rs2 as u16 & 0xF) << 12) as i16)
    }

    pub fn encode(&self) -> u32 {
        (self.opcode.byte() as u32) << 24
            | (self.rd as u32 & 0xF) << 20
            | (self.rs1 as u32 & 0xF) << 16
            | (self.imm16 as u16 as u32)
    }
}

/// Pure field extraction; never fails.
pub fn decode(word: u32) -> Instruction {
    Instruction {
        opcode: Opcode::from_byte((word >> 24) as u8),
        rd: ((word >> 20) & 0xF) as u8,
        rs1: ((word >> 16) & 0xF) as u8,
        rs2: ((word >> 12) & 0xF) as u8,
        imm16: word as u16 as i16,
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(name) = self.opcode.mnemonic() else {
            return write!(f, ".word 0x{:08x}", self.encode());
        };
        match self.opcode.form() {
            Form::None => write!(f, "{name}"),
            Form::Reg3 => write!(f, "{name} r{}, r{}, r{}", self.rd, self.rs1, self.rs2),
            Form::RegImm => write!(f, "{name} r{}, r{}, {}", self.rd, self.rs1, self.imm16),
            Form::Upper => write!(f, "{name} r{}, 0x{:x}", self.rd, self.imm16 as u16),
            Form::Mem => write!(f, "{name} r{}, {}(r{})", self.rd, self.imm16, self.rs1),
            Form::Branch => write!(f, "{name} r{}, r{}, .{:+}", self.rd, self.rs1, self.imm16),
            Form::Jump => write!(f, "{name} r{}, .{:+}", self.rd, self.imm16),
        }
    }
}
