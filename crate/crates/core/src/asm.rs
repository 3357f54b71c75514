//! Two-pass assembler for M32.
//!
//! Grammar, one item per line:
//!
//! ```text
//! [label:] [mnemonic operands | directive]   ; comment
//! ```
//!
//! Registers are `r0`..`r15`. Immediates are decimal (optionally negative),
//! `0x` hex, `'c'` character literals, or a symbol (label or `.equ`).
//! Branch and jump operands are absolute target addresses; the encoder
//! stores `(target - (pc + 4)) / 4`. Directives: `.org addr`, `.word v`,
//! `.byte v`, `.ascii "s"`, `.equ name value`. `.word` and `.byte` accept a
//! comma-separated list.

use std::collections::BTreeMap;
use std::fmt;

use crate::bus::ROM_SIZE;
use crate::isa::{Form, Instruction, Opcode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmErrorKind {
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("undefined symbol `{0}`")]
    UndefinedSymbol(String),
    #[error("branch target 0x{0:x} out of range")]
    BranchOutOfRange(u32),
    #[error("branch target 0x{0:x} is not word aligned")]
    MisalignedTarget(u32),
    #[error("immediate {0} does not fit in {1} bits")]
    ImmediateOverflow(i64, u32),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("`{0}` expects {1} operand(s)")]
    OperandCount(String, usize),
    #[error(".org 0x{0:x} is below the current address 0x{1:x}")]
    OrgBackwards(u32, u32),
    #[error("instruction at unaligned address 0x{0:x}")]
    MisalignedInstruction(u32),
    #[error("image exceeds ROM size")]
    ImageTooLarge,
    #[error("syntax: {0}")]
    Syntax(String),
}

/// Label name to address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable(BTreeMap<String, u32>);

impl SymbolTable {
    pub fn get(&self, name: &str) -> Option<u32> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, addr: u32) {
        self.0.insert(name.into(), addr);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `name 0xADDR` per line, sorted by name.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, addr) in &self.0 {
            out.push_str(&format!("{name} 0x{addr:08x}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<SymbolTable, AsmError> {
        let mut table = SymbolTable::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| AsmError { line: i + 1, kind: AsmErrorKind::Syntax(msg.into()) };
            let mut parts = line.split_whitespace();
            let name = parts.next().ok_or_else(|| err("missing name"))?;
            let addr = parts.next().ok_or_else(|| err("missing address"))?;
            if parts.next().is_some() {
                return Err(err("trailing text"));
            }
            let addr = parse_number(addr).ok_or_else(|| err("bad address"))?;
            table.insert(name, addr as u32);
        }
        Ok(table)
    }
}

impl fmt::Display for SymbolTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub image: Vec<u8>,
    pub symbols: SymbolTable,
}

#[derive(Debug, Clone)]
enum Item {
    Insn { op: Opcode, operands: Vec<String> },
    Org,
    Word(Vec<String>),
    Byte(Vec<String>),
    Ascii(Vec<u8>),
}

struct Line {
    number: usize,
    addr: u32,
    item: Item,
}

pub fn assemble(source: &str) -> Result<Assembly, AsmError> {
    let mut labels = SymbolTable::default();
    let mut equs: BTreeMap<String, i64> = BTreeMap::new();
    let mut lines = Vec::new();
    let mut pc: u32 = 0;

    // Pass 1: addresses and symbols.
    for (i, raw) in source.lines().enumerate() {
        let number = i + 1;
        let err = |kind| AsmError { line: number, kind };
        let mut text = strip_comment(raw).trim();
        while let Some(colon) = label_split(text) {
            let name = text[..colon].trim();
            if !is_ident(name) {
                return Err(err(AsmErrorKind::Syntax(format!("bad label `{name}`"))));
            }
            if labels.get(name).is_some() || equs.contains_key(name) {
                return Err(err(AsmErrorKind::DuplicateLabel(name.into())));
            }
            labels.insert(name, pc);
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (head, rest) = match text.find(char::is_whitespace) {
            Some(p) => (&text[..p], text[p..].trim()),
            None => (text, ""),
        };
        let item = if let Some(dir) = head.strip_prefix('.') {
            match dir.to_ascii_lowercase().as_str() {
                "equ" => {
                    let ops: Vec<String> = if rest.contains(',') {
                        split_operands(rest)
                    } else {
                        rest.split_whitespace().map(String::from).collect()
                    };
                    let [name, value] = ops.as_slice() else {
                        return Err(err(AsmErrorKind::OperandCount(".equ".into(), 2)));
                    };
                    if !is_ident(name) {
                        return Err(err(AsmErrorKind::Syntax(format!("bad .equ name `{name}`"))));
                    }
                    if labels.get(name).is_some() || equs.contains_key(name.as_str()) {
                        return Err(err(AsmErrorKind::DuplicateLabel(name.clone())));
                    }
                    let v = resolve_value(value, &labels, &equs).map_err(err)?;
                    equs.insert(name.clone(), v);
                    continue;
                }
                "org" => {
                    let target = resolve_value(rest, &labels, &equs).map_err(err)?;
                    let target = u32::try_from(target)
                        .map_err(|_| err(AsmErrorKind::ImmediateOverflow(target, 32)))?;
                    if target < pc {
                        return Err(err(AsmErrorKind::OrgBackwards(target, pc)));
                    }
                    let item = Item::Org;
                    lines.push(Line { number, addr: pc, item });
                    pc = target;
                    continue;
                }
                "word" => Item::Word(split_operands(rest)),
                "byte" => Item::Byte(split_operands(rest)),
                "ascii" => Item::Ascii(parse_string(rest).map_err(err)?),
                _ => return Err(err(AsmErrorKind::UnknownDirective(head.into()))),
            }
        } else {
            let op = Opcode::from_mnemonic(head).ok_or_else(|| err(AsmErrorKind::UnknownMnemonic(head.into())))?;
            if !pc.is_multiple_of(4) {
                return Err(err(AsmErrorKind::MisalignedInstruction(pc)));
            }
            Item::Insn { op, operands: split_operands(rest) }
        };
        let size = match &item {
            Item::Insn { .. } => 4,
            Item::Word(v) => 4 * v.len() as u32,
            Item::Byte(v) => v.len() as u32,
            Item::Ascii(s) => s.len() as u32,
            Item::Org => 0,
        };
        lines.push(Line { number, addr: pc, item });
        pc = pc.checked_add(size).ok_or(err(AsmErrorKind::ImageTooLarge))?;
        if pc > ROM_SIZE {
            return Err(err(AsmErrorKind::ImageTooLarge));
        }
    }

    // Pass 2: encoding.
    let mut image = vec![0u8; pc as usize];
    for line in &lines {
        let err = |kind| AsmError { line: line.number, kind };
        let at = line.addr as usize;
        let value = |s: &str| resolve_value(s, &labels, &equs).map_err(err);
        match &line.item {
            Item::Org => {}
            Item::Word(vals) => {
                for (k, v) in vals.iter().enumerate() {
                    let v = value(v)?;
                    let w = fit(v, 32).map_err(err)?;
                    image[at + 4 * k..at + 4 * k + 4].copy_from_slice(&w.to_le_bytes());
                }
            }
            Item::Byte(vals) => {
                for (k, v) in vals.iter().enumerate() {
                    image[at + k] = fit(value(v)?, 8).map_err(err)? as u8;
                }
            }
            Item::Ascii(bytes) => image[at..at + bytes.len()].copy_from_slice(bytes),
            Item::Insn { op, operands } => {
                let insn = encode_insn(*op, operands, line.addr, &labels, &equs).map_err(err)?;
                image[at..at + 4].copy_from_slice(&insn.encode().to_le_bytes());
            }
        }
    }

    Ok(Assembly { image, symbols: labels })
}

fn encode_insn(
    op: Opcode,
    ops: &[String],
    pc: u32,
    labels: &SymbolTable,
    equs: &BTreeMap<String, i64>,
) -> Result<Instruction, AsmErrorKind> {
    let name = op.mnemonic().unwrap_or("?");
    let want = match op.form() {
        Form::None => 0,
        Form::Upper | Form::Mem | Form::Jump => 2,
        Form::Reg3 | Form::RegImm | Form::Branch => 3,
    };
    if ops.len() != want {
        return Err(AsmErrorKind::OperandCount(name.into(), want));
    }
    let imm16 = |s: &str| -> Result<i16, AsmErrorKind> {
        let v = resolve_value(s, labels, equs)?;
        if !(-32768..=65535).contains(&v) {
            return Err(AsmErrorKind::ImmediateOverflow(v, 16));
        }
        Ok(v as u16 as i16)
    };
    let rel = |s: &str| -> Result<i16, AsmErrorKind> {
        let target = resolve_value(s, labels, equs)?;
        let target32 = u32::try_from(target).map_err(|_| AsmErrorKind::ImmediateOverflow(target, 32))?;
        if target32 % 4 != 0 {
            return Err(AsmErrorKind::MisalignedTarget(target32));
        }
        // Program-counter arithmetic wraps, so displacements do too.
        let delta = target32.wrapping_sub(pc.wrapping_add(4)) as i32 / 4;
        i16::try_from(delta).map_err(|_| AsmErrorKind::BranchOutOfRange(target32))
    };
    Ok(match op.form() {
        Form::None => Instruction::new(op, 0, 0, 0),
        Form::Reg3 => Instruction::reg3(op, reg(&ops[0])?, reg(&ops[1])?, reg(&ops[2])?),
        Form::RegImm => Instruction::new(op, reg(&ops[0])?, reg(&ops[1])?, imm16(&ops[2])?),
        Form::Upper => Instruction::new(op, reg(&ops[0])?, 0, imm16(&ops[1])?),
        Form::Mem => {
            let (offset, base) = split_mem(&ops[1])?;
            let offset = if offset.is_empty() { 0 } else { imm16(offset)? };
            Instruction::new(op, reg(&ops[0])?, reg(base)?, offset)
        }
        Form::Branch => Instruction::new(op, reg(&ops[0])?, reg(&ops[1])?, rel(&ops[2])?),
        Form::Jump => Instruction::new(op, reg(&ops[0])?, 0, rel(&ops[1])?),
    })
}

fn split_mem(s: &str) -> Result<(&str, &str), AsmErrorKind> {
    let bad = || AsmErrorKind::Syntax(format!("expected `imm(rN)`, got `{s}`"));
    let open = s.find('(').ok_or_else(bad)?;
    let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    Ok((s[..open].trim(), inner.trim()))
}

fn reg(s: &str) -> Result<u8, AsmErrorKind> {
    let bad = || AsmErrorKind::BadRegister(s.into());
    let n = s.strip_prefix(['r', 'R']).ok_or_else(bad)?;
    match n.parse::<u8>() {
        Ok(v) if v < 16 && !n.starts_with('+') => Ok(v),
        _ => Err(bad()),
    }
}

fn fit(v: i64, bits: u32) -> Result<u32, AsmErrorKind> {
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << bits) - 1;
    if v < lo || v > hi {
        return Err(AsmErrorKind::ImmediateOverflow(v, bits));
    }
    Ok(v as u32)
}

fn resolve_value(s: &str, labels: &SymbolTable, equs: &BTreeMap<String, i64>) -> Result<i64, AsmErrorKind> {
    let s = s.trim();
    if let Some(v) = parse_number(s) {
        return Ok(v);
    }
    if let Some(c) = s.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')) {
        let mut chars = c.chars();
        if let (Some(ch), None) = (chars.next(), chars.next()) {
            if ch.is_ascii() {
                return Ok(ch as i64);
            }
        }
        return Err(AsmErrorKind::Syntax(format!("bad character literal {s}")));
    }
    if let Some(v) = equs.get(s) {
        return Ok(*v);
    }
    if let Some(v) = labels.get(s) {
        return Ok(v as i64);
    }
    if is_ident(s) {
        Err(AsmErrorKind::UndefinedSymbol(s.into()))
    } else {
        Err(AsmErrorKind::Syntax(format!("bad value `{s}`")))
    }
}

fn parse_number(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    Some(if neg { -v } else { v })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Byte index of a leading `label:`, if any.
fn label_split(text: &str) -> Option<usize> {
    let colon = text.find(':')?;
    let name = &text[..colon];
    (!name.contains(['"', '\'']) && is_ident(name.trim())).then_some(colon)
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut in_char = false;
    let mut prev = '\0';
    for (i, c) in line.char_indices() {
        match c {
            '"' if !in_char && prev != '\\' => in_str = !in_str,
            '\'' if !in_str && prev != '\\' => in_char = !in_char,
            ';' if !in_str && !in_char => return &line[..i],
            _ => {}
        }
        prev = c;
    }
    line
}

fn split_operands(rest: &str) -> Vec<String> {
    if rest.trim().is_empty() {
        return Vec::new();
    }
    rest.split(',').map(|s| s.trim().to_string()).collect()
}

fn parse_string(rest: &str) -> Result<Vec<u8>, AsmErrorKind> {
    let bad = || AsmErrorKind::Syntax(format!("bad string {rest}"));
    let body = rest.trim().strip_prefix('"').and_then(|r| r.strip_suffix('"')).ok_or_else(bad)?;
    let mut out = Vec::new();
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        let c = if c == '\\' {
            match chars.next().ok_or_else(bad)? {
                'n' => '\n',
                't' => '\t',
                '0' => '\0',
                '\\' => '\\',
                '"' => '"',
                _ => return Err(bad()),
            }
        } else {
            c
        };
        if !c.is_ascii() {
            return Err(bad());
        }
        out.push(c as u8);
    }
    Ok(out)
}
