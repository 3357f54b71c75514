//! The guest machine: an M32 interpreter wired to the bus, the peripheral
//! models, the event queue and the injectors.
//!
//! Timing is one cycle per executed instruction. The only exception is WFI,
//! which skips idle cycles up to the next scheduled event. A machine is a
//! pure function of (firmware image, config, input): nothing in here reads
//! the clock or any other ambient state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bus::{
    BusTransaction, Direction, MemoryMap, ObserverFn, ObserverId, Observers, PeripheralId, PeripheralSet, Target,
    DEFAULT_RAM_SIZE, RAM_BASE, ROM_SIZE,
};
use crate::coverage::CoverageMap;
use crate::events::{Event, EventQueue};
use crate::inject::{Delivery, InjectorSpec, Injection};
use crate::isa::{decode, Opcode};
use crate::periph::{Platform, Timing};

/// Base of the interrupt vector table: 8 handler addresses, one per line.
pub const VECTOR_TABLE: u32 = 0x40;
pub const DEFAULT_MAX_INSTRUCTIONS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    /// Peripheral models are live; input arrives through injectors.
    #[default]
    Stateful,
    /// Peripheral models bypassed: every MMIO read returns input bytes,
    /// writes are dropped, no interrupts.
    Stateless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    DivideByZero,
    Alignment,
    BusFault,
    UsageFault,
    AssertFailure,
}

impl FaultKind {
    pub const ALL: [FaultKind; 5] = [
        FaultKind::DivideByZero,
        FaultKind::Alignment,
        FaultKind::BusFault,
        FaultKind::UsageFault,
        FaultKind::AssertFailure,
    ];

    /// Nonzero wire code.
    pub fn code(self) -> u8 {
        match self {
            FaultKind::DivideByZero => 1,
            FaultKind::Alignment => 2,
            FaultKind::BusFault => 3,
            FaultKind::UsageFault => 4,
            FaultKind::AssertFailure => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<FaultKind> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultKind::DivideByZero => "DivideByZero",
            FaultKind::Alignment => "Alignment",
            FaultKind::BusFault => "BusFault",
            FaultKind::UsageFault => "UsageFault",
            FaultKind::AssertFailure => "AssertFailure",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Exit { code: u32 },
    Fault { kind: FaultKind, pc: u32, address: Option<u32> },
    Hang { last_pc: u32 },
}

impl Verdict {
    pub fn is_crash(&self) -> bool {
        matches!(self, Verdict::Fault { .. })
    }

    pub fn is_hang(&self) -> bool {
        matches!(self, Verdict::Hang { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Exit { code } => write!(f, "EXIT code={code}"),
            Verdict::Fault { kind, pc, address: Some(addr) } => {
                write!(f, "FAULT {kind} pc=0x{pc:08x} addr=0x{addr:08x}")
            }
            Verdict::Fault { kind, pc, address: None } => write!(f, "FAULT {kind} pc=0x{pc:08x}"),
            Verdict::Hang { last_pc } => write!(f, "HANG pc=0x{last_pc:08x}"),
        }
    }
}

/// Result of one complete execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunOutcome {
    pub verdict: Verdict,
    /// Instructions executed, including idle WFI re-checks.
    pub executed: u64,
    /// Input bytes pulled from the stream.
    pub consumed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineConfig {
    pub ram_size: u32,
    pub max_instructions: u64,
    pub mode: ExecMode,
    pub exit_address: Option<u32>,
    pub error_addresses: Vec<u32>,
    pub peripherals: PeripheralSet,
    pub injectors: Vec<InjectorSpec>,
    pub timing: Timing,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            ram_size: DEFAULT_RAM_SIZE,
            max_instructions: DEFAULT_MAX_INSTRUCTIONS,
            mode: ExecMode::Stateful,
            exit_address: None,
            error_addresses: Vec::new(),
            peripherals: PeripheralSet::all(),
            injectors: Vec::new(),
            timing: Timing::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("firmware image is {0} bytes, ROM holds {ROM_SIZE}")]
    ImageTooLarge(usize),
    #[error("ram_size {0:#x} is zero, unaligned or overlaps MMIO")]
    BadRamSize(u32),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuestRegs {
    /// r0 is hardwired to zero.
    pub r: [u32; 16],
    pub pc: u32,
    pub ei: bool,
    pub shadow_pc: u32,
    pub shadow_ei: bool,
}

impl GuestRegs {
    #[inline]
    pub fn get(&self, idx: u8) -> u32 {
        self.r[idx as usize & 0xF]
    }

    #[inline]
    pub fn set(&mut self, idx: u8, value: u32) {
        if idx & 0xF != 0 {
            self.r[idx as usize & 0xF] = value;
        }
    }
}

type FaultResult<T> = Result<T, (FaultKind, Option<u32>)>;

pub struct Machine {
    pub regs: GuestRegs,
    rom: Vec<u8>,
    ram: Vec<u8>,
    map: MemoryMap,
    pub platform: Platform,
    events: EventQueue,
    pub injection: Injection,
    coverage: CoverageMap,
    cycle: u64,
    executed: u64,
    last_pc: u32,
    sleeping: bool,
    done: Option<Verdict>,
    config: MachineConfig,
    observers: Observers,
}

impl Machine {
    pub fn new(image: &[u8], config: &MachineConfig) -> Result<Machine, MachineError> {
        let mut m = Machine {
            regs: GuestRegs::default(),
            rom: vec![0; ROM_SIZE as usize],
            ram: Vec::new(),
            map: MemoryMap::default(),
            platform: Platform::new(config.timing),
            events: EventQueue::default(),
            injection: Injection::default(),
            coverage: CoverageMap::default(),
            cycle: 0,
            executed: 0,
            last_pc: 0,
            sleeping: false,
            done: None,
            config: config.clone(),
            observers: Observers::default(),
        };
        m.reset_with(image, config)?;
        Ok(m)
    }

    /// Loads a new image and config, then resets.
    pub fn reset_with(&mut self, image: &[u8], config: &MachineConfig) -> Result<(), MachineError> {
        if image.len() > ROM_SIZE as usize {
            return Err(MachineError::ImageTooLarge(image.len()));
        }
        let ram = config.ram_size;
        if ram == 0 || !ram.is_multiple_of(4) || ram > 0x2000_0000 {
            return Err(MachineError::BadRamSize(ram));
        }
        self.rom.fill(0);
        self.rom[..image.len()].copy_from_slice(image);
        self.ram = vec![0; ram as usize];
        self.map = MemoryMap { ram_size: ram, peripherals: config.peripherals };
        self.platform = Platform::new(config.timing);
        self.injection = Injection::new(&config.injectors);
        self.config = config.clone();
        self.reset(&[]);
        Ok(())
    }

    /// Power-on reset with `input` as the fuzz stream. Allocations are kept.
    pub fn reset(&mut self, input: &[u8]) {
        self.regs = GuestRegs::default();
        self.ram.fill(0);
        self.platform.reset();
        self.events.clear();
        self.injection.reset(input);
        self.coverage.clear();
        self.coverage.hit(0);
        self.cycle = 0;
        self.executed = 0;
        self.last_pc = 0;
        self.sleeping = false;
        self.done = None;
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn memory_map(&self) -> &MemoryMap {
        &self.map
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.done
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    pub fn register_observer(&mut self, f: ObserverFn) -> ObserverId {
        self.observers.register(f)
    }

    pub fn unregister_observer(&mut self, id: ObserverId) -> bool {
        self.observers.unregister(id)
    }

    pub fn ram(&self) -> &[u8] {
        &self.ram
    }

    pub fn read_ram_u32(&self, addr: u32) -> Option<u32> {
        let off = addr.checked_sub(RAM_BASE)? as usize;
        let b = self.ram.get(off..off + 4)?;
        Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn outcome(&self) -> Option<RunOutcome> {
        self.done.map(|verdict| RunOutcome {
            verdict,
            executed: self.executed,
            consumed: self.injection.cursor.position(),
        })
    }

    /// Steps until the run ends.
    pub fn run(&mut self) -> RunOutcome {
        loop {
            if self.step().is_some() {
                return self.outcome().expect("verdict set");
            }
        }
    }

    /// Runs one instruction (or one idle WFI check). Returns the verdict
    /// once the run has ended; further calls keep returning it.
    pub fn step(&mut self) -> Option<Verdict> {
        if self.done.is_some() {
            return self.done;
        }
        let v = self.step_inner();
        if v.is_some() {
            self.done = v;
        }
        v
    }

    fn step_inner(&mut self) -> Option<Verdict> {
        self.process_due_events();

        if self.sleeping {
            if self.platform.intc.has_dispatchable() {
                self.sleeping = false;
            } else {
                let Some(next) = self.events.next_due() else {
                    return Some(Verdict::Hang { last_pc: self.last_pc });
                };
                if self.executed >= self.config.max_instructions {
                    return Some(Verdict::Hang { last_pc: self.last_pc });
                }
                self.executed += 1;
                self.cycle = next.max(self.cycle + 1);
                return None;
            }
        }

        if self.regs.ei {
            if let Some(line) = self.platform.intc.next_dispatchable() {
                if let Err((kind, addr)) = self.dispatch(line) {
                    return Some(Verdict::Fault { kind, pc: self.regs.pc, address: addr });
                }
            }
        }

        let pc = self.regs.pc;
        if self.config.exit_address == Some(pc) {
            return Some(Verdict::Exit { code: self.regs.r[1] });
        }
        if self.config.error_addresses.contains(&pc) {
            return Some(Verdict::Fault { kind: FaultKind::AssertFailure, pc, address: Some(pc) });
        }
        if self.executed >= self.config.max_instructions {
            return Some(Verdict::Hang { last_pc: self.last_pc });
        }

        let result = self.execute(pc);
        self.executed += 1;
        self.last_pc = pc;
        if !self.sleeping {
            self.cycle += 1;
        }
        match result {
            Ok(v) => v,
            Err((kind, address)) => Some(Verdict::Fault { kind, pc, address }),
        }
    }

    fn dispatch(&mut self, line: u8) -> FaultResult<()> {
        let handler = self.load(VECTOR_TABLE + 4 * line as u32, 4)?;
        self.regs.shadow_pc = self.regs.pc;
        self.regs.shadow_ei = self.regs.ei;
        self.regs.ei = false;
        self.regs.pc = handler;
        self.coverage.hit(handler);
        Ok(())
    }

    fn process_due_events(&mut self) {
        while let Some((at, ev)) = self.events.pop_due(self.cycle) {
            self.handle_event(at, ev);
        }
    }

    fn handle_event(&mut self, at: u64, ev: Event) {
        let cycle = self.cycle;
        match ev {
            Event::UartTxDone { uart, generation } => self.platform.uart_mut(uart).tx_done(generation),
            Event::TimerExpire { generation } => {
                self.platform
                    .with_ctx(cycle, &mut self.events, |p, ctx| p.timer.expire(generation, at, ctx));
            }
            Event::I2cDone { generation } => {
                if let Some(len) = self.platform.i2c.pending_request(generation) {
                    let mut buf = [0u8; 256];
                    let len = self.injection.respond(PeripheralId::I2c0, at, len as usize, &mut buf);
                    self.platform
                        .with_ctx(cycle, &mut self.events, |p, ctx| p.i2c.complete(&buf[..len], ctx));
                }
            }
            Event::Inject { peripheral } => {
                let Some(item) = self.injection.deliver(peripheral, at, &mut self.events) else {
                    return;
                };
                self.platform.with_ctx(cycle, &mut self.events, |p, ctx| match (item, peripheral) {
                    (Delivery::Byte(b), PeripheralId::Uart1) => p.uart1.receive(b, ctx),
                    (Delivery::Byte(b), _) => p.uart0.receive(b, ctx),
                    (Delivery::Frame(f), _) => {
                        p.can.receive(f, ctx);
                    }
                });
            }
        }
    }

    #[inline]
    fn fetch(&self, pc: u32) -> FaultResult<u32> {
        if !pc.is_multiple_of(4) {
            return Err((FaultKind::Alignment, Some(pc)));
        }
        let bytes = match self.map.decode(pc) {
            Target::Rom(off) => &self.rom[off as usize..off as usize + 4],
            Target::Ram(off) => &self.ram[off as usize..off as usize + 4],
            _ => return Err((FaultKind::BusFault, Some(pc))),
        };
        Ok(u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]))
    }

    /// CPU-side load: alignment check, then routing.
    fn load(&mut self, addr: u32, width: u8) -> FaultResult<u32> {
        if width == 4 && !addr.is_multiple_of(4) {
            return Err((FaultKind::Alignment, Some(addr)));
        }
        self.route(BusTransaction::read(addr, width, self.cycle))
            .map_err(|a| (FaultKind::BusFault, Some(a)))
    }

    fn store(&mut self, addr: u32, width: u8, value: u32) -> FaultResult<()> {
        if width == 4 && !addr.is_multiple_of(4) {
            return Err((FaultKind::Alignment, Some(addr)));
        }
        self.route(BusTransaction::write(addr, width, value, self.cycle))
            .map(|_| ())
            .map_err(|a| (FaultKind::BusFault, Some(a)))
    }

    /// Routes one access to ROM, RAM or a peripheral. Alignment is the
    /// caller's job. Returns the read value (0 for writes) or the faulting
    /// address for a bus fault.
    pub fn route(&mut self, txn: BusTransaction) -> Result<u32, u32> {
        let width = txn.width as usize;
        match (self.map.decode(txn.address), txn.direction) {
            (Target::Rom(off), Direction::Read) => Ok(read_le(&self.rom[off as usize..], width)),
            (Target::Rom(_), Direction::Write) => Err(txn.address),
            (Target::Ram(off), Direction::Read) => Ok(read_le(&self.ram[off as usize..], width)),
            (Target::Ram(off), Direction::Write) => {
                write_le(&mut self.ram[off as usize..], width, txn.value);
                Ok(0)
            }
            (Target::Mmio(id, offset), _) => Ok(self.mmio(id, offset, &txn)),
            (Target::Unmapped, _) => Err(txn.address),
        }
    }

    fn mmio(&mut self, id: PeripheralId, offset: u32, txn: &BusTransaction) -> u32 {
        if !self.observers.is_empty() {
            self.observers.notify(txn);
        }
        if self.config.mode == ExecMode::Stateless {
            return match txn.direction {
                Direction::Read => self.injection.cursor.read_le(txn.width),
                Direction::Write => 0,
            };
        }
        self.injection.probe_observe(id, offset, txn, &mut self.events);
        let reg = offset & !3;
        let shift = 8 * (offset & 3);
        match txn.direction {
            Direction::Read => {
                let v = self.platform.read(id, reg, self.cycle, &mut self.events);
                if txn.width == 4 {
                    v
                } else {
                    (v >> shift) & 0xFF
                }
            }
            Direction::Write => {
                let v = if txn.width == 4 { txn.value } else { (txn.value & 0xFF) << shift };
                self.platform.write(id, reg, v, self.cycle, &mut self.events);
                0
            }
        }
    }

    #[inline]
    fn branch(&mut self, target: u32) {
        self.regs.pc = target;
        self.coverage.hit(target);
    }

    fn execute(&mut self, pc: u32) -> FaultResult<Option<Verdict>> {
        let insn = decode(self.fetch(pc)?);
        let next = pc.wrapping_add(4);
        let rel = next.wrapping_add((insn.imm16 as i32 as u32).wrapping_mul(4));
        let imm = insn.imm16 as i32 as u32;
        let a = self.regs.get(insn.rs1);
        let b = self.regs.get(insn.rs2);
        let regs = &mut self.regs;
        regs.pc = next;
        match insn.opcode {
            Opcode::Nop => {}
            Opcode::Add => regs.set(insn.rd, a.wrapping_add(b)),
            Opcode::Sub => regs.set(insn.rd, a.wrapping_sub(b)),
            Opcode::And => regs.set(insn.rd, a & b),
            Opcode::Or => regs.set(insn.rd, a | b),
            Opcode::Xor => regs.set(insn.rd, a ^ b),
            Opcode::Shl => regs.set(insn.rd, a << (b & 31)),
            Opcode::Shr => regs.set(insn.rd, a >> (b & 31)),
            Opcode::Mul => regs.set(insn.rd, a.wrapping_mul(b)),
            Opcode::Divu => {
                if b == 0 {
                    return Err((FaultKind::DivideByZero, None));
                }
                regs.set(insn.rd, a / b);
            }
            Opcode::Addi => regs.set(insn.rd, a.wrapping_add(imm)),
            Opcode::Lui => regs.set(insn.rd, (insn.imm16 as u16 as u32) << 16),
            Opcode::Lw | Opcode::Lb => {
                let width = if insn.opcode == Opcode::Lw { 4 } else { 1 };
                let v = self.load(a.wrapping_add(imm), width)?;
                self.regs.set(insn.rd, v);
            }
            Opcode::Sw | Opcode::Sb => {
                let width = if insn.opcode == Opcode::Sw { 4 } else { 1 };
                let v = self.regs.get(insn.rd);
                self.store(a.wrapping_add(imm), width, v)?;
            }
            Opcode::Beq | Opcode::Bne | Opcode::Bltu => {
                let lhs = regs.get(insn.rd);
                let taken = match insn.opcode {
                    Opcode::Beq => lhs == a,
                    Opcode::Bne => lhs != a,
                    _ => lhs < a,
                };
                if taken {
                    self.branch(rel);
                }
            }
            Opcode::Jal => {
                regs.set(insn.rd, next);
                self.branch(rel);
            }
            Opcode::Jalr => {
                regs.set(insn.rd, next);
                self.branch(a.wrapping_add(imm) & !3);
            }
            Opcode::Wfi => {
                if !self.platform.intc.has_dispatchable() {
                    match self.events.next_due() {
                        None => return Ok(Some(Verdict::Hang { last_pc: pc })),
                        Some(at) => {
                            self.sleeping = true;
                            self.cycle = at.max(self.cycle + 1);
                        }
                    }
                }
            }
            Opcode::Iret => {
                let (target, ei) = (regs.shadow_pc, regs.shadow_ei);
                regs.ei = ei;
                self.branch(target);
            }
            Opcode::Ei => regs.ei = true,
            Opcode::Di => regs.ei = false,
            Opcode::Ecall => return Ok(Some(Verdict::Exit { code: regs.r[1] })),
            Opcode::Unknown(_) => return Err((FaultKind::UsageFault, None)),
        }
        Ok(None)
    }
}

impl PartialEq for Machine {
    /// Compares all guest-visible and simulation state. Observers are not
    /// state and are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.regs == other.regs
            && self.rom == other.rom
            && self.ram == other.ram
            && self.map == other.map
            && self.platform == other.platform
            && self.events == other.events
            && self.injection == other.injection
            && self.coverage == other.coverage
            && self.cycle == other.cycle
            && self.executed == other.executed
            && self.last_pc == other.last_pc
            && self.sleeping == other.sleeping
            && self.done == other.done
            && self.config == other.config
    }
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("regs", &self.regs)
            .field("cycle", &self.cycle)
            .field("executed", &self.executed)
            .field("done", &self.done)
            .field("observers", &self.observers)
            .finish_non_exhaustive()
    }
}

#[inline]
fn read_le(mem: &[u8], width: usize) -> u32 {
    if width == 4 {
        u32::from_le_bytes([mem[0], mem[1], mem[2], mem[3]])
    } else {
        mem[0] as u32
    }
}

#[inline]
fn write_le(mem: &mut [u8], width: usize, value: u32) {
    if width == 4 {
        mem[..4].copy_from_slice(&value.to_le_bytes());
    } else {
        mem[0] = value as u8;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Instruction;

    fn image(words: &[u32]) -> Vec<u8> {
        words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    fn machine(words: &[u32]) -> Machine {
        Machine::new(&image(words), &MachineConfig::default()).unwrap()
    }

    fn enc(op: Opcode, rd: u8, rs1: u8, imm: i16) -> u32 {
        Instruction::new(op, rd, rs1, imm).encode()
    }

    fn reg3(op: Opcode, rd: u8, rs1: u8, rs2: u8) -> u32 {
        Instruction::reg3(op, rd, rs1, rs2).encode()
    }

    #[test]
    fn ecall_at_zero_exits_after_one_instruction() {
        let out = machine(&[0x6000_0000]).run();
        assert_eq!(out.verdict, Verdict::Exit { code: 0 });
        assert_eq!(out.executed, 1);
    }

    #[test]
    fn empty_image_runs_nops_to_budget() {
        let cfg = MachineConfig { max_instructions: 100, ..MachineConfig::default() };
        let mut m = Machine::new(&[], &cfg).unwrap();
        assert_eq!(m.regs.pc, 0);
        let out = m.run();
        assert_eq!(out.executed, 100);
        assert_eq!(out.verdict, Verdict::Hang { last_pc: 99 * 4 });
    }

    #[test]
    fn budget_boundary() {
        // jal r0, -1: a one-instruction loop.
        let cfg = MachineConfig { max_instructions: 1_000_000, ..MachineConfig::default() };
        let mut m = Machine::new(&image(&[enc(Opcode::Jal, 0, 0, -1)]), &cfg).unwrap();
        let out = m.run();
        assert_eq!(out.executed, 1_000_000);
        assert_eq!(out.verdict, Verdict::Hang { last_pc: 0 });
        assert_eq!(m.cycle(), 1_000_000);
    }

    #[test]
    fn divide_by_zero_faults_at_divu() {
        let mut m = machine(&[0x0912_3000]);
        let out = m.run();
        assert_eq!(out.verdict, Verdict::Fault { kind: FaultKind::DivideByZero, pc: 0, address: None });
    }

    #[test]
    fn divu_nonzero_divisor() {
        let mut m = machine(&[
            enc(Opcode::Addi, 2, 0, 1000),
            enc(Opcode::Addi, 3, 0, 7),
            reg3(Opcode::Divu, 1, 2, 3),
            0x6000_0000,
        ]);
        assert_eq!(m.run().verdict, Verdict::Exit { code: 142 });
    }

    #[test]
    fn r0_stays_zero() {
        let mut m = machine(&[enc(Opcode::Addi, 0, 0, 5), reg3(Opcode::Add, 1, 0, 0), 0x6000_0000]);
        assert_eq!(m.run().verdict, Verdict::Exit { code: 0 });
        assert_eq!(m.regs.r[0], 0);
    }

    #[test]
    fn unknown_opcode_is_usage_fault() {
        let mut m = machine(&[0x7700_0000]);
        assert!(matches!(m.run().verdict, Verdict::Fault { kind: FaultKind::UsageFault, pc: 0, .. }));
    }

    #[test]
    fn misaligned_word_store_faults_byte_store_does_not() {
        let mut m = machine(&[
            enc(Opcode::Lui, 1, 0, 0x2000),
            enc(Opcode::Sb, 0, 1, 3),
            enc(Opcode::Sw, 0, 1, 2),
        ]);
        assert_eq!(
            m.run().verdict,
            Verdict::Fault { kind: FaultKind::Alignment, pc: 8, address: Some(0x2000_0002) }
        );
    }

    #[test]
    fn rom_write_is_bus_fault() {
        let mut m = machine(&[enc(Opcode::Sw, 0, 0, 0x100)]);
        assert_eq!(
            m.run().verdict,
            Verdict::Fault { kind: FaultKind::BusFault, pc: 0, address: Some(0x100) }
        );
    }

    #[test]
    fn route_examples() {
        let mut m = machine(&[]);
        assert_eq!(m.route(BusTransaction::read(0x2000_0000, 4, 0)), Ok(0));
        assert_eq!(m.route(BusTransaction::write(0x100, 4, 1, 0)), Err(0x100));
        assert_eq!(m.route(BusTransaction::write(0x4000_00DE, 4, 0xDEAD_BEEF, 0)), Err(0x4000_00DE));
        assert_eq!(m.route(BusTransaction::write(0x4000_00DC, 4, 0xDEAD_BEEF, 0)), Err(0x4000_00DC));
    }

    #[test]
    fn wfi_quiescent_hangs_immediately() {
        let mut m = machine(&[enc(Opcode::Nop, 0, 0, 0), enc(Opcode::Wfi, 0, 0, 0)]);
        let out = m.run();
        assert_eq!(out.verdict, Verdict::Hang { last_pc: 4 });
        assert_eq!(out.executed, 2);
    }

    #[test]
    fn wfi_quiescence_agrees_with_running_to_budget() {
        // Same guest, but spinning instead of sleeping: nothing ever changes.
        let cfg = MachineConfig { max_instructions: 10_000, ..MachineConfig::default() };
        let mut spin = Machine::new(&image(&[enc(Opcode::Jal, 0, 0, -1)]), &cfg).unwrap();
        let before = (spin.regs.clone(), spin.platform.clone(), spin.pending_events());
        spin.run();
        let mut regs = before.0.clone();
        regs.pc = 0;
        assert_eq!(spin.regs, regs);
        assert_eq!(spin.platform, before.1);
        assert_eq!(spin.pending_events(), 0);
    }

    #[test]
    fn interrupt_dispatch_and_iret() {
        let mut words = vec![0u32; 0x50];
        // 0x00: ei ; 0x04: wfi ; 0x08: ecall (r1 set by handler)
        words[0] = enc(Opcode::Ei, 0, 0, 0);
        words[1] = enc(Opcode::Wfi, 0, 0, 0);
        words[2] = 0x6000_0000;
        words[(VECTOR_TABLE / 4 + 2) as usize] = 0x100;
        // 0x100: addi r1, r0, 7 ; iret
        words[0x40] = enc(Opcode::Addi, 1, 0, 7);
        words[0x41] = enc(Opcode::Iret, 0, 0, 0);
        let mut m = machine(&words);
        m.platform.intc.ien = 1 << 2;
        m.platform.intc.raise(2);
        assert_eq!(m.step(), None); // ei
        assert_eq!(m.step(), None); // dispatch, then addi at the handler
        assert_eq!(m.regs.shadow_pc, 4);
        assert!(m.regs.shadow_ei);
        assert!(!m.regs.ei);
        assert_eq!(m.regs.pc, 0x104);
        m.platform.intc.ipend = 0;
        assert_eq!(m.step(), None); // iret
        assert_eq!((m.regs.pc, m.regs.ei), (4, true));
        m.platform.intc.raise(3); // latched but not enabled
        assert_eq!(m.run().verdict, Verdict::Hang { last_pc: 4 });
    }

    #[test]
    fn no_dispatch_while_ei_clear() {
        let mut words = vec![enc(Opcode::Nop, 0, 0, 0); 8];
        words.push(0x6000_0000);
        let mut m = machine(&words);
        m.platform.intc.ien = 0xFF;
        m.platform.intc.raise(1);
        assert_eq!(m.run().verdict, Verdict::Exit { code: 0 });
        assert_eq!(m.executed(), 9);
    }

    #[test]
    fn second_dispatch_before_iret_overwrites_shadows() {
        let mut words = vec![0u32; 0x80];
        words[0] = enc(Opcode::Ei, 0, 0, 0);
        words[1] = enc(Opcode::Nop, 0, 0, 0);
        words[(VECTOR_TABLE / 4 + 1) as usize] = 0x100;
        words[(VECTOR_TABLE / 4 + 2) as usize] = 0x180;
        // Handler 1 re-enables interrupts without acknowledging.
        words[0x40] = enc(Opcode::Ei, 0, 0, 0);
        words[0x41] = enc(Opcode::Nop, 0, 0, 0);
        words[0x60] = 0x6000_0000;
        let mut m = machine(&words);
        m.platform.intc.ien = 0b110;
        m.platform.intc.raise(1);
        m.step(); // ei
        m.step(); // dispatch line 1, run its ei
        assert_eq!(m.regs.shadow_pc, 4);
        m.platform.intc.ipend = 0;
        m.platform.intc.raise(2);
        m.step(); // nested dispatch of line 2 from inside handler 1
        assert_eq!(m.regs.shadow_pc, 0x104);
        assert!(m.regs.shadow_ei);
        assert!(matches!(m.run().verdict, Verdict::Exit { .. }));
    }

    #[test]
    fn exit_and_error_addresses() {
        let words = [enc(Opcode::Nop, 0, 0, 0), enc(Opcode::Nop, 0, 0, 0), enc(Opcode::Nop, 0, 0, 0)];
        let cfg = MachineConfig { exit_address: Some(8), ..MachineConfig::default() };
        let mut m = Machine::new(&image(&words), &cfg).unwrap();
        assert_eq!(m.run().verdict, Verdict::Exit { code: 0 });
        let cfg = MachineConfig { error_addresses: vec![4], ..MachineConfig::default() };
        let mut m = Machine::new(&image(&words), &cfg).unwrap();
        assert_eq!(
            m.run().verdict,
            Verdict::Fault { kind: FaultKind::AssertFailure, pc: 4, address: Some(4) }
        );
    }

    #[test]
    fn image_too_large() {
        let big = vec![0u8; ROM_SIZE as usize + 4];
        assert_eq!(
            Machine::new(&big, &MachineConfig::default()).unwrap_err(),
            MachineError::ImageTooLarge(big.len())
        );
    }

    #[test]
    fn reset_is_reproducible() {
        let words = [enc(Opcode::Addi, 1, 0, 3), 0x6000_0000];
        let a = machine(&words);
        let mut b = machine(&words);
        b.run();
        b.reset(&[]);
        assert_eq!(a, b);
    }

    #[test]
    fn jalr_masks_low_bits() {
        let mut m = machine(&[enc(Opcode::Addi, 2, 0, 11), enc(Opcode::Jalr, 3, 2, 0), 0x6000_0000]);
        assert_eq!(m.run().verdict, Verdict::Exit { code: 0 });
        assert_eq!(m.regs.r[3], 8);
    }

    #[test]
    fn misaligned_fetch_faults() {
        // Vector for line 0 points at an odd address.
        let mut words = vec![0u32; 0x20];
        words[0] = enc(Opcode::Ei, 0, 0, 0);
        words[(VECTOR_TABLE / 4) as usize] = 0x102;
        let mut m = machine(&words);
        m.platform.intc.ien = 1;
        m.platform.intc.raise(0);
        assert!(matches!(
            m.run().verdict,
            Verdict::Fault { kind: FaultKind::Alignment, pc: 0x102, .. }
        ));
    }
}
