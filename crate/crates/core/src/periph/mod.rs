//! Stateful peripheral models.
//!
//! Register offsets are relative to each instance's base address (see
//! [`crate::bus::PeripheralId::base`]). Reads of undefined offsets return 0
//! and writes to read-only or undefined offsets are ignored.

pub mod can;
pub mod i2c;
pub mod intc;
pub mod timer;
pub mod uart;

pub use can::{Can, CanFrame};
pub use i2c::I2c;
pub use intc::Intc;
pub use timer::Timer;
pub use uart::Uart;

use crate::bus::PeripheralId;
use crate::events::EventQueue;

/// Latency constants. Overridable from the campaign config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub uart_tx_drain: u64,
    pub i2c_byte_cycles: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { uart_tx_drain: 32, i2c_byte_cycles: 8 }
    }
}

/// What a register access may touch besides its own peripheral.
pub struct Ctx<'a> {
    pub cycle: u64,
    pub events: &'a mut EventQueue,
    pub intc: &'a mut Intc,
    pub timing: Timing,
}

impl Ctx<'_> {
    #[inline]
    pub fn raise(&mut self, line: u8) {
        self.intc.raise(line);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Platform {
    pub intc: Intc,
    pub uart0: Uart,
    pub uart1: Uart,
    pub timer: Timer,
    pub i2c: I2c,
    pub can: Can,
    pub timing: Timing,
}

impl Platform {
    pub fn new(timing: Timing) -> Self {
        Platform {
            intc: Intc::default(),
            uart0: Uart::new(PeripheralId::Uart0),
            uart1: Uart::new(PeripheralId::Uart1),
            timer: Timer::default(),
            i2c: I2c::default(),
            can: Can::default(),
            timing,
        }
    }

    /// Back to power-on state, keeping buffer allocations.
    pub fn reset(&mut self) {
        self.intc = Intc::default();
        self.uart0.reset();
        self.uart1.reset();
        self.timer = Timer::default();
        self.i2c.reset();
        self.can.reset();
    }

    pub fn uart_mut(&mut self, id: PeripheralId) -> &mut Uart {
        match id {
            PeripheralId::Uart1 => &mut self.uart1,
            _ => &mut self.uart0,
        }
    }

    pub fn uart(&self, id: PeripheralId) -> &Uart {
        match id {
            PeripheralId::Uart1 => &self.uart1,
            _ => &self.uart0,
        }
    }

    /// Splits the platform into one peripheral plus a context holding the
    /// interrupt controller.
    pub fn with_ctx<R>(
        &mut self,
        cycle: u64,
        events: &mut EventQueue,
        f: impl FnOnce(Parts<'_>, &mut Ctx<'_>) -> R,
    ) -> R {
        let Platform { intc, uart0, uart1, timer, i2c, can, timing } = self;
        let mut ctx = Ctx { cycle, events, intc, timing: *timing };
        f(Parts { uart0, uart1, timer, i2c, can }, &mut ctx)
    }

    /// Word-level register read. Sub-word accesses are handled by the
    /// caller.
    pub fn read(&mut self, id: PeripheralId, offset: u32, cycle: u64, events: &mut EventQueue) -> u32 {
        if id == PeripheralId::Intc {
            return self.intc.read(offset);
        }
        self.with_ctx(cycle, events, |p, ctx| match id {
            PeripheralId::Uart0 => p.uart0.read(offset, ctx),
            PeripheralId::Uart1 => p.uart1.read(offset, ctx),
            PeripheralId::Timer0 => p.timer.read(offset, ctx),
            PeripheralId::I2c0 => p.i2c.read(offset, ctx),
            PeripheralId::Can0 => p.can.read(offset, ctx),
            PeripheralId::Intc => unreachable!(),
        })
    }

    pub fn write(&mut self, id: PeripheralId, offset: u32, value: u32, cycle: u64, events: &mut EventQueue) {
        if id == PeripheralId::Intc {
            self.intc.write(offset, value);
            return;
        }
        self.with_ctx(cycle, events, |p, ctx| match id {
            PeripheralId::Uart0 => p.uart0.write(offset, value, ctx),
            PeripheralId::Uart1 => p.uart1.write(offset, value, ctx),
            PeripheralId::Timer0 => p.timer.write(offset, value, ctx),
            PeripheralId::I2c0 => p.i2c.write(offset, value, ctx),
            PeripheralId::Can0 => p.can.write(offset, value, ctx),
            PeripheralId::Intc => unreachable!(),
        })
    }
}

pub struct Parts<'a> {
    pub uart0: &'a mut Uart,
    pub uart1: &'a mut Uart,
    pub timer: &'a mut Timer,
    pub i2c: &'a mut I2c,
    pub can: &'a mut Can,
}
