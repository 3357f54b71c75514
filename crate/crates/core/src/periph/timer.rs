//! Periodic timer. Raises line 2 every PERIOD cycles while enabled with
//! INTEN set.

use super::Ctx;
use crate::events::Event;

pub const ENABLE: u32 = 0x00;
pub const PERIOD: u32 = 0x04;
pub const COUNT: u32 = 0x08;
pub const INTEN: u32 = 0x0C;
pub const INTCLR: u32 = 0x10;

pub const IRQ_LINE: u8 = 2;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Timer {
    pub enable: u32,
    pub period: u32,
    pub inten: u32,
    start: u64,
    generation: u32,
    pub expirations: u64,
}

impl Timer {
    fn running(&self) -> bool {
        self.enable & 1 != 0 && self.period > 0
    }

    pub fn count(&self, cycle: u64) -> u32 {
        if self.running() {
            ((cycle - self.start) % self.period as u64) as u32
        } else {
            0
        }
    }

    pub fn read(&mut self, offset: u32, ctx: &mut Ctx<'_>) -> u32 {
        match offset {
            ENABLE => self.enable,
            PERIOD => self.period,
            COUNT => self.count(ctx.cycle),
            INTEN => self.inten,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32, ctx: &mut Ctx<'_>) {
        match offset {
            ENABLE => {
                let was = self.running();
                self.enable = value;
                if !was && self.running() {
                    self.start = ctx.cycle;
                }
            }
            PERIOD => {
                self.period = value;
                self.start = ctx.cycle;
            }
            INTEN => self.inten = value,
            // Acknowledge; pending state lives in the interrupt controller.
            INTCLR => {}
            _ => return,
        }
        self.reschedule(ctx);
    }

    /// Only schedules expirations that can raise the line, so a timer
    /// without INTEN never keeps the event queue alive.
    fn reschedule(&mut self, ctx: &mut Ctx<'_>) {
        self.generation = self.generation.wrapping_add(1);
        if self.running() && self.inten & 1 != 0 {
            let period = self.period as u64;
            let elapsed = ctx.cycle - self.start;
            let next = self.start + (elapsed / period + 1) * period;
            ctx.events.schedule(next, Event::TimerExpire { generation: self.generation });
        }
    }

    pub fn expire(&mut self, generation: u32, at: u64, ctx: &mut Ctx<'_>) {
        if generation != self.generation || !self.running() {
            return;
        }
        self.expirations += 1;
        if self.inten & 1 != 0 {
            ctx.raise(IRQ_LINE);
            ctx.events.schedule(at + self.period as u64, Event::TimerExpire { generation });
        }
    }
}
