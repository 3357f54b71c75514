//! I2C controller in initiator role. A read transfer asks the attached
//! responder for LEN bytes, which arrive LEN × `i2c_byte_cycles` later.

use std::collections::VecDeque;

use super::Ctx;
use crate::events::Event;

pub const ENABLE: u32 = 0x00;
pub const ADDR: u32 = 0x04;
pub const TXDATA: u32 = 0x08;
pub const RXDATA: u32 = 0x0C;
pub const CTRL: u32 = 0x10;
pub const STATUS: u32 = 0x14;
pub const INTEN: u32 = 0x18;

pub const CTRL_START_READ: u32 = 1 << 0;
pub const STATUS_BUSY: u32 = 1 << 0;
pub const STATUS_DONE: u32 = 1 << 1;

pub const IRQ_LINE: u8 = 3;
pub const RX_FIFO_DEPTH: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct I2c {
    pub enable: u32,
    pub addr: u32,
    pub ctrl: u32,
    pub inten: u32,
    busy: bool,
    done: bool,
    pending_len: u8,
    generation: u32,
    rx: VecDeque<u8>,
    pub rx_dropped: u64,
    pub tx_log: Vec<u8>,
}

impl I2c {
    pub fn reset(&mut self) {
        let mut rx = std::mem::take(&mut self.rx);
        let mut tx_log = std::mem::take(&mut self.tx_log);
        rx.clear();
        tx_log.clear();
        *self = I2c { rx, tx_log, ..I2c::default() };
    }

    pub fn status(&self) -> u32 {
        let mut s = 0;
        if self.busy {
            s |= STATUS_BUSY;
        }
        if self.done {
            s |= STATUS_DONE;
        }
        s
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn rx_len(&self) -> usize {
        self.rx.len()
    }

    pub fn read(&mut self, offset: u32, _ctx: &mut Ctx<'_>) -> u32 {
        match offset {
            ENABLE => self.enable,
            ADDR => self.addr,
            RXDATA => self.rx.pop_front().map_or(0, u32::from),
            CTRL => self.ctrl,
            STATUS => self.status(),
            INTEN => self.inten,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32, ctx: &mut Ctx<'_>) {
        match offset {
            ENABLE => self.enable = value,
            ADDR => self.addr = value & 0x7F,
            TXDATA => self.tx_log.push(value as u8),
            CTRL => {
                self.ctrl = value;
                if value & CTRL_START_READ != 0 && self.enable & 1 != 0 && !self.busy {
                    let len = ((value >> 8) & 0xFF) as u8;
                    self.busy = true;
                    self.done = false;
                    self.pending_len = len;
                    self.generation = self.generation.wrapping_add(1);
                    ctx.events.schedule(
                        ctx.cycle + len as u64 * ctx.timing.i2c_byte_cycles,
                        Event::I2cDone { generation: self.generation },
                    );
                }
            }
            STATUS => {
                if value & STATUS_DONE != 0 {
                    self.done = false;
                }
            }
            INTEN => self.inten = value,
            _ => {}
        }
    }

    /// Length of the transfer a pending `I2cDone` event completes, or `None`
    /// if the event is stale.
    pub fn pending_request(&self, generation: u32) -> Option<u8> {
        (self.busy && generation == self.generation).then_some(self.pending_len)
    }

    pub fn complete(&mut self, bytes: &[u8], ctx: &mut Ctx<'_>) {
        for &b in bytes {
            if self.rx.len() < RX_FIFO_DEPTH {
                self.rx.push_back(b);
            } else {
                self.rx_dropped += 1;
            }
        }
        self.busy = false;
        self.done = true;
        if self.inten & 1 != 0 {
            ctx.raise(IRQ_LINE);
        }
    }
}
