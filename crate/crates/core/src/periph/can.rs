//! CAN controller with an acceptance filter and a 4-deep receive queue.
//!
//! Frames whose DLC exceeds 8 are accepted with the payload truncated to 8
//! bytes; RXDLC still reports the DLC as received.

use std::collections::VecDeque;

use super::Ctx;

pub const ENABLE: u32 = 0x00;
pub const IE: u32 = 0x04;
pub const RXID: u32 = 0x08;
pub const RXDLC: u32 = 0x0C;
pub const RXDATA0: u32 = 0x10;
pub const RXDATA1: u32 = 0x14;
pub const STATUS: u32 = 0x18;
pub const FILTER_ID: u32 = 0x1C;
pub const FILTER_MASK: u32 = 0x20;
pub const POP: u32 = 0x24;

pub const STATUS_RX_AVAIL: u32 = 1 << 0;
pub const IRQ_LINE: u8 = 4;
pub const RX_QUEUE_DEPTH: usize = 4;
pub const ID_MASK: u16 = 0x7FF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CanFrame {
    /// 11-bit standard identifier.
    pub id: u16,
    /// Data length code as received, 0..=15.
    pub dlc: u8,
    data: [u8; 8],
}

impl CanFrame {
    /// Builds a frame, keeping at most `min(dlc, 8)` bytes of `payload`.
    pub fn new(id: u16, dlc: u8, payload: &[u8]) -> Self {
        let dlc = dlc & 0x0F;
        let mut data = [0u8; 8];
        let n = payload.len().min(8).min(dlc as usize);
        data[..n].copy_from_slice(&payload[..n]);
        CanFrame { id: id & ID_MASK, dlc, data }
    }

    pub fn stored_len(&self) -> usize {
        (self.dlc as usize).min(8)
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.stored_len()]
    }

    fn word(&self, index: usize) -> u32 {
        let d = &self.data[index * 4..index * 4 + 4];
        u32::from_le_bytes([d[0], d[1], d[2], d[3]])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Can {
    pub enable: u32,
    pub ie: u32,
    pub filter_id: u32,
    pub filter_mask: u32,
    rx: VecDeque<CanFrame>,
    pub delivered: u64,
    pub filtered: u64,
    pub rx_dropped: u64,
    pub rx_discarded: u64,
}

impl Can {
    pub fn reset(&mut self) {
        let mut rx = std::mem::take(&mut self.rx);
        rx.clear();
        *self = Can { rx, ..Can::default() };
    }

    pub fn accepts(&self, id: u16) -> bool {
        let mask = self.filter_mask & ID_MASK as u32;
        (id as u32 & mask) == (self.filter_id & mask)
    }

    pub fn head(&self) -> Option<&CanFrame> {
        self.rx.front()
    }

    pub fn queued(&self) -> usize {
        self.rx.len()
    }

    pub fn read(&mut self, offset: u32, _ctx: &mut Ctx<'_>) -> u32 {
        let head = self.rx.front();
        match offset {
            ENABLE => self.enable,
            IE => self.ie,
            RXID => head.map_or(0, |f| f.id as u32),
            RXDLC => head.map_or(0, |f| f.dlc as u32),
            RXDATA0 => head.map_or(0, |f| f.word(0)),
            RXDATA1 => head.map_or(0, |f| f.word(1)),
            STATUS => {
                if head.is_some() {
                    STATUS_RX_AVAIL
                } else {
                    0
                }
            }
            FILTER_ID => self.filter_id,
            FILTER_MASK => self.filter_mask,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32, _ctx: &mut Ctx<'_>) {
        match offset {
            ENABLE => self.enable = value,
            IE => self.ie = value,
            FILTER_ID => self.filter_id = value & ID_MASK as u32,
            FILTER_MASK => self.filter_mask = value & ID_MASK as u32,
            POP => {
                self.rx.pop_front();
            }
            _ => {}
        }
    }

    /// A frame arriving from the bus. Returns whether it was queued.
    pub fn receive(&mut self, frame: CanFrame, ctx: &mut Ctx<'_>) -> bool {
        if self.enable & 1 == 0 {
            self.rx_discarded += 1;
            return false;
        }
        if !self.accepts(frame.id) {
            self.filtered += 1;
            return false;
        }
        if self.rx.len() >= RX_QUEUE_DEPTH {
            self.rx_dropped += 1;
            return false;
        }
        self.rx.push_back(frame);
        self.delivered += 1;
        if self.ie & 1 != 0 {
            ctx.raise(IRQ_LINE);
        }
        true
    }
}
