//! UART with a 16-byte receive FIFO and a fixed transmit drain latency.

use std::collections::VecDeque;

use super::Ctx;
use crate::bus::PeripheralId;
use crate::events::Event;

pub const ENABLE: u32 = 0x00;
pub const STATUS: u32 = 0x04;
pub const RXDATA: u32 = 0x08;
pub const TXDATA: u32 = 0x0C;
pub const INTEN: u32 = 0x10;

pub const STATUS_RXNE: u32 = 1 << 0;
pub const STATUS_TXE: u32 = 1 << 1;

pub const RX_FIFO_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Uart {
    pub id: PeripheralId,
    pub enable: u32,
    pub inten: u32,
    rx: VecDeque<u8>,
    tx_busy: bool,
    tx_generation: u32,
    /// Bytes dropped because the FIFO was full.
    pub rx_dropped: u64,
    /// Bytes dropped because the UART was not enabled.
    pub rx_discarded: u64,
    /// Every byte written to TXDATA this run.
    pub tx_log: Vec<u8>,
}

impl Uart {
    pub fn new(id: PeripheralId) -> Self {
        Uart {
            id,
            enable: 0,
            inten: 0,
            rx: VecDeque::with_capacity(RX_FIFO_DEPTH),
            tx_busy: false,
            tx_generation: 0,
            rx_dropped: 0,
            rx_discarded: 0,
            tx_log: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.enable = 0;
        self.inten = 0;
        self.rx.clear();
        self.tx_busy = false;
        self.tx_generation = 0;
        self.rx_dropped = 0;
        self.rx_discarded = 0;
        self.tx_log.clear();
    }

    pub fn status(&self) -> u32 {
        let mut s = 0;
        if !self.rx.is_empty() {
            s |= STATUS_RXNE;
        }
        if !self.tx_busy {
            s |= STATUS_TXE;
        }
        s
    }

    pub fn rx_len(&self) -> usize {
        self.rx.len()
    }

    pub fn read(&mut self, offset: u32, _ctx: &mut Ctx<'_>) -> u32 {
        match offset {
            ENABLE => self.enable,
            STATUS => self.status(),
            RXDATA => self.rx.pop_front().map_or(0, u32::from),
            INTEN => self.inten,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32, ctx: &mut Ctx<'_>) {
        match offset {
            ENABLE => self.enable = value,
            INTEN => self.inten = value,
            TXDATA if self.enable & 1 != 0 => {
                self.tx_log.push(value as u8);
                self.tx_busy = true;
                self.tx_generation = self.tx_generation.wrapping_add(1);
                ctx.events.schedule(
                    ctx.cycle + ctx.timing.uart_tx_drain,
                    Event::UartTxDone { uart: self.id, generation: self.tx_generation },
                );
            }
            _ => {}
        }
    }

    pub fn tx_done(&mut self, generation: u32) {
        if generation == self.tx_generation {
            self.tx_busy = false;
        }
    }

    /// A byte arriving on the wire.
    pub fn receive(&mut self, byte: u8, ctx: &mut Ctx<'_>) {
        if self.enable & 1 == 0 {
            self.rx_discarded += 1;
            return;
        }
        if self.rx.len() >= RX_FIFO_DEPTH {
            self.rx_dropped += 1;
            return;
        }
        self.rx.push_back(byte);
        if self.inten & 1 != 0 {
            if let Some(line) = self.id.irq_line() {
                ctx.raise(line);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventQueue;
    use crate::periph::{Intc, Timing};

    fn with_ctx<R>(cycle: u64, q: &mut EventQueue, intc: &mut Intc, f: impl FnOnce(&mut Ctx<'_>) -> R) -> R {
        let mut ctx = Ctx { cycle, events: q, intc, timing: Timing::default() };
        f(&mut ctx)
    }

    #[test]
    fn txe_clears_for_drain_window() {
        let mut u = Uart::new(PeripheralId::Uart0);
        let mut q = EventQueue::default();
        let mut intc = Intc::default();
        with_ctx(100, &mut q, &mut intc, |ctx| {
            u.write(ENABLE, 1, ctx);
            u.write(TXDATA, b'A' as u32, ctx);
            assert_eq!(u.read(STATUS, ctx) & STATUS_TXE, 0);
        });
        assert_eq!(q.pop_due(131), None);
        let (at, ev) = q.pop_due(132).unwrap();
        assert_eq!(at, 132);
        let Event::UartTxDone { generation, .. } = ev else { panic!() };
        u.tx_done(generation);
        assert_ne!(u.status() & STATUS_TXE, 0);
    }

    #[test]
    fn rx_fifo_overflow_drops_newest() {
        let mut u = Uart::new(PeripheralId::Uart0);
        let mut q = EventQueue::default();
        let mut intc = Intc::default();
        with_ctx(0, &mut q, &mut intc, |ctx| {
            u.write(ENABLE, 1, ctx);
            for b in 0..20u8 {
                u.receive(b, ctx);
            }
            assert_eq!(u.rx_dropped, 4);
            let got: Vec<u32> = (0..16).map(|_| u.read(RXDATA, ctx)).collect();
            assert_eq!(got, (0..16).collect::<Vec<u32>>());
        });
    }

    #[test]
    fn empty_rxdata_read_is_zero_and_harmless() {
        let mut u = Uart::new(PeripheralId::Uart0);
        let mut q = EventQueue::default();
        let mut intc = Intc::default();
        with_ctx(0, &mut q, &mut intc, |ctx| {
            let before = u.clone();
            assert_eq!(u.read(RXDATA, ctx), 0);
            assert_eq!(u, before);
        });
    }

    #[test]
    fn rx_interrupt_only_when_enabled() {
        let mut u = Uart::new(PeripheralId::Uart0);
        let mut q = EventQueue::default();
        let mut intc = Intc::default();
        with_ctx(0, &mut q, &mut intc, |ctx| {
            u.write(ENABLE, 1, ctx);
            u.receive(1, ctx);
        });
        assert_eq!(intc.ipend, 0);
        with_ctx(0, &mut q, &mut intc, |ctx| {
            u.write(INTEN, 1, ctx);
            u.receive(2, ctx);
        });
        assert_eq!(intc.ipend, 1 << 1);
        assert_ne!(u.status() & STATUS_RXNE, 0);
    }

    #[test]
    fn disabled_uart_discards() {
        let mut u = Uart::new(PeripheralId::Uart1);
        let mut q = EventQueue::default();
        let mut intc = Intc::default();
        with_ctx(0, &mut q, &mut intc, |ctx| u.receive(7, ctx));
        assert_eq!(u.rx_len(), 0);
        assert_eq!(u.rx_discarded, 1);
    }
}
