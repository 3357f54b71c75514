//! Discrete-event queue driving peripheral timing and injector deliveries.
//!
//! Events due on the same cycle pop in scheduling order, so a run is a pure
//! function of what was scheduled and when.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::bus::PeripheralId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Event {
    /// UART transmit shift register drained; TXE becomes 1.
    UartTxDone { uart: PeripheralId, generation: u32 },
    /// Timer period elapsed.
    TimerExpire { generation: u32 },
    /// I2C read transfer finished; responder bytes land in the FIFO.
    I2cDone { generation: u32 },
    /// Periodic injector delivery for the given peripheral.
    Inject { peripheral: PeripheralId },
}

#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
}

impl PartialEq for EventQueue {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq && self.heap.clone().into_sorted_vec() == other.heap.clone().into_sorted_vec()
    }
}

impl Eq for EventQueue {}

impl EventQueue {
    pub fn clear(&mut self) {
        self.heap.clear();
        self.seq = 0;
    }

    pub fn schedule(&mut self, at: u64, event: Event) {
        self.heap.push(Reverse((at, self.seq, event)));
        self.seq += 1;
    }

    pub fn next_due(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse((at, _, _))| *at)
    }

    /// Pops the earliest event if it is due at or before `now`.
    #[inline]
    pub fn pop_due(&mut self, now: u64) -> Option<(u64, Event)> {
        match self.heap.peek() {
            Some(Reverse((at, _, _))) if *at <= now => {
                let Reverse((at, _, ev)) = self.heap.pop()?;
                Some((at, ev))
            }
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_cycle_events_pop_fifo() {
        let mut q = EventQueue::default();
        q.schedule(10, Event::Inject { peripheral: PeripheralId::Can0 });
        q.schedule(10, Event::Inject { peripheral: PeripheralId::Uart0 });
        q.schedule(5, Event::TimerExpire { generation: 0 });
        assert_eq!(q.pop_due(4), None);
        assert_eq!(q.pop_due(10), Some((5, Event::TimerExpire { generation: 0 })));
        assert_eq!(q.pop_due(10).unwrap().1, Event::Inject { peripheral: PeripheralId::Can0 });
        assert_eq!(q.pop_due(10).unwrap().1, Event::Inject { peripheral: PeripheralId::Uart0 });
        assert!(q.is_empty());
    }
}
