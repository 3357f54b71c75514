//! Fuzz-input injection: a bus probe that watches for trigger accesses and
//! one injector per peripheral instance that feeds bytes from the shared
//! input stream into the peripheral model.
//!
//! Peer-to-peer injectors (`uart_byte`, `can_frame`) deliver periodically
//! once armed. The `i2c_responder` answers read requests issued by the
//! guest. All injectors consume from a single [`StreamCursor`] in event
//! order.
//!
//! CAN frames are framed in the stream as two little-endian id bytes (masked
//! to 11 bits), one DLC byte (low nibble used), then `min(dlc, 8)` payload
//! bytes.

use serde::{Deserialize, Serialize};

use crate::bus::{BusTransaction, Direction, PeripheralId};
use crate::events::{Event, EventQueue};
use crate::periph::CanFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
    Any,
}

impl AccessKind {
    fn matches(self, dir: Direction) -> bool {
        matches!(
            (self, dir),
            (AccessKind::Any, _) | (AccessKind::Read, Direction::Read) | (AccessKind::Write, Direction::Write)
        )
    }
}

/// Predicate on a register access that arms an injector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerRule {
    pub peripheral: PeripheralId,
    pub offset: u32,
    pub access: AccessKind,
    /// When set, only writes with `value & mask == match` fire the rule.
    pub value_filter: Option<(u32, u32)>,
}

impl TriggerRule {
    pub fn new(peripheral: PeripheralId, offset: u32, access: AccessKind) -> Self {
        TriggerRule { peripheral, offset, access, value_filter: None }
    }

    pub fn matches(&self, peripheral: PeripheralId, offset: u32, txn: &BusTransaction) -> bool {
        if peripheral != self.peripheral || offset & !3 != self.offset & !3 || !self.access.matches(txn.direction) {
            return false;
        }
        match self.value_filter {
            None => true,
            Some((mask, want)) => txn.direction == Direction::Write && txn.value & mask == want & mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectorKind {
    UartByte,
    CanFrame,
    I2cResponder,
}

impl InjectorKind {
    pub fn is_periodic(self) -> bool {
        !matches!(self, InjectorKind::I2cResponder)
    }

    pub fn accepts(self, peripheral: PeripheralId) -> bool {
        matches!(
            (self, peripheral),
            (InjectorKind::UartByte, PeripheralId::Uart0 | PeripheralId::Uart1)
                | (InjectorKind::CanFrame, PeripheralId::Can0)
                | (InjectorKind::I2cResponder, PeripheralId::I2c0)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectorSpec {
    pub kind: InjectorKind,
    pub peripheral: PeripheralId,
    /// Cycles between deliveries; ignored by responders.
    pub period: u64,
    pub trigger: TriggerRule,
}

/// The fuzz input and the single consumption cursor shared by every
/// injector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamCursor {
    input: Vec<u8>,
    position: usize,
}

impl StreamCursor {
    pub fn new(input: &[u8]) -> Self {
        StreamCursor { input: input.to_vec(), position: 0 }
    }

    /// Replaces the input, reusing the allocation.
    pub fn load(&mut self, input: &[u8]) {
        self.input.clear();
        self.input.extend_from_slice(input);
        self.position = 0;
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.position
    }

    pub fn is_exhausted(&self) -> bool {
        self.position >= self.input.len()
    }

    pub fn take_byte(&mut self) -> Option<u8> {
        let b = *self.input.get(self.position)?;
        self.position += 1;
        Some(b)
    }

    /// Takes up to `n` bytes.
    pub fn take_up_to(&mut self, n: usize) -> &[u8] {
        let start = self.position;
        let end = (start + n).min(self.input.len());
        self.position = end;
        &self.input[start..end]
    }

    /// Little-endian value of `width` bytes; bytes past the end read as 0.
    pub fn read_le(&mut self, width: u8) -> u32 {
        let mut buf = [0u8; 4];
        let got = self.take_up_to(width as usize);
        buf[..got.len()].copy_from_slice(got);
        u32::from_le_bytes(buf)
    }
}

/// Pulls one UART byte.
pub fn deliver_uart(cursor: &mut StreamCursor) -> Option<u8> {
    cursor.take_byte()
}

/// Pulls one CAN frame. A frame cut short by the end of the stream is
/// consumed and discarded.
pub fn deliver_can(cursor: &mut StreamCursor) -> Option<CanFrame> {
    if cursor.remaining() < 3 {
        cursor.take_up_to(3);
        return None;
    }
    let header = cursor.take_up_to(3);
    let id = u16::from_le_bytes([header[0], header[1]]) & 0x7FF;
    let dlc = header[2] & 0x0F;
    let want = (dlc as usize).min(8);
    let payload = cursor.take_up_to(want);
    if payload.len() < want {
        return None;
    }
    Some(CanFrame::new(id, dlc, payload))
}

/// Answers an I2C read of `len` bytes into `out`, zero-padding when the
/// stream runs short or the responder is not live. Returns the number of
/// stream bytes used.
pub fn respond_i2c(cursor: &mut StreamCursor, live: bool, len: usize, out: &mut [u8]) -> usize {
    out[..len].fill(0);
    if !live {
        return 0;
    }
    let got = cursor.take_up_to(len);
    out[..got.len()].copy_from_slice(got);
    got.len()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectorState {
    pub spec: InjectorSpec,
    pub armed_at: Option<u64>,
    pub dormant: bool,
    pub deliveries: u64,
    pub first_delivery: Option<u64>,
}

impl InjectorState {
    pub fn is_armed(&self) -> bool {
        self.armed_at.is_some()
    }
}

/// All injectors of one machine plus the shared cursor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Injection {
    pub injectors: Vec<InjectorState>,
    pub cursor: StreamCursor,
}

impl Injection {
    pub fn new(specs: &[InjectorSpec]) -> Self {
        Injection {
            injectors: specs
                .iter()
                .map(|spec| InjectorState { spec: *spec, armed_at: None, dormant: false, deliveries: 0, first_delivery: None })
                .collect(),
            cursor: StreamCursor::default(),
        }
    }

    pub fn reset(&mut self, input: &[u8]) {
        for inj in &mut self.injectors {
            inj.armed_at = None;
            inj.dormant = false;
            inj.deliveries = 0;
            inj.first_delivery = None;
        }
        self.cursor.load(input);
    }

    pub fn get(&self, peripheral: PeripheralId) -> Option<&InjectorState> {
        self.injectors.iter().find(|i| i.spec.peripheral == peripheral)
    }

    fn index_of(&self, peripheral: PeripheralId) -> Option<usize> {
        self.injectors.iter().position(|i| i.spec.peripheral == peripheral)
    }

    /// The probe. Arms every unarmed injector whose rule matches and
    /// returns a bitmask of the injectors armed by this transaction.
    pub fn probe_observe(
        &mut self,
        peripheral: PeripheralId,
        offset: u32,
        txn: &BusTransaction,
        events: &mut EventQueue,
    ) -> u32 {
        let mut armed = 0;
        for (i, inj) in self.injectors.iter_mut().enumerate() {
            if inj.armed_at.is_some() || !inj.spec.trigger.matches(peripheral, offset, txn) {
                continue;
            }
            inj.armed_at = Some(txn.cycle);
            if inj.spec.kind.is_periodic() {
                events.schedule(txn.cycle + inj.spec.period, Event::Inject { peripheral: inj.spec.peripheral });
            }
            armed |= 1 << i;
        }
        armed
    }

    /// Runs one periodic delivery and schedules the next one unless the
    /// stream is now empty.
    pub fn deliver(&mut self, peripheral: PeripheralId, at: u64, events: &mut EventQueue) -> Option<Delivery> {
        let idx = self.index_of(peripheral)?;
        let Injection { injectors, cursor } = self;
        let inj = &mut injectors[idx];
        if inj.dormant || inj.armed_at.is_none() {
            return None;
        }
        let item = match inj.spec.kind {
            InjectorKind::UartByte => deliver_uart(cursor).map(Delivery::Byte),
            InjectorKind::CanFrame => deliver_can(cursor).map(Delivery::Frame),
            InjectorKind::I2cResponder => return None,
        };
        if item.is_some() {
            inj.deliveries += 1;
            inj.first_delivery.get_or_insert(at);
        }
        if cursor.is_exhausted() {
            inj.dormant = true;
        } else {
            events.schedule(at + inj.spec.period, Event::Inject { peripheral });
        }
        item
    }

    /// Serves an I2C read for `peripheral`. Returns the response length.
    pub fn respond(&mut self, peripheral: PeripheralId, at: u64, len: usize, out: &mut [u8]) -> usize {
        let live = match self.index_of(peripheral) {
            Some(idx) => {
                let inj = &mut self.injectors[idx];
                let live = inj.spec.kind == InjectorKind::I2cResponder && inj.is_armed();
                if live {
                    inj.deliveries += 1;
                    inj.first_delivery.get_or_insert(at);
                }
                live
            }
            None => false,
        };
        respond_i2c(&mut self.cursor, live, len, out);
        len
    }

    pub fn total_deliveries(&self) -> u64 {
        self.injectors.iter().map(|i| i.deliveries).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Byte(u8),
    Frame(CanFrame),
}
