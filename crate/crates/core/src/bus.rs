//! Address decoding and the transaction observation hook.

use std::fmt;

pub const ROM_BASE: u32 = 0x0000_0000;
pub const ROM_SIZE: u32 = 64 * 1024;
pub const RAM_BASE: u32 = 0x2000_0000;
pub const DEFAULT_RAM_SIZE: u32 = 64 * 1024;
pub const MMIO_BASE: u32 = 0x4000_0000;
pub const MMIO_END: u32 = 0x4000_4FFF;
/// Size of each peripheral's register window. Addresses between windows
/// are unmapped.
pub const PERIPHERAL_WINDOW: u32 = 0x40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PeripheralId {
    Intc,
    Uart0,
    Uart1,
    Timer0,
    I2c0,
    Can0,
}

impl PeripheralId {
    pub const ALL: [PeripheralId; 6] = [
        PeripheralId::Intc,
        PeripheralId::Uart0,
        PeripheralId::Uart1,
        PeripheralId::Timer0,
        PeripheralId::I2c0,
        PeripheralId::Can0,
    ];

    pub fn base(self) -> u32 {
        match self {
            PeripheralId::Intc => 0x4000_0000,
            PeripheralId::Uart0 => 0x4000_1000,
            PeripheralId::Uart1 => 0x4000_1800,
            PeripheralId::Timer0 => 0x4000_2000,
            PeripheralId::I2c0 => 0x4000_3000,
            PeripheralId::Can0 => 0x4000_4000,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PeripheralId::Intc => "intc",
            PeripheralId::Uart0 => "uart0",
            PeripheralId::Uart1 => "uart1",
            PeripheralId::Timer0 => "timer0",
            PeripheralId::I2c0 => "i2c0",
            PeripheralId::Can0 => "can0",
        }
    }

    pub fn from_name(name: &str) -> Option<PeripheralId> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Interrupt line raised by this instance, if any.
    pub fn irq_line(self) -> Option<u8> {
        match self {
            PeripheralId::Intc => None,
            PeripheralId::Uart0 => Some(1),
            PeripheralId::Timer0 => Some(2),
            PeripheralId::I2c0 => Some(3),
            PeripheralId::Can0 => Some(4),
            PeripheralId::Uart1 => Some(5),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PeripheralId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of enabled peripheral instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeripheralSet(u8);

impl PeripheralSet {
    pub fn all() -> Self {
        PeripheralId::ALL.into_iter().collect()
    }

    pub fn insert(&mut self, id: PeripheralId) {
        self.0 |= 1 << id.index();
    }

    pub fn contains(&self, id: PeripheralId) -> bool {
        self.0 & (1 << id.index()) != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = PeripheralId> + '_ {
        PeripheralId::ALL.into_iter().filter(|p| self.contains(*p))
    }
}

impl FromIterator<PeripheralId> for PeripheralSet {
    fn from_iter<T: IntoIterator<Item = PeripheralId>>(iter: T) -> Self {
        let mut set = PeripheralSet::default();
        for id in iter {
            set.insert(id);
        }
        set
    }
}

/// Where a guest address lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Rom(u32),
    Ram(u32),
    Mmio(PeripheralId, u32),
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryMap {
    pub ram_size: u32,
    pub peripherals: PeripheralSet,
}

impl Default for MemoryMap {
    fn default() -> Self {
        MemoryMap {
            ram_size: DEFAULT_RAM_SIZE,
            peripherals: PeripheralSet::all(),
        }
    }
}

impl MemoryMap {
    /// Resolves the first byte of an access. Width-4 accesses are aligned,
    /// and no region boundary is 2-aligned, so one lookup covers the whole
    /// access.
    pub fn decode(&self, addr: u32) -> Target {
        if addr < ROM_BASE + ROM_SIZE {
            return Target::Rom(addr - ROM_BASE);
        }
        if addr >= RAM_BASE && addr - RAM_BASE < self.ram_size {
            return Target::Ram(addr - RAM_BASE);
        }
        if (MMIO_BASE..=MMIO_END).contains(&addr) {
            for id in self.peripherals.iter() {
                let base = id.base();
                if addr >= base && addr - base < PERIPHERAL_WINDOW {
                    return Target::Mmio(id, addr - base);
                }
            }
        }
        Target::Unmapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Read,
    Write,
}

/// One guest memory access. For reads, `value` is 0 when observers see the
/// transaction; the routed result is returned separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusTransaction {
    pub address: u32,
    pub width: u8,
    pub direction: Direction,
    pub value: u32,
    pub cycle: u64,
}

impl BusTransaction {
    pub fn read(address: u32, width: u8, cycle: u64) -> Self {
        BusTransaction { address, width, direction: Direction::Read, value: 0, cycle }
    }

    pub fn write(address: u32, width: u8, value: u32, cycle: u64) -> Self {
        BusTransaction { address, width, direction: Direction::Write, value, cycle }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObserverId(pub u32);

pub type ObserverFn = Box<dyn FnMut(&BusTransaction) + Send>;

/// Read-only MMIO observers, invoked in registration order.
#[derive(Default)]
pub struct Observers {
    next_id: u32,
    list: Vec<(ObserverId, ObserverFn)>,
}

impl Observers {
    pub fn register(&mut self, f: ObserverFn) -> ObserverId {
        let id = ObserverId(self.next_id);
        self.next_id += 1;
        self.list.push((id, f));
        id
    }

    pub fn unregister(&mut self, id: ObserverId) -> bool {
        let before = self.list.len();
        self.list.retain(|(i, _)| *i != id);
        self.list.len() != before
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    #[inline]
    pub fn notify(&mut self, txn: &BusTransaction) {
        for (_, f) in self.list.iter_mut() {
            f(txn);
        }
    }
}

impl fmt::Debug for Observers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observers").field("count", &self.list.len()).finish()
    }
}
