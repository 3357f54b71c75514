//! Interrupt controller: a latched pending mask gated by an enable mask.

pub const IEN: u32 = 0x00;
pub const IPEND: u32 = 0x04;
pub const ICLR: u32 = 0x08;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Intc {
    pub ien: u8,
    pub ipend: u8,
    /// Number of raise calls per line, including ones that hit an already
    /// latched bit.
    pub raises: [u32; 8],
}

impl Intc {
    /// Latches `line`. A second raise before the bit is cleared is a no-op.
    pub fn raise(&mut self, line: u8) {
        let line = line & 7;
        self.ipend |= 1 << line;
        self.raises[line as usize] = self.raises[line as usize].saturating_add(1);
    }

    /// Lowest pending and enabled line.
    #[inline]
    pub fn next_dispatchable(&self) -> Option<u8> {
        let ready = self.ipend & self.ien;
        (ready != 0).then(|| ready.trailing_zeros() as u8)
    }

    #[inline]
    pub fn has_dispatchable(&self) -> bool {
        self.ipend & self.ien != 0
    }

    pub fn read(&self, offset: u32) -> u32 {
        match offset {
            IEN => self.ien as u32,
            IPEND => self.ipend as u32,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32) {
        match offset {
            IEN => self.ien = value as u8,
            ICLR => self.ipend &= !(value as u8),
            _ => {}
        }
    }
}
