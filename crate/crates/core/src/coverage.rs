//! Edge coverage map with AFL-style hit-count buckets.

use std::fmt;

pub const MAP_SIZE: usize = 65_536;
const HASH_MUL: u32 = 0x9E37_79B1;

/// Index of the edge `prev_loc -> pc` and the next `prev_loc`.
#[inline]
pub fn record_edge(prev_loc: u32, pc: u32) -> (usize, u32) {
    let cur = (pc >> 2).wrapping_mul(HASH_MUL) >> 16;
    let index = ((prev_loc ^ cur) & 0xFFFF) as usize;
    (index, cur >> 1)
}

/// Bucket bit for a raw hit count.
#[inline]
pub const fn bucket(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 4,
        4..=7 => 8,
        8..=15 => 16,
        16..=31 => 32,
        32..=127 => 64,
        128..=255 => 128,
    }
}

static BUCKETS: [u8; 256] = {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = bucket(i as u8);
        i += 1;
    }
    t
};

/// 65,536 saturating hit counters.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    counts: Box<[u8; MAP_SIZE]>,
    prev_loc: u32,
}

impl Default for CoverageMap {
    fn default() -> Self {
        CoverageMap { counts: Box::new([0; MAP_SIZE]), prev_loc: 0 }
    }
}

impl fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverageMap")
            .field("edges", &self.edge_count())
            .field("prev_loc", &self.prev_loc)
            .finish()
    }
}

impl CoverageMap {
    pub fn clear(&mut self) {
        self.counts.fill(0);
        self.prev_loc = 0;
    }

    #[inline]
    pub fn hit(&mut self, pc: u32) {
        let (index, next) = record_edge(self.prev_loc, pc);
        let c = &mut self.counts[index];
        *c = c.saturating_add(1);
        self.prev_loc = next;
    }

    pub fn prev_loc(&self) -> u32 {
        self.prev_loc
    }

    pub fn as_bytes(&self) -> &[u8; MAP_SIZE] {
        &self.counts
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let counts: Box<[u8; MAP_SIZE]> = bytes.to_vec().into_boxed_slice().try_into().ok()?;
        Some(CoverageMap { counts, prev_loc: 0 })
    }

    pub fn get(&self, index: usize) -> u8 {
        self.counts[index]
    }

    /// Number of nonzero counters.
    pub fn edge_count(&self) -> usize {
        self.counts.iter().filter(|&&c| c != 0).count()
    }

    /// Bucket bits of every counter, in place into `out`.
    pub fn classify_into(&self, out: &mut [u8; MAP_SIZE]) {
        for (o, &c) in out.iter_mut().zip(self.counts.iter()) {
            *o = BUCKETS[c as usize];
        }
    }
}

/// Global set of (edge, bucket) bits seen so far.
#[derive(Clone, PartialEq, Eq)]
pub struct SeenBits {
    bits: Box<[u8; MAP_SIZE]>,
    edges: usize,
}

impl Default for SeenBits {
    fn default() -> Self {
        SeenBits { bits: Box::new([0; MAP_SIZE]), edges: 0 }
    }
}

impl fmt::Debug for SeenBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeenBits").field("edges", &self.edges).finish()
    }
}

impl SeenBits {
    /// Whether `map` has any (edge, bucket) bit not yet seen.
    pub fn has_new(&self, map: &CoverageMap) -> bool {
        let counts = map.as_bytes();
        for (chunk_c, chunk_s) in counts.chunks_exact(8).zip(self.bits.chunks_exact(8)) {
            if u64::from_ne_bytes(chunk_c.try_into().unwrap()) == 0 {
                continue;
            }
            for (c, s) in chunk_c.iter().zip(chunk_s) {
                if BUCKETS[*c as usize] & !s != 0 {
                    return true;
                }
            }
        }
        false
    }

    /// ORs the map's bucket bits in. Returns true if anything was new.
    pub fn merge_map(&mut self, map: &CoverageMap) -> bool {
        let mut new = false;
        let counts = map.as_bytes();
        for (chunk_c, chunk_s) in counts.chunks_exact(8).zip(self.bits.chunks_exact_mut(8)) {
            if u64::from_ne_bytes(chunk_c.try_into().unwrap()) == 0 {
                continue;
            }
            for (c, s) in chunk_c.iter().zip(chunk_s.iter_mut()) {
                let b = BUCKETS[*c as usize];
                if b & !*s != 0 {
                    if *s == 0 {
                        self.edges += 1;
                    }
                    *s |= b;
                    new = true;
                }
            }
        }
        new
    }

    /// Bitwise OR with another seen set. Associative and commutative.
    pub fn merge(&mut self, other: &SeenBits) {
        for (s, o) in self.bits.iter_mut().zip(other.bits.iter()) {
            *s |= *o;
        }
        self.edges = self.bits.iter().filter(|&&b| b != 0).count();
    }

    /// Popcount of edges seen at any bucket.
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn as_bytes(&self) -> &[u8; MAP_SIZE] {
        &self.bits
    }
}
