//! Input mutation: AFL-style deterministic stages and havoc.
//!
//! Bit positions count from the most significant bit of byte 0, so flipping
//! bit 0 of `[0x01]` gives `[0x81]`. Multi-byte arithmetic and interesting
//! values are little-endian.

use rand::Rng;

/// Substitution values for the interesting-value stage. Each is tried at
/// every width it fits in.
pub const INTERESTING: [u32; 11] =
    [0, 1, 0x7F, 0x80, 0xFF, 0x7FFF, 0x8000, 0xFFFF, 0x7FFF_FFFF, 0x8000_0000, 0xFFFF_FFFF];
pub const ARITH_MAX: u32 = 35;
/// Entries larger than this skip the deterministic stages.
pub const DETERMINISTIC_LIMIT: usize = 4096;
/// Havoc never grows an input past this.
pub const MAX_INPUT_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    BitFlip(u8),
    ByteFlip(u8),
    Arith(u8),
    Interesting(u8),
}

pub const STAGES: [Stage; 12] = [
    Stage::BitFlip(1),
    Stage::BitFlip(2),
    Stage::BitFlip(4),
    Stage::ByteFlip(1),
    Stage::ByteFlip(2),
    Stage::ByteFlip(4),
    Stage::Arith(1),
    Stage::Arith(2),
    Stage::Arith(4),
    Stage::Interesting(1),
    Stage::Interesting(2),
    Stage::Interesting(4),
];

fn width_mask(width: u8) -> u32 {
    if width >= 4 {
        u32::MAX
    } else {
        (1u32 << (8 * width)) - 1
    }
}

fn read_le(buf: &[u8], pos: usize, width: u8) -> u32 {
    buf[pos..pos + width as usize].iter().rev().fold(0, |acc, &b| (acc << 8) | b as u32)
}

fn write_le(buf: &mut [u8], pos: usize, width: u8, value: u32) {
    for (i, b) in buf[pos..pos + width as usize].iter_mut().enumerate() {
        *b = (value >> (8 * i)) as u8;
    }
}

/// Flips `bits` consecutive bits starting at MSB-first bit index `bit`.
pub fn flip_bits(buf: &mut [u8], bit: usize, bits: usize) {
    for i in bit..bit + bits {
        buf[i / 8] ^= 0x80 >> (i % 8);
    }
}

impl Stage {
    /// Number of candidates this stage produces over `len` bytes.
    fn positions(self, len: usize) -> usize {
        match self {
            Stage::BitFlip(w) => (len * 8 + 1).saturating_sub(w as usize),
            Stage::ByteFlip(w) | Stage::Arith(w) | Stage::Interesting(w) => (len + 1).saturating_sub(w as usize),
        }
    }

    fn variants(self) -> usize {
        match self {
            Stage::BitFlip(_) | Stage::ByteFlip(_) => 1,
            Stage::Arith(_) => 2 * ARITH_MAX as usize,
            Stage::Interesting(_) => INTERESTING.len(),
        }
    }

    /// Applies variant `k` at position `pos`. Returns false when the
    /// variant does not apply (value too wide or a no-op).
    fn apply(self, buf: &mut [u8], pos: usize, k: usize) -> bool {
        match self {
            Stage::BitFlip(w) => flip_bits(buf, pos, w as usize),
            Stage::ByteFlip(w) => buf[pos..pos + w as usize].iter_mut().for_each(|b| *b ^= 0xFF),
            Stage::Arith(w) => {
                let delta = (k as u32 / 2) + 1;
                let old = read_le(buf, pos, w);
                let new = if k.is_multiple_of(2) { old.wrapping_add(delta) } else { old.wrapping_sub(delta) };
                write_le(buf, pos, w, new & width_mask(w));
            }
            Stage::Interesting(w) => {
                let v = INTERESTING[k];
                if v > width_mask(w) || read_le(buf, pos, w) == v {
                    return false;
                }
                write_le(buf, pos, w, v);
            }
        }
        true
    }
}

/// Walks every deterministic stage over the first `limit` bytes of an
/// input, in order.
#[derive(Debug, Clone)]
pub struct Deterministic {
    base: Vec<u8>,
    limit: usize,
    stage: usize,
    pos: usize,
    variant: usize,
}

impl Deterministic {
    /// `limit` is clamped to the input length.
    pub fn new(base: Vec<u8>, limit: usize) -> Deterministic {
        let limit = limit.min(base.len());
        Deterministic { base, limit, stage: 0, pos: 0, variant: 0 }
    }

    /// Writes the next candidate into `out`. Returns false when done.
    pub fn next_into(&mut self, out: &mut Vec<u8>) -> bool {
        while let Some(&stage) = STAGES.get(self.stage) {
            if self.pos >= stage.positions(self.limit) {
                self.stage += 1;
                self.pos = 0;
                self.variant = 0;
                continue;
            }
            let (pos, k) = (self.pos, self.variant);
            self.variant += 1;
            if self.variant >= stage.variants() {
                self.variant = 0;
                self.pos += 1;
            }
            out.clear();
            out.extend_from_slice(&self.base);
            if stage.apply(out, pos, k) {
                return true;
            }
        }
        false
    }

    pub fn current_stage(&self) -> Option<Stage> {
        STAGES.get(self.stage).copied()
    }
}

impl Iterator for Deterministic {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let mut out = Vec::new();
        self.next_into(&mut out).then_some(out)
    }
}

/// First `cut` bytes of `a`, rest of `b` from the same offset.
pub fn splice(a: &[u8], b: &[u8], cut: usize) -> Vec<u8> {
    let mut out = a[..cut.min(a.len())].to_vec();
    out.extend_from_slice(b.get(cut..).unwrap_or(&[]));
    out
}

/// Havoc: a stack of 1-8 random edits applied to a copy of `base`. `other`
/// supplies a second corpus entry for splicing.
pub fn havoc<R: Rng>(rng: &mut R, base: &[u8], other: Option<&[u8]>, out: &mut Vec<u8>) {
    out.clear();
    out.extend_from_slice(base);
    let ops = 1 << rng.random_range(0..4u32);
    let ops = rng.random_range(1..=ops.max(1)).min(8);
    for _ in 0..ops {
        havoc_op(rng, other, out);
    }
    out.truncate(MAX_INPUT_LEN);
}

fn havoc_op<R: Rng>(rng: &mut R, other: Option<&[u8]>, buf: &mut Vec<u8>) {
    if buf.is_empty() {
        let n = rng.random_range(1..=8);
        buf.extend((0..n).map(|_| rng.random::<u8>()));
        return;
    }
    let len = buf.len();
    match rng.random_range(0..8u32) {
        // Flip one bit.
        0 => flip_bits(buf, rng.random_range(0..len * 8), 1),
        // Set an interesting value.
        1 => {
            let w = [1u8, 2, 4][rng.random_range(0..3)];
            if len >= w as usize {
                let fits: Vec<u32> = INTERESTING.iter().copied().filter(|&v| v <= width_mask(w)).collect();
                let v = fits[rng.random_range(0..fits.len())];
                write_le(buf, rng.random_range(0..=len - w as usize), w, v);
            }
        }
        // Set a random byte.
        2 => buf[rng.random_range(0..len)] = rng.random(),
        // Add or subtract.
        3 => {
            let w = [1u8, 2, 4][rng.random_range(0..3)];
            if len >= w as usize {
                let pos = rng.random_range(0..=len - w as usize);
                let delta = rng.random_range(1..=ARITH_MAX);
                let old = read_le(buf, pos, w);
                let new = if rng.random() { old.wrapping_add(delta) } else { old.wrapping_sub(delta) };
                write_le(buf, pos, w, new & width_mask(w));
            }
        }
        // Remove a block.
        4 => {
            if len > 1 {
                let n = rng.random_range(1..len.min(32) + 1).min(len - 1);
                let at = rng.random_range(0..=len - n);
                buf.drain(at..at + n);
            }
        }
        // Duplicate a block.
        5 => {
            let n = rng.random_range(1..=len.min(32));
            let from = rng.random_range(0..=len - n);
            let to = rng.random_range(0..=len);
            let block: Vec<u8> = buf[from..from + n].to_vec();
            buf.splice(to..to, block);
        }
        // Insert random bytes.
        6 => {
            let n = rng.random_range(1..=16);
            let to = rng.random_range(0..=len);
            let block: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            buf.splice(to..to, block);
        }
        // Splice with another entry.
        _ => {
            if let Some(other) = other.filter(|o| !o.is_empty()) {
                let cut = rng.random_range(0..=len.min(other.len()));
                *buf = splice(buf, other, cut);
                if buf.is_empty() {
                    buf.push(rng.random());
                }
            } else {
                buf[rng.random_range(0..len)] = rng.random();
            }
        }
    }
}
