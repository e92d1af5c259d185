//! Message generators: MT19937 for training and a three-component
//! Tausworthe generator for testing, each mapped to `1..=M` by rejection.

use serde::{Deserialize, Serialize};

/// Source of uniform 32-bit words.
pub trait WordSource {
    fn next_u32(&mut self) -> u32;
}

/// 32-bit Mersenne Twister.
#[derive(Clone)]
pub struct Mt19937 {
    state: [u32; 624],
    index: usize,
}

impl std::fmt::Debug for Mt19937 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mt19937").field("index", &self.index).finish()
    }
}

impl Mt19937 {
    const N: usize = 624;
    const M: usize = 397;

    pub fn new(seed: u32) -> Self {
        let mut state = [0u32; 624];
        state[0] = seed;
        for i in 1..Self::N {
            let prev = state[i - 1];
            state[i] = 1_812_433_253u32
                .wrapping_mul(prev ^ (prev >> 30))
                .wrapping_add(i as u32);
        }
        Self {
            state,
            index: Self::N,
        }
    }

    fn twist(&mut self) {
        const UPPER: u32 = 0x8000_0000;
        const LOWER: u32 = 0x7fff_ffff;
        for i in 0..Self::N {
            let y = (self.state[i] & UPPER) | (self.state[(i + 1) % Self::N] & LOWER);
            let mut next = self.state[(i + Self::M) % Self::N] ^ (y >> 1);
            if y & 1 != 0 {
                next ^= 0x9908_b0df;
            }
            self.state[i] = next;
        }
        self.index = 0;
    }
}

impl WordSource for Mt19937 {
    fn next_u32(&mut self) -> u32 {
        if self.index >= Self::N {
            self.twist();
        }
        let mut y = self.state[self.index];
        self.index += 1;
        y ^= y >> 11;
        y ^= (y << 7) & 0x9d2c_5680;
        y ^= (y << 15) & 0xefc6_0000;
        y ^ (y >> 18)
    }
}

/// Maximally equidistributed combined Tausworthe generator (taus88), seeded
/// like the GNU Scientific Library's `taus`.
#[derive(Debug, Clone)]
pub struct Tausworthe {
    s1: u32,
    s2: u32,
    s3: u32,
}

impl Tausworthe {
    pub fn new(seed: u32) -> Self {
        let lcg = |n: u32| n.wrapping_mul(69069);
        let seed = if seed == 0 { 1 } else { seed };
        let mut s1 = lcg(seed);
        if s1 < 2 {
            s1 += 2;
        }
        let mut s2 = lcg(s1);
        if s2 < 8 {
            s2 += 8;
        }
        let mut s3 = lcg(s2);
        if s3 < 16 {
            s3 += 16;
        }
        let mut t = Self { s1, s2, s3 };
        for _ in 0..6 {
            t.next_u32();
        }
        t
    }
}

impl WordSource for Tausworthe {
    fn next_u32(&mut self) -> u32 {
        fn step(s: u32, a: u32, b: u32, c: u32, d: u32) -> u32 {
            ((s & c) << d) ^ (((s << a) ^ s) >> b)
        }
        self.s1 = step(self.s1, 13, 19, 0xffff_fffe, 12);
        self.s2 = step(self.s2, 2, 25, 0xffff_fff8, 4);
        self.s3 = step(self.s3, 3, 11, 0xffff_fff0, 17);
        self.s1 ^ self.s2 ^ self.s3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RngKind {
    MersenneTwister,
    Tausworthe,
}

/// Uniform messages in `1..=alphabet`.
#[derive(Debug, Clone)]
pub struct MessageStream<S> {
    source: S,
    alphabet: u32,
    limit: u64,
}

impl<S: WordSource> MessageStream<S> {
    pub fn new(source: S, alphabet: usize) -> Self {
        assert!(alphabet >= 1 && alphabet <= u32::MAX as usize, "alphabet out of range");
        let alphabet = alphabet as u32;
        let span = 1u64 << 32;
        Self {
            source,
            alphabet,
            limit: span - span % u64::from(alphabet),
        }
    }

    /// Next message; words at or above the largest multiple of the
    /// alphabet are rejected.
    pub fn next_message(&mut self) -> usize {
        loop {
            let w = u64::from(self.source.next_u32());
            if w < self.limit {
                return (w % u64::from(self.alphabet)) as usize + 1;
            }
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.next_message()).collect()
    }
}

pub fn mersenne_stream(seed: u32, alphabet: usize) -> MessageStream<Mt19937> {
    MessageStream::new(Mt19937::new(seed), alphabet)
}

pub fn tausworthe_stream(seed: u32, alphabet: usize) -> MessageStream<Tausworthe> {
    MessageStream::new(Tausworthe::new(seed), alphabet)
}
