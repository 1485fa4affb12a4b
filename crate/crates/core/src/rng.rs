//! Deterministic xorshift64* generator shared by the random replacement
//! policy and the synthetic trace generators. Fixing the generator (rather
//! than saying "random") keeps runs reproducible across platforms.

/// xorshift64* with the multiplier 0x2545F4914F6CDD1D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    x: u64,
}

impl XorShift64Star {
    /// Seeds the generator. The state must never be zero, so a zero seed is
    /// replaced by a fixed nonzero constant.
    pub fn new(seed: u64) -> Self {
        XorShift64Star {
            x: if seed == 0 { 0x9e37_79b9_7f4a_7c15 } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.x ^= self.x >> 12;
        self.x ^= self.x << 25;
        self.x ^= self.x >> 27;
        self.x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform-ish draw in `0..bound` from the upper 32 bits of the output.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        (self.next_u64() >> 32) % bound
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
