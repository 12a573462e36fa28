//! Deterministic pseudorandom generation.
//!
//! Every randomized component of this crate draws from [`SeededRng`], a
//! xoshiro256++ generator whose 256-bit state is expanded from a 64-bit seed
//! by SplitMix64. Both algorithms are pinned here, constants included, so
//! that any trace produced by this crate can be reproduced bit-for-bit from
//! `(seed, call sequence)` alone:
//!
//! - SplitMix64 state increment `0x9E3779B97F4A7C15`, mixing multipliers
//!   `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`, shifts `30/27/31`.
//! - xoshiro256++ output `rotl(s0 + s3, 23) + s0`, linear engine with shift
//!   `17` and rotation `45`.
//!
//! Bounded draws use rejection sampling over the full 64-bit range, so
//! [`SeededRng::uniform_index`] is exactly uniform on `{1, ..., k}` with no
//! modulo bias.

use thiserror::Error;

/// Errors from bounded draws.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RngError {
    /// `uniform_index` was asked to draw from `{1, ..., 0}`.
    #[error("cannot draw a uniform index from an empty range (k = 0)")]
    EmptyRange,
}

const SPLITMIX_INCREMENT: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLITMIX_MUL_A: u64 = 0xBF58_476D_1CE4_E5B9;
const SPLITMIX_MUL_B: u64 = 0x94D0_49BB_1331_11EB;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_INCREMENT);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(SPLITMIX_MUL_A);
    z = (z ^ (z >> 27)).wrapping_mul(SPLITMIX_MUL_B);
    z ^ (z >> 31)
}

/// Seedable xoshiro256++ generator.
///
/// A generator instance is single-owner: clone it or construct a fresh one
/// per task instead of sharing. Construction from the same seed always
/// yields the identical output stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    state: [u64; 4],
    seed: u64,
}

impl SeededRng {
    /// Expands `seed` into the 256-bit state via four SplitMix64 outputs.
    ///
    /// SplitMix64 is a bijection of its internal counter, so at most one of
    /// the four expansion outputs can be zero and the state is never
    /// all-zero, which xoshiro256++ requires.
    pub fn new(seed: u64) -> Self {
        let mut expander = seed;
        let state = [
            splitmix64(&mut expander),
            splitmix64(&mut expander),
            splitmix64(&mut expander),
            splitmix64(&mut expander),
        ];
        debug_assert!(state.iter().any(|&w| w != 0));
        Self { state, seed }
    }

    /// The seed this generator was constructed from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Next raw 64-bit output (xoshiro256++).
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);

        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);

        result
    }

    /// Uniform draw from `{1, ..., k}`, exactly unbiased.
    ///
    /// Raw 64-bit words are rejected while they fall in the short tail of
    /// the range that does not divide evenly by `k`; the accepted residue is
    /// therefore exactly uniform. Every call advances the state by at least
    /// one raw draw.
    pub fn uniform_index(&mut self, k: usize) -> Result<usize, RngError> {
        if k == 0 {
            return Err(RngError::EmptyRange);
        }
        let k64 = k as u64;
        // 2^64 mod k, i.e. the number of raw values that must be rejected.
        let excess = (u64::MAX % k64 + 1) % k64;
        let limit = u64::MAX - excess;
        loop {
            let x = self.next_u64();
            if x <= limit {
                return Ok((x % k64) as usize + 1);
            }
        }
    }

    /// Uniform variate in `[0, 1)` with the full 53 bits of f64 precision.
    pub fn uniform_real(&mut self) -> f64 {
        // Top 53 bits scaled by 2^-53.
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }
}
