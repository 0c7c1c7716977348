//! K-bit Fibonacci LFSR used as the scrambling-index generator.
//!
//! Taps are the exponents of the feedback polynomial without the constant
//! term, so `x^6 + x^5 + 1` is `[6, 5]`. On each clock the register shifts
//! towards the most significant bit and the feedback bit, the XOR of state
//! bits `t - 1` for every tap `t`, enters at bit 0. The emitted value is the
//! whole register after the shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TAPS: [u32; 2] = [6, 5];

/// Primitive polynomials shipped for the register widths used with
/// 16..256-bit challenges.
pub fn primitive_taps(width: u32) -> Option<&'static [u32]> {
    match width {
        4 => Some(&[4, 3]),
        5 => Some(&[5, 3]),
        6 => Some(&DEFAULT_TAPS),
        7 => Some(&[7, 6]),
        8 => Some(&[8, 6, 5, 4]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr {
    width: u32,
    taps: Vec<u32>,
    tap_mask: u32,
    state: u32,
}

impl Lfsr {
    pub fn new(width: u32, taps: &[u32]) -> Result<Self> {
        if !(2..=16).contains(&width) {
            return Err(Error::Config(format!("LFSR width must be in 2..=16, got {width}")));
        }
        if !taps.contains(&width) {
            return Err(Error::Config(format!("taps {taps:?} do not describe a degree-{width} polynomial")));
        }
        if let Some(t) = taps.iter().find(|&&t| t == 0 || t > width) {
            return Err(Error::Config(format!("tap {t} outside 1..={width}")));
        }
        let tap_mask = taps.iter().fold(0u32, |m, &t| m | 1 << (t - 1));
        Ok(Lfsr { width, taps: taps.to_vec(), tap_mask, state: 0 })
    }

    /// Register of the given width using the shipped primitive polynomial.
    pub fn with_default_taps(width: u32) -> Result<Self> {
        let taps = primitive_taps(width)
            .ok_or_else(|| Error::Config(format!("no shipped primitive polynomial for width {width}")))?;
        Self::new(width, taps)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn taps(&self) -> &[u32] {
        &self.taps
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    fn mask(&self) -> u32 {
        (1u32 << self.width) - 1
    }

    /// Loads `s` into the register. Zero is accepted; the register then stays
    /// at zero forever.
    pub fn seed(&mut self, s: u32) -> Result<()> {
        if s > self.mask() {
            return Err(Error::SeedOutOfRange { seed: s, width: self.width });
        }
        self.state = s;
        Ok(())
    }

    pub fn seeded(mut self, s: u32) -> Result<Self> {
        self.seed(s)?;
        Ok(self)
    }

    /// Advances one step and returns the new state.
    pub fn clock(&mut self) -> u32 {
        let feedback = (self.state & self.tap_mask).count_ones() & 1;
        self.state = ((self.state << 1) | feedback) & self.mask();
        self.state
    }
}

impl Iterator for Lfsr {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        Some(self.clock())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visits_every_nonzero_state(width: u32) {
        let period = (1u32 << width) - 1;
        for seed in 1..=period {
            let mut l = Lfsr::with_default_taps(width).unwrap().seeded(seed).unwrap();
            let mut seen = vec![false; period as usize + 1];
            for step in 1..=period {
                let s = l.clock();
                assert_ne!(s, 0, "width {width}, seed {seed}: hit zero");
                assert!(!seen[s as usize], "width {width}, seed {seed}: repeated {s} at step {step}");
                seen[s as usize] = true;
                if step < period {
                    assert_ne!(s, seed, "width {width}: returned to seed early at step {step}");
                }
            }
            assert_eq!(l.state(), seed);
        }
    }

    #[test]
    fn shipped_polynomials_have_full_period() {
        for width in 4..=8 {
            visits_every_nonzero_state(width);
        }
    }

    #[test]
    fn zero_seed_is_absorbing() {
        let mut l = Lfsr::with_default_taps(6).unwrap().seeded(0).unwrap();
        assert!((0..200).all(|_| l.clock() == 0));
    }

    #[test]
    fn seeding() {
        let l = Lfsr::with_default_taps(6).unwrap();
        assert_eq!(l.clone().seeded(1).unwrap().state(), 1);
        assert_eq!(l.clone().seeded(63).unwrap().state(), 63);
        assert!(matches!(l.seeded(64), Err(Error::SeedOutOfRange { seed: 64, width: 6 })));
    }

    #[test]
    fn non_primitive_polynomial_has_short_cycle() {
        // x^6 + x^3 + 1 is irreducible but not primitive: its order is 9.
        let mut l = Lfsr::new(6, &[6, 3]).unwrap().seeded(1).unwrap();
        let first_return = (1..=63).find(|_| l.clock() == 1);
        assert_eq!(first_return, Some(9));
    }

    #[test]
    fn invalid_taps() {
        assert!(Lfsr::new(6, &[5, 3]).is_err());
        assert!(Lfsr::new(6, &[6, 7]).is_err());
        assert!(Lfsr::new(6, &[6, 0]).is_err());
        assert!(Lfsr::new(1, &[1]).is_err());
        assert!(Lfsr::with_default_taps(9).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let a: Vec<u32> = Lfsr::with_default_taps(6).unwrap().seeded(37).unwrap().take(100).collect();
        let b: Vec<u32> = Lfsr::with_default_taps(6).unwrap().seeded(37).unwrap().take(100).collect();
        assert_eq!(a, b);
    }
}
