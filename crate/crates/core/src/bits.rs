//! Fixed-width bit vectors used for challenges, responses and node identifiers.
//!
//! Index 0 is the first bit of the vector. For challenges that is the stage
//! furthest from the arbiter. When a vector is rendered as an integer or hex
//! string, index 0 is the most significant bit.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bits(Vec<bool>);

/// A challenge as sent by a verifier.
pub type Challenge = Bits;
/// A challenge after the bit reordering, as fed to the PUF.
pub type ScrambledChallenge = Bits;
/// The ID-carrying challenges used to derive the PRNG seed.
pub type MutatedChallenge = Bits;
/// A (possibly multi-bit) response.
pub type Response = Bits;

pub type ResponseBit = bool;

impl Bits {
    pub fn new(bits: Vec<bool>) -> Self {
        Bits(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Bits(vec![false; len])
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Bits((0..len).map(|_| rng.random::<bool>()).collect())
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        Bits((0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1).collect())
    }

    pub fn to_u64(&self) -> Option<u64> {
        if self.len() > 64 {
            return None;
        }
        Some(self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn hamming_distance(&self, other: &Bits) -> Result<usize> {
        self.ensure_len(other.len())?;
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }

    pub fn ensure_len(&self, expected: usize) -> Result<()> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected, actual: self.len() })
        }
    }

    /// Circular shift towards higher indices: bit `i` moves to `i + 1`, the
    /// last bit wraps around to index 0.
    pub fn rotate_right(&self, by: usize) -> Bits {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let by = by % v.len();
            v.rotate_right(by);
        }
        Bits(v)
    }

    /// Circular shift towards lower indices.
    pub fn rotate_left(&self, by: usize) -> Bits {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let by = by % v.len();
            v.rotate_left(by);
        }
        Bits(v)
    }

    pub fn concat(&self, tail: &Bits) -> Bits {
        let mut v = Vec::with_capacity(self.len() + tail.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&tail.0);
        Bits(v)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Bits {
        Bits(self.0[range].to_vec())
    }

    /// Hex rendering of the vector read as a big-endian integer, left-padded
    /// to a whole number of nibbles.
    pub fn to_hex(&self) -> String {
        let pad = (4 - self.len() % 4) % 4;
        let padded: Vec<bool> = std::iter::repeat_n(false, pad).chain(self.0.iter().copied()).collect();
        padded
            .chunks(4)
            .map(|nib| {
                let v = nib.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
                char::from_digit(v as u32, 16).expect("nibble")
            })
            .collect()
    }

    /// Inverse of [`Bits::to_hex`] for a known bit length.
    pub fn from_hex(s: &str, len: usize) -> Result<Bits> {
        let s = s.trim();
        if s.len() != len.div_ceil(4) {
            return Err(Error::Parse(format!("hex string {s:?} does not encode {len} bits")));
        }
        let mut bits = Vec::with_capacity(s.len() * 4);
        for ch in s.chars() {
            let v = ch.to_digit(16).ok_or_else(|| Error::Parse(format!("invalid hex digit {ch:?}")))?;
            bits.extend((0..4).rev().map(|i| (v >> i) & 1 == 1));
        }
        let pad = bits.len() - len;
        if bits[..pad].iter().any(|&b| b) {
            return Err(Error::Parse(format!("hex string {s:?} overflows {len} bits")));
        }
        Ok(Bits(bits.split_off(pad)))
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        write!(f, "Bits({s})")
    }
}

impl From<Vec<bool>> for Bits {
    fn from(v: Vec<bool>) -> Self {
        Bits(v)
    }
}

impl std::ops::Index<usize> for Bits {
    type Output = bool;
    fn index(&self, i: usize) -> &bool {
        &self.0[i]
    }
}

/// Identifier of a node, `S` bits wide (32 by default).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(Bits);

pub const DEFAULT_ID_BITS: usize = 32;

impl NodeId {
    pub fn new(value: u64, width: usize) -> Self {
        NodeId(Bits::from_u64(value, width))
    }

    pub fn from_bits(bits: Bits) -> Self {
        NodeId(bits)
    }

    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    /// The `count` least-significant bits (the tail of the vector).
    pub fn low_bits(&self, count: usize) -> Bits {
        let w = self.width();
        self.0.slice(w - count.min(w)..w)
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn from_hex(s: &str, width: usize) -> Result<Self> {
        Bits::from_hex(s, width).map(NodeId)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn u64_round_trip_is_msb_first() {
        let b = Bits::from_u64(0b1011, 4);
        assert_eq!(b.as_slice(), &[true, false, true, true]);
        assert_eq!(b.to_u64(), Some(11));
        assert_eq!(b.to_hex(), "b");
    }

    #[test]
    fn rotate_right_moves_last_bit_to_front() {
        let b = Bits::from_u64(0b0001, 4);
        assert_eq!(b.rotate_right(1), Bits::from_u64(0b1000, 4));
        assert_eq!(b.rotate_left(1), Bits::from_u64(0b0010, 4));
        assert_eq!(b.rotate_right(4), b);
    }

    #[test]
    fn single_bit_hex() {
        assert_eq!(Bits::from_u64(1, 1).to_hex(), "1");
        assert_eq!(Bits::from_hex("1", 1).unwrap(), Bits::from_u64(1, 1));
        assert!(Bits::from_hex("2", 1).is_err());
        assert!(Bits::from_hex("zz", 8).is_err());
        assert!(Bits::from_hex("123", 8).is_err());
    }

    #[test]
    fn node_id_low_bits_are_the_tail() {
        let id = NodeId::new(0xdead_beef, 32);
        assert_eq!(id.low_bits(16).to_u64(), Some(0xbeef));
        assert_eq!(id.to_string(), "deadbeef");
    }

    proptest! {
        #[test]
        fn hex_round_trips(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let b = Bits::new(bits);
            prop_assert_eq!(Bits::from_hex(&b.to_hex(), b.len()).unwrap(), b);
        }

        #[test]
        fn rotations_invert(bits in proptest::collection::vec(any::<bool>(), 1..100), by in 0usize..300) {
            let b = Bits::new(bits);
            prop_assert_eq!(b.rotate_right(by).rotate_left(by), b.clone());
            prop_assert_eq!(b.rotate_right(by).count_ones(), b.count_ones());
        }
    }
}
