// SPDX-License-Identifier: Apache-2.0

//! Fixed-length bitstrings with an MSB-first byte packing.
//!
//! Every bitstring that crosses a hash, a file or the wire is packed with bit 0
//! in the most significant position of byte 0. Unused low bits of the final
//! byte are zero.

use std::fmt;
use std::ops::BitXor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("hex string of {hex_len} chars cannot hold exactly {bits} bits")]
    LengthMismatch { hex_len: usize, bits: usize },
    #[error("nonzero padding bits after bit {0}")]
    DirtyPadding(usize),
    #[error("invalid bit character {0:?}")]
    BadChar(char),
}

/// An ordered sequence of bits.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new() -> Self {
        Bits(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Bits(vec![false; len])
    }

    pub fn with_capacity(cap: usize) -> Self {
        Bits(Vec::with_capacity(cap))
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.0.get(index).copied()
    }

    pub fn set(&mut self, index: usize, bit: bool) {
        self.0[index] = bit;
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] = !self.0[index];
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Copy of bits `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Bits {
        Bits(self.0[start..end].to_vec())
    }

    pub fn extend_from(&mut self, other: &Bits) {
        self.0.extend_from_slice(&other.0);
    }

    /// First `len` bits, zero-extended if `self` is shorter.
    pub fn resized(&self, len: usize) -> Bits {
        let mut v = self.0.clone();
        v.resize(len, false);
        Bits(v)
    }

    /// Packs MSB-first into `ceil(len / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &b) in self.0.iter().enumerate() {
            if b {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    /// Takes the first `len` bits of `bytes`, MSB-first.
    ///
    /// Panics if `bytes` holds fewer than `len` bits.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Bits {
        assert!(bytes.len() * 8 >= len, "not enough bytes for {len} bits");
        Bits((0..len).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    /// Inverse of [`Bits::to_hex`]; rejects set padding bits.
    pub fn from_hex(s: &str, len: usize) -> Result<Bits, BitsError> {
        let bytes = hex::decode(s.trim()).map_err(|e| BitsError::Hex(e.to_string()))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(BitsError::LengthMismatch {
                hex_len: s.trim().len(),
                bits: len,
            });
        }
        let full = Bits::from_bytes(&bytes, bytes.len() * 8);
        if full.0[len..].iter().any(|&b| b) {
            return Err(BitsError::DirtyPadding(len));
        }
        Ok(full.slice(0, len))
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse_binary(s: &str) -> Result<Bits, BitsError> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BitsError::BadChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Bits)
    }

    pub fn to_binary_string(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl From<Vec<bool>> for Bits {
    fn from(v: Vec<bool>) -> Self {
        Bits(v)
    }
}

impl FromIterator<bool> for Bits {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Bits(iter.into_iter().collect())
    }
}

impl BitXor for &Bits {
    type Output = Bits;

    /// Positionwise XOR; panics on unequal lengths.
    fn bitxor(self, rhs: &Bits) -> Bits {
        assert_eq!(self.len(), rhs.len(), "xor of unequal-length bitstrings");
        self.0.iter().zip(&rhs.0).map(|(a, b)| a ^ b).collect()
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits[{}]({})", self.len(), self.to_binary_string())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_binary_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packs_msb_first_with_zero_tail() {
        let b = Bits::parse_binary("1000000011").unwrap();
        assert_eq!(b.to_bytes(), vec![0x80, 0xC0]);
        assert_eq!(b.to_hex(), "80c0");
    }

    #[test]
    fn hex_rejects_dirty_padding() {
        assert_eq!(
            Bits::from_hex("80c1", 10),
            Err(BitsError::DirtyPadding(10))
        );
        assert!(matches!(
            Bits::from_hex("80", 10),
            Err(BitsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hex_round_trip_190() {
        let b: Bits = (0..190).map(|i| i % 3 == 0).collect();
        let hex = b.to_hex();
        assert_eq!(hex.len(), 48);
        assert_eq!(Bits::from_hex(&hex, 190).unwrap(), b);
    }
}
