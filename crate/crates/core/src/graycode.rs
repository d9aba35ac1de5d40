//! Binary-reflected Gray codes and the repeated-bit expansion used by the
//! space-filling curve.
//!
//! Bit strings are stored most-significant bit first, so `gray(1, 3)` is
//! `001` and the `k = 3` enumeration reads `000 001 011 010 110 111 101 100`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest supported code. Indices are held in a `u32`.
pub const MAX_WIDTH: u32 = 30;

/// A non-empty string over `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::domain("bit string must be non-empty"));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::domain(format!("bit value {b} is not 0 or 1")));
        }
        Ok(BitString(bits))
    }

    /// Parse from a literal such as `"1011"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::domain(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.0.get(i).copied()
    }

    /// Number of positions in which `self` and `other` differ.
    pub fn hamming(&self, other: &BitString) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::Shape { expected: self.len(), actual: other.len() });
        }
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    /// Read the bits as an unsigned integer, most significant first.
    pub fn as_u64(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }
}

impl TryFrom<Vec<u8>> for BitString {
    type Error = Error;

    fn try_from(bits: Vec<u8>) -> Result<Self> {
        BitString::new(bits)
    }
}

impl From<BitString> for Vec<u8> {
    fn from(b: BitString) -> Self {
        b.0
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Position in a Gray code of a given width. Arithmetic wraps modulo `2^width`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeIndex {
    value: u32,
    width: u32,
}

impl CodeIndex {
    pub fn new(value: u32, width: u32) -> Result<Self> {
        check_width(width)?;
        if u64::from(value) >= 1u64 << width {
            return Err(Error::domain(format!("index {value} out of range for width {width}")));
        }
        Ok(CodeIndex { value, width })
    }

    /// Reduce an arbitrary signed index onto the circle `[0, 2^width)`.
    pub fn wrapping(value: i64, width: u32) -> Result<Self> {
        check_width(width)?;
        let modulus = 1i64 << width;
        Ok(CodeIndex { value: value.rem_euclid(modulus) as u32, width })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    /// The index `delta` steps along the cycle.
    pub fn offset(self, delta: i64) -> Self {
        let modulus = 1i64 << self.width;
        CodeIndex {
            value: (i64::from(self.value) + delta).rem_euclid(modulus) as u32,
            width: self.width,
        }
    }
}

fn check_width(width: u32) -> Result<()> {
    if width == 0 || width > MAX_WIDTH {
        return Err(Error::domain(format!("code width {width} outside [1, {MAX_WIDTH}]")));
    }
    Ok(())
}

/// Gray code word of index `i` as a raw integer.
#[inline]
pub fn gray_u32(i: u32) -> u32 {
    i ^ (i >> 1)
}

/// Inverse of [`gray_u32`].
#[inline]
pub fn gray_inverse_u32(mut g: u32) -> u32 {
    let mut shift = 1;
    while shift < 32 {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

/// Binary-reflected Gray code word `i` of width `k`.
pub fn gray(i: u32, k: u32) -> Result<BitString> {
    let index = CodeIndex::new(i, k)?;
    Ok(gray_at(index))
}

/// Same as [`gray`] for an already validated index.
pub fn gray_at(index: CodeIndex) -> BitString {
    let g = gray_u32(index.value);
    let k = index.width;
    BitString((0..k).rev().map(|bit| ((g >> bit) & 1) as u8).collect())
}

pub fn gray_inverse(b: &BitString) -> Result<CodeIndex> {
    let k = u32::try_from(b.len()).map_err(|_| Error::domain("bit string too long"))?;
    check_width(k)?;
    CodeIndex::new(gray_inverse_u32(b.as_u64() as u32), k)
}

/// Repeat each bit of `b` `repeat` times, then zero-pad to `ambient` entries.
pub fn expand_codeword(b: &BitString, repeat: usize, ambient: usize) -> Result<BitString> {
    if repeat == 0 {
        return Err(Error::domain("repeat count must be at least 1"));
    }
    let needed = b.len() * repeat;
    if ambient < needed {
        return Err(Error::domain(format!(
            "ambient dimension {ambient} smaller than {needed} expanded bits"
        )));
    }
    let mut out = Vec::with_capacity(ambient);
    for &bit in b.bits() {
        out.extend(std::iter::repeat_n(bit, repeat));
    }
    out.resize(ambient, 0);
    Ok(BitString(out))
}
