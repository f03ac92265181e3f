use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

pub const MAX_BITS: usize = 128;

/// A total assignment to an ordered list of Boolean variables.
///
/// Position 0 is the first declared variable and is the most significant bit
/// of [`Bits::value`], so the bitstring form reads as a binary numeral and an
/// array declared `x[8]` maps to its numeric value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    len: u8,
    raw: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitsError {
    #[error("bitstring `{0}` contains characters other than 0 and 1")]
    BadChar(String),
    #[error("bitstring has {found} bits, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("more than {MAX_BITS} variables")]
    TooWide,
}

impl Bits {
    pub fn empty() -> Self {
        Bits { len: 0, raw: 0 }
    }

    /// Panics if `len > 128` or `value` does not fit in `len` bits.
    pub fn from_value(len: usize, value: u128) -> Self {
        assert!(len <= MAX_BITS);
        assert!(
            len == MAX_BITS || value >> len == 0,
            "value wider than {len} bits"
        );
        Bits {
            len: len as u8,
            raw: value,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        assert!(bits.len() <= MAX_BITS);
        let raw = bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128);
        Bits {
            len: bits.len() as u8,
            raw,
        }
    }

    pub fn parse_with_len(text: &str, len: usize) -> Result<Self, BitsError> {
        let b: Bits = text.parse()?;
        if b.len() != len {
            return Err(BitsError::Length {
                expected: len,
                found: b.len(),
            });
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self) -> u128 {
        self.raw
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len());
        (self.raw >> (self.len() - 1 - i)) & 1 == 1
    }

    pub fn with(mut self, i: usize, v: bool) -> Self {
        assert!(i < self.len());
        let mask = 1u128 << (self.len() - 1 - i);
        if v {
            self.raw |= mask;
        } else {
            self.raw &= !mask;
        }
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// All `2^len` assignments in increasing numeric order.
    pub fn all(len: usize) -> impl Iterator<Item = Bits> {
        assert!(len < 64, "refusing to enumerate 2^{len} assignments");
        (0..(1u128 << len)).map(move |v| Bits::from_value(len, v))
    }
}

impl FromStr for Bits {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() > MAX_BITS {
            return Err(BitsError::TooWide);
        }
        let mut bools = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bools.push(false),
                '1' => bools.push(true),
                _ => return Err(BitsError::BadChar(s.to_string())),
            }
        }
        Ok(Bits::from_bools(&bools))
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_char_is_most_significant() {
        let b: Bits = "00001000".parse().unwrap();
        assert_eq!(b.value(), 8);
        assert!(b.get(4));
        assert_eq!(b.to_string(), "00001000");
        assert_eq!(Bits::from_value(8, 12).to_string(), "00001100");
    }

    #[test]
    fn rejects_bad_input() {
        assert!("01a".parse::<Bits>().is_err());
        assert_eq!(
            Bits::parse_with_len("01", 3),
            Err(BitsError::Length {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn with_sets_and_clears() {
        let b = Bits::from_value(3, 0).with(0, true).with(2, true);
        assert_eq!(b.to_string(), "101");
        assert_eq!(b.with(0, false).to_string(), "001");
    }
}
