use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::bits::{Bits, BitsError};
use crate::prob::{is_probability, parse_rational, pow2_neg, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PriorError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Bits { line: usize, source: BitsError },
    #[error("assignment {0} listed twice")]
    Duplicate(Bits),
    #[error("weight of {0} is not in [0, 1]")]
    OutOfRange(Bits),
    #[error("weights sum to {0}, not 1")]
    NotNormalized(String),
    #[error("assignment {bits} has {found} bits, expected {expected}")]
    Width {
        bits: Bits,
        expected: usize,
        found: usize,
    },
}

/// Prior distribution over assignments to the secret inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prior {
    width: usize,
    table: Option<BTreeMap<Bits, Rational>>,
}

impl Prior {
    /// Uniform over all `2^width` assignments.
    pub fn uniform(width: usize) -> Self {
        Prior { width, table: None }
    }

    /// Explicit weights; zero entries are dropped and unlisted assignments
    /// get weight 0. Weights must sum to exactly 1.
    pub fn from_weights(
        width: usize,
        weights: impl IntoIterator<Item = (Bits, Rational)>,
    ) -> Result<Self, PriorError> {
        let mut table = BTreeMap::new();
        let mut total = Rational::zero();
        for (bits, w) in weights {
            if bits.len() != width {
                return Err(PriorError::Width {
                    bits,
                    expected: width,
                    found: bits.len(),
                });
            }
            if !is_probability(&w) {
                return Err(PriorError::OutOfRange(bits));
            }
            if table.contains_key(&bits) {
                return Err(PriorError::Duplicate(bits));
            }
            total += &w;
            table.insert(bits, w);
        }
        if !total.is_one() {
            return Err(PriorError::NotNormalized(crate::prob::format_rational(&total)));
        }
        table.retain(|_, w| !w.is_zero());
        Ok(Prior {
            width,
            table: Some(table),
        })
    }

    /// Parses lines of `bitstring weight`; `#` and `//` start comments.
    pub fn parse(text: &str, width: usize) -> Result<Self, PriorError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("");
            let line = line.split("//").next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(bits), Some(weight), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(PriorError::Syntax {
                    line: line_no,
                    message: "expected `bitstring weight`".into(),
                });
            };
            let bits = Bits::parse_with_len(bits, width).map_err(|source| PriorError::Bits {
                line: line_no,
                source,
            })?;
            let weight = parse_rational(weight).ok_or_else(|| PriorError::Syntax {
                line: line_no,
                message: format!("malformed weight `{weight}`"),
            })?;
            entries.push((bits, weight));
        }
        Self::from_weights(width, entries)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_uniform(&self) -> bool {
        self.table.is_none()
    }

    pub fn weight(&self, s: &Bits) -> Rational {
        match &self.table {
            None => pow2_neg(self.width as u32),
            Some(t) => t.get(s).cloned().unwrap_or_else(Rational::zero),
        }
    }

    /// Assignments with positive weight, in increasing order.
    pub fn support(&self) -> Box<dyn Iterator<Item = (Bits, Rational)> + '_> {
        match &self.table {
            None => {
                let w = pow2_neg(self.width as u32);
                Box::new(Bits::all(self.width).map(move |b| (b, w.clone())))
            }
            Some(t) => Box::new(t.iter().map(|(b, w)| (*b, w.clone()))),
        }
    }

    /// Number of assignments with positive weight.
    pub fn support_size(&self) -> u128 {
        match &self.table {
            None => 1u128 << self.width,
            Some(t) => t.len() as u128,
        }
    }

    /// Total weight of `set`.
    pub fn mass<'a>(&self, set: impl IntoIterator<Item = &'a Bits>) -> Rational {
        set.into_iter().map(|s| self.weight(s)).sum()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        if self.is_uniform() {
            return self.width as f64;
        }
        self.support()
            .map(|(_, w)| -crate::prob::to_f64(&w) * crate::prob::log2(&w))
            .sum()
    }
}

impl Default for Prior {
    fn default() -> Self {
        Prior::uniform(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    #[test]
    fn parses_example_prior() {
        let p = Prior::parse("00 7/8\n01 0.0625\n10 1/16 # s3\n", 2).unwrap();
        assert_eq!(p.weight(&"00".parse().unwrap()), ratio(7, 8));
        assert_eq!(p.weight(&"11".parse().unwrap()), ratio(0, 1));
        assert_eq!(p.support().count(), 3);
    }

    #[test]
    fn rejects_unnormalized_and_duplicates() {
        assert!(matches!(
            Prior::parse("0 1/2\n", 1),
            Err(PriorError::NotNormalized(_))
        ));
        assert!(matches!(
            Prior::parse("0 1/2\n0 1/2\n", 1),
            Err(PriorError::Duplicate(_))
        ));
        assert!(matches!(
            Prior::parse("01 1\n", 1),
            Err(PriorError::Bits { line: 1, .. })
        ));
    }

    #[test]
    fn uniform_weight_and_entropy() {
        let p = Prior::uniform(3);
        assert_eq!(p.weight(&"101".parse().unwrap()), ratio(1, 8));
        assert_eq!(p.entropy(), 3.0);
        assert_eq!(p.support_size(), 8);
    }
}
