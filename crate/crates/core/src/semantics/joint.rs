use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};

use crate::bits::Bits;
use crate::prob::{format_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JointError {
    #[error("joint probabilities sum to {0}, not 1")]
    NotNormalized(String),
    #[error("negative probability for ({0}, {1})")]
    Negative(Bits, Bits),
    #[error("entry ({0}, {1}) has the wrong width")]
    Width(Bits, Bits),
}

/// Exact joint distribution `p(s, o)` of secret inputs and outputs.
///
/// Only positive entries are stored. Marginals are derived once at
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDistribution {
    secret_width: usize,
    output_width: usize,
    table: BTreeMap<(Bits, Bits), Rational>,
    p_secret: BTreeMap<Bits, Rational>,
    p_output: BTreeMap<Bits, Rational>,
}

impl JointDistribution {
    /// Builds a joint from `(s, o, p)` triples; repeated pairs accumulate.
    pub fn from_entries(
        secret_width: usize,
        output_width: usize,
        entries: impl IntoIterator<Item = (Bits, Bits, Rational)>,
    ) -> Result<Self, JointError> {
        let mut table: BTreeMap<(Bits, Bits), Rational> = BTreeMap::new();
        for (s, o, p) in entries {
            if s.len() != secret_width || o.len() != output_width {
                return Err(JointError::Width(s, o));
            }
            if p < Rational::zero() {
                return Err(JointError::Negative(s, o));
            }
            *table.entry((s, o)).or_insert_with(Rational::zero) += p;
        }
        table.retain(|_, p| !p.is_zero());
        let mut p_secret: BTreeMap<Bits, Rational> = BTreeMap::new();
        let mut p_output: BTreeMap<Bits, Rational> = BTreeMap::new();
        let mut total = Rational::zero();
        for ((s, o), p) in &table {
            *p_secret.entry(*s).or_insert_with(Rational::zero) += p;
            *p_output.entry(*o).or_insert_with(Rational::zero) += p;
            total += p;
        }
        if !total.is_one() {
            return Err(JointError::NotNormalized(format_rational(&total)));
        }
        Ok(JointDistribution {
            secret_width,
            output_width,
            table,
            p_secret,
            p_output,
        })
    }

    pub fn secret_width(&self) -> usize {
        self.secret_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    /// Positive entries in `(s, o)` order.
    pub fn entries(&self) -> impl Iterator<Item = (&Bits, &Bits, &Rational)> {
        self.table.iter().map(|((s, o), p)| (s, o, p))
    }

    pub fn joint(&self, s: &Bits, o: &Bits) -> Rational {
        self.table.get(&(*s, *o)).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn p_secret(&self, s: &Bits) -> Rational {
        self.p_secret.get(s).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn p_output(&self, o: &Bits) -> Rational {
        self.p_output.get(o).cloned().unwrap_or_else(Rational::zero)
    }

    /// `p(s | o)`, or `None` when `p(o) = 0`.
    pub fn posterior(&self, s: &Bits, o: &Bits) -> Option<Rational> {
        let po = self.p_output(o);
        (!po.is_zero()).then(|| self.joint(s, o) / po)
    }

    /// `p(o | s)`, or `None` when `p(s) = 0`.
    pub fn likelihood(&self, o: &Bits, s: &Bits) -> Option<Rational> {
        let ps = self.p_secret(s);
        (!ps.is_zero()).then(|| self.joint(s, o) / ps)
    }

    /// Secrets with positive marginal.
    pub fn secrets(&self) -> impl Iterator<Item = (&Bits, &Rational)> {
        self.p_secret.iter()
    }

    /// Outputs with positive marginal.
    pub fn outputs(&self) -> impl Iterator<Item = (&Bits, &Rational)> {
        self.p_output.iter()
    }

    /// `{ s | p(s | o) > 0 }`.
    pub fn preimage(&self, o: &Bits) -> BTreeSet<Bits> {
        self.table
            .keys()
            .filter(|(_, oo)| oo == o)
            .map(|(s, _)| *s)
            .collect()
    }

    /// Every secret with positive mass maps to exactly one output.
    pub fn is_functional(&self) -> bool {
        self.table.len() == self.p_secret.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    fn b(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn marginals_and_bayes() {
        // Two-secret channel with rows (0.81, 0.19) and (0.09, 0.91).
        let j = JointDistribution::from_entries(
            1,
            1,
            [
                (b("1"), b("1"), ratio(1, 4) * ratio(81, 100)),
                (b("1"), b("0"), ratio(1, 4) * ratio(19, 100)),
                (b("0"), b("1"), ratio(3, 4) * ratio(9, 100)),
                (b("0"), b("0"), ratio(3, 4) * ratio(91, 100)),
            ],
        )
        .unwrap();
        assert_eq!(j.p_output(&b("1")), ratio(27, 100));
        assert_eq!(j.p_output(&b("0")), ratio(73, 100));
        assert_eq!(j.posterior(&b("1"), &b("1")), Some(ratio(3, 4)));
        for (s, o, p) in j.entries() {
            assert_eq!(j.posterior(s, o).unwrap() * j.p_output(o), *p);
            assert_eq!(j.likelihood(o, s).unwrap() * j.p_secret(s), *p);
        }
        assert!(!j.is_functional());
    }

    #[test]
    fn rejects_unnormalized() {
        let err = JointDistribution::from_entries(1, 1, [(b("0"), b("0"), ratio(1, 2))]);
        assert!(matches!(err, Err(JointError::NotNormalized(_))));
    }
}
