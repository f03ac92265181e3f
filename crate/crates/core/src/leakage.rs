//! Leakage measures over exact joint distributions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::bits::Bits;
use crate::prob::{format_rational, log2, self_information, to_f64, Rational};
use crate::semantics::{JointDistribution, Prior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Qif1,
    Qif2,
    QifDyn,
    Bel,
    StaticQif,
    PosteriorV,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Qif1,
        Measure::Qif2,
        Measure::QifDyn,
        Measure::Bel,
        Measure::StaticQif,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Qif1 => "QIF1",
            Measure::Qif2 => "QIF2",
            Measure::QifDyn => "QIFdyn",
            Measure::Bel => "BEL",
            Measure::StaticQif => "staticQIF",
            Measure::PosteriorV => "posteriorV",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown measure `{0}` (expected qif1, qif2, qifdyn, bel, static or all)")]
pub struct UnknownMeasure(pub String);

impl FromStr for Measure {
    type Err = UnknownMeasure;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "qif1" => Measure::Qif1,
            "qif2" => Measure::Qif2,
            "qifdyn" => Measure::QifDyn,
            "bel" => Measure::Bel,
            "static" | "staticqif" => Measure::StaticQif,
            "posteriorv" => Measure::PosteriorV,
            _ => return Err(UnknownMeasure(s.to_string())),
        })
    }
}

/// Parses a comma-separated list; `all` selects every measure.
pub fn parse_measures(list: &str) -> Result<Vec<Measure>, UnknownMeasure> {
    let mut out = BTreeSet::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item.eq_ignore_ascii_case("all") {
            out.extend(Measure::ALL);
        } else {
            out.insert(item.parse()?);
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LeakageError {
    #[error("inconsistent observation: output {0} has probability 0")]
    InconsistentObservation(Bits),
    #[error("belief contradiction: p({secret} | {observed}) = 0")]
    BeliefContradiction { secret: Bits, observed: Bits },
    #[error("secret {0} has prior probability 0")]
    ImpossibleSecret(Bits),
}

/// One leakage value.
///
/// `core` is the exact rational with `bits = -log2 core` (absent for the
/// entropy-based measures, which are sums of logarithms).
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    pub measure: Measure,
    pub core: Option<Rational>,
    pub bits: f64,
    pub observed: Option<Bits>,
    pub secret: Option<Bits>,
}

impl Serialize for LeakageReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("LeakageReport", 6)?;
        st.serialize_field("measure", self.measure.name())?;
        st.serialize_field("core_num", &self.core.as_ref().map(|c| c.numer().to_string()))?;
        st.serialize_field("core_den", &self.core.as_ref().map(|c| c.denom().to_string()))?;
        st.serialize_field("bits", &self.bits)?;
        st.serialize_field("observed", &self.observed)?;
        if let Some(s) = &self.secret {
            st.serialize_field("secret", s)?;
        } else {
            st.skip_field("secret")?;
        }
        st.end()
    }
}

impl fmt::Display for LeakageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.measure)?;
        if let Some(s) = &self.secret {
            write!(f, "({s}")?;
            if let Some(o) = &self.observed {
                write!(f, ", {o}")?;
            }
            write!(f, ")")?;
        } else if let Some(o) = &self.observed {
            write!(f, "({o})")?;
        }
        write!(f, " = {:.6} bits", self.bits)?;
        if let Some(c) = &self.core {
            write!(f, " [core {}]", format_rational(c))?;
        }
        Ok(())
    }
}

/// `-log2 Σ_{s ∈ pre} p(s)`.
pub fn qif1(prior: &Prior, pre: &BTreeSet<Bits>, observed: &Bits) -> Result<LeakageReport, LeakageError> {
    let core = prior.mass(pre);
    if core.is_zero() {
        return Err(LeakageError::InconsistentObservation(*observed));
    }
    Ok(LeakageReport {
        measure: Measure::Qif1,
        bits: self_information(&core),
        core: Some(core),
        observed: Some(*observed),
        secret: None,
    })
}

/// `-log2 p(o)`.
pub fn qif2(joint: &JointDistribution, observed: &Bits) -> Result<LeakageReport, LeakageError> {
    qif2_from_core(joint.p_output(observed), observed)
}

pub(crate) fn qif2_from_core(core: Rational, observed: &Bits) -> Result<LeakageReport, LeakageError> {
    if core.is_zero() {
        return Err(LeakageError::InconsistentObservation(*observed));
    }
    Ok(LeakageReport {
        measure: Measure::Qif2,
        bits: self_information(&core),
        core: Some(core),
        observed: Some(*observed),
        secret: None,
    })
}

fn entropy<'a>(ps: impl Iterator<Item = &'a Rational>) -> f64 {
    ps.filter(|p| !p.is_zero()).map(|p| -to_f64(p) * log2(p)).sum()
}

/// `H(S) - H(S | o)`; may be negative.
pub fn qif_dyn(joint: &JointDistribution, observed: &Bits) -> Result<LeakageReport, LeakageError> {
    let po = joint.p_output(observed);
    if po.is_zero() {
        return Err(LeakageError::InconsistentObservation(*observed));
    }
    let h_s = entropy(joint.secrets().map(|(_, p)| p));
    let posts: Vec<Rational> = joint
        .preimage(observed)
        .iter()
        .map(|s| joint.joint(s, observed) / &po)
        .collect();
    let h_s_o = entropy(posts.iter());
    Ok(LeakageReport {
        measure: Measure::QifDyn,
        core: None,
        bits: h_s - h_s_o,
        observed: Some(*observed),
        secret: None,
    })
}

/// Belief improvement of a point-mass belief on `secret`:
/// `log2 p(s | o) - log2 p(s)`. The core is `p(s) / p(s | o)`, so that as
/// for every measure `bits = -log2 core`.
pub fn bel(joint: &JointDistribution, secret: &Bits, observed: &Bits) -> Result<LeakageReport, LeakageError> {
    let ps = joint.p_secret(secret);
    if ps.is_zero() {
        return Err(LeakageError::ImpossibleSecret(*secret));
    }
    let post = joint
        .posterior(secret, observed)
        .ok_or(LeakageError::InconsistentObservation(*observed))?;
    if post.is_zero() {
        return Err(LeakageError::BeliefContradiction {
            secret: *secret,
            observed: *observed,
        });
    }
    let core = ps / post;
    let bits = if core.is_one() { 0.0 } else { -log2(&core) };
    Ok(LeakageReport {
        measure: Measure::Bel,
        core: Some(core),
        bits,
        observed: Some(*observed),
        secret: Some(*secret),
    })
}

/// Shannon mutual information `I(S; O)`.
pub fn static_qif(joint: &JointDistribution) -> LeakageReport {
    let bits: f64 = joint
        .entries()
        .map(|(s, o, p)| {
            let ratio = p / (joint.p_secret(s) * joint.p_output(o));
            if ratio.is_one() {
                0.0
            } else {
                to_f64(p) * log2(&ratio)
            }
        })
        .sum();
    LeakageReport {
        measure: Measure::StaticQif,
        core: None,
        bits: if bits == 0.0 { 0.0 } else { bits },
        observed: None,
        secret: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VulnerabilityMode {
    /// `p(s) / Σ_{s' ∈ pre(o)} p(s')`
    Qif1,
    /// `p(s | o)`
    Qif2,
}

/// Posterior vulnerability of `secret` after observing `observed`, or the
/// maximum over all secrets when `secret` is `None`.
pub fn posterior_vulnerability(
    joint: &JointDistribution,
    observed: &Bits,
    secret: Option<&Bits>,
    mode: VulnerabilityMode,
) -> Result<Rational, LeakageError> {
    let po = joint.p_output(observed);
    if po.is_zero() {
        return Err(LeakageError::InconsistentObservation(*observed));
    }
    let pre = joint.preimage(observed);
    let value = |s: &Bits| match mode {
        VulnerabilityMode::Qif2 => joint.joint(s, observed) / &po,
        VulnerabilityMode::Qif1 => {
            if pre.contains(s) {
                joint.p_secret(s) / pre.iter().map(|t| joint.p_secret(t)).sum::<Rational>()
            } else {
                Rational::zero()
            }
        }
    };
    Ok(match secret {
        Some(s) => value(s),
        None => pre.iter().map(value).max().unwrap_or_else(Rational::zero),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    fn b(s: &str) -> Bits {
        s.parse().unwrap()
    }

    fn example2() -> JointDistribution {
        // s1 = "1" with prior 1/4, a = "1".
        JointDistribution::from_entries(
            1,
            1,
            [
                (b("1"), b("1"), ratio(1, 4) * ratio(81, 100)),
                (b("1"), b("0"), ratio(1, 4) * ratio(19, 100)),
                (b("0"), b("1"), ratio(3, 4) * ratio(9, 100)),
                (b("0"), b("0"), ratio(3, 4) * ratio(91, 100)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn qif1_uniform_formula() {
        let prior = Prior::uniform(8);
        let pre: BTreeSet<Bits> = (0..241).map(|v| Bits::from_value(8, v)).collect();
        let r = qif1(&prior, &pre, &b("00001000")).unwrap();
        assert_eq!(r.core, Some(ratio(241, 256)));
        assert!((r.bits - (256f64 / 241f64).log2()).abs() < 1e-12);
        let one = BTreeSet::from([b("00000100")]);
        assert_eq!(qif1(&prior, &one, &b("00001100")).unwrap().bits, 8.0);
    }

    #[test]
    fn empty_preimage_is_inconsistent() {
        let err = qif1(&Prior::uniform(2), &BTreeSet::new(), &b("1")).unwrap_err();
        assert_eq!(err, LeakageError::InconsistentObservation(b("1")));
    }

    #[test]
    fn example2_measures() {
        let j = example2();
        assert!((qif2(&j, &b("1")).unwrap().bits - 1.89).abs() < 0.01);
        assert!((qif2(&j, &b("0")).unwrap().bits - 0.45).abs() < 0.01);
        assert!((bel(&j, &b("1"), &b("1")).unwrap().bits - 1.58).abs() < 0.01);
        assert!((bel(&j, &b("1"), &b("0")).unwrap().bits + 1.94).abs() < 0.01);
        assert!((bel(&j, &b("0"), &b("1")).unwrap().bits + 1.58).abs() < 0.01);
        assert!((bel(&j, &b("0"), &b("0")).unwrap().bits - 0.32).abs() < 0.01);
        assert!(qif_dyn(&j, &b("1")).unwrap().bits.abs() < 1e-9);
        assert!((qif_dyn(&j, &b("0")).unwrap().bits - 0.46).abs() < 0.01);
    }

    #[test]
    fn static_qif_of_identity_is_full() {
        let j = JointDistribution::from_entries(2, 2, Bits::all(2).map(|s| (s, s, ratio(1, 4)))).unwrap();
        assert!((static_qif(&j).bits - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vulnerability_modes() {
        let j = example2();
        assert_eq!(
            posterior_vulnerability(&j, &b("1"), Some(&b("1")), VulnerabilityMode::Qif2).unwrap(),
            ratio(3, 4)
        );
        assert_eq!(
            posterior_vulnerability(&j, &b("1"), Some(&b("1")), VulnerabilityMode::Qif1).unwrap(),
            ratio(1, 4)
        );
        assert_eq!(
            posterior_vulnerability(&j, &b("1"), None, VulnerabilityMode::Qif1).unwrap(),
            ratio(3, 4)
        );
    }

    #[test]
    fn report_json_shape() {
        let r = qif2(&example2(), &b("1")).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["measure"], "QIF2");
        assert_eq!(v["core_num"], "27");
        assert_eq!(v["core_den"], "100");
        assert_eq!(v["observed"], "1");
        assert!(v.get("secret").is_none());
    }

    #[test]
    fn measure_list_parsing() {
        assert_eq!(parse_measures("all").unwrap().len(), 5);
        assert_eq!(
            parse_measures("qif2, QIF1").unwrap(),
            vec![Measure::Qif1, Measure::Qif2]
        );
        assert!(parse_measures("qif3").is_err());
    }
}
