//! Compilation of loop-free programs to CNF, observation augmentation and
//! DIMACS interchange.

mod compile;
mod dimacs;
mod unroll;

pub use compile::{compile, CompileError};
pub use dimacs::{emit_dimacs, parse_dimacs, DimacsError};
pub use unroll::{unroll, UnrollError};

use num_traits::Zero;

use crate::bits::Bits;
use crate::prob::Rational;
use crate::semantics::Prior;

/// A probabilistic choice compiled to a free selector variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceSite {
    pub procedure: String,
    /// Child-index path of the choice command in the procedure body.
    pub path: Vec<usize>,
    /// True selects the left branch.
    pub var: u32,
    /// Defined as "execution reaches this site".
    pub active: u32,
    pub prob: Rational,
}

/// Clauses relating input, choice and output variables of a program.
///
/// Every assignment to the input, public and choice variables extends to
/// exactly one model; all other variables are functionally defined.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CircuitFormula {
    pub num_vars: u32,
    pub clauses: Vec<Vec<i32>>,
    /// Secret inputs in declaration order.
    pub inputs: Vec<(String, u32)>,
    pub public: Vec<(String, u32)>,
    pub outputs: Vec<(String, u32)>,
    pub choices: Vec<ChoiceSite>,
    /// True in models where a loop was cut short by the unrolling bound.
    pub unwind: Option<u32>,
}

impl CircuitFormula {
    pub fn input_vars(&self) -> Vec<u32> {
        self.inputs.iter().map(|(_, v)| *v).collect()
    }

    fn units(vars: &[(String, u32)], values: &Bits) -> Vec<i32> {
        assert_eq!(vars.len(), values.len(), "assignment width mismatch");
        vars.iter()
            .zip(values.iter())
            .map(|((_, v), b)| if b { *v as i32 } else { -(*v as i32) })
            .collect()
    }
}

/// A formula plus the observed output as unit clauses and a projection set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CnfQuery {
    pub formula: CircuitFormula,
    /// Side constraints: inactive choice variables forced false (so that
    /// projecting on choices counts execution paths) and secrets outside a
    /// prior's support excluded.
    pub guards: Vec<Vec<i32>>,
    /// Unit literals fixing outputs and public inputs.
    pub observation: Vec<i32>,
    pub projection: Vec<u32>,
}

impl CnfQuery {
    /// A plain clause set without variable maps.
    pub fn from_clauses(num_vars: u32, clauses: Vec<Vec<i32>>, projection: Vec<u32>) -> Self {
        CnfQuery {
            formula: CircuitFormula {
                num_vars,
                clauses,
                ..CircuitFormula::default()
            },
            projection,
            ..CnfQuery::default()
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.formula.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.formula.clauses.len() + self.guards.len() + self.observation.len()
    }

    /// Formula clauses, then guards, then observation units.
    pub fn clauses(&self) -> impl Iterator<Item = &[i32]> {
        self.formula
            .clauses
            .iter()
            .map(Vec::as_slice)
            .chain(self.guards.iter().map(Vec::as_slice))
            .chain(self.observation.iter().map(std::slice::from_ref))
    }
}

/// Query whose projected models on the secret inputs are exactly the
/// pre-image of `observed`.
pub fn observe(formula: &CircuitFormula, observed: &Bits, public: &Bits) -> CnfQuery {
    let mut observation = CircuitFormula::units(&formula.public, public);
    observation.extend(CircuitFormula::units(&formula.outputs, observed));
    CnfQuery {
        formula: formula.clone(),
        guards: Vec::new(),
        observation,
        projection: formula.input_vars(),
    }
}

/// Like [`observe`], but projected on secrets, choice selectors and their
/// activity flags, with inactive selectors forced false: each projected
/// model is one execution path reaching `observed`.
pub fn observe_paths(formula: &CircuitFormula, observed: &Bits, public: &Bits) -> CnfQuery {
    let mut q = observe(formula, observed, public);
    for site in &formula.choices {
        q.guards.push(vec![site.active as i32, -(site.var as i32)]);
        q.projection.push(site.var);
        q.projection.push(site.active);
    }
    q
}

/// Path query over every output: projected on secrets, outputs, choice
/// selectors and activity flags, with only the public inputs fixed. Each
/// projected model is one execution path together with the output it
/// produces.
pub fn observe_joint(formula: &CircuitFormula, public: &Bits) -> CnfQuery {
    let mut q = CnfQuery {
        formula: formula.clone(),
        guards: Vec::new(),
        observation: CircuitFormula::units(&formula.public, public),
        projection: formula.input_vars(),
    };
    q.projection.extend(formula.outputs.iter().map(|(_, v)| *v));
    for site in &formula.choices {
        q.guards.push(vec![site.active as i32, -(site.var as i32)]);
        q.projection.push(site.var);
        q.projection.push(site.active);
    }
    q
}

/// Excludes every secret assignment with prior weight zero, so counts
/// range over the prior's support only.
pub fn restrict_to_support(query: &mut CnfQuery, prior: &Prior) {
    if prior.is_uniform() {
        return;
    }
    let vars = query.formula.input_vars();
    for s in Bits::all(vars.len()) {
        if prior.weight(&s).is_zero() {
            query.guards.push(
                vars.iter()
                    .zip(s.iter())
                    .map(|(&v, b)| if b { -(v as i32) } else { v as i32 })
                    .collect(),
            );
        }
    }
}

/// Satisfiable iff some secret input, under `public`, runs into the
/// unrolling bound.
pub fn unwind_query(formula: &CircuitFormula, public: &Bits) -> Option<CnfQuery> {
    let flag = formula.unwind?;
    let mut observation = CircuitFormula::units(&formula.public, public);
    observation.push(flag as i32);
    Some(CnfQuery {
        formula: formula.clone(),
        guards: Vec::new(),
        observation,
        projection: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counter::{count_projected, CountLimits};
    use crate::prob::ratio;
    use crate::syntax::parse_program;

    fn b(s: &str) -> Bits {
        s.parse().unwrap()
    }

    fn count(q: &CnfQuery) -> u64 {
        count_projected(q, CountLimits::default(), false)
            .count
            .try_into()
            .unwrap()
    }

    #[test]
    fn support_restriction_drops_zero_weight_secrets() {
        let p = parse_program("proc main in s[2]; out o; o <- !s[1] & !s[0] end").unwrap();
        let f = compile(&p).unwrap();
        let mut q = observe(&f, &b("0"), &Bits::empty());
        assert_eq!(count(&q), 3);
        let prior = Prior::from_weights(
            2,
            [
                (b("00"), ratio(7, 8)),
                (b("01"), ratio(1, 16)),
                (b("10"), ratio(1, 16)),
            ],
        )
        .unwrap();
        restrict_to_support(&mut q, &prior);
        assert_eq!(q.guards, vec![vec![-1, -2]]);
        assert_eq!(count(&q), 2);
    }

    #[test]
    fn path_queries_count_paths() {
        let p = parse_program("proc main in s; out o; {o <- s} [1/2] {{o <- true} [1/2] {o <- false}} end")
            .unwrap();
        let f = compile(&p).unwrap();
        assert_eq!(count(&observe(&f, &b("1"), &Bits::empty())), 2);
        // s=1: left, right-left; s=0: right-left.
        assert_eq!(count(&observe_paths(&f, &b("1"), &Bits::empty())), 3);
        // Every (path, output) pair of both secrets.
        assert_eq!(count(&observe_joint(&f, &Bits::empty())), 6);
    }
}
