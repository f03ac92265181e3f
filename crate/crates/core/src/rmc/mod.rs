//! Recursive Markov chains: construction from programs, qualitative and
//! quantitative reachability, and leakage computed from reachability
//! probabilities.

mod build;
mod model;
mod reach;
mod solve;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

pub use build::{program_to_rmc, RmcBuild};
pub use model::{BoxInfo, Component, Loc, NodeId, NodeKind, Rmc, StructureError, Transition};
pub use reach::{build_equations, qualitative_reach, Equations, Monomial, Pair, PolySystem, Reach};
pub use solve::{solve, solve_kleene, solve_linear, ReachResult};

use crate::bits::Bits;
use crate::leakage::{self, LeakageError, LeakageReport};
use crate::prob::Rational;
use crate::semantics::{check_widths, JointDistribution, JointError, Prior, SemanticsError};
use crate::syntax::Program;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RmcError {
    #[error("location budget of {0} exceeded")]
    LocationBudget(usize),
    #[error("Kleene iteration budget of {0} exceeded")]
    IterationBudget(usize),
    #[error("equation system is not linear")]
    NotLinear,
    #[error("linear system is singular")]
    Singular,
    #[error("secret inputs are too wide to enumerate ({0} bits)")]
    TooManySecrets(usize),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error(transparent)]
    Joint(#[from] JointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmcLimits {
    pub max_locations: usize,
    pub max_iterations: usize,
}

impl Default for RmcLimits {
    fn default() -> Self {
        RmcLimits {
            max_locations: 2_000_000,
            max_iterations: 1_000_000,
        }
    }
}

/// Secret assignments enumerated for pre-images.
const MAX_ENUMERATED_SECRETS: usize = 24;

fn all_secrets(program: &Program) -> Result<Vec<Bits>, RmcError> {
    let k = program.secret_inputs().len();
    if k > MAX_ENUMERATED_SECRETS {
        return Err(RmcError::TooManySecrets(k));
    }
    Ok(Bits::all(k).collect())
}

fn preimage_from(build: &RmcBuild, reach: &Reach, observed: &Bits) -> BTreeSet<Bits> {
    let Some(ex) = build.main_exit(observed) else {
        return BTreeSet::new();
    };
    build
        .main_entries
        .iter()
        .filter(|(_, &en)| reach.contains(0, Loc::Node(en), ex))
        .map(|(s, _)| *s)
        .collect()
}

/// `{ s | the entry for s reaches the exit for observed }`.
pub fn preimage_via_rmc(
    program: &Program,
    observed: &Bits,
    public: &Bits,
    limits: &RmcLimits,
) -> Result<BTreeSet<Bits>, RmcError> {
    check_widths(program, None, public, Some(observed))?;
    let build = program_to_rmc(program, public, all_secrets(program)?, limits.max_locations)?;
    let reach = qualitative_reach(&build.rmc);
    Ok(preimage_from(&build, &reach, observed))
}

/// Everything derived from one construction and solve.
#[derive(Debug, Clone)]
pub struct RmcSolution {
    pub build: RmcBuild,
    pub reach: Reach,
    pub equations: Equations,
    pub result: ReachResult,
}

impl RmcSolution {
    /// `p(o | s)` as computed (exact, or a Kleene lower bound).
    pub fn likelihood(&self, secret: &Bits, observed: &Bits) -> Rational {
        let (Some(&en), Some(ex)) = (
            self.build.main_entries.get(secret),
            self.build.main_exit(observed),
        ) else {
            return Rational::zero();
        };
        match self.equations.unknown(0, Loc::Node(en), ex) {
            Some(i) => self.result.values[i].clone(),
            None => Rational::zero(),
        }
    }

    /// Exits of `main` reachable from the entry of `secret`, with their
    /// output values.
    pub fn outputs_from(&self, secret: &Bits) -> Vec<(Bits, Rational)> {
        let Some(&en) = self.build.main_entries.get(secret) else {
            return Vec::new();
        };
        let main = &self.build.rmc.components[0];
        main.exits
            .iter()
            .filter_map(|&ex| {
                let i = self.equations.unknown(0, Loc::Node(en), ex)?;
                Some((*main.exit_outputs(ex)?, self.result.values[i].clone()))
            })
            .collect()
    }

    pub fn preimage(&self, observed: &Bits) -> BTreeSet<Bits> {
        preimage_from(&self.build, &self.reach, observed)
    }
}

/// Builds the RMC with entries for `secrets` and solves its reachability
/// equations (exactly where linear, by Kleene iteration with precision `j`
/// elsewhere).
pub fn solve_program(
    program: &Program,
    public: &Bits,
    secrets: impl IntoIterator<Item = Bits>,
    j: u32,
    limits: &RmcLimits,
) -> Result<RmcSolution, RmcError> {
    let build = program_to_rmc(program, public, secrets, limits.max_locations)?;
    let reach = qualitative_reach(&build.rmc);
    let equations = build_equations(&build.rmc, &reach);
    let result = solve(&equations.system, j, limits.max_iterations)?;
    Ok(RmcSolution {
        build,
        reach,
        equations,
        result,
    })
}

#[derive(Debug, Clone)]
pub struct RmcQif {
    pub qif1: LeakageReport,
    pub qif2: LeakageReport,
    pub preimage: BTreeSet<Bits>,
    /// False when some reachability probability came from Kleene
    /// iteration; the QIF2 core is then a lower bound.
    pub exact: bool,
    pub delta: Rational,
    pub iterations: usize,
}

/// QIF1 from the qualitative pre-image and QIF2 from
/// `p(o) = Σ_s p(s) * p(o | s)`.
pub fn qif_via_rmc(
    program: &Program,
    observed: &Bits,
    prior: &Prior,
    public: &Bits,
    j: u32,
    limits: &RmcLimits,
) -> Result<RmcQif, RmcError> {
    check_widths(program, Some(prior.width()), public, Some(observed))?;
    let sol = solve_program(program, public, all_secrets(program)?, j, limits)?;
    let preimage = sol.preimage(observed);
    let qif1 = leakage::qif1(prior, &preimage, observed)?;
    let core: Rational = prior
        .support()
        .map(|(s, w)| w * sol.likelihood(&s, observed))
        .sum();
    let qif2 = leakage::qif2_from_core(core, observed)?;
    Ok(RmcQif {
        qif1,
        qif2,
        preimage,
        exact: sol.result.exact,
        delta: sol.result.delta.clone(),
        iterations: sol.result.iterations,
    })
}

/// `p(s, o)` keyed by secret and output.
pub type JointTable = BTreeMap<(Bits, Bits), Rational>;

/// Joint distribution `p(s) * p(o | s)` over the prior's support, with a
/// flag telling whether every entry is exact.
pub fn joint_via_rmc(
    program: &Program,
    prior: &Prior,
    public: &Bits,
    j: u32,
    limits: &RmcLimits,
) -> Result<(JointTable, bool), RmcError> {
    check_widths(program, Some(prior.width()), public, None)?;
    let support: Vec<(Bits, Rational)> = prior.support().collect();
    let sol = solve_program(program, public, support.iter().map(|(s, _)| *s), j, limits)?;
    let mut table = BTreeMap::new();
    for (s, w) in &support {
        for (o, p) in sol.outputs_from(s) {
            if !p.is_zero() {
                table.insert((*s, o), w * p);
            }
        }
    }
    Ok((table, sol.result.exact))
}

/// [`joint_via_rmc`] as a validated distribution; fails unless the result
/// is exact and sums to 1 (every run terminates almost surely).
pub fn exact_joint_via_rmc(
    program: &Program,
    prior: &Prior,
    public: &Bits,
    limits: &RmcLimits,
) -> Result<JointDistribution, RmcError> {
    let (table, exact) = joint_via_rmc(program, prior, public, 20, limits)?;
    if !exact {
        return Err(RmcError::NotLinear);
    }
    Ok(JointDistribution::from_entries(
        prior.width(),
        program.outputs().len(),
        table.into_iter().map(|((s, o), p)| (s, o, p)),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{pow2_neg, ratio};
    use crate::syntax::parse_program;
    use num_traits::{One, Signed};

    fn b(s: &str) -> Bits {
        s.parse().unwrap()
    }

    fn build(src: &str) -> RmcBuild {
        let p = parse_program(src).unwrap();
        let secrets = all_secrets(&p).unwrap();
        program_to_rmc(&p, &Bits::empty(), secrets, 10_000).unwrap()
    }

    #[test]
    fn identity_is_two_locations_per_input() {
        let bld = build("proc main in s; out o; o <- s end");
        let main = &bld.rmc.components[0];
        assert_eq!(main.nodes.len(), 4);
        assert_eq!(main.entries.len(), 2);
        assert_eq!(main.exits.len(), 2);
        assert!(main.boxes.is_empty());
        bld.rmc.check().unwrap();
    }

    #[test]
    fn choice_weights_appear_on_transitions() {
        let bld = build(
            "proc main in s; out o;
             if s then {o <- 1} [0.81] {o <- 0} else {o <- 1} [0.09] {o <- 0} end end",
        );
        bld.rmc.check().unwrap();
        let mut probs: Vec<Rational> = bld.rmc.components[0]
            .transitions
            .iter()
            .map(|t| t.prob.clone())
            .filter(|p| !p.is_one())
            .collect();
        probs.sort();
        assert_eq!(
            probs,
            vec![ratio(9, 100), ratio(19, 100), ratio(81, 100), ratio(91, 100)]
        );
    }

    #[test]
    fn self_recursive_box() {
        let bld = build(
            "proc main in s; out o;
             o <- !s; if o then main(false; o) end end",
        );
        bld.rmc.check().unwrap();
        assert_eq!(bld.rmc.components.len(), 1);
        let main = &bld.rmc.components[0];
        assert_eq!(main.boxes.len(), 1);
        assert_eq!(main.boxes[0].callee, 0);
        assert!(main.transitions.iter().any(|t| matches!(t.dst, Loc::Call { .. })));
        assert!(main.transitions.iter().any(|t| matches!(t.src, Loc::Ret { .. })));
    }

    #[test]
    fn flat_chain_reach() {
        let bld = build("proc main in s; out o; o <- true end");
        let reach = qualitative_reach(&bld.rmc);
        let main = &bld.rmc.components[0];
        let ex = main.exits[0];
        for &en in &main.entries {
            assert!(reach.contains(0, Loc::Node(en), ex));
        }
        assert!(reach.contains(0, Loc::Node(ex), ex));
    }

    #[test]
    fn non_returning_recursion_has_no_call_pairs() {
        let bld = build("proc main in s; out o; main(s; o) end");
        let reach = qualitative_reach(&bld.rmc);
        assert!(reach.is_empty());
    }

    #[test]
    fn coin_loop_terminates_with_probability_one() {
        let p = parse_program(
            "proc main in s; out o; local c; c <- true;
             while c do {c <- false} [1/2] {c <- true} end; o <- s end",
        )
        .unwrap();
        let sol = solve_program(
            &p,
            &Bits::empty(),
            all_secrets(&p).unwrap(),
            20,
            &RmcLimits::default(),
        )
        .unwrap();
        assert!(sol.result.exact);
        assert_eq!(sol.likelihood(&b("1"), &b("1")), Rational::one());
    }

    #[test]
    fn branching_recursion_converges_to_one_half() {
        let p = parse_program("proc main in s; out o; {skip} [1/3] {main(s; o); main(s; o)} end").unwrap();
        let sol = solve_program(&p, &Bits::empty(), [b("0")], 20, &RmcLimits::default()).unwrap();
        assert!(!sol.result.exact);
        let x = sol.likelihood(&b("0"), &b("0"));
        assert!((x - ratio(1, 2)).abs() <= pow2_neg(20));
    }

    #[test]
    fn example2_qif_via_rmc() {
        let p = parse_program(
            "proc main in s; out o;
             if s then {o <- 1} [0.81] {o <- 0} else {o <- 1} [0.09] {o <- 0} end end",
        )
        .unwrap();
        let prior = Prior::from_weights(1, [(b("1"), ratio(1, 4)), (b("0"), ratio(3, 4))]).unwrap();
        let r = qif_via_rmc(&p, &b("1"), &prior, &Bits::empty(), 20, &RmcLimits::default()).unwrap();
        assert!(r.exact);
        assert_eq!(r.qif2.core, Some(ratio(27, 100)));
        assert_eq!(r.qif1.core, Some(Rational::one()));
    }

    #[test]
    fn dump_lists_everything() {
        let bld = build("proc main in s; out o; o <- s end");
        let text = bld.rmc.dump();
        assert!(text.starts_with("component 0 main\n"));
        assert!(text.contains("exit out=1"));
        assert!(text.contains("n0 -> n1 1") || text.contains("-> n"));
    }
}
