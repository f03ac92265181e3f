//! Exact reference interpreter.
//!
//! Executions are explored breadth-first over configurations (call stack,
//! program counter, valuation). Configurations reached along different
//! paths at the same step are merged and their probabilities added, so
//! straight-line code with many choice sites does not blow up path by path.

mod joint;
mod prior;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use num_traits::{One, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

pub use joint::{JointDistribution, JointError};
pub use prior::{Prior, PriorError};

use crate::bits::Bits;
use crate::lower::{lower, Env, Instr, Lowered, Pc};
use crate::prob::Rational;
use crate::syntax::{BoolExpr, Program, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    /// Steps per secret input (an instruction executed along all live
    /// configurations counts once).
    pub max_steps: usize,
    /// Live configurations per secret input, or visited configurations for
    /// pre-image search.
    pub max_paths: usize,
    pub max_recursion_depth: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_steps: 100_000,
            max_paths: 200_000,
            max_recursion_depth: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Steps,
    Paths,
    RecursionDepth,
    /// Some input has infinitely many execution paths (a probabilistic
    /// loop or recursion); exploration stopped after a fixed number of
    /// steps.
    InfinitePaths,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limit::Steps => "max-steps",
            Limit::Paths => "max-paths",
            Limit::RecursionDepth => "max-recursion-depth",
            Limit::InfinitePaths => "path enumeration (infinitely many paths)",
        })
    }
}

/// Lower bounds on `p(s, o)` plus the per-secret probability mass that was
/// not explored; every true `p(s, o)` lies in
/// `[lower(s, o), lower(s, o) + unexplored(s)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialJoint {
    pub lower: BTreeMap<(Bits, Bits), Rational>,
    pub unexplored: BTreeMap<Bits, Rational>,
}

impl PartialJoint {
    pub fn bounds(&self, s: &Bits, o: &Bits) -> (Rational, Rational) {
        let lo = self.lower.get(&(*s, *o)).cloned().unwrap_or_else(Rational::zero);
        let slack = self.unexplored.get(s).cloned().unwrap_or_else(Rational::zero);
        let hi = &lo + slack;
        (lo, hi)
    }

    pub fn total_unexplored(&self) -> Rational {
        self.unexplored.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("{limit} exceeded; unexplored probability mass {}", crate::prob::format_rational(&.partial.total_unexplored()))]
    LimitExceeded {
        limit: Limit,
        partial: Box<PartialJoint>,
    },
    #[error("pre-image search exceeded {limit}")]
    SearchLimitExceeded { limit: Limit },
    #[error("input {secret} never terminates: execution revisits the same configurations with mass {}", crate::prob::format_rational(.stuck_mass))]
    NonTermination { secret: Bits, stuck_mass: Rational },
    #[error("expected {expected} {what} bits, got {found}")]
    Width {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Standard Boolean evaluation under a named assignment.
pub fn eval_expr(expr: &BoolExpr, env: &HashMap<String, bool>) -> Result<bool, SemanticsError> {
    Ok(match expr {
        BoolExpr::Const(b) => *b,
        BoolExpr::Var(v) => *env
            .get(v)
            .ok_or_else(|| SemanticsError::UnboundVariable(v.clone()))?,
        BoolExpr::Not(e) => !eval_expr(e, env)?,
        BoolExpr::Or(l, r) => eval_expr(l, env)? || eval_expr(r, env)?,
        BoolExpr::And(l, r) => eval_expr(l, env)? && eval_expr(r, env)?,
    })
}

/// Initial valuation of `main` for a secret and public assignment, both in
/// declaration order.
pub(crate) fn main_env(program: &Program, lowered: &Lowered, secret: &Bits, public: &Bits) -> Env {
    let mut si = 0;
    let mut pi = 0;
    let inputs: Vec<bool> = program
        .main()
        .inputs
        .iter()
        .map(|v| {
            if program.public_inputs.contains(v) {
                pi += 1;
                public.get(pi - 1)
            } else {
                si += 1;
                secret.get(si - 1)
            }
        })
        .collect();
    lowered.procs[0].initial_env(inputs)
}

pub(crate) fn check_widths(
    program: &Program,
    secret_width: Option<usize>,
    public: &Bits,
    observed: Option<&Bits>,
) -> Result<(), SemanticsError> {
    let check = |what, expected: usize, found: usize| {
        if expected == found {
            Ok(())
        } else {
            Err(SemanticsError::Width {
                what,
                expected,
                found,
            })
        }
    };
    if let Some(w) = secret_width {
        check("secret", program.secret_inputs().len(), w)?;
    }
    check("public", program.public_inputs.len(), public.len())?;
    if let Some(o) = observed {
        check("output", program.outputs().len(), o.len())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Frame {
    proc_: u32,
    call_pc: Pc,
    env: Env,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Config {
    stack: Vec<Frame>,
    proc_: u32,
    pc: Pc,
    env: Env,
}

enum Outcome {
    Next(Config),
    Done(Bits),
}

enum StepError {
    Depth,
}

/// Successors of `cfg` with their (nonzero) transition probabilities.
fn step(lowered: &Lowered, cfg: &Config, max_depth: usize) -> Result<Vec<(Rational, Outcome)>, StepError> {
    let proc_ = &lowered.procs[cfg.proc_ as usize];
    let goto = |pc: Pc, env: Env| Config {
        stack: cfg.stack.clone(),
        proc_: cfg.proc_,
        pc,
        env,
    };
    let one = Rational::one;
    Ok(match &proc_.code[cfg.pc as usize] {
        Instr::Assign { slot, expr, next } => {
            let bit = 1u128 << slot;
            let env = if expr.eval(cfg.env) {
                cfg.env | bit
            } else {
                cfg.env & !bit
            };
            vec![(one(), Outcome::Next(goto(*next, env)))]
        }
        Instr::Branch {
            cond,
            then_pc,
            else_pc,
        } => {
            let pc = if cond.eval(cfg.env) { *then_pc } else { *else_pc };
            vec![(one(), Outcome::Next(goto(pc, cfg.env)))]
        }
        Instr::Choice { prob, left, right } => {
            let mut out = Vec::with_capacity(2);
            if !prob.is_zero() {
                out.push((prob.clone(), Outcome::Next(goto(*left, cfg.env))));
            }
            let rest = one() - prob;
            if !rest.is_zero() {
                out.push((rest, Outcome::Next(goto(*right, cfg.env))));
            }
            out
        }
        Instr::Call { callee, args, .. } => {
            if cfg.stack.len() >= max_depth {
                return Err(StepError::Depth);
            }
            let callee_proc = &lowered.procs[*callee];
            let env = callee_proc.initial_env(args.iter().map(|a| a.eval(cfg.env)));
            let mut stack = cfg.stack.clone();
            stack.push(Frame {
                proc_: cfg.proc_,
                call_pc: cfg.pc,
                env: cfg.env,
            });
            vec![(
                one(),
                Outcome::Next(Config {
                    stack,
                    proc_: *callee as u32,
                    pc: callee_proc.entry,
                    env,
                }),
            )]
        }
        Instr::Return => match cfg.stack.last() {
            None => vec![(one(), Outcome::Done(proc_.output_bits(cfg.env)))],
            Some(frame) => {
                let caller = &lowered.procs[frame.proc_ as usize];
                let Instr::Call { returns, next, .. } = &caller.code[frame.call_pc as usize] else {
                    unreachable!("frame does not point at a call");
                };
                let mut env = frame.env;
                for (k, slot) in returns.iter().enumerate() {
                    let bit = 1u128 << slot;
                    if (cfg.env >> proc_.output_slot(k)) & 1 == 1 {
                        env |= bit;
                    } else {
                        env &= !bit;
                    }
                }
                let mut stack = cfg.stack.clone();
                stack.pop();
                vec![(
                    one(),
                    Outcome::Next(Config {
                        stack,
                        proc_: frame.proc_,
                        pc: *next,
                        env,
                    }),
                )]
            }
        },
    })
}

/// Steps explored for inputs known to have infinitely many paths.
const INFINITE_PATHS_STEPS: usize = 1_000;

/// True when the configuration graph reachable from `init` has a cycle
/// containing a probabilistic choice, i.e. infinitely many paths. Gives up
/// (returning false) once `max_paths` configurations have been seen.
fn has_probabilistic_cycle(lowered: &Lowered, init: &Config, limits: &RunLimits) -> bool {
    let mut index: HashMap<Config, NodeIndex> = HashMap::new();
    let mut graph: DiGraph<usize, ()> = DiGraph::new();
    let root = graph.add_node(1);
    index.insert(init.clone(), root);
    let mut todo = vec![(init.clone(), root)];
    while let Some((cfg, n)) = todo.pop() {
        let Ok(succ) = step(lowered, &cfg, limits.max_recursion_depth) else {
            continue;
        };
        graph[n] = succ.len();
        for (_, outcome) in succ {
            if let Outcome::Next(c) = outcome {
                let m = match index.get(&c) {
                    Some(&m) => m,
                    None => {
                        if index.len() >= limits.max_paths {
                            return false;
                        }
                        let m = graph.add_node(1);
                        index.insert(c.clone(), m);
                        todo.push((c, m));
                        m
                    }
                };
                graph.update_edge(n, m, ());
            }
        }
    }
    tarjan_scc(&graph).into_iter().any(|scc| {
        let cyclic = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        cyclic && scc.iter().any(|&n| graph[n] > 1)
    })
}

enum RunError {
    Limit(Limit),
    NonTermination(Rational),
}

/// Output distribution of one input valuation, scaled by `mass`. Programs
/// that `may_cycle` are first checked for infinitely many paths.
#[allow(clippy::result_large_err)]
fn run_one(
    lowered: &Lowered,
    env: Env,
    mass: Rational,
    limits: &RunLimits,
    may_cycle: bool,
    out: &mut BTreeMap<Bits, Rational>,
) -> Result<(), (RunError, Rational)> {
    let init = Config {
        stack: Vec::new(),
        proc_: 0,
        pc: lowered.procs[0].entry,
        env,
    };
    let (max_steps, step_limit) = if may_cycle
        && limits.max_steps > INFINITE_PATHS_STEPS
        && has_probabilistic_cycle(lowered, &init, limits)
    {
        (INFINITE_PATHS_STEPS, Limit::InfinitePaths)
    } else {
        (limits.max_steps, Limit::Steps)
    };
    let mut frontier: BTreeMap<Config, Rational> = BTreeMap::from([(init, mass)]);
    // Brent's cycle detection on the (deterministic) frontier sequence.
    let mut checkpoint = frontier.clone();
    let (mut power, mut lam) = (1usize, 0usize);
    let mut steps = 0usize;
    let mut dropped = Rational::zero();
    let mut depth_hit = false;
    while !frontier.is_empty() {
        if steps >= max_steps {
            return Err((
                RunError::Limit(step_limit),
                frontier.values().sum::<Rational>() + dropped,
            ));
        }
        if frontier.len() > limits.max_paths {
            return Err((
                RunError::Limit(Limit::Paths),
                frontier.values().sum::<Rational>() + dropped,
            ));
        }
        let mut next: BTreeMap<Config, Rational> = BTreeMap::new();
        for (cfg, m) in &frontier {
            match step(lowered, cfg, limits.max_recursion_depth) {
                Ok(succ) => {
                    for (w, outcome) in succ {
                        let m = m * w;
                        match outcome {
                            Outcome::Done(o) => *out.entry(o).or_insert_with(Rational::zero) += m,
                            Outcome::Next(c) => *next.entry(c).or_insert_with(Rational::zero) += m,
                        }
                    }
                }
                Err(StepError::Depth) => {
                    depth_hit = true;
                    dropped += m;
                }
            }
        }
        frontier = next;
        steps += 1;
        if !frontier.is_empty() && frontier == checkpoint {
            return Err((
                RunError::NonTermination(frontier.values().sum()),
                Rational::zero(),
            ));
        }
        lam += 1;
        if lam == power {
            checkpoint = frontier.clone();
            power *= 2;
            lam = 0;
        }
    }
    if depth_hit {
        return Err((RunError::Limit(Limit::RecursionDepth), dropped));
    }
    Ok(())
}

/// Exact joint distribution of secret inputs and outputs.
///
/// Each secret with positive prior weight is executed over its full
/// probability tree; `p(s, o) = p(s) * P[s reaches o]`.
pub fn run_paths(
    program: &Program,
    prior: &Prior,
    public: &Bits,
    limits: &RunLimits,
) -> Result<JointDistribution, SemanticsError> {
    check_widths(program, Some(prior.width()), public, None)?;
    let lowered = lower(program);
    let may_cycle = program.class().shape != Shape::LoopFree;
    let mut lower_table: BTreeMap<(Bits, Bits), Rational> = BTreeMap::new();
    let mut unexplored: BTreeMap<Bits, Rational> = BTreeMap::new();
    let mut first_limit = None;
    for (s, ps) in prior.support() {
        let env = main_env(program, &lowered, &s, public);
        let mut dist = BTreeMap::new();
        let result = run_one(&lowered, env, ps, limits, may_cycle, &mut dist);
        for (o, p) in dist {
            lower_table.insert((s, o), p);
        }
        match result {
            Ok(()) => {}
            Err((RunError::NonTermination(stuck_mass), _)) => {
                return Err(SemanticsError::NonTermination {
                    secret: s,
                    stuck_mass,
                })
            }
            Err((RunError::Limit(limit), mass)) => {
                first_limit.get_or_insert(limit);
                unexplored.insert(s, mass);
            }
        }
    }
    if let Some(limit) = first_limit {
        return Err(SemanticsError::LimitExceeded {
            limit,
            partial: Box::new(PartialJoint {
                lower: lower_table,
                unexplored,
            }),
        });
    }
    let output_width = program.outputs().len();
    Ok(JointDistribution::from_entries(
        prior.width(),
        output_width,
        lower_table.into_iter().map(|((s, o), p)| (s, o, p)),
    )
    .expect("terminating exploration conserves probability mass"))
}

/// Whether `observed` is reachable from `env` when every probabilistic
/// choice with both weights positive is treated as a non-deterministic one.
fn reaches(lowered: &Lowered, env: Env, observed: &Bits, limits: &RunLimits) -> Result<bool, Limit> {
    let init = Config {
        stack: Vec::new(),
        proc_: 0,
        pc: lowered.procs[0].entry,
        env,
    };
    let mut seen: HashSet<Config> = HashSet::from([init.clone()]);
    let mut stack = vec![init];
    let mut limit_hit = None;
    while let Some(cfg) = stack.pop() {
        match step(lowered, &cfg, limits.max_recursion_depth) {
            Ok(succ) => {
                for (_, outcome) in succ {
                    match outcome {
                        Outcome::Done(o) if o == *observed => return Ok(true),
                        Outcome::Done(_) => {}
                        Outcome::Next(c) => {
                            if seen.len() >= limits.max_paths {
                                limit_hit = Some(Limit::Paths);
                                continue;
                            }
                            if seen.insert(c.clone()) {
                                stack.push(c);
                            }
                        }
                    }
                }
            }
            Err(StepError::Depth) => limit_hit = Some(Limit::RecursionDepth),
        }
    }
    match limit_hit {
        Some(l) => Err(l),
        None => Ok(false),
    }
}

/// `{ s | some execution from s produces observed with positive probability }`
/// over all `2^k` secret assignments.
pub fn preimage(
    program: &Program,
    observed: &Bits,
    public: &Bits,
    limits: &RunLimits,
) -> Result<BTreeSet<Bits>, SemanticsError> {
    check_widths(program, None, public, Some(observed))?;
    let lowered = lower(program);
    let k = program.secret_inputs().len();
    let mut pre = BTreeSet::new();
    for s in Bits::all(k) {
        let env = main_env(program, &lowered, &s, public);
        if reaches(&lowered, env, observed, limits)
            .map_err(|limit| SemanticsError::SearchLimitExceeded { limit })?
        {
            pre.insert(s);
        }
    }
    Ok(pre)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;
    use crate::syntax::parse_program;

    fn b(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn eval_basics() {
        let x = BoolExpr::var("x");
        let y = BoolExpr::var("y");
        let env = HashMap::from([("x".to_string(), false), ("y".to_string(), true)]);
        assert!(!eval_expr(&BoolExpr::and(x.clone(), BoolExpr::not(x.clone())), &env).unwrap());
        assert!(eval_expr(&BoolExpr::or(x, y), &env).unwrap());
        assert_eq!(
            eval_expr(&BoolExpr::var("z"), &env),
            Err(SemanticsError::UnboundVariable("z".into()))
        );
    }

    #[test]
    fn identity_program_joint() {
        let p = parse_program("proc main in s; out o; o <- s end").unwrap();
        let j = run_paths(&p, &Prior::uniform(1), &Bits::empty(), &RunLimits::default()).unwrap();
        assert_eq!(j.joint(&b("0"), &b("0")), ratio(1, 2));
        assert_eq!(j.joint(&b("1"), &b("1")), ratio(1, 2));
        assert_eq!(j.joint(&b("0"), &b("1")), ratio(0, 1));
    }

    #[test]
    fn choice_weights_multiply() {
        let p = parse_program(
            "proc main in s; out o;
             if s then {o <- 1} [0.81] {o <- 0} else {o <- 1} [0.09] {o <- 0} end end",
        )
        .unwrap();
        let prior = Prior::from_weights(1, [(b("1"), ratio(1, 4)), (b("0"), ratio(3, 4))]).unwrap();
        let j = run_paths(&p, &prior, &Bits::empty(), &RunLimits::default()).unwrap();
        assert_eq!(j.p_output(&b("1")), ratio(27, 100));
        assert_eq!(j.p_output(&b("0")), ratio(73, 100));
    }

    #[test]
    fn deterministic_loop_is_non_terminating() {
        let p = parse_program("proc main in s; out o; while s do o <- !o end end").unwrap();
        let err = run_paths(&p, &Prior::uniform(1), &Bits::empty(), &RunLimits::default()).unwrap_err();
        match err {
            SemanticsError::NonTermination { secret, stuck_mass } => {
                assert_eq!(secret, b("1"));
                assert_eq!(stuck_mass, ratio(1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coin_loop_reports_unexplored_mass() {
        let p = parse_program(
            "proc main in s; out o; local c; c <- true;
             while c do {c <- false} [1/2] {o <- !o} end end",
        )
        .unwrap();
        let limits = RunLimits {
            max_steps: 40,
            ..RunLimits::default()
        };
        let err = run_paths(&p, &Prior::uniform(1), &Bits::empty(), &limits).unwrap_err();
        let SemanticsError::LimitExceeded { limit, partial } = err else {
            panic!("expected limit error");
        };
        assert_eq!(limit, Limit::Steps);
        let slack = partial.total_unexplored();
        assert!(slack > Rational::zero() && slack < ratio(1, 1000));
        // The exact answer (2/3 for o = 0) lies inside the reported interval.
        let (lo, hi) = partial.bounds(&b("0"), &b("0"));
        let exact_share = ratio(1, 2) * ratio(2, 3);
        assert!(lo <= exact_share && exact_share <= hi);
    }

    #[test]
    fn probabilistic_cycles_stop_early() {
        let p = parse_program(
            "proc main in s; out o; local c; c <- true;
             while c do {c <- false} [1/2] {o <- !o} end end",
        )
        .unwrap();
        let err = run_paths(&p, &Prior::uniform(1), &Bits::empty(), &RunLimits::default()).unwrap_err();
        let SemanticsError::LimitExceeded { limit, partial } = err else {
            panic!("expected limit error");
        };
        assert_eq!(limit, Limit::InfinitePaths);
        assert!(partial.total_unexplored() < crate::prob::pow2_neg(100));
    }

    #[test]
    fn recursion_through_calls() {
        let p = parse_program(
            "proc main in s; out o; f(s; o) end
             proc f in a; out r; if a then f(false; r); r <- !r else r <- false end end",
        )
        .unwrap();
        let j = run_paths(&p, &Prior::uniform(1), &Bits::empty(), &RunLimits::default()).unwrap();
        assert_eq!(j.joint(&b("1"), &b("1")), ratio(1, 2));
        assert_eq!(j.joint(&b("0"), &b("0")), ratio(1, 2));
    }

    #[test]
    fn infinite_recursion_hits_depth_limit() {
        let p = parse_program("proc main in s; out o; f(s; o) end proc f in a; out r; f(a; r) end").unwrap();
        let err = run_paths(&p, &Prior::uniform(1), &Bits::empty(), &RunLimits::default()).unwrap_err();
        assert!(matches!(
            err,
            SemanticsError::LimitExceeded {
                limit: Limit::RecursionDepth,
                ..
            }
        ));
    }

    #[test]
    fn preimage_treats_choices_nondeterministically() {
        let p = parse_program(
            "proc main in s; out o;
             if s then {o <- 1} [0.81] {o <- 0} else {o <- 1} [0.09] {o <- 0} end end",
        )
        .unwrap();
        let pre = preimage(&p, &b("1"), &Bits::empty(), &RunLimits::default()).unwrap();
        assert_eq!(pre, BTreeSet::from([b("0"), b("1")]));
    }

    #[test]
    fn preimage_skips_zero_weight_branches() {
        let p = parse_program("proc main in s; out o; if s then {o <- 1} [1] {o <- 0} end end").unwrap();
        let pre = preimage(&p, &b("0"), &Bits::empty(), &RunLimits::default()).unwrap();
        assert_eq!(pre, BTreeSet::from([b("0")]));
    }

    #[test]
    fn width_mismatch_is_reported() {
        let p = parse_program("proc main in s; out o; o <- s end").unwrap();
        let err = preimage(&p, &b("01"), &Bits::empty(), &RunLimits::default()).unwrap_err();
        assert!(matches!(err, SemanticsError::Width { what: "output", .. }));
    }
}
