//! End-to-end analysis of one observation with one or more engines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::bits::Bits;
use crate::cnf::{self, compile, unroll, CircuitFormula, CompileError, UnrollError};
use crate::counter::{self, CountLimits, CounterError, Enumerated};
use crate::leakage::{self, LeakageError, LeakageReport, Measure, VulnerabilityMode};
use crate::prob::{format_rational, pow2_neg, self_information, Rational};
use crate::rmc::{self, RmcError, RmcLimits};
use crate::semantics::{self, JointDistribution, JointError, Limit, Prior, RunLimits, SemanticsError};
use crate::syntax::{classify, has_recursion, Command, Program, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Oracle,
    CnfCount,
    Rmc,
    All,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Oracle => "oracle",
            Engine::CnfCount => "cnf-count",
            Engine::Rmc => "rmc",
            Engine::All => "all",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(Engine::Oracle),
            "cnf-count" | "cnf" => Ok(Engine::CnfCount),
            "rmc" => Ok(Engine::Rmc),
            "all" => Ok(Engine::All),
            _ => Err(format!(
                "unknown engine `{s}` (expected oracle, cnf-count, rmc or all)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisLimits {
    pub run: RunLimits,
    pub count: CountLimits,
    pub rmc: RmcLimits,
}

#[derive(Debug, Clone)]
pub struct AnalysisRequest {
    pub observed: Bits,
    pub public: Bits,
    pub prior: Prior,
    pub engine: Engine,
    pub unroll: Option<usize>,
    /// Bits of precision for Kleene iteration on recursive programs.
    pub precision: u32,
    pub measures: Vec<Measure>,
    /// Secret for BEL and posterior vulnerability; when absent BEL is
    /// reported for every secret in the pre-image.
    pub secret: Option<Bits>,
    pub limits: AnalysisLimits,
}

impl AnalysisRequest {
    pub fn new(observed: Bits, prior: Prior) -> Self {
        AnalysisRequest {
            observed,
            public: Bits::empty(),
            prior,
            engine: Engine::All,
            unroll: None,
            precision: 20,
            measures: vec![Measure::Qif1, Measure::Qif2],
            secret: None,
            limits: AnalysisLimits::default(),
        }
    }
}

/// Broad failure categories, one per CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Inconsistent,
    Disagreement,
    Limit,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error("engines disagree on {what}: {left_engine} gives {left}, {right_engine} gives {right}")]
    Disagreement {
        what: String,
        left_engine: Engine,
        left: String,
        right_engine: Engine,
        right: String,
    },
    #[error("engine {engine} does not apply: {reason}")]
    Unsupported { engine: Engine, reason: String },
    #[error("unrolling bound {0} is too small: some input still runs past it")]
    UnrollTooSmall(usize),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Unroll(#[from] UnrollError),
    #[error(transparent)]
    Counter(#[from] CounterError),
    #[error("projected model enumeration was cut short by its budget")]
    CountTruncated,
    #[error(transparent)]
    Rmc(#[from] RmcError),
    #[error(transparent)]
    Joint(#[from] JointError),
}

impl AnalysisError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            AnalysisError::Leakage(LeakageError::InconsistentObservation(_)) => ErrorKind::Inconsistent,
            AnalysisError::Rmc(RmcError::Leakage(LeakageError::InconsistentObservation(_))) => {
                ErrorKind::Inconsistent
            }
            AnalysisError::Disagreement { .. } => ErrorKind::Disagreement,
            AnalysisError::UnrollTooSmall(_)
            | AnalysisError::Counter(_)
            | AnalysisError::CountTruncated
            | AnalysisError::Semantics(
                SemanticsError::LimitExceeded { .. }
                | SemanticsError::SearchLimitExceeded { .. }
                | SemanticsError::NonTermination { .. },
            )
            | AnalysisError::Rmc(
                RmcError::LocationBudget(_)
                | RmcError::IterationBudget(_)
                | RmcError::TooManySecrets(_)
                | RmcError::Semantics(SemanticsError::LimitExceeded { .. }),
            ) => ErrorKind::Limit,
            _ => ErrorKind::Usage,
        }
    }
}

/// What one engine found for the observation.
#[derive(Debug, Clone)]
pub struct EngineOutcome {
    pub engine: Engine,
    pub preimage: BTreeSet<Bits>,
    /// `p(o)`; a lower bound when `exact` is false.
    pub p_output: Rational,
    pub exact: bool,
    /// Last Kleene change, for inexact RMC results.
    pub delta: Option<Rational>,
    pub joint: Option<JointDistribution>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineSummary {
    pub engine: Engine,
    pub preimage_size: usize,
    pub p_output: String,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub class: String,
    pub observed: Bits,
    pub public: Bits,
    pub engines: Vec<EngineSummary>,
    /// Engines that were requested through `all` but do not apply.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped: BTreeMap<String, String>,
    pub preimage_size: usize,
    pub measures: Vec<LeakageReport>,
    /// Seconds per engine.
    pub timings: BTreeMap<String, f64>,
}

impl AnalysisReport {
    pub fn measure(&self, m: Measure) -> Option<&LeakageReport> {
        self.measures.iter().find(|r| r.measure == m)
    }
}

fn contains_loop(program: &Program) -> bool {
    program
        .procedures
        .iter()
        .any(|p| p.body.any(&|c| matches!(c, Command::While { .. })))
}

/// Why the CNF pipeline cannot handle `program`, if it cannot.
pub fn cnf_unsupported(program: &Program, unroll: Option<usize>) -> Option<String> {
    if has_recursion(program) {
        return Some("recursive procedures cannot be compiled; use the rmc engine".into());
    }
    if contains_loop(program) {
        if unroll.is_none() {
            return Some("program contains while loops; pass an unrolling bound".into());
        }
        if classify(program).shape != Shape::While {
            return Some("loops can only be unrolled in single-procedure programs".into());
        }
    }
    None
}

/// Compiles `program` (unrolled if needed), refusing when the bound cuts
/// some run under `public` short.
pub fn compile_for_counting(
    program: &Program,
    public: &Bits,
    bound: Option<usize>,
    limits: &CountLimits,
) -> Result<CircuitFormula, AnalysisError> {
    let formula = match bound {
        Some(k) if contains_loop(program) => {
            let unrolled = unroll(program, k)?;
            let f = compile(&unrolled)?;
            if let Some(q) = cnf::unwind_query(&f, public) {
                if counter::sat(&q, limits.max_conflicts)?.is_sat() {
                    return Err(AnalysisError::UnrollTooSmall(k));
                }
            }
            f
        }
        _ => compile(program)?,
    };
    Ok(formula)
}

fn enumerate(query: &cnf::CnfQuery, limits: &CountLimits) -> Result<Vec<Vec<bool>>, AnalysisError> {
    let mut models = Vec::new();
    for item in counter::enumerate_projected(query, *limits) {
        match item {
            Enumerated::Model(m) => models.push(m),
            Enumerated::Truncated => return Err(AnalysisError::CountTruncated),
        }
    }
    Ok(models)
}

/// Pre-image as the projected models of the observed formula.
pub fn preimage_via_cnf(
    formula: &CircuitFormula,
    observed: &Bits,
    public: &Bits,
    limits: &CountLimits,
) -> Result<BTreeSet<Bits>, AnalysisError> {
    let q = cnf::observe(formula, observed, public);
    Ok(enumerate(&q, limits)?
        .iter()
        .map(|m| Bits::from_bools(m))
        .collect())
}

/// Probability of the path encoded by selector/activity pairs.
fn path_weight(formula: &CircuitFormula, pairs: &[bool]) -> Rational {
    formula
        .choices
        .iter()
        .zip(pairs.chunks(2))
        .filter(|(_, va)| va[1])
        .map(|(site, va)| {
            if va[0] {
                site.prob.clone()
            } else {
                Rational::one() - &site.prob
            }
        })
        .product()
}

/// `p(o)` as the weighted count of execution paths reaching `observed`.
pub fn p_output_via_cnf(
    formula: &CircuitFormula,
    prior: &Prior,
    observed: &Bits,
    public: &Bits,
    limits: &CountLimits,
) -> Result<Rational, AnalysisError> {
    let q = cnf::observe_paths(formula, observed, public);
    let k = formula.inputs.len();
    Ok(enumerate(&q, limits)?
        .iter()
        .map(|m| prior.weight(&Bits::from_bools(&m[..k])) * path_weight(formula, &m[k..]))
        .sum())
}

/// The full joint distribution from weighted path enumeration.
pub fn joint_via_cnf(
    formula: &CircuitFormula,
    prior: &Prior,
    public: &Bits,
    limits: &CountLimits,
) -> Result<JointDistribution, AnalysisError> {
    let q = cnf::observe_joint(formula, public);
    let k = formula.inputs.len();
    let n = formula.outputs.len();
    let mut entries = Vec::new();
    for m in enumerate(&q, limits)? {
        let s = Bits::from_bools(&m[..k]);
        let w = prior.weight(&s);
        if w.is_zero() {
            continue;
        }
        let o = Bits::from_bools(&m[k..k + n]);
        entries.push((s, o, w * path_weight(formula, &m[k + n..])));
    }
    Ok(JointDistribution::from_entries(k, n, entries)?)
}

fn needs_joint(measures: &[Measure]) -> bool {
    measures
        .iter()
        .any(|m| !matches!(m, Measure::Qif1 | Measure::Qif2))
}

fn run_engine(
    engine: Engine,
    program: &Program,
    req: &AnalysisRequest,
) -> Result<EngineOutcome, AnalysisError> {
    let start = Instant::now();
    let want_joint = needs_joint(&req.measures);
    let mut outcome = match engine {
        Engine::Oracle => {
            let joint = semantics::run_paths(program, &req.prior, &req.public, &req.limits.run)?;
            let preimage = semantics::preimage(program, &req.observed, &req.public, &req.limits.run)?;
            EngineOutcome {
                engine,
                preimage,
                p_output: joint.p_output(&req.observed),
                exact: true,
                delta: None,
                joint: Some(joint),
                seconds: 0.0,
            }
        }
        Engine::CnfCount => {
            if let Some(reason) = cnf_unsupported(program, req.unroll) {
                return Err(AnalysisError::Unsupported { engine, reason });
            }
            semantics::check_widths(program, Some(req.prior.width()), &req.public, Some(&req.observed))?;
            let limits = &req.limits.count;
            let formula = compile_for_counting(program, &req.public, req.unroll, limits)?;
            let preimage = preimage_via_cnf(&formula, &req.observed, &req.public, limits)?;
            let p_output = p_output_via_cnf(&formula, &req.prior, &req.observed, &req.public, limits)?;
            let joint = if want_joint {
                Some(joint_via_cnf(&formula, &req.prior, &req.public, limits)?)
            } else {
                None
            };
            EngineOutcome {
                engine,
                preimage,
                p_output,
                exact: true,
                delta: None,
                joint,
                seconds: 0.0,
            }
        }
        Engine::Rmc => {
            semantics::check_widths(program, Some(req.prior.width()), &req.public, Some(&req.observed))?;
            let k = program.secret_inputs().len();
            let sol = rmc::solve_program(program, &req.public, Bits::all(k), req.precision, &req.limits.rmc)?;
            let preimage = sol.preimage(&req.observed);
            let p_output = req
                .prior
                .support()
                .map(|(s, w)| w * sol.likelihood(&s, &req.observed))
                .sum();
            let exact = sol.result.exact;
            let joint = if want_joint && exact {
                let entries = req.prior.support().flat_map(|(s, w)| {
                    sol.outputs_from(&s)
                        .into_iter()
                        .filter(|(_, p)| !p.is_zero())
                        .map(move |(o, p)| (s, o, &w * p))
                        .collect::<Vec<_>>()
                });
                Some(JointDistribution::from_entries(
                    k,
                    program.outputs().len(),
                    entries,
                )?)
            } else {
                None
            };
            EngineOutcome {
                engine,
                preimage,
                p_output,
                exact,
                delta: (!exact).then(|| sol.result.delta.clone()),
                joint,
                seconds: 0.0,
            }
        }
        Engine::All => unreachable!("`all` is expanded before running engines"),
    };
    outcome.seconds = start.elapsed().as_secs_f64();
    Ok(outcome)
}

fn disagreement(
    what: &str,
    a: &EngineOutcome,
    left: String,
    b: &EngineOutcome,
    right: String,
) -> AnalysisError {
    AnalysisError::Disagreement {
        what: what.to_string(),
        left_engine: a.engine,
        left,
        right_engine: b.engine,
        right,
    }
}

fn show_set(set: &BTreeSet<Bits>) -> String {
    let items: Vec<String> = set.iter().map(Bits::to_string).collect();
    format!("{{{}}}", items.join(", "))
}

/// Exact equality of pre-images, output probabilities and joints; an
/// inexact result must lie below the exact one by at most `2^-precision`.
fn cross_check(outcomes: &[EngineOutcome], observed: &Bits, precision: u32) -> Result<(), AnalysisError> {
    let Some((first, rest)) = outcomes.split_first() else {
        return Ok(());
    };
    for other in rest {
        if other.preimage != first.preimage {
            return Err(disagreement(
                &format!("the pre-image of {observed}"),
                first,
                show_set(&first.preimage),
                other,
                show_set(&other.preimage),
            ));
        }
    }
    let exact: Vec<&EngineOutcome> = outcomes.iter().filter(|o| o.exact).collect();
    if let Some((base, others)) = exact.split_first() {
        for other in others {
            if other.p_output != base.p_output {
                return Err(disagreement(
                    &format!("p({observed})"),
                    base,
                    format_rational(&base.p_output),
                    other,
                    format_rational(&other.p_output),
                ));
            }
        }
        for approx in outcomes.iter().filter(|o| !o.exact) {
            let gap = &base.p_output - &approx.p_output;
            if gap.is_negative() || gap > pow2_neg(precision) {
                return Err(disagreement(
                    &format!("p({observed}) beyond the approximation tolerance"),
                    base,
                    format_rational(&base.p_output),
                    approx,
                    format_rational(&approx.p_output),
                ));
            }
        }
    }
    let joints: Vec<(&EngineOutcome, &JointDistribution)> = outcomes
        .iter()
        .filter_map(|o| o.joint.as_ref().map(|j| (o, j)))
        .collect();
    if let Some(((base, bj), others)) = joints.split_first() {
        for (other, oj) in others {
            if bj != oj {
                let (s, o) = bj
                    .entries()
                    .chain(oj.entries())
                    .map(|(s, o, _)| (*s, *o))
                    .find(|(s, o)| bj.joint(s, o) != oj.joint(s, o))
                    .expect("distinct joints differ somewhere");
                return Err(disagreement(
                    &format!("p({s}, {o})"),
                    base,
                    format_rational(&bj.joint(&s, &o)),
                    other,
                    format_rational(&oj.joint(&s, &o)),
                ));
            }
        }
    }
    Ok(())
}

fn measures_from(
    req: &AnalysisRequest,
    primary: &EngineOutcome,
    joint: Option<&JointDistribution>,
) -> Result<Vec<LeakageReport>, AnalysisError> {
    let o = &req.observed;
    let mut out = Vec::new();
    for &m in &req.measures {
        match m {
            Measure::Qif1 => out.push(leakage::qif1(&req.prior, &primary.preimage, o)?),
            Measure::Qif2 => out.push(leakage::qif2_from_core(primary.p_output.clone(), o)?),
            _ => {
                let Some(joint) = joint else {
                    return Err(AnalysisError::Unsupported {
                        engine: primary.engine,
                        reason: format!("{m} needs an exact joint distribution"),
                    });
                };
                match m {
                    Measure::QifDyn => out.push(leakage::qif_dyn(joint, o)?),
                    Measure::StaticQif => out.push(leakage::static_qif(joint)),
                    Measure::Bel => {
                        if joint.p_output(o).is_zero() {
                            return Err(LeakageError::InconsistentObservation(*o).into());
                        }
                        match &req.secret {
                            Some(s) => out.push(leakage::bel(joint, s, o)?),
                            None => {
                                for s in joint.preimage(o) {
                                    out.push(leakage::bel(joint, &s, o)?);
                                }
                            }
                        }
                    }
                    Measure::PosteriorV => {
                        let v = leakage::posterior_vulnerability(
                            joint,
                            o,
                            req.secret.as_ref(),
                            VulnerabilityMode::Qif2,
                        )?;
                        out.push(LeakageReport {
                            measure: m,
                            bits: self_information(&v),
                            core: Some(v),
                            observed: Some(*o),
                            secret: req.secret,
                        });
                    }
                    Measure::Qif1 | Measure::Qif2 => unreachable!(),
                }
            }
        }
    }
    Ok(out)
}

/// Failures meaning "this engine cannot handle this program" rather than
/// "this analysis failed"; under [`Engine::All`] such engines are skipped.
fn structurally_inapplicable(err: &AnalysisError) -> bool {
    matches!(
        err,
        AnalysisError::UnrollTooSmall(_)
            | AnalysisError::Semantics(SemanticsError::LimitExceeded {
                limit: Limit::InfinitePaths,
                ..
            })
    )
}

/// Runs the requested engine(s) on one observation and assembles the
/// report. With [`Engine::All`], every applicable engine runs on its own
/// thread and their results must agree.
pub fn analyze(program: &Program, req: &AnalysisRequest) -> Result<AnalysisReport, AnalysisError> {
    let mut skipped = BTreeMap::new();
    let engines: Vec<Engine> = match req.engine {
        Engine::All => {
            let mut es = vec![Engine::Oracle];
            match cnf_unsupported(program, req.unroll) {
                None => es.push(Engine::CnfCount),
                Some(reason) => {
                    skipped.insert(Engine::CnfCount.name().to_string(), reason);
                }
            }
            es.push(Engine::Rmc);
            es
        }
        e => vec![e],
    };
    let results: Vec<Result<EngineOutcome, AnalysisError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = engines
            .iter()
            .map(|&e| scope.spawn(move || run_engine(e, program, req)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("engine thread panicked"))
            .collect()
    });
    let mut outcomes = Vec::new();
    for (e, r) in engines.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(err) if req.engine == Engine::All && structurally_inapplicable(&err) => {
                skipped.insert(e.name().to_string(), err.to_string());
            }
            Err(err) => return Err(err),
        }
    }
    if outcomes.is_empty() {
        return Err(AnalysisError::Unsupported {
            engine: Engine::All,
            reason: skipped.into_values().collect::<Vec<_>>().join("; "),
        });
    }
    cross_check(&outcomes, &req.observed, req.precision)?;
    let primary = &outcomes[0];
    let joint = outcomes.iter().find_map(|o| o.joint.as_ref());
    let measures = measures_from(req, primary, joint)?;
    Ok(AnalysisReport {
        class: classify(program).to_string(),
        observed: req.observed,
        public: req.public,
        engines: outcomes
            .iter()
            .map(|o| EngineSummary {
                engine: o.engine,
                preimage_size: o.preimage.len(),
                p_output: format_rational(&o.p_output),
                exact: o.exact,
                delta: o.delta.as_ref().map(format_rational),
            })
            .collect(),
        skipped,
        preimage_size: primary.preimage.len(),
        measures,
        timings: outcomes
            .iter()
            .map(|o| (o.engine.name().to_string(), o.seconds))
            .collect(),
    })
}
