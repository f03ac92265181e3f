//! Projected model counting by blocking clauses.

mod solver;

use num_bigint::BigUint;
use num_traits::{One, Zero};

pub use solver::{Solve, Solver};

use crate::cnf::CnfQuery;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CounterError {
    #[error("conflict budget of {0} exhausted")]
    ConflictBudget(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountLimits {
    /// Conflicts allowed per satisfiability call.
    pub max_conflicts: Option<u64>,
    /// Projected models to find before giving up.
    pub max_models: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Vec<bool>),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Decides satisfiability of the query's clauses.
pub fn sat(query: &CnfQuery, max_conflicts: Option<u64>) -> Result<SatResult, CounterError> {
    let mut s = load(query);
    match s.solve(max_conflicts) {
        Solve::Sat => Ok(SatResult::Sat(s.model())),
        Solve::Unsat => Ok(SatResult::Unsat),
        Solve::Budget => Err(CounterError::ConflictBudget(max_conflicts.unwrap_or(0))),
    }
}

fn load(query: &CnfQuery) -> Solver {
    let n = query.num_vars() as usize;
    let mut occurrences = vec![0usize; n];
    for c in query.clauses() {
        for l in c {
            occurrences[l.unsigned_abs() as usize - 1] += 1;
        }
    }
    let mut first: Vec<u32> = query.projection.clone();
    first.sort_by_key(|v| std::cmp::Reverse(occurrences[*v as usize - 1]));
    let in_projection: std::collections::HashSet<u32> = first.iter().copied().collect();
    let mut rest: Vec<u32> = (1..=n as u32).filter(|v| !in_projection.contains(v)).collect();
    rest.sort_by_key(|v| std::cmp::Reverse(occurrences[*v as usize - 1]));
    first.extend(rest);
    let mut s = Solver::new(n);
    s.set_order(first);
    for c in query.clauses() {
        if !s.add_clause(c) {
            break;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Enumerated {
    /// Values of the projection variables, in projection order.
    Model(Vec<bool>),
    /// The model or conflict budget ran out; more models may exist.
    Truncated,
}

/// Streams distinct projected models, blocking each one after it is found.
pub struct ProjectedModels {
    solver: Solver,
    projection: Vec<u32>,
    limits: CountLimits,
    found: u64,
    done: bool,
}

impl Iterator for ProjectedModels {
    type Item = Enumerated;

    fn next(&mut self) -> Option<Enumerated> {
        if self.done {
            return None;
        }
        if self.limits.max_models.is_some_and(|m| self.found >= m) {
            self.done = true;
            return Some(Enumerated::Truncated);
        }
        match self.solver.solve(self.limits.max_conflicts) {
            Solve::Unsat => {
                self.done = true;
                None
            }
            Solve::Budget => {
                self.done = true;
                Some(Enumerated::Truncated)
            }
            Solve::Sat => {
                let cube: Vec<bool> = self
                    .projection
                    .iter()
                    .map(|&v| self.solver.model_value(v))
                    .collect();
                let block: Vec<i32> = self
                    .projection
                    .iter()
                    .zip(&cube)
                    .map(|(&v, &b)| if b { -(v as i32) } else { v as i32 })
                    .collect();
                self.found += 1;
                if !self.solver.add_clause(&block) {
                    self.done = true;
                }
                Some(Enumerated::Model(cube))
            }
        }
    }
}

pub fn enumerate_projected(query: &CnfQuery, limits: CountLimits) -> ProjectedModels {
    ProjectedModels {
        solver: load(query),
        projection: query.projection.clone(),
        limits,
        found: 0,
        done: false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountResult {
    pub count: BigUint,
    pub models: Option<Vec<Vec<bool>>>,
    /// False when a budget cut enumeration short; `count` is then a lower
    /// bound.
    pub exhausted: bool,
}

pub fn count_projected(query: &CnfQuery, limits: CountLimits, keep_models: bool) -> CountResult {
    let mut count = BigUint::zero();
    let mut models = keep_models.then(Vec::new);
    let mut exhausted = true;
    for item in enumerate_projected(query, limits) {
        match item {
            Enumerated::Model(m) => {
                count += BigUint::one();
                if let Some(ms) = models.as_mut() {
                    ms.push(m);
                }
            }
            Enumerated::Truncated => exhausted = false,
        }
    }
    CountResult {
        count,
        models,
        exhausted,
    }
}

/// Truth-table projected count; exponential, for testing small formulas.
pub fn brute_force_count(num_vars: u32, clauses: &[Vec<i32>], projection: &[u32]) -> u64 {
    assert!(num_vars <= 24, "brute force limited to 24 variables");
    let mut seen = std::collections::HashSet::new();
    for a in 0u64..(1 << num_vars) {
        let val = |l: i32| ((a >> (l.unsigned_abs() - 1)) & 1 == 1) == (l > 0);
        if clauses.iter().all(|c| c.iter().any(|&l| val(l))) {
            let key: Vec<bool> = projection.iter().map(|&v| (a >> (v - 1)) & 1 == 1).collect();
            seen.insert(key);
        }
    }
    seen.len() as u64
}
