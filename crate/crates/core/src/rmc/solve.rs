//! Solving reachability equation systems.
//!
//! Unknowns are grouped into strongly connected components of the
//! dependency graph and solved callee-first. A component whose equations
//! are linear once the already-solved unknowns are substituted is solved
//! exactly by elimination; otherwise it is approximated from below by
//! Kleene iteration.

use num_traits::{One, Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::reach::PolySystem;
use super::RmcError;
use crate::prob::{floor_dyadic, pow2_neg, Rational};

/// Extra bits kept by Kleene iterates beyond the requested precision.
const GUARD_BITS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachResult {
    pub values: Vec<Rational>,
    /// Largest componentwise change in the last Kleene iteration (zero when
    /// exact).
    pub delta: Rational,
    pub iterations: usize,
    /// True when every unknown was obtained by exact elimination.
    pub exact: bool,
}

fn sccs(system: &PolySystem) -> Vec<Vec<usize>> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(system.len(), 0);
    let nodes: Vec<_> = (0..system.len()).map(|_| g.add_node(())).collect();
    for (i, eq) in system.equations.iter().enumerate() {
        for m in eq {
            for &v in &m.vars {
                g.update_edge(nodes[i], nodes[v], ());
            }
        }
    }
    // Dependencies come before their dependents.
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .collect()
}

/// Linear form `Σ a_j x_j + b` of the equations of `scc` after substituting
/// solved unknowns, or `None` if some monomial keeps two unknowns of `scc`.
fn linearize(
    system: &PolySystem,
    scc: &[usize],
    pos: &[Option<usize>],
    values: &[Rational],
) -> Option<(Vec<Vec<Rational>>, Vec<Rational>)> {
    let n = scc.len();
    let mut a = vec![vec![Rational::zero(); n]; n];
    let mut b = vec![Rational::zero(); n];
    for (row, &i) in scc.iter().enumerate() {
        for m in &system.equations[i] {
            let mut coeff = m.coeff.clone();
            let mut free = None;
            for &v in &m.vars {
                match pos[v] {
                    Some(col) => {
                        if free.replace(col).is_some() {
                            return None;
                        }
                    }
                    None => coeff *= &values[v],
                }
            }
            match free {
                Some(col) => a[row][col] += coeff,
                None => b[row] += coeff,
            }
        }
    }
    Some((a, b))
}

/// Solves `x = A x + b` exactly; `None` if `I - A` is singular.
fn eliminate(a: Vec<Vec<Rational>>, b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    // Augmented matrix of (I - A) | b.
    let mut m: Vec<Vec<Rational>> = a
        .into_iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, bi))| {
            let mut r: Vec<Rational> = row.into_iter().map(|x| -x).collect();
            r[i] += Rational::one();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let inv = m[col][col].recip();
        for x in m[col][col..].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let (src, dst) = if r < col {
                    let (lo, hi) = m.split_at_mut(col);
                    (&hi[0], &mut lo[r])
                } else {
                    let (lo, hi) = m.split_at_mut(r);
                    (&lo[col], &mut hi[0])
                };
                for k in col..=n {
                    if !src[k].is_zero() {
                        dst[k] -= &f * &src[k];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

/// Kleene iteration on the unknowns of `scc`, other unknowns fixed.
/// Returns (iterations, last delta).
fn kleene_on(
    system: &PolySystem,
    scc: &[usize],
    values: &mut [Rational],
    j: u32,
    max_iterations: usize,
) -> Result<(usize, Rational), RmcError> {
    let stop = pow2_neg(j + 2);
    let bits = j + GUARD_BITS;
    let one = Rational::one();
    for &i in scc {
        values[i] = Rational::zero();
    }
    let mut iterations = 0;
    loop {
        if iterations >= max_iterations {
            return Err(RmcError::IterationBudget(max_iterations));
        }
        iterations += 1;
        let next: Vec<Rational> = scc
            .iter()
            .map(|&i| floor_dyadic(&system.eval(i, values), bits))
            .collect();
        let mut delta = Rational::zero();
        for (&i, x) in scc.iter().zip(next) {
            assert!(x >= values[i], "Kleene iterates must be nondecreasing");
            assert!(x <= one, "Kleene iterates must stay below 1");
            let d = &x - &values[i];
            if d > delta {
                delta = d;
            }
            values[i] = x;
        }
        if delta < stop {
            return Ok((iterations, delta));
        }
    }
}

/// Exact solution of a system whose equations all have degree ≤ 1.
pub fn solve_linear(system: &PolySystem) -> Result<ReachResult, RmcError> {
    if system.degree() > 1 {
        return Err(RmcError::NotLinear);
    }
    solve_with(system, None, usize::MAX)
}

/// Kleene iteration from zero on the whole system, stopping once no
/// unknown moves by `2^-(j+2)` or more. Iterates are lower bounds of the
/// least fixpoint; the stopping rule does not certify `j` correct bits.
pub fn solve_kleene(system: &PolySystem, j: u32, max_iterations: usize) -> Result<ReachResult, RmcError> {
    let mut values = vec![Rational::zero(); system.len()];
    let all: Vec<usize> = (0..system.len()).collect();
    let (iterations, delta) = if all.is_empty() {
        (0, Rational::zero())
    } else {
        kleene_on(system, &all, &mut values, j, max_iterations)?
    };
    Ok(ReachResult {
        values,
        delta,
        iterations,
        exact: false,
    })
}

/// Exact elimination wherever possible, Kleene iteration elsewhere.
pub fn solve(system: &PolySystem, j: u32, max_iterations: usize) -> Result<ReachResult, RmcError> {
    solve_with(system, Some(j), max_iterations)
}

fn solve_with(system: &PolySystem, j: Option<u32>, max_iterations: usize) -> Result<ReachResult, RmcError> {
    let mut values = vec![Rational::zero(); system.len()];
    let mut pos: Vec<Option<usize>> = vec![None; system.len()];
    let mut exact = true;
    let mut delta = Rational::zero();
    let mut iterations = 0;
    let one = Rational::one();
    for scc in sccs(system) {
        for (k, &i) in scc.iter().enumerate() {
            pos[i] = Some(k);
        }
        let solved = linearize(system, &scc, &pos, &values)
            .and_then(|(a, b)| eliminate(a, b))
            .filter(|xs| xs.iter().all(|x| !x.is_negative() && *x <= one));
        match solved {
            Some(xs) => {
                for (&i, x) in scc.iter().zip(xs) {
                    values[i] = x;
                }
            }
            None => {
                let Some(j) = j else {
                    return Err(RmcError::Singular);
                };
                exact = false;
                let (its, d) = kleene_on(system, &scc, &mut values, j, max_iterations)?;
                iterations += its;
                if d > delta {
                    delta = d;
                }
            }
        }
        for &i in &scc {
            pos[i] = None;
        }
    }
    Ok(ReachResult {
        values,
        delta,
        iterations,
        exact,
    })
}
