//! Qualitative reachability and the reachability equation system.
//!
//! For a location `u` and exit `ex` of the same component, `q(u, ex)` is the
//! probability that a run started at `u` with an empty call stack reaches
//! `ex` with an empty stack. Unfolding the global semantics one step:
//!
//! * an exit reaches itself: `q(ex, ex) = 1`;
//! * a plain step `u -p-> v` contributes `p * q(v, ex)`;
//! * entering box `b` at entry `en` first runs the callee to one of its
//!   exits `ex'` (probability `q(en, ex')`), then continues from the return
//!   port: `q((b, en), ex) = Σ_ex' q(en, ex') * q((b, ex'), ex)`.
//!
//! The least non-negative solution of these equations is `q`.

use std::collections::{HashMap, HashSet, VecDeque};

use num_traits::Zero;

use super::model::{Loc, NodeId, Rmc};
use crate::prob::Rational;

/// A reachability fact `(component, location, exit)`.
pub type Pair = (usize, Loc, NodeId);

/// `{ (u, ex) | q(u, ex) > 0 }` as a Boolean least fixpoint.
#[derive(Debug, Clone, Default)]
pub struct Reach {
    pub pairs: HashSet<Pair>,
}

impl Reach {
    pub fn contains(&self, comp: usize, loc: Loc, exit: NodeId) -> bool {
        self.pairs.contains(&(comp, loc, exit))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

struct Index {
    /// Per component: destination node -> sources stepping into it.
    preds: Vec<HashMap<NodeId, Vec<Loc>>>,
    /// (callee, entry) -> boxes entering it, as (caller, box).
    box_by_entry: HashMap<(usize, NodeId), Vec<(usize, usize)>>,
}

fn index(rmc: &Rmc) -> Index {
    let mut preds = vec![HashMap::new(); rmc.components.len()];
    let mut box_by_entry: HashMap<(usize, NodeId), Vec<(usize, usize)>> = HashMap::new();
    for (ci, comp) in rmc.components.iter().enumerate() {
        for t in &comp.transitions {
            if let Loc::Node(v) = t.dst {
                if !t.prob.is_zero() {
                    preds[ci].entry(v).or_insert_with(Vec::new).push(t.src);
                }
            }
        }
        for (b, info) in comp.boxes.iter().enumerate() {
            box_by_entry
                .entry((info.callee, info.entry))
                .or_default()
                .push((ci, b));
        }
    }
    Index { preds, box_by_entry }
}

/// Smallest relation closed under the three rules of the module docs.
pub fn qualitative_reach(rmc: &Rmc) -> Reach {
    let idx = index(rmc);
    let mut reach = Reach::default();
    // (caller, box, callee exit) -> caller exits reachable from that return port
    let mut ret_facts: HashMap<(usize, usize, NodeId), Vec<NodeId>> = HashMap::new();
    let mut queue: VecDeque<Pair> = VecDeque::new();
    let push = |reach: &mut Reach, queue: &mut VecDeque<Pair>, p: Pair| {
        if reach.pairs.insert(p) {
            queue.push_back(p);
        }
    };
    for (ci, comp) in rmc.components.iter().enumerate() {
        for &ex in &comp.exits {
            push(&mut reach, &mut queue, (ci, Loc::Node(ex), ex));
        }
    }
    while let Some((c, loc, ex)) = queue.pop_front() {
        match loc {
            Loc::Node(v) => {
                if let Some(srcs) = idx.preds[c].get(&v) {
                    for &src in srcs {
                        push(&mut reach, &mut queue, (c, src, ex));
                    }
                }
                // `v` may be an entry: returns from boxes calling it resume.
                if let Some(boxes) = idx.box_by_entry.get(&(c, v)) {
                    for &(caller, b) in boxes {
                        if let Some(cont) = ret_facts.get(&(caller, b, ex)) {
                            let call_node = rmc.components[caller].boxes[b].call_node;
                            for &ex2 in cont.clone().iter() {
                                push(&mut reach, &mut queue, (caller, Loc::Node(call_node), ex2));
                            }
                        }
                    }
                }
            }
            Loc::Ret { box_, exit } => {
                ret_facts.entry((c, box_, exit)).or_default().push(ex);
                let info = &rmc.components[c].boxes[box_];
                if reach.contains(info.callee, Loc::Node(info.entry), exit) {
                    push(&mut reach, &mut queue, (c, Loc::Node(info.call_node), ex));
                }
            }
            Loc::Call { .. } => unreachable!("call ports are never sources"),
        }
    }
    reach
}

/// `coeff * Π vars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: Rational,
    pub vars: Vec<usize>,
}

/// `x_i = Σ monomials_i` with non-negative coefficients and degree ≤ 2.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolySystem {
    pub equations: Vec<Vec<Monomial>>,
}

impl PolySystem {
    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.equations
            .iter()
            .flatten()
            .map(|m| m.vars.len())
            .max()
            .unwrap_or(0)
    }

    /// Right-hand side of equation `i` at `x`.
    pub fn eval(&self, i: usize, x: &[Rational]) -> Rational {
        self.equations[i]
            .iter()
            .map(|m| m.vars.iter().fold(m.coeff.clone(), |acc, &v| acc * &x[v]))
            .sum()
    }
}

/// The equation system restricted to pairs with positive reachability, with
/// the pair each unknown stands for.
#[derive(Debug, Clone, Default)]
pub struct Equations {
    pub system: PolySystem,
    pub keys: Vec<Pair>,
    pub index: HashMap<Pair, usize>,
}

impl Equations {
    pub fn unknown(&self, comp: usize, loc: Loc, exit: NodeId) -> Option<usize> {
        self.index.get(&(comp, loc, exit)).copied()
    }
}

/// One unknown per `(u, ex)` in `reach` other than the trivial `(ex, ex)`.
pub fn build_equations(rmc: &Rmc, reach: &Reach) -> Equations {
    let mut keys: Vec<Pair> = reach
        .pairs
        .iter()
        .filter(|(_, loc, ex)| *loc != Loc::Node(*ex))
        .copied()
        .collect();
    keys.sort();
    let index: HashMap<Pair, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut out: Vec<HashMap<Loc, Vec<(Rational, Loc)>>> = vec![HashMap::new(); rmc.components.len()];
    for (ci, comp) in rmc.components.iter().enumerate() {
        for t in &comp.transitions {
            out[ci].entry(t.src).or_default().push((t.prob.clone(), t.dst));
        }
    }
    let mut equations = Vec::with_capacity(keys.len());
    for &(c, u, ex) in &keys {
        let mut eq = Vec::new();
        for (p, dst) in out[c].get(&u).into_iter().flatten() {
            match *dst {
                Loc::Node(v) if v == ex => eq.push(Monomial {
                    coeff: p.clone(),
                    vars: vec![],
                }),
                Loc::Node(v) => {
                    if let Some(&i) = index.get(&(c, Loc::Node(v), ex)) {
                        eq.push(Monomial {
                            coeff: p.clone(),
                            vars: vec![i],
                        });
                    }
                }
                Loc::Call { box_, entry } => {
                    let callee = rmc.components[c].boxes[box_].callee;
                    for &ex2 in &rmc.components[callee].exits {
                        let inner = index.get(&(callee, Loc::Node(entry), ex2));
                        let cont = index.get(&(c, Loc::Ret { box_, exit: ex2 }, ex));
                        if let (Some(&a), Some(&b)) = (inner, cont) {
                            eq.push(Monomial {
                                coeff: p.clone(),
                                vars: vec![a, b],
                            });
                        }
                    }
                }
                Loc::Ret { .. } => unreachable!("return ports are never destinations"),
            }
        }
        equations.push(eq);
    }
    Equations {
        system: PolySystem { equations },
        keys,
        index,
    }
}
