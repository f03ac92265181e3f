//! Conflict-driven clause-learning SAT core.
//!
//! Two watched literals per clause, first-UIP learning, Luby restarts and
//! phase saving. Decisions follow a static order supplied by the caller so
//! that projected counting can decide projection variables first.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Lit(u32);

impl Lit {
    fn from_dimacs(l: i32) -> Lit {
        let v = l.unsigned_abs() - 1;
        Lit(2 * v + (l < 0) as u32)
    }

    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    fn negative(self) -> bool {
        self.0 & 1 == 1
    }

    fn neg(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    fn idx(self) -> usize {
        self.0 as usize
    }
}

const UNASSIGNED: i8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solve {
    Sat,
    Unsat,
    Budget,
}

#[derive(Debug, Clone)]
pub struct Solver {
    num_vars: usize,
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<usize>>,
    /// Per variable: 1 true, -1 false, 0 unassigned.
    value: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    phase: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    order: Vec<usize>,
    seen: Vec<bool>,
    unsat: bool,
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
}

fn luby(mut i: u64) -> u64 {
    // Index from 1: 1 1 2 1 1 2 4 ...
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size;
    }
    1 << seq
}

impl Solver {
    pub fn new(num_vars: usize) -> Self {
        Solver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            value: vec![UNASSIGNED; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            phase: vec![false; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            order: (0..num_vars).collect(),
            seen: vec![false; num_vars],
            unsat: false,
            conflicts: 0,
            decisions: 0,
            propagations: 0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Decision order over 1-based variables; variables not listed are
    /// appended in index order.
    pub fn set_order(&mut self, first: impl IntoIterator<Item = u32>) {
        let mut placed = vec![false; self.num_vars];
        let mut order = Vec::with_capacity(self.num_vars);
        for v in first {
            let v = v as usize - 1;
            if !placed[v] {
                placed[v] = true;
                order.push(v);
            }
        }
        order.extend((0..self.num_vars).filter(|&v| !placed[v]));
        self.order = order;
    }

    fn lit_value(&self, l: Lit) -> i8 {
        let v = self.value[l.var()];
        if l.negative() {
            -v
        } else {
            v
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, l: Lit, reason: Option<usize>) {
        let v = l.var();
        self.value[v] = if l.negative() { -1 } else { 1 };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn backtrack(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for l in self.trail.drain(lim..) {
            let v = l.var();
            self.phase[v] = !l.negative();
            self.value[v] = UNASSIGNED;
            self.reason[v] = None;
        }
        self.trail_lim.truncate(level as usize);
        self.qhead = self.qhead.min(lim);
    }

    /// Adds a clause of DIMACS literals. Returns `false` once the clause set
    /// is known to be unsatisfiable. The solver is reset to level 0.
    pub fn add_clause(&mut self, lits: &[i32]) -> bool {
        self.backtrack(0);
        if self.unsat {
            return false;
        }
        let mut c: Vec<Lit> = lits.iter().map(|&l| Lit::from_dimacs(l)).collect();
        c.sort_unstable();
        c.dedup();
        if c.windows(2).any(|w| w[0].var() == w[1].var()) {
            return true;
        }
        if c.iter().any(|&l| self.lit_value(l) == 1) {
            return true;
        }
        c.retain(|&l| self.lit_value(l) == UNASSIGNED);
        match c.len() {
            0 => {
                self.unsat = true;
                false
            }
            1 => {
                self.enqueue(c[0], None);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
                !self.unsat
            }
            _ => {
                self.attach(c);
                true
            }
        }
    }

    fn attach(&mut self, c: Vec<Lit>) -> usize {
        let idx = self.clauses.len();
        self.watches[c[0].neg().idx()].push(idx);
        self.watches[c[1].neg().idx()].push(idx);
        self.clauses.push(c);
        idx
    }

    /// Unit propagation; returns a conflicting clause.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.propagations += 1;
            // Clauses watching ¬p, i.e. indexed under p.
            let mut ws = std::mem::take(&mut self.watches[p.idx()]);
            let false_lit = p.neg();
            let mut i = 0;
            let mut conflict = None;
            while i < ws.len() {
                let ci = ws[i];
                let clause = &mut self.clauses[ci];
                if clause[0] == false_lit {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                let first_val = {
                    let v = self.value[first.var()];
                    if first.negative() {
                        -v
                    } else {
                        v
                    }
                };
                if first_val == 1 {
                    i += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    let l = clause[k];
                    let v = self.value[l.var()];
                    let lv = if l.negative() { -v } else { v };
                    if lv != -1 {
                        clause.swap(1, k);
                        let new_watch = clause[1].neg().idx();
                        self.watches[new_watch].push(ci);
                        ws.swap_remove(i);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                if first_val == -1 {
                    conflict = Some(ci);
                    break;
                }
                self.enqueue(first, Some(ci));
                i += 1;
            }
            let existing = std::mem::take(&mut self.watches[p.idx()]);
            ws.extend(existing);
            self.watches[p.idx()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    /// First-UIP analysis; returns the learned clause (asserting literal
    /// first) and the backjump level.
    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut counter = 0;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let current = self.decision_level();
        loop {
            let clause = self.clauses[confl].clone();
            let start = if p.is_some() { 1 } else { 0 };
            for &q in &clause[start..] {
                let v = q.var();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    if self.level[v] >= current {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            self.seen[lit.var()] = false;
            counter -= 1;
            if counter == 0 {
                break;
            }
            confl = self.reason[lit.var()].expect("non-decision literal has a reason");
            // Reason clauses keep their implied literal at position 0.
            debug_assert_eq!(self.clauses[confl][0], lit);
        }
        learnt[0] = p.unwrap().neg();
        for l in &learnt[1..] {
            self.seen[l.var()] = false;
        }
        let back = if learnt.len() == 1 {
            0
        } else {
            let (max_i, _) = learnt
                .iter()
                .enumerate()
                .skip(1)
                .max_by_key(|(_, l)| self.level[l.var()])
                .unwrap();
            learnt.swap(1, max_i);
            self.level[learnt[1].var()]
        };
        (learnt, back)
    }

    fn pick_branch(&self) -> Option<Lit> {
        self.order
            .iter()
            .find(|&&v| self.value[v] == UNASSIGNED)
            .map(|&v| Lit(2 * v as u32 + (!self.phase[v]) as u32))
    }

    /// Searches for a model. On `Sat` the assignment stays on the trail
    /// until the next [`Solver::add_clause`].
    pub fn solve(&mut self, max_conflicts: Option<u64>) -> Solve {
        self.backtrack(0);
        if self.unsat {
            return Solve::Unsat;
        }
        if self.propagate().is_some() {
            self.unsat = true;
            return Solve::Unsat;
        }
        let start = self.conflicts;
        let mut restart_no = 0u64;
        let mut until_restart = 100 * luby(restart_no);
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                if self.decision_level() == 0 {
                    self.unsat = true;
                    return Solve::Unsat;
                }
                let (learnt, back) = self.analyze(confl);
                self.backtrack(back);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let ci = self.attach(learnt);
                    self.enqueue(asserting, Some(ci));
                }
                if max_conflicts.is_some_and(|m| self.conflicts - start >= m) {
                    self.backtrack(0);
                    return Solve::Budget;
                }
                until_restart = until_restart.saturating_sub(1);
                if until_restart == 0 {
                    restart_no += 1;
                    until_restart = 100 * luby(restart_no);
                    self.backtrack(0);
                }
            } else {
                match self.pick_branch() {
                    None => return Solve::Sat,
                    Some(l) => {
                        self.decisions += 1;
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(l, None);
                    }
                }
            }
        }
    }

    /// Value of a 1-based variable in the current (complete) model.
    pub fn model_value(&self, var: u32) -> bool {
        self.value[var as usize - 1] == 1
    }

    pub fn model(&self) -> Vec<bool> {
        self.value.iter().map(|&v| v == 1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luby_sequence() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn contradiction() {
        let mut s = Solver::new(1);
        s.add_clause(&[1]);
        s.add_clause(&[-1]);
        assert_eq!(s.solve(None), Solve::Unsat);
    }

    #[test]
    fn model_satisfies_clauses() {
        let clauses = vec![vec![1, 2], vec![-1, 3], vec![-2, -3], vec![2, 3]];
        let mut s = Solver::new(3);
        for c in &clauses {
            s.add_clause(c);
        }
        assert_eq!(s.solve(None), Solve::Sat);
        for c in &clauses {
            assert!(c.iter().any(|&l| s.model_value(l.unsigned_abs()) == (l > 0)));
        }
    }

    #[test]
    fn pigeonhole_three_into_two_is_unsat() {
        // p(i, h): pigeon i in hole h, var = 2 * i + h + 1
        let var = |i: i32, h: i32| 2 * i + h + 1;
        let mut s = Solver::new(6);
        for i in 0..3 {
            s.add_clause(&[var(i, 0), var(i, 1)]);
        }
        for h in 0..2 {
            for i in 0..3 {
                for j in i + 1..3 {
                    s.add_clause(&[-var(i, h), -var(j, h)]);
                }
            }
        }
        assert_eq!(s.solve(None), Solve::Unsat);
        assert!(s.conflicts > 0);
    }

    #[test]
    fn conflict_budget_is_honoured() {
        let var = |i: i32, h: i32| 5 * i + h + 1;
        let mut s = Solver::new(30);
        for i in 0..6 {
            s.add_clause(&(0..5).map(|h| var(i, h)).collect::<Vec<_>>());
        }
        for h in 0..5 {
            for i in 0..6 {
                for j in i + 1..6 {
                    s.add_clause(&[-var(i, h), -var(j, h)]);
                }
            }
        }
        assert_eq!(s.solve(Some(3)), Solve::Budget);
        assert_eq!(s.solve(None), Solve::Unsat);
    }
}
