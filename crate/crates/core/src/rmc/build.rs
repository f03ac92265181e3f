use std::collections::{BTreeMap, HashMap, VecDeque};

use num_traits::{One, Zero};

use super::model::{BoxInfo, Component, Loc, NodeId, NodeKind, Rmc, Transition};
use super::RmcError;
use crate::bits::Bits;
use crate::lower::{lower, Env, Instr, Lowered, Pc};
use crate::prob::Rational;
use crate::semantics::main_env;
use crate::syntax::Program;

/// An RMC built from a program, with the maps from secret inputs to entry
/// nodes of `main` (component 0).
#[derive(Debug, Clone)]
pub struct RmcBuild {
    pub rmc: Rmc,
    pub main_entries: BTreeMap<Bits, NodeId>,
}

impl RmcBuild {
    /// Exit node of `main` producing `observed`, if any execution reaches it.
    pub fn main_exit(&self, observed: &Bits) -> Option<NodeId> {
        let main = &self.rmc.components[0];
        main.exits
            .iter()
            .copied()
            .find(|&e| main.exit_outputs(e) == Some(observed))
    }
}

struct Builder<'a> {
    lowered: &'a Lowered,
    rmc: Rmc,
    comp_of_proc: Vec<Option<usize>>,
    proc_of_comp: Vec<usize>,
    nodes: Vec<HashMap<(Pc, Env), NodeId>>,
    entries: Vec<HashMap<Env, NodeId>>,
    exits: Vec<HashMap<u128, NodeId>>,
    /// Per component: boxes elsewhere that call it, as (caller, box).
    callers: Vec<Vec<(usize, usize)>>,
    /// Per (component, box): the return continuation pc, return slots and
    /// caller valuation.
    continuations: HashMap<(usize, usize), (Pc, Vec<u8>, Env)>,
    work: VecDeque<(usize, NodeId)>,
    returns: VecDeque<(usize, usize, NodeId)>,
    budget: usize,
}

impl<'a> Builder<'a> {
    fn total(&self) -> usize {
        self.rmc.location_count()
    }

    fn add_node(&mut self, comp: usize, kind: NodeKind) -> Result<NodeId, RmcError> {
        if self.total() >= self.budget {
            return Err(RmcError::LocationBudget(self.budget));
        }
        let c = &mut self.rmc.components[comp];
        c.nodes.push(kind);
        Ok(c.nodes.len() - 1)
    }

    fn component(&mut self, proc_: usize) -> usize {
        if let Some(c) = self.comp_of_proc[proc_] {
            return c;
        }
        let c = self.rmc.components.len();
        self.rmc.components.push(Component {
            name: self.lowered.procs[proc_].name.clone(),
            ..Component::default()
        });
        self.comp_of_proc[proc_] = Some(c);
        self.proc_of_comp.push(proc_);
        self.nodes.push(HashMap::new());
        self.entries.push(HashMap::new());
        self.exits.push(HashMap::new());
        self.callers.push(Vec::new());
        c
    }

    /// Node for `(pc, env)`; the return instruction maps to the exit for the
    /// output valuation.
    fn node(&mut self, comp: usize, pc: Pc, env: Env) -> Result<NodeId, RmcError> {
        let lowered = self.lowered;
        let p = &lowered.procs[self.proc_of_comp[comp]];
        if pc == 0 {
            let key = p.outputs_of(env);
            if let Some(&n) = self.exits[comp].get(&key) {
                return Ok(n);
            }
            let outputs = p.output_bits(env);
            let n = self.add_node(comp, NodeKind::Exit { outputs })?;
            self.exits[comp].insert(key, n);
            self.rmc.components[comp].exits.push(n);
            for &(caller, b) in &self.callers[comp] {
                self.returns.push_back((caller, b, n));
            }
            return Ok(n);
        }
        if let Some(&n) = self.nodes[comp].get(&(pc, env)) {
            return Ok(n);
        }
        let n = self.add_node(comp, NodeKind::At { pc, env })?;
        self.nodes[comp].insert((pc, env), n);
        self.work.push_back((comp, n));
        Ok(n)
    }

    fn entry(&mut self, comp: usize, env: Env) -> Result<NodeId, RmcError> {
        if let Some(&n) = self.entries[comp].get(&env) {
            return Ok(n);
        }
        let lowered = self.lowered;
        let p = &lowered.procs[self.proc_of_comp[comp]];
        let n = if p.entry_has_predecessors || p.entry == 0 {
            let inputs = Bits::from_bools(&(0..p.n_inputs).map(|i| (env >> i) & 1 == 1).collect::<Vec<_>>());
            let entry_pc = p.entry;
            let n = self.add_node(comp, NodeKind::Entry { inputs })?;
            let target = self.node(comp, entry_pc, env)?;
            self.rmc.components[comp].transitions.push(Transition {
                src: Loc::Node(n),
                prob: Rational::one(),
                dst: Loc::Node(target),
            });
            n
        } else {
            self.node(comp, p.entry, env)?
        };
        self.entries[comp].insert(env, n);
        self.rmc.components[comp].entries.push(n);
        Ok(n)
    }

    fn expand(&mut self, comp: usize, n: NodeId) -> Result<(), RmcError> {
        let NodeKind::At { pc, env } = self.rmc.components[comp].nodes[n].clone() else {
            return Ok(());
        };
        let lowered = self.lowered;
        let p = &lowered.procs[self.proc_of_comp[comp]];
        let mut succ: Vec<(Rational, Pc, Env)> = Vec::new();
        match &p.code[pc as usize] {
            Instr::Assign { slot, expr, next } => {
                let bit = 1u128 << slot;
                let env2 = if expr.eval(env) { env | bit } else { env & !bit };
                succ.push((Rational::one(), *next, env2));
            }
            Instr::Branch {
                cond,
                then_pc,
                else_pc,
            } => {
                let pc2 = if cond.eval(env) { *then_pc } else { *else_pc };
                succ.push((Rational::one(), pc2, env));
            }
            Instr::Choice { prob, left, right } => {
                succ.push((prob.clone(), *left, env));
                succ.push((Rational::one() - prob, *right, env));
            }
            Instr::Call {
                callee,
                args,
                returns,
                next,
            } => {
                let callee_comp = self.component(*callee);
                let callee_proc = &lowered.procs[*callee];
                let input_env = callee_proc.initial_env(args.iter().map(|a| a.eval(env)));
                let entry = self.entry(callee_comp, input_env)?;
                let c = &mut self.rmc.components[comp];
                let b = c.boxes.len();
                c.boxes.push(BoxInfo {
                    callee: callee_comp,
                    call_node: n,
                    entry,
                });
                c.transitions.push(Transition {
                    src: Loc::Node(n),
                    prob: Rational::one(),
                    dst: Loc::Call { box_: b, entry },
                });
                self.continuations
                    .insert((comp, b), (*next, returns.clone(), env));
                self.callers[callee_comp].push((comp, b));
                for &ex in &self.rmc.components[callee_comp].exits {
                    self.returns.push_back((comp, b, ex));
                }
                return Ok(());
            }
            Instr::Return => unreachable!("return is never a node"),
        }
        let mut merged: Vec<(Rational, NodeId)> = Vec::new();
        for (prob, pc2, env2) in succ {
            if prob.is_zero() {
                continue;
            }
            let dst = self.node(comp, pc2, env2)?;
            match merged.iter_mut().find(|(_, d)| *d == dst) {
                Some((p, _)) => *p += prob,
                None => merged.push((prob, dst)),
            }
        }
        for (prob, dst) in merged {
            self.rmc.components[comp].transitions.push(Transition {
                src: Loc::Node(n),
                prob,
                dst: Loc::Node(dst),
            });
        }
        Ok(())
    }

    fn add_return(&mut self, comp: usize, b: usize, exit: NodeId) -> Result<(), RmcError> {
        let (next, returns, env) = self.continuations[&(comp, b)].clone();
        let callee = self.rmc.components[comp].boxes[b].callee;
        let outputs = self.rmc.components[callee]
            .exit_outputs(exit)
            .copied()
            .expect("return port names an exit");
        let mut env2 = env;
        for (k, slot) in returns.iter().enumerate() {
            let bit = 1u128 << slot;
            if outputs.get(k) {
                env2 |= bit;
            } else {
                env2 &= !bit;
            }
        }
        let dst = self.node(comp, next, env2)?;
        self.rmc.components[comp].transitions.push(Transition {
            src: Loc::Ret { box_: b, exit },
            prob: Rational::one(),
            dst: Loc::Node(dst),
        });
        Ok(())
    }
}

/// Expands a program into an RMC over reachable (command, valuation)
/// locations. `main` gets one entry per listed secret input, with public
/// inputs fixed to `public`.
pub fn program_to_rmc(
    program: &Program,
    public: &Bits,
    secrets: impl IntoIterator<Item = Bits>,
    max_locations: usize,
) -> Result<RmcBuild, RmcError> {
    let lowered = lower(program);
    let mut b = Builder {
        lowered: &lowered,
        rmc: Rmc::default(),
        comp_of_proc: vec![None; lowered.procs.len()],
        proc_of_comp: Vec::new(),
        nodes: Vec::new(),
        entries: Vec::new(),
        exits: Vec::new(),
        callers: Vec::new(),
        continuations: HashMap::new(),
        work: VecDeque::new(),
        returns: VecDeque::new(),
        budget: max_locations,
    };
    let main = b.component(0);
    let mut main_entries = BTreeMap::new();
    for s in secrets {
        let env = main_env(program, &lowered, &s, public);
        let n = b.entry(main, env)?;
        main_entries.insert(s, n);
    }
    loop {
        if let Some((comp, n)) = b.work.pop_front() {
            b.expand(comp, n)?;
        } else if let Some((comp, bx, ex)) = b.returns.pop_front() {
            b.add_return(comp, bx, ex)?;
        } else {
            break;
        }
    }
    Ok(RmcBuild {
        rmc: b.rmc,
        main_entries,
    })
}
