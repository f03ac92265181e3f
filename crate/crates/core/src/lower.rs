//! Lowering of procedures to flat control-flow graphs over variable slots.
//!
//! A program counter plays the role of "the remaining command" in the
//! operational semantics: executing the instruction at `pc` under a variable
//! valuation yields the next `(pc, valuation)` pairs.

use std::collections::HashMap;

use crate::bits::Bits;
use crate::prob::Rational;
use crate::syntax::{BoolExpr, Command, Program};

pub type Pc = u32;

/// Valuation of a procedure's variables, one bit per slot.
pub type Env = u128;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SlotExpr {
    Const(bool),
    Var(u8),
    Not(Box<SlotExpr>),
    Or(Box<SlotExpr>, Box<SlotExpr>),
    And(Box<SlotExpr>, Box<SlotExpr>),
}

impl SlotExpr {
    pub fn eval(&self, env: Env) -> bool {
        match self {
            SlotExpr::Const(b) => *b,
            SlotExpr::Var(i) => (env >> *i) & 1 == 1,
            SlotExpr::Not(e) => !e.eval(env),
            SlotExpr::Or(l, r) => l.eval(env) || r.eval(env),
            SlotExpr::And(l, r) => l.eval(env) && r.eval(env),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Instr {
    Assign {
        slot: u8,
        expr: SlotExpr,
        next: Pc,
    },
    Branch {
        cond: SlotExpr,
        then_pc: Pc,
        else_pc: Pc,
    },
    Choice {
        prob: Rational,
        left: Pc,
        right: Pc,
    },
    Call {
        callee: usize,
        args: Vec<SlotExpr>,
        returns: Vec<u8>,
        next: Pc,
    },
    Return,
}

#[derive(Debug, Clone)]
pub struct LoweredProc {
    pub name: String,
    /// Slots `0..n_inputs` are inputs, then outputs, then locals.
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub vars: Vec<String>,
    pub code: Vec<Instr>,
    pub entry: Pc,
    /// Whether some instruction jumps back to `entry` (a loop at the head of
    /// the body).
    pub entry_has_predecessors: bool,
}

impl LoweredProc {
    pub fn slot(&self, name: &str) -> Option<u8> {
        self.vars.iter().position(|v| v == name).map(|i| i as u8)
    }

    /// Initial valuation: inputs from `inputs` (first input = first bit),
    /// outputs and locals false.
    pub fn initial_env(&self, inputs: impl IntoIterator<Item = bool>) -> Env {
        inputs
            .into_iter()
            .take(self.n_inputs)
            .enumerate()
            .fold(0, |env, (i, b)| env | ((b as Env) << i))
    }

    /// Output slots packed with the first output in the lowest bit.
    pub fn outputs_of(&self, env: Env) -> u128 {
        let mask = if self.n_outputs == 128 {
            u128::MAX
        } else {
            (1u128 << self.n_outputs) - 1
        };
        (env >> self.n_inputs) & mask
    }

    /// Output slots as [`Bits`] in declaration order.
    pub fn output_bits(&self, env: Env) -> Bits {
        let raw = (0..self.n_outputs).fold(0u128, |acc, k| (acc << 1) | ((env >> (self.n_inputs + k)) & 1));
        Bits::from_value(self.n_outputs, raw)
    }

    pub fn output_slot(&self, k: usize) -> u8 {
        (self.n_inputs + k) as u8
    }
}

#[derive(Debug, Clone)]
pub struct Lowered {
    pub procs: Vec<LoweredProc>,
}

/// Lowers a validated program. Panics on undeclared names; callers run
/// [`crate::syntax::validate`] first.
pub fn lower(program: &Program) -> Lowered {
    let index: HashMap<&str, usize> = program
        .procedures
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), i))
        .collect();
    let procs = program
        .procedures
        .iter()
        .map(|p| {
            let vars: Vec<String> = p.variables().cloned().collect();
            let slots: HashMap<&str, u8> = vars
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i as u8))
                .collect();
            let mut b = Builder {
                code: vec![Instr::Return],
                slots: &slots,
                procs: &index,
            };
            let entry = b.lower(&p.body, 0);
            let code = b.code;
            let entry_has_predecessors = code.iter().any(|ins| successors(ins).contains(&entry));
            LoweredProc {
                name: p.name.clone(),
                n_inputs: p.inputs.len(),
                n_outputs: p.outputs.len(),
                vars,
                code,
                entry,
                entry_has_predecessors,
            }
        })
        .collect();
    Lowered { procs }
}

fn successors(ins: &Instr) -> Vec<Pc> {
    match ins {
        Instr::Assign { next, .. } | Instr::Call { next, .. } => vec![*next],
        Instr::Branch { then_pc, else_pc, .. } => vec![*then_pc, *else_pc],
        Instr::Choice { left, right, .. } => vec![*left, *right],
        Instr::Return => vec![],
    }
}

struct Builder<'a> {
    code: Vec<Instr>,
    slots: &'a HashMap<&'a str, u8>,
    procs: &'a HashMap<&'a str, usize>,
}

impl Builder<'_> {
    fn expr(&self, e: &BoolExpr) -> SlotExpr {
        match e {
            BoolExpr::Const(b) => SlotExpr::Const(*b),
            BoolExpr::Var(v) => SlotExpr::Var(self.slots[v.as_str()]),
            BoolExpr::Not(e) => SlotExpr::Not(Box::new(self.expr(e))),
            BoolExpr::Or(l, r) => SlotExpr::Or(Box::new(self.expr(l)), Box::new(self.expr(r))),
            BoolExpr::And(l, r) => SlotExpr::And(Box::new(self.expr(l)), Box::new(self.expr(r))),
        }
    }

    fn push(&mut self, ins: Instr) -> Pc {
        self.code.push(ins);
        (self.code.len() - 1) as Pc
    }

    /// Emits `c` followed by the continuation `k`; returns the entry pc.
    fn lower(&mut self, c: &Command, k: Pc) -> Pc {
        match c {
            Command::Skip => k,
            Command::Assign { target, value } => {
                let ins = Instr::Assign {
                    slot: self.slots[target.as_str()],
                    expr: self.expr(value),
                    next: k,
                };
                self.push(ins)
            }
            Command::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let then_pc = self.lower(then_branch, k);
                let else_pc = self.lower(else_branch, k);
                let cond = self.expr(guard);
                self.push(Instr::Branch {
                    cond,
                    then_pc,
                    else_pc,
                })
            }
            Command::Choice { left, prob, right } => {
                let left = self.lower(left, k);
                let right = self.lower(right, k);
                self.push(Instr::Choice {
                    prob: prob.clone(),
                    left,
                    right,
                })
            }
            Command::While { guard, body } => {
                let head = self.push(Instr::Return);
                let body_pc = self.lower(body, head);
                self.code[head as usize] = Instr::Branch {
                    cond: self.expr(guard),
                    then_pc: body_pc,
                    else_pc: k,
                };
                head
            }
            Command::Call {
                callee,
                args,
                returns,
            } => {
                let ins = Instr::Call {
                    callee: self.procs[callee.as_str()],
                    args: args.iter().map(|a| self.expr(a)).collect(),
                    returns: returns.iter().map(|r| self.slots[r.as_str()]).collect(),
                    next: k,
                };
                self.push(ins)
            }
            Command::Seq(cs) => cs.iter().rev().fold(k, |k, c| self.lower(c, k)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;

    #[test]
    fn while_head_is_a_branch_with_back_edge() {
        let p = parse_program("proc main in s; out o; while s do s <- false end end").unwrap();
        let l = lower(&p);
        let main = &l.procs[0];
        assert!(main.entry_has_predecessors);
        match &main.code[main.entry as usize] {
            Instr::Branch { then_pc, else_pc, .. } => {
                assert_eq!(*else_pc, 0);
                assert!(
                    matches!(main.code[*then_pc as usize], Instr::Assign { next, .. } if next == main.entry)
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn outputs_are_packed_after_inputs() {
        let p = parse_program("proc main in a, b; out x, y; local t; x <- a end").unwrap();
        let main = &lower(&p).procs[0];
        let env = main.initial_env([true, false]);
        assert_eq!(env, 0b01);
        let env = env | (1 << main.output_slot(1));
        assert_eq!(main.outputs_of(env), 0b10);
    }
}
