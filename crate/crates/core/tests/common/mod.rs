//! Shared helpers for the integration tests: fixture loading and a seeded
//! generator of small random programs.

#![allow(dead_code)]

use std::path::PathBuf;

use dynleak_core::prob::{ratio, Rational};
use dynleak_core::syntax::{BoolExpr, Command, Procedure};
use dynleak_core::{parse_program, Bits, Prior, Program};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn workspace_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> Program {
    let path = workspace_dir().join("fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_program(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn fixture_prior(name: &str, width: usize) -> Prior {
    let path = workspace_dir().join("fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Prior::parse(&text, width).unwrap()
}

pub fn b(s: &str) -> Bits {
    s.parse().unwrap()
}

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenShape {
    LoopFree,
    /// One loop bounded to at most three iterations by a two-bit counter.
    BoundedWhile,
}

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub max_secret_bits: usize,
    pub max_outputs: usize,
    pub max_choices: usize,
    pub shape: GenShape,
    pub max_depth: usize,
}

impl GenConfig {
    pub fn loop_free(max_secret_bits: usize, max_choices: usize) -> Self {
        GenConfig {
            max_secret_bits,
            max_outputs: 3,
            max_choices,
            shape: GenShape::LoopFree,
            max_depth: 3,
        }
    }

    pub fn bounded_while(max_secret_bits: usize, max_choices: usize) -> Self {
        GenConfig {
            shape: GenShape::BoundedWhile,
            ..Self::loop_free(max_secret_bits, max_choices)
        }
    }
}

struct Gen<'a> {
    rng: &'a mut TestRng,
    readable: Vec<String>,
    writable: Vec<String>,
    choices_left: usize,
}

impl Gen<'_> {
    fn expr(&mut self, depth: usize) -> BoolExpr {
        let leaf = depth == 0 || self.rng.gen_bool(0.35);
        if leaf {
            if self.rng.gen_bool(0.1) {
                return BoolExpr::Const(self.rng.gen());
            }
            return BoolExpr::var(self.readable.choose(self.rng).unwrap().clone());
        }
        match self.rng.gen_range(0..4) {
            0 => BoolExpr::not(self.expr(depth - 1)),
            1 => BoolExpr::and(self.expr(depth - 1), self.expr(depth - 1)),
            2 => BoolExpr::or(self.expr(depth - 1), self.expr(depth - 1)),
            _ => BoolExpr::xor(self.expr(depth - 1), self.expr(depth - 1)),
        }
    }

    fn prob(&mut self) -> Rational {
        let den = *[2i64, 3, 4, 5, 10].choose(self.rng).unwrap();
        ratio(self.rng.gen_range(1..den), den)
    }

    fn assign(&mut self) -> Command {
        let target = self.writable.choose(self.rng).unwrap().clone();
        Command::assign(target, self.expr(2))
    }

    fn cmd(&mut self, depth: usize) -> Command {
        if depth == 0 {
            return self.assign();
        }
        let roll = self.rng.gen_range(0..10);
        match roll {
            0..=3 => self.assign(),
            4 | 5 => {
                let n = self.rng.gen_range(2..=3);
                Command::seq((0..n).map(|_| self.cmd(depth - 1)).collect::<Vec<_>>())
            }
            6 | 7 => {
                let guard = self.expr(2);
                let then_branch = self.cmd(depth - 1);
                let else_branch = if self.rng.gen_bool(0.3) {
                    Command::Skip
                } else {
                    self.cmd(depth - 1)
                };
                Command::if_then_else(guard, then_branch, else_branch)
            }
            _ if self.choices_left > 0 => {
                self.choices_left -= 1;
                let p = self.prob();
                let left = self.cmd(depth - 1);
                let right = if self.rng.gen_bool(0.2) {
                    Command::Skip
                } else {
                    self.cmd(depth - 1)
                };
                Command::choice(left, p, right)
            }
            _ => self.assign(),
        }
    }
}

/// A random valid single-procedure program. Secrets are `s0..`, outputs
/// `o0..`, scratch locals `t0, t1`; loops count with `c1 c0`.
pub fn random_program(rng: &mut TestRng, cfg: &GenConfig) -> Program {
    let k = rng.gen_range(1..=cfg.max_secret_bits);
    let m = rng.gen_range(1..=cfg.max_outputs);
    let n_locals = rng.gen_range(0..=2);
    let inputs: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
    let outputs: Vec<String> = (0..m).map(|i| format!("o{i}")).collect();
    let mut locals: Vec<String> = (0..n_locals).map(|i| format!("t{i}")).collect();
    let writable: Vec<String> = outputs.iter().chain(&locals).cloned().collect();
    let readable: Vec<String> = inputs.iter().chain(&writable).cloned().collect();
    let choices = if cfg.max_choices == 0 {
        0
    } else {
        rng.gen_range(0..=cfg.max_choices)
    };
    let mut g = Gen {
        rng,
        readable,
        writable,
        choices_left: choices,
    };
    let body = match cfg.shape {
        GenShape::LoopFree => g.cmd(cfg.max_depth),
        GenShape::BoundedWhile => {
            let before = g.cmd(1);
            let guard = BoolExpr::and(
                g.expr(2),
                BoolExpr::not(BoolExpr::and(BoolExpr::var("c1"), BoolExpr::var("c0"))),
            );
            let inner = g.cmd(cfg.max_depth.saturating_sub(1));
            let step = Command::seq([
                inner,
                Command::assign("c1", BoolExpr::xor(BoolExpr::var("c1"), BoolExpr::var("c0"))),
                Command::assign("c0", BoolExpr::not(BoolExpr::var("c0"))),
            ]);
            let after = g.cmd(1);
            locals.push("c1".into());
            locals.push("c0".into());
            Command::seq([before, Command::while_loop(guard, step), after])
        }
    };
    Program {
        procedures: vec![Procedure {
            name: "main".into(),
            inputs,
            outputs,
            locals,
            body,
        }],
        public_inputs: Vec::new(),
        unwind_flag: None,
    }
}

/// A prior over `width` bits with random positive weights.
pub fn random_full_prior(rng: &mut TestRng, width: usize) -> Prior {
    let raw: Vec<(Bits, i64)> = Bits::all(width).map(|s| (s, rng.gen_range(1..=9))).collect();
    let total: i64 = raw.iter().map(|(_, w)| w).sum();
    Prior::from_weights(width, raw.into_iter().map(|(s, w)| (s, ratio(w, total)))).unwrap()
}

/// Random CNF over `num_vars` variables with a random projection set.
pub fn random_cnf(rng: &mut TestRng, num_vars: u32) -> (Vec<Vec<i32>>, Vec<u32>) {
    let n_clauses = rng.gen_range(0..=(num_vars as usize * 3));
    let clauses = (0..n_clauses)
        .map(|_| {
            let len = rng.gen_range(1..=3.min(num_vars as usize));
            (0..len)
                .map(|_| {
                    let v = rng.gen_range(1..=num_vars) as i32;
                    if rng.gen() {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect();
    let projection = (1..=num_vars).filter(|_| rng.gen_bool(0.6)).collect();
    (clauses, projection)
}

/// Projected model count by truth table, independent of the library.
pub fn truth_table_count(num_vars: u32, clauses: &[Vec<i32>], projection: &[u32]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for a in 0u32..(1 << num_vars) {
        let val = |lit: i32| {
            let on = a >> (lit.unsigned_abs() - 1) & 1 == 1;
            on == (lit > 0)
        };
        if clauses.iter().all(|c| c.iter().any(|&l| val(l))) {
            let key: Vec<bool> = projection.iter().map(|&v| a >> (v - 1) & 1 == 1).collect();
            seen.insert(key);
        }
    }
    seen.len()
}
