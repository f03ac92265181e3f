use std::collections::HashMap;

use num_traits::{One, Zero};

use super::{ChoiceSite, CircuitFormula};
use crate::syntax::{BoolExpr, Command, Program};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("procedure `{0}` contains a while loop; unroll it first")]
    ContainsLoop(String),
    #[error("procedure `{0}` is recursive; use the rmc engine")]
    Recursive(String),
}

/// A signal: a constant or a CNF literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Sig {
    Const(bool),
    Lit(i32),
}

impl Sig {
    fn not(self) -> Sig {
        match self {
            Sig::Const(b) => Sig::Const(!b),
            Sig::Lit(l) => Sig::Lit(-l),
        }
    }
}

/// Tseitin gate builder with constant folding and structural hashing.
#[derive(Default)]
struct Gates {
    num_vars: u32,
    clauses: Vec<Vec<i32>>,
    ands: HashMap<(i32, i32), i32>,
    ites: HashMap<(i32, i32, i32), i32>,
}

impl Gates {
    fn fresh(&mut self) -> i32 {
        self.num_vars += 1;
        self.num_vars as i32
    }

    fn and(&mut self, a: Sig, b: Sig) -> Sig {
        let (a, b) = match (a, b) {
            (Sig::Const(false), _) | (_, Sig::Const(false)) => return Sig::Const(false),
            (Sig::Const(true), x) | (x, Sig::Const(true)) => return x,
            (Sig::Lit(a), Sig::Lit(b)) => (a.min(b), a.max(b)),
        };
        if a == b {
            return Sig::Lit(a);
        }
        if a == -b {
            return Sig::Const(false);
        }
        if let Some(&x) = self.ands.get(&(a, b)) {
            return Sig::Lit(x);
        }
        let x = self.fresh();
        self.clauses.push(vec![-x, a]);
        self.clauses.push(vec![-x, b]);
        self.clauses.push(vec![x, -a, -b]);
        self.ands.insert((a, b), x);
        Sig::Lit(x)
    }

    fn or(&mut self, a: Sig, b: Sig) -> Sig {
        self.and(a.not(), b.not()).not()
    }

    fn ite(&mut self, c: Sig, t: Sig, e: Sig) -> Sig {
        if t == e {
            return t;
        }
        let c = match c {
            Sig::Const(true) => return t,
            Sig::Const(false) => return e,
            Sig::Lit(c) => c,
        };
        match (t, e) {
            (Sig::Const(true), _) => return self.or(Sig::Lit(c), e),
            (Sig::Const(false), _) => return self.and(Sig::Lit(-c), e),
            (_, Sig::Const(true)) => return self.or(Sig::Lit(-c), t),
            (_, Sig::Const(false)) => return self.and(Sig::Lit(c), t),
            _ => {}
        }
        let (Sig::Lit(mut t), Sig::Lit(mut e)) = (t, e) else {
            unreachable!()
        };
        let mut c = c;
        if c < 0 {
            c = -c;
            std::mem::swap(&mut t, &mut e);
        }
        if let Some(&x) = self.ites.get(&(c, t, e)) {
            return Sig::Lit(x);
        }
        let x = self.fresh();
        self.clauses.push(vec![-c, -t, x]);
        self.clauses.push(vec![-c, t, -x]);
        self.clauses.push(vec![c, -e, x]);
        self.clauses.push(vec![c, e, -x]);
        self.ites.insert((c, t, e), x);
        Sig::Lit(x)
    }

    /// A fresh variable constrained equal to `s`.
    fn named(&mut self, s: Sig) -> u32 {
        let x = self.fresh();
        match s {
            Sig::Const(true) => self.clauses.push(vec![x]),
            Sig::Const(false) => self.clauses.push(vec![-x]),
            Sig::Lit(l) => {
                self.clauses.push(vec![-x, l]);
                self.clauses.push(vec![x, -l]);
            }
        }
        x as u32
    }
}

type Env = HashMap<String, Sig>;

struct Compiler<'a> {
    program: &'a Program,
    gates: Gates,
    choices: Vec<ChoiceSite>,
    stack: Vec<&'a str>,
}

impl<'a> Compiler<'a> {
    fn expr(&mut self, e: &BoolExpr, env: &Env) -> Sig {
        match e {
            BoolExpr::Const(b) => Sig::Const(*b),
            BoolExpr::Var(v) => env[v.as_str()],
            BoolExpr::Not(e) => self.expr(e, env).not(),
            BoolExpr::And(l, r) => {
                let l = self.expr(l, env);
                let r = self.expr(r, env);
                self.gates.and(l, r)
            }
            BoolExpr::Or(l, r) => {
                let l = self.expr(l, env);
                let r = self.expr(r, env);
                self.gates.or(l, r)
            }
        }
    }

    fn branch(
        &mut self,
        cond: Sig,
        then_branch: &'a Command,
        else_branch: &'a Command,
        path: &mut Vec<usize>,
        env: &mut Env,
        pc: Sig,
    ) -> Result<(), CompileError> {
        match cond {
            Sig::Const(true) => {
                path.push(0);
                self.exec(then_branch, path, env, pc)?;
                path.pop();
            }
            Sig::Const(false) => {
                path.push(1);
                self.exec(else_branch, path, env, pc)?;
                path.pop();
            }
            Sig::Lit(_) => {
                let mut then_env = env.clone();
                let then_pc = self.gates.and(pc, cond);
                path.push(0);
                self.exec(then_branch, path, &mut then_env, then_pc)?;
                path.pop();
                let else_pc = self.gates.and(pc, cond.not());
                path.push(1);
                self.exec(else_branch, path, env, else_pc)?;
                path.pop();
                let mut names: Vec<String> = env.keys().cloned().collect();
                names.sort();
                for n in names {
                    let merged = self.gates.ite(cond, then_env[&n], env[&n]);
                    env.insert(n, merged);
                }
            }
        }
        Ok(())
    }

    fn exec(
        &mut self,
        c: &'a Command,
        path: &mut Vec<usize>,
        env: &mut Env,
        pc: Sig,
    ) -> Result<(), CompileError> {
        match c {
            Command::Skip => {}
            Command::Assign { target, value } => {
                let v = self.expr(value, env);
                env.insert(target.clone(), v);
            }
            Command::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let g = self.expr(guard, env);
                self.branch(g, then_branch, else_branch, path, env, pc)?;
            }
            Command::Choice { left, prob, right } => {
                let sel = if prob.is_one() {
                    Sig::Const(true)
                } else if prob.is_zero() {
                    Sig::Const(false)
                } else {
                    let var = self.gates.fresh() as u32;
                    let active = self.gates.named(pc);
                    self.choices.push(ChoiceSite {
                        procedure: self.stack.last().unwrap().to_string(),
                        path: path.clone(),
                        var,
                        active,
                        prob: prob.clone(),
                    });
                    Sig::Lit(var as i32)
                };
                self.branch(sel, left, right, path, env, pc)?;
            }
            Command::While { .. } => {
                return Err(CompileError::ContainsLoop(self.stack.last().unwrap().to_string()))
            }
            Command::Call {
                callee,
                args,
                returns,
            } => {
                let args: Vec<Sig> = args.iter().map(|a| self.expr(a, env)).collect();
                let outs = self.call(callee, &args, pc)?;
                for (r, s) in returns.iter().zip(outs) {
                    env.insert(r.clone(), s);
                }
            }
            Command::Seq(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    path.push(i);
                    self.exec(c, path, env, pc)?;
                    path.pop();
                }
            }
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: &[Sig], pc: Sig) -> Result<Vec<Sig>, CompileError> {
        let proc_ = self
            .program
            .procedure(name)
            .expect("validated program calls declared procedures");
        if self.stack.contains(&proc_.name.as_str()) {
            return Err(CompileError::Recursive(proc_.name.clone()));
        }
        let mut env: Env = proc_
            .outputs
            .iter()
            .chain(&proc_.locals)
            .map(|v| (v.clone(), Sig::Const(false)))
            .collect();
        env.extend(proc_.inputs.iter().cloned().zip(args.iter().copied()));
        self.stack.push(&proc_.name);
        self.exec(&proc_.body, &mut Vec::new(), &mut env, pc)?;
        self.stack.pop();
        Ok(proc_.outputs.iter().map(|o| env[o.as_str()]).collect())
    }
}

/// Compiles a loop-free program (non-recursive calls are inlined).
///
/// Main inputs get variables `1..=n` in declaration order, choice selectors
/// and gate variables follow, and each output gets a fresh variable defined
/// equal to its final value.
pub fn compile(program: &Program) -> Result<CircuitFormula, CompileError> {
    let main = program.main();
    let mut c = Compiler {
        program,
        gates: Gates::default(),
        choices: Vec::new(),
        stack: Vec::new(),
    };
    let mut inputs = Vec::new();
    let mut public = Vec::new();
    let mut env: Env = HashMap::new();
    for name in &main.inputs {
        let v = c.gates.fresh();
        env.insert(name.clone(), Sig::Lit(v));
        if program.public_inputs.contains(name) {
            public.push((name.clone(), v as u32));
        } else {
            inputs.push((name.clone(), v as u32));
        }
    }
    for name in main.outputs.iter().chain(&main.locals) {
        env.insert(name.clone(), Sig::Const(false));
    }
    c.stack.push(&main.name);
    c.exec(&main.body, &mut Vec::new(), &mut env, Sig::Const(true))?;
    let outputs = main
        .outputs
        .iter()
        .map(|o| (o.clone(), c.gates.named(env[o.as_str()])))
        .collect();
    let unwind = program
        .unwind_flag
        .as_ref()
        .map(|f| c.gates.named(env[f.as_str()]));
    Ok(CircuitFormula {
        num_vars: c.gates.num_vars,
        clauses: c.gates.clauses,
        inputs,
        public,
        outputs,
        choices: c.choices,
        unwind,
    })
}
