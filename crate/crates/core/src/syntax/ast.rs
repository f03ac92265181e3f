use std::fmt;

use crate::prob::Rational;

/// Boolean expression over program variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Const(bool),
    Var(String),
    Not(Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn var(name: impl Into<String>) -> Self {
        BoolExpr::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(l: BoolExpr, r: BoolExpr) -> Self {
        BoolExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: BoolExpr, r: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(l), Box::new(r))
    }

    /// `(l & !r) | (!l & r)`; the language has no primitive xor.
    pub fn xor(l: BoolExpr, r: BoolExpr) -> Self {
        BoolExpr::or(
            BoolExpr::and(l.clone(), BoolExpr::not(r.clone())),
            BoolExpr::and(BoolExpr::not(l), r),
        )
    }

    /// Calls `f` on every variable reference, left to right.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            BoolExpr::Const(_) => {}
            BoolExpr::Var(v) => f(v),
            BoolExpr::Not(e) => e.for_each_var(f),
            BoolExpr::Or(l, r) | BoolExpr::And(l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
        }
    }

    pub fn rename(&self, map: &impl Fn(&str) -> String) -> BoolExpr {
        match self {
            BoolExpr::Const(b) => BoolExpr::Const(*b),
            BoolExpr::Var(v) => BoolExpr::Var(map(v)),
            BoolExpr::Not(e) => BoolExpr::not(e.rename(map)),
            BoolExpr::Or(l, r) => BoolExpr::or(l.rename(map), r.rename(map)),
            BoolExpr::And(l, r) => BoolExpr::and(l.rename(map), r.rename(map)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    Skip,
    Assign {
        target: String,
        value: BoolExpr,
    },
    If {
        guard: BoolExpr,
        then_branch: Box<Command>,
        else_branch: Box<Command>,
    },
    /// Runs `left` with probability `prob` and `right` otherwise.
    Choice {
        left: Box<Command>,
        prob: Rational,
        right: Box<Command>,
    },
    While {
        guard: BoolExpr,
        body: Box<Command>,
    },
    Call {
        callee: String,
        args: Vec<BoolExpr>,
        returns: Vec<String>,
    },
    /// Sequential composition. Parsed sequences are flat and hold at least
    /// two commands.
    Seq(Vec<Command>),
}

impl Command {
    pub fn assign(target: impl Into<String>, value: BoolExpr) -> Self {
        Command::Assign {
            target: target.into(),
            value,
        }
    }

    pub fn if_then_else(guard: BoolExpr, then_branch: Command, else_branch: Command) -> Self {
        Command::If {
            guard,
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        }
    }

    pub fn choice(left: Command, prob: Rational, right: Command) -> Self {
        Command::Choice {
            left: Box::new(left),
            prob,
            right: Box::new(right),
        }
    }

    pub fn while_loop(guard: BoolExpr, body: Command) -> Self {
        Command::While {
            guard,
            body: Box::new(body),
        }
    }

    /// Sequences `cmds`, flattening nested sequences and dropping nothing.
    pub fn seq(cmds: impl IntoIterator<Item = Command>) -> Self {
        let mut flat = Vec::new();
        for c in cmds {
            match c {
                Command::Seq(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Command::Skip,
            1 => flat.pop().unwrap(),
            _ => Command::Seq(flat),
        }
    }

    /// Number of commands in the binary grammar: an n-ary sequence counts as
    /// n - 1 sequencing nodes.
    pub fn command_count(&self) -> usize {
        match self {
            Command::Skip | Command::Assign { .. } | Command::Call { .. } => 1,
            Command::If {
                then_branch,
                else_branch,
                ..
            } => 1 + then_branch.command_count() + else_branch.command_count(),
            Command::Choice { left, right, .. } => 1 + left.command_count() + right.command_count(),
            Command::While { body, .. } => 1 + body.command_count(),
            Command::Seq(cs) => {
                cs.len().saturating_sub(1) + cs.iter().map(Command::command_count).sum::<usize>()
            }
        }
    }

    /// Pre-order walk with the path of child indices leading to each node.
    pub fn walk<'a>(&'a self, path: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &'a Command)) {
        f(path, self);
        let mut visit = |i: usize, c: &'a Command, path: &mut Vec<usize>| {
            path.push(i);
            c.walk(path, f);
            path.pop();
        };
        match self {
            Command::If {
                then_branch,
                else_branch,
                ..
            } => {
                visit(0, then_branch, path);
                visit(1, else_branch, path);
            }
            Command::Choice { left, right, .. } => {
                visit(0, left, path);
                visit(1, right, path);
            }
            Command::While { body, .. } => visit(0, body, path),
            Command::Seq(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    visit(i, c, path);
                }
            }
            Command::Skip | Command::Assign { .. } | Command::Call { .. } => {}
        }
    }

    pub fn any(&self, pred: &impl Fn(&Command) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut Vec::new(), &mut |_, c| found |= pred(c));
        found
    }

    pub fn rename(&self, map: &impl Fn(&str) -> String) -> Command {
        match self {
            Command::Skip => Command::Skip,
            Command::Assign { target, value } => Command::assign(map(target), value.rename(map)),
            Command::If {
                guard,
                then_branch,
                else_branch,
            } => Command::if_then_else(
                guard.rename(map),
                then_branch.rename(map),
                else_branch.rename(map),
            ),
            Command::Choice { left, prob, right } => {
                Command::choice(left.rename(map), prob.clone(), right.rename(map))
            }
            Command::While { guard, body } => Command::while_loop(guard.rename(map), body.rename(map)),
            Command::Call {
                callee,
                args,
                returns,
            } => Command::Call {
                callee: callee.clone(),
                args: args.iter().map(|a| a.rename(map)).collect(),
                returns: returns.iter().map(|r| map(r)).collect(),
            },
            Command::Seq(cs) => Command::Seq(cs.iter().map(|c| c.rename(map)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Procedure {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub locals: Vec<String>,
    pub body: Command,
}

impl Procedure {
    pub fn variable_count(&self) -> usize {
        self.inputs.len() + self.outputs.len() + self.locals.len()
    }

    pub fn variables(&self) -> impl Iterator<Item = &String> {
        self.inputs.iter().chain(&self.outputs).chain(&self.locals)
    }

    pub fn declares(&self, name: &str) -> bool {
        self.variables().any(|v| v == name)
    }
}

/// A tuple of procedures; the first one is `main`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub procedures: Vec<Procedure>,
    /// Main inputs fixed by the observation rather than drawn from the prior.
    pub public_inputs: Vec<String>,
    /// Local of `main` raised when a bounded unrolling cuts a loop short.
    pub unwind_flag: Option<String>,
}

impl Program {
    pub fn main(&self) -> &Procedure {
        &self.procedures[0]
    }

    pub fn procedure(&self, name: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.name == name)
    }

    pub fn procedure_index(&self, name: &str) -> Option<usize> {
        self.procedures.iter().position(|p| p.name == name)
    }

    pub fn secret_inputs(&self) -> Vec<String> {
        self.main()
            .inputs
            .iter()
            .filter(|v| !self.public_inputs.contains(v))
            .cloned()
            .collect()
    }

    pub fn outputs(&self) -> &[String] {
        &self.main().outputs
    }

    /// Number of commands plus the largest per-procedure variable count.
    pub fn size(&self) -> usize {
        let commands: usize = self.procedures.iter().map(|p| p.body.command_count()).sum();
        let vars = self
            .procedures
            .iter()
            .map(Procedure::variable_count)
            .max()
            .unwrap_or(0);
        commands + vars
    }

    pub fn class(&self) -> ProgramClass {
        super::classify(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    LoopFree,
    While,
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Determinism {
    Deterministic,
    Probabilistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct ProgramClass {
    pub shape: Shape,
    pub determinism: Determinism,
}

impl ProgramClass {
    pub fn is_deterministic(&self) -> bool {
        self.determinism == Determinism::Deterministic
    }
}

impl fmt::Display for ProgramClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match self.shape {
            Shape::LoopFree => "loop-free",
            Shape::While => "while",
            Shape::Recursive => "recursive",
        };
        let det = match self.determinism {
            Determinism::Deterministic => "deterministic",
            Determinism::Probabilistic => "probabilistic",
        };
        write!(f, "{shape}, {det}")
    }
}
