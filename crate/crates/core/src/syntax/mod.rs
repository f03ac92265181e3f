//! Probabilistic Boolean program language: AST, concrete syntax, validation
//! and classification.

mod ast;
mod parser;
mod pretty;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

pub use ast::{BoolExpr, Command, Determinism, Procedure, Program, ProgramClass, Shape};
pub use parser::{parse_program, ParseError, Pos};
pub use pretty::{expr_to_string, pretty_print};

use crate::bits::MAX_BITS;
use crate::prob::is_probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    RoleOverlap,
    DuplicateDeclaration,
    ProbabilityOutOfRange,
    ArityMismatch,
    UnknownProcedure,
    UndeclaredVariable,
    PublicNotInput,
    TooManyVariables,
    ReadBeforeWrite,
}

/// Where a diagnostic applies: a procedure and the child-index path of the
/// offending command inside its body (empty for declarations).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Location {
    pub procedure: String,
    pub path: Vec<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.procedure)?;
        if !self.path.is_empty() {
            let path: Vec<String> = self.path.iter().map(usize::to_string).collect();
            write!(f, "@{}", path.join("."))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} at {}: {}", self.location, self.message)
    }
}

/// Checks every structural invariant of a program. Returns all problems;
/// an empty list (or warnings only) means the program is valid.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut push = |severity, kind, procedure: &str, path: &[usize], message: String| {
        diags.push(Diagnostic {
            severity,
            kind,
            location: Location {
                procedure: procedure.to_string(),
                path: path.to_vec(),
            },
            message,
        })
    };
    let sigs: HashMap<&str, (usize, usize)> = program
        .procedures
        .iter()
        .map(|p| (p.name.as_str(), (p.inputs.len(), p.outputs.len())))
        .collect();

    for p in &program.procedures {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for (role, vars) in [("in", &p.inputs), ("out", &p.outputs), ("local", &p.locals)] {
            for v in vars.iter() {
                match seen.get(v.as_str()) {
                    Some(prev) if *prev == role => push(
                        Severity::Error,
                        DiagnosticKind::DuplicateDeclaration,
                        &p.name,
                        &[],
                        format!("variable `{v}` declared twice in `{role}`"),
                    ),
                    Some(prev) => push(
                        Severity::Error,
                        DiagnosticKind::RoleOverlap,
                        &p.name,
                        &[],
                        format!("variable role overlap: `{v}` is both `{prev}` and `{role}`"),
                    ),
                    None => {
                        seen.insert(v, role);
                    }
                }
            }
        }
        if p.variable_count() > MAX_BITS {
            push(
                Severity::Error,
                DiagnosticKind::TooManyVariables,
                &p.name,
                &[],
                format!(
                    "procedure has {} variables; at most {MAX_BITS} are supported",
                    p.variable_count()
                ),
            );
        }

        p.body.walk(&mut Vec::new(), &mut |path, c| {
            let mut check_var = |v: &str| {
                if !p.declares(v) {
                    push(
                        Severity::Error,
                        DiagnosticKind::UndeclaredVariable,
                        &p.name,
                        path,
                        format!("undeclared variable `{v}`"),
                    );
                }
            };
            match c {
                Command::Assign { target, value } => {
                    check_var(target);
                    value.for_each_var(&mut check_var);
                }
                Command::If { guard, .. } | Command::While { guard, .. } => {
                    guard.for_each_var(&mut check_var)
                }
                Command::Call { args, returns, .. } => {
                    for a in args {
                        a.for_each_var(&mut check_var);
                    }
                    for r in returns {
                        check_var(r);
                    }
                }
                _ => {}
            }
            match c {
                Command::Choice { prob, .. } if !is_probability(prob) => push(
                    Severity::Error,
                    DiagnosticKind::ProbabilityOutOfRange,
                    &p.name,
                    path,
                    format!(
                        "probability out of range: {} is not in [0, 1]",
                        crate::prob::format_rational(prob)
                    ),
                ),
                Command::Call {
                    callee,
                    args,
                    returns,
                } => match sigs.get(callee.as_str()) {
                    None => push(
                        Severity::Error,
                        DiagnosticKind::UnknownProcedure,
                        &p.name,
                        path,
                        format!("call to unknown procedure `{callee}`"),
                    ),
                    Some(&(n_in, n_out)) if n_in != args.len() || n_out != returns.len() => push(
                        Severity::Error,
                        DiagnosticKind::ArityMismatch,
                        &p.name,
                        path,
                        format!(
                            "arity mismatch: `{callee}` takes {n_in} inputs and {n_out} outputs, \
                             called with {} and {}",
                            args.len(),
                            returns.len()
                        ),
                    ),
                    _ => {}
                },
                _ => {}
            }
        });

        let mut assigned: HashSet<&str> = p.inputs.iter().map(String::as_str).collect();
        let mut reported = BTreeSet::new();
        read_before_write(&p.body, &mut assigned, &mut reported);
        for v in reported {
            push(
                Severity::Warning,
                DiagnosticKind::ReadBeforeWrite,
                &p.name,
                &[],
                format!("`{v}` may be read before it is written (it starts as false)"),
            );
        }
    }

    for v in &program.public_inputs {
        if !program.main().inputs.contains(v) {
            push(
                Severity::Error,
                DiagnosticKind::PublicNotInput,
                &program.main().name,
                &[],
                format!("public variable `{v}` is not an input of the main procedure"),
            );
        }
    }
    diags
}

/// True when `validate` reports no errors (warnings are allowed).
pub fn is_valid(program: &Program) -> bool {
    validate(program).iter().all(|d| d.severity != Severity::Error)
}

/// Definite-assignment lint. `assigned` holds the variables written on every
/// path reaching the current point.
fn read_before_write<'a>(c: &'a Command, assigned: &mut HashSet<&'a str>, reported: &mut BTreeSet<String>) {
    let mut read = |e: &'a BoolExpr, assigned: &HashSet<&'a str>| {
        e.for_each_var(&mut |v| {
            if !assigned.contains(v) {
                reported.insert(v.to_string());
            }
        })
    };
    match c {
        Command::Skip => {}
        Command::Assign { target, value } => {
            read(value, assigned);
            assigned.insert(target);
        }
        Command::If {
            guard,
            then_branch,
            else_branch,
        } => {
            read(guard, assigned);
            let mut t = assigned.clone();
            read_before_write(then_branch, &mut t, reported);
            let mut e = assigned.clone();
            read_before_write(else_branch, &mut e, reported);
            *assigned = t.intersection(&e).copied().collect();
        }
        Command::Choice { left, right, .. } => {
            let mut l = assigned.clone();
            read_before_write(left, &mut l, reported);
            let mut r = assigned.clone();
            read_before_write(right, &mut r, reported);
            *assigned = l.intersection(&r).copied().collect();
        }
        Command::While { guard, body } => {
            read(guard, assigned);
            let mut b = assigned.clone();
            read_before_write(body, &mut b, reported);
        }
        Command::Call { args, returns, .. } => {
            for a in args {
                read(a, assigned);
            }
            assigned.extend(returns.iter().map(String::as_str));
        }
        Command::Seq(cs) => {
            for c in cs {
                read_before_write(c, assigned, reported);
            }
        }
    }
}

/// Loop-free: one procedure, no loops, no calls. While: one procedure, no
/// calls. Everything else is recursive.
pub fn classify(program: &Program) -> ProgramClass {
    let any = |pred: &dyn Fn(&Command) -> bool| program.procedures.iter().any(|p| p.body.any(&|c| pred(c)));
    let has_calls = any(&|c| matches!(c, Command::Call { .. }));
    let has_loops = any(&|c| matches!(c, Command::While { .. }));
    let has_choice = any(&|c| matches!(c, Command::Choice { .. }));
    let shape = if program.procedures.len() == 1 && !has_calls {
        if has_loops {
            Shape::While
        } else {
            Shape::LoopFree
        }
    } else {
        Shape::Recursive
    };
    let determinism = if has_choice {
        Determinism::Probabilistic
    } else {
        Determinism::Deterministic
    };
    ProgramClass { shape, determinism }
}

/// True when some procedure can reach a call to itself, i.e. the call graph
/// has a cycle.
pub fn has_recursion(program: &Program) -> bool {
    let n = program.procedures.len();
    let mut edges = vec![Vec::new(); n];
    for (i, p) in program.procedures.iter().enumerate() {
        p.body.walk(&mut Vec::new(), &mut |_, c| {
            if let Command::Call { callee, .. } = c {
                if let Some(j) = program.procedure_index(callee) {
                    edges[i].push(j);
                }
            }
        });
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    fn dfs(u: usize, edges: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[u] = 1;
        for &v in &edges[u] {
            if state[v] == 1 || (state[v] == 0 && dfs(v, edges, state)) {
                return true;
            }
        }
        state[u] = 2;
        false
    }
    let mut state = vec![0u8; n];
    (0..n).any(|u| state[u] == 0 && dfs(u, &edges, &mut state))
}
