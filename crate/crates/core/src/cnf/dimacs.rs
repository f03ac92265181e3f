use std::fmt::Write;

use super::{ChoiceSite, CircuitFormula, CnfQuery};
use crate::prob::{format_rational, parse_rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DimacsError {
    #[error("line {line}: malformed header `{text}`")]
    Header { line: usize, text: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("line {line}: literal {lit} out of range 1..={max}")]
    LiteralOutOfRange { line: usize, lit: i64, max: u32 },
    #[error("line {line}: `{token}` is not an integer")]
    BadToken { line: usize, token: String },
    #[error("last clause is not terminated by 0")]
    UnterminatedClause,
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCount { declared: usize, found: usize },
    #[error("line {line}: malformed `c {kind}` annotation")]
    Annotation { line: usize, kind: String },
}

fn path_string(path: &[usize]) -> String {
    if path.is_empty() {
        "-".to_string()
    } else {
        path.iter().map(usize::to_string).collect::<Vec<_>>().join(".")
    }
}

/// Standard DIMACS with the projection in a `c ind … 0` line. Variable maps
/// are kept in comment lines so the query can be read back intact.
pub fn emit_dimacs(q: &CnfQuery) -> String {
    let f = &q.formula;
    let mut out = String::new();
    for (name, v) in &f.inputs {
        writeln!(out, "c input {name} {v}").unwrap();
    }
    for (name, v) in &f.public {
        writeln!(out, "c public {name} {v}").unwrap();
    }
    for (name, v) in &f.outputs {
        writeln!(out, "c output {name} {v}").unwrap();
    }
    for site in &f.choices {
        writeln!(
            out,
            "c choice {} {} {} {} {}",
            site.procedure,
            path_string(&site.path),
            site.var,
            site.active,
            format_rational(&site.prob)
        )
        .unwrap();
    }
    if let Some(u) = f.unwind {
        writeln!(out, "c unwind {u}").unwrap();
    }
    if !q.guards.is_empty() {
        writeln!(out, "c guards {}", q.guards.len()).unwrap();
    }
    if !q.observation.is_empty() {
        writeln!(out, "c observation {}", q.observation.len()).unwrap();
    }
    if !q.projection.is_empty() || f.num_vars > 0 {
        out.push_str("c ind");
        for v in &q.projection {
            write!(out, " {v}").unwrap();
        }
        out.push_str(" 0\n");
    }
    write!(out, "p cnf {} {}", f.num_vars, q.num_clauses()).unwrap();
    for c in q.clauses() {
        out.push('\n');
        for l in c {
            write!(out, "{l} ").unwrap();
        }
        out.push('0');
    }
    out.push('\n');
    out
}

/// Reads DIMACS CNF. Without a `c ind` line the projection is every
/// variable.
pub fn parse_dimacs(text: &str) -> Result<CnfQuery, DimacsError> {
    let mut f = CircuitFormula::default();
    let mut header: Option<(u32, usize)> = None;
    let mut projection: Option<Vec<u32>> = None;
    let mut n_guards = 0usize;
    let mut n_obs = 0usize;
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if let Some(rest) = line.strip_prefix('c') {
            if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
                return Err(DimacsError::BadToken {
                    line: line_no,
                    token: line.split_whitespace().next().unwrap_or("").to_string(),
                });
            }
            let words: Vec<&str> = rest.split_whitespace().collect();
            annotation(
                &words,
                line_no,
                &mut f,
                &mut projection,
                &mut n_guards,
                &mut n_obs,
            )?;
            continue;
        }
        if line.starts_with('p') {
            let words: Vec<&str> = line.split_whitespace().collect();
            let bad = || DimacsError::Header {
                line: line_no,
                text: line.to_string(),
            };
            if header.is_some() || words.len() != 4 || words[0] != "p" || words[1] != "cnf" {
                return Err(bad());
            }
            let v = words[2].parse().map_err(|_| bad())?;
            let c = words[3].parse().map_err(|_| bad())?;
            header = Some((v, c));
            continue;
        }
        let Some((max, _)) = header else {
            return Err(DimacsError::MissingHeader);
        };
        for tok in line.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| DimacsError::BadToken {
                line: line_no,
                token: tok.to_string(),
            })?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else if lit.unsigned_abs() > max as u64 {
                return Err(DimacsError::LiteralOutOfRange {
                    line: line_no,
                    lit,
                    max,
                });
            } else {
                current.push(lit as i32);
            }
        }
    }
    let (num_vars, declared) = header.ok_or(DimacsError::MissingHeader)?;
    if !current.is_empty() {
        return Err(DimacsError::UnterminatedClause);
    }
    if declared != clauses.len() {
        return Err(DimacsError::ClauseCount {
            declared,
            found: clauses.len(),
        });
    }
    for v in projection.iter().flatten() {
        if *v == 0 || *v > num_vars {
            return Err(DimacsError::LiteralOutOfRange {
                line: 0,
                lit: *v as i64,
                max: num_vars,
            });
        }
    }
    let split = n_guards + n_obs;
    let split_ok = split <= clauses.len() && clauses[clauses.len() - n_obs..].iter().all(|c| c.len() == 1);
    let (guards, observation) = if split_ok {
        let obs: Vec<i32> = clauses.drain(clauses.len() - n_obs..).map(|c| c[0]).collect();
        let guards = clauses.drain(clauses.len() - n_guards..).collect();
        (guards, obs)
    } else {
        (Vec::new(), Vec::new())
    };
    f.num_vars = num_vars;
    f.clauses = clauses;
    Ok(CnfQuery {
        formula: f,
        guards,
        observation,
        projection: projection.unwrap_or_else(|| (1..=num_vars).collect()),
    })
}

fn annotation(
    words: &[&str],
    line: usize,
    f: &mut CircuitFormula,
    projection: &mut Option<Vec<u32>>,
    n_guards: &mut usize,
    n_obs: &mut usize,
) -> Result<(), DimacsError> {
    let Some((&kind, args)) = words.split_first() else {
        return Ok(());
    };
    let bad = || DimacsError::Annotation {
        line,
        kind: kind.to_string(),
    };
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
    match kind {
        "ind" => {
            let p = projection.get_or_insert_with(Vec::new);
            for w in args {
                let v = num(w)?;
                if v == 0 {
                    break;
                }
                p.push(v);
            }
        }
        "input" | "public" | "output" => {
            let [name, v] = args else { return Err(bad()) };
            let entry = (name.to_string(), num(v)?);
            match kind {
                "input" => f.inputs.push(entry),
                "public" => f.public.push(entry),
                _ => f.outputs.push(entry),
            }
        }
        "choice" => {
            let [procedure, path, var, active, prob] = args else {
                return Err(bad());
            };
            let path = if *path == "-" {
                Vec::new()
            } else {
                path.split('.')
                    .map(|p| p.parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?
            };
            f.choices.push(ChoiceSite {
                procedure: procedure.to_string(),
                path,
                var: num(var)?,
                active: num(active)?,
                prob: parse_rational(prob).ok_or_else(bad)?,
            });
        }
        "unwind" => {
            let [v] = args else { return Err(bad()) };
            f.unwind = Some(num(v)?);
        }
        "guards" => {
            let [n] = args else { return Err(bad()) };
            *n_guards = num(n)? as usize;
        }
        "observation" => {
            let [n] = args else { return Err(bad()) };
            *n_obs = num(n)? as usize;
        }
        _ => {}
    }
    Ok(())
}
