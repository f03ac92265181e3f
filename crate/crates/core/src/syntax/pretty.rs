use std::fmt::Write;

use super::ast::{BoolExpr, Command, Procedure, Program};
use crate::prob::format_rational;

/// Renders a program in the concrete syntax accepted by
/// [`super::parse_program`].
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for (i, p) in program.procedures.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let public = if i == 0 { &program.public_inputs[..] } else { &[] };
        print_procedure(&mut out, p, public, i == 0);
    }
    out
}

fn print_procedure(out: &mut String, p: &Procedure, public: &[String], is_main: bool) {
    let _ = writeln!(out, "proc {}", p.name);
    let inputs = group_decls(&p.inputs, |v| {
        if !is_main {
            ""
        } else if public.contains(&v.to_string()) {
            "public "
        } else {
            "secret "
        }
    });
    let _ = writeln!(out, "  in {};", inputs.join(", "));
    let _ = writeln!(out, "  out {};", group_decls(&p.outputs, |_| "").join(", "));
    if !p.locals.is_empty() {
        let _ = writeln!(out, "  local {};", group_decls(&p.locals, |_| "").join(", "));
    }
    print_command(out, &p.body, 1);
    out.push_str("\nend\n");
}

fn split_index(name: &str) -> Option<(&str, usize)> {
    let open = name.find('[')?;
    let idx = name[open + 1..].strip_suffix(']')?.parse().ok()?;
    Some((&name[..open], idx))
}

/// Collapses runs `x[n-1], ..., x[0]` sharing a marker back into `x[n]`.
fn group_decls<'a>(vars: &'a [String], marker: impl Fn(&str) -> &'static str) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < vars.len() {
        let m = marker(&vars[i]);
        if let Some((base, top)) = split_index(&vars[i]) {
            let run_ok = i + top < vars.len()
                && (0..=top).all(|k| {
                    let v: &'a str = &vars[i + k];
                    split_index(v) == Some((base, top - k)) && marker(v) == m
                });
            if run_ok {
                out.push(format!("{m}{base}[{}]", top + 1));
                i += top + 1;
                continue;
            }
        }
        out.push(format!("{m}{}", vars[i]));
        i += 1;
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_command(out: &mut String, c: &Command, depth: usize) {
    match c {
        Command::Seq(cs) => {
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(";\n");
                }
                print_command(out, c, depth);
            }
        }
        Command::Skip => {
            indent(out, depth);
            out.push_str("skip");
        }
        Command::Assign { target, value } => {
            indent(out, depth);
            let _ = write!(out, "{target} <- {}", expr_to_string(value));
        }
        Command::If {
            guard,
            then_branch,
            else_branch,
        } => {
            indent(out, depth);
            let _ = writeln!(out, "if {} then", expr_to_string(guard));
            print_command(out, then_branch, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push_str("else\n");
            print_command(out, else_branch, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push_str("end");
        }
        Command::Choice { left, prob, right } => {
            indent(out, depth);
            out.push_str("{\n");
            print_command(out, left, depth + 1);
            out.push('\n');
            indent(out, depth);
            let _ = writeln!(out, "}} [{}] {{", format_rational(prob));
            print_command(out, right, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push('}');
        }
        Command::While { guard, body } => {
            indent(out, depth);
            let _ = writeln!(out, "while {} do", expr_to_string(guard));
            print_command(out, body, depth + 1);
            out.push('\n');
            indent(out, depth);
            out.push_str("end");
        }
        Command::Call {
            callee,
            args,
            returns,
        } => {
            indent(out, depth);
            let args: Vec<String> = args.iter().map(expr_to_string).collect();
            let _ = write!(out, "{callee}({}; {})", args.join(", "), returns.join(", "));
        }
    }
}

pub fn expr_to_string(e: &BoolExpr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

// Precedence: 0 = or, 1 = and, 2 = unary.
fn write_expr(out: &mut String, e: &BoolExpr, min_prec: u8) {
    let (prec, paren) = match e {
        BoolExpr::Or(..) => (0, min_prec > 0),
        BoolExpr::And(..) => (1, min_prec > 1),
        _ => (2, false),
    };
    if paren {
        out.push('(');
    }
    match e {
        BoolExpr::Const(b) => out.push_str(if *b { "true" } else { "false" }),
        BoolExpr::Var(v) => out.push_str(v),
        BoolExpr::Not(inner) => {
            out.push('!');
            write_expr(out, inner, 2);
        }
        BoolExpr::Or(l, r) => {
            write_expr(out, l, prec);
            out.push_str(" | ");
            write_expr(out, r, prec + 1);
        }
        BoolExpr::And(l, r) => {
            write_expr(out, l, prec);
            out.push_str(" & ");
            write_expr(out, r, prec + 1);
        }
    }
    if paren {
        out.push(')');
    }
}
