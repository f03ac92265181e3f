use crate::syntax::{BoolExpr, Command, Program};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnrollError {
    #[error("unrolling bound must be at least 1")]
    ZeroBound,
    #[error("program calls procedures; bounded unrolling only applies to single-procedure programs")]
    HasCalls,
}

fn has_loop(c: &Command) -> bool {
    c.any(&|c| matches!(c, Command::While { .. }))
}

/// Replaces each `while g do c end` by `bound` nested conditionals. Paths
/// that would run more iterations set the unwinding flag instead.
///
/// Loop-free programs are returned unchanged.
pub fn unroll(program: &Program, bound: usize) -> Result<Program, UnrollError> {
    if bound == 0 {
        return Err(UnrollError::ZeroBound);
    }
    if !program.procedures.iter().any(|p| has_loop(&p.body)) {
        return Ok(program.clone());
    }
    if program
        .procedures
        .iter()
        .any(|p| p.body.any(&|c| matches!(c, Command::Call { .. })))
    {
        return Err(UnrollError::HasCalls);
    }
    let mut out = program.clone();
    let main = &mut out.procedures[0];
    let flag = match &program.unwind_flag {
        Some(f) => f.clone(),
        None => {
            let mut name = "unwind".to_string();
            let mut i = 0;
            while main.declares(&name) {
                i += 1;
                name = format!("unwind{i}");
            }
            main.locals.push(name.clone());
            name
        }
    };
    main.body = unroll_cmd(&main.body, bound, &flag);
    out.unwind_flag = Some(flag);
    Ok(out)
}

fn unroll_cmd(c: &Command, bound: usize, flag: &str) -> Command {
    match c {
        Command::Skip | Command::Assign { .. } | Command::Call { .. } => c.clone(),
        Command::If {
            guard,
            then_branch,
            else_branch,
        } => Command::if_then_else(
            guard.clone(),
            unroll_cmd(then_branch, bound, flag),
            unroll_cmd(else_branch, bound, flag),
        ),
        Command::Choice { left, prob, right } => Command::choice(
            unroll_cmd(left, bound, flag),
            prob.clone(),
            unroll_cmd(right, bound, flag),
        ),
        Command::Seq(cs) => Command::seq(cs.iter().map(|c| unroll_cmd(c, bound, flag))),
        Command::While { guard, body } => {
            let body = unroll_cmd(body, bound, flag);
            let mut acc = Command::assign(flag, BoolExpr::or(BoolExpr::var(flag), guard.clone()));
            for _ in 0..bound {
                acc = Command::if_then_else(guard.clone(), Command::seq([body.clone(), acc]), Command::Skip);
            }
            acc
        }
    }
}
