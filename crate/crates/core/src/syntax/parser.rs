//! Recursive-descent parser for `.qbp` program text.

use std::collections::HashSet;
use std::fmt;

use super::ast::{BoolExpr, Command, Procedure, Program};
use crate::prob::{parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{pos}: syntax error: found {found}, expected {}", expected.join(" or "))]
    Syntax {
        pos: Pos,
        found: String,
        expected: Vec<String>,
    },
    #[error("{pos}: {message}")]
    Lexical { pos: Pos, message: String },
    #[error("{pos}: undeclared variable `{name}` in procedure `{procedure}`")]
    UndeclaredVariable {
        pos: Pos,
        name: String,
        procedure: String,
    },
    #[error("{pos}: duplicate procedure name `{name}`")]
    DuplicateProcedure { pos: Pos, name: String },
    #[error("{pos}: `{marker}` marker is only allowed on inputs of the first procedure")]
    MisplacedMarker { pos: Pos, marker: String },
}

impl ParseError {
    pub fn pos(&self) -> &Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::Lexical { pos, .. }
            | ParseError::UndeclaredVariable { pos, .. }
            | ParseError::DuplicateProcedure { pos, .. }
            | ParseError::MisplacedMarker { pos, .. } => pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    Arrow,
    Semi,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Not,
    And,
    Or,
    Xor,
    Slash,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(s) => write!(f, "number `{s}`"),
            Tok::Arrow => f.write_str("`<-`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Not => f.write_str("`!`"),
            Tok::And => f.write_str("`&`"),
            Tok::Or => f.write_str("`|`"),
            Tok::Xor => f.write_str("`^`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "proc", "in", "out", "local", "end", "if", "then", "else", "while", "do", "skip", "true", "false",
    "secret", "public",
];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            toks.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            col += i - start;
            toks.push((Tok::Num(chars[start..i].iter().collect()), pos));
            continue;
        }
        let tok = match c {
            '<' if chars.get(i + 1) == Some(&'-') => {
                advance(2, &mut i, &mut col);
                toks.push((Tok::Arrow, pos));
                continue;
            }
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '!' | '~' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '^' => Tok::Xor,
            '/' => Tok::Slash,
            other => {
                return Err(ParseError::Lexical {
                    pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        advance(1, &mut i, &mut col);
        toks.push((tok, pos));
    }
    toks.push((Tok::Eof, Pos { line, col }));
    Ok(toks)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Input,
    Output,
    Local,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    /// Variables visible in the procedure currently being parsed.
    scope: HashSet<String>,
    proc_name: String,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1.clone()
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            found: self.peek().to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(&[&tok.to_string()])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn natural(&mut self) -> PResult<usize> {
        match self.peek() {
            Tok::Num(s) if s.bytes().all(|b| b.is_ascii_digit()) => {
                let n = s.parse().map_err(|_| ParseError::Lexical {
                    pos: self.pos(),
                    message: format!("number `{s}` out of range"),
                })?;
                self.bump();
                Ok(n)
            }
            _ => self.error(&["natural number"]),
        }
    }

    /// `name` or `name[i]`.
    fn var_name(&mut self) -> PResult<String> {
        let name = self.ident()?;
        if *self.peek() == Tok::LBracket {
            self.bump();
            let i = self.natural()?;
            self.expect(Tok::RBracket)?;
            Ok(format!("{name}[{i}]"))
        } else {
            Ok(name)
        }
    }

    fn used_var(&mut self) -> PResult<String> {
        let pos = self.pos();
        let name = self.var_name()?;
        if !self.scope.contains(&name) {
            return Err(ParseError::UndeclaredVariable {
                pos,
                name,
                procedure: self.proc_name.clone(),
            });
        }
        Ok(name)
    }

    fn program(&mut self) -> PResult<Program> {
        let mut procedures: Vec<Procedure> = Vec::new();
        let mut public_inputs = Vec::new();
        loop {
            let pos = self.pos();
            let (proc_, public) = self.procedure(procedures.is_empty())?;
            if procedures.iter().any(|p| p.name == proc_.name) {
                return Err(ParseError::DuplicateProcedure {
                    pos,
                    name: proc_.name,
                });
            }
            if procedures.is_empty() {
                public_inputs = public;
            }
            procedures.push(proc_);
            if *self.peek() == Tok::Eof {
                break;
            }
        }
        Ok(Program {
            procedures,
            public_inputs,
            unwind_flag: None,
        })
    }

    fn procedure(&mut self, is_main: bool) -> PResult<(Procedure, Vec<String>)> {
        self.expect_kw("proc")?;
        let name = self.ident()?;
        self.proc_name = name.clone();
        self.scope.clear();
        self.expect_kw("in")?;
        let (inputs, public) = self.decls(Role::Input, is_main)?;
        self.expect(Tok::Semi)?;
        self.expect_kw("out")?;
        let (outputs, _) = self.decls(Role::Output, is_main)?;
        self.expect(Tok::Semi)?;
        let locals = if self.is_kw("local") {
            self.bump();
            let (locals, _) = self.decls(Role::Local, is_main)?;
            self.expect(Tok::Semi)?;
            locals
        } else {
            Vec::new()
        };
        self.scope
            .extend(inputs.iter().chain(&outputs).chain(&locals).cloned());
        let body = self.command_seq()?;
        self.expect_kw("end")?;
        Ok((
            Procedure {
                name,
                inputs,
                outputs,
                locals,
                body,
            },
            public,
        ))
    }

    fn decls(&mut self, role: Role, is_main: bool) -> PResult<(Vec<String>, Vec<String>)> {
        let mut names = Vec::new();
        let mut public = Vec::new();
        if *self.peek() == Tok::Semi {
            return Ok((names, public));
        }
        loop {
            let mut is_public = false;
            for marker in ["secret", "public"] {
                if self.is_kw(marker) {
                    if role != Role::Input || !is_main {
                        return Err(ParseError::MisplacedMarker {
                            pos: self.pos(),
                            marker: marker.to_string(),
                        });
                    }
                    is_public = marker == "public";
                    self.bump();
                    break;
                }
            }
            let base = self.ident()?;
            let expanded: Vec<String> = if *self.peek() == Tok::LBracket {
                self.bump();
                let width = self.natural()?;
                self.expect(Tok::RBracket)?;
                (0..width).rev().map(|i| format!("{base}[{i}]")).collect()
            } else {
                vec![base]
            };
            if is_public {
                public.extend(expanded.iter().cloned());
            }
            names.extend(expanded);
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok((names, public))
    }

    fn starts_command(&self) -> bool {
        match self.peek() {
            Tok::LBrace => true,
            Tok::Ident(s) => !matches!(s.as_str(), "end" | "else" | "proc"),
            _ => false,
        }
    }

    fn command_seq(&mut self) -> PResult<Command> {
        let mut cmds = vec![self.command()?];
        while *self.peek() == Tok::Semi {
            self.bump();
            if !self.starts_command() {
                break;
            }
            cmds.push(self.command()?);
        }
        Ok(if cmds.len() == 1 {
            cmds.pop().unwrap()
        } else {
            Command::Seq(cmds)
        })
    }

    fn command(&mut self) -> PResult<Command> {
        match self.peek().clone() {
            Tok::Ident(kw) if kw == "skip" => {
                self.bump();
                Ok(Command::Skip)
            }
            Tok::Ident(kw) if kw == "if" => {
                self.bump();
                let guard = self.expr()?;
                self.expect_kw("then")?;
                let then_branch = self.command_seq()?;
                let else_branch = if self.is_kw("else") {
                    self.bump();
                    self.command_seq()?
                } else {
                    Command::Skip
                };
                self.expect_kw("end")?;
                Ok(Command::if_then_else(guard, then_branch, else_branch))
            }
            Tok::Ident(kw) if kw == "while" => {
                self.bump();
                let guard = self.expr()?;
                self.expect_kw("do")?;
                let body = self.command_seq()?;
                self.expect_kw("end")?;
                Ok(Command::while_loop(guard, body))
            }
            Tok::LBrace => {
                self.bump();
                let left = self.command_seq()?;
                self.expect(Tok::RBrace)?;
                self.expect(Tok::LBracket)?;
                let prob = self.probability()?;
                self.expect(Tok::RBracket)?;
                self.expect(Tok::LBrace)?;
                let right = self.command_seq()?;
                self.expect(Tok::RBrace)?;
                Ok(Command::choice(left, prob, right))
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::LParen => self.call(),
            Tok::Ident(_) => {
                let target = self.used_var()?;
                self.expect(Tok::Arrow)?;
                let value = self.expr()?;
                Ok(Command::Assign { target, value })
            }
            _ => self.error(&["command"]),
        }
    }

    fn call(&mut self) -> PResult<Command> {
        let callee = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if !matches!(self.peek(), Tok::Semi | Tok::RParen) {
            args.push(self.expr()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
        }
        let mut returns = Vec::new();
        if *self.peek() == Tok::Semi {
            self.bump();
            if *self.peek() != Tok::RParen {
                returns.push(self.used_var()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    returns.push(self.used_var()?);
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Command::Call {
            callee,
            args,
            returns,
        })
    }

    fn probability(&mut self) -> PResult<Rational> {
        let pos = self.pos();
        let mut text = match self.bump() {
            Tok::Num(n) => n,
            _ => {
                self.at -= 1;
                return self.error(&["probability literal"]);
            }
        };
        if *self.peek() == Tok::Slash {
            self.bump();
            match self.bump() {
                Tok::Num(d) => {
                    text.push('/');
                    text.push_str(&d);
                }
                _ => {
                    self.at -= 1;
                    return self.error(&["denominator"]);
                }
            }
        }
        parse_rational(&text).ok_or(ParseError::Lexical {
            pos,
            message: format!("malformed probability `{text}`"),
        })
    }

    fn expr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.xor_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            lhs = BoolExpr::or(lhs, self.xor_expr()?);
        }
        Ok(lhs)
    }

    fn xor_expr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Xor {
            self.bump();
            lhs = BoolExpr::xor(lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            lhs = BoolExpr::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<BoolExpr> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(BoolExpr::not(self.unary()?))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Num(n) if n == "0" || n == "1" => {
                self.bump();
                Ok(BoolExpr::Const(n == "1"))
            }
            Tok::Ident(kw) if kw == "true" || kw == "false" => {
                self.bump();
                Ok(BoolExpr::Const(kw == "true"))
            }
            Tok::Ident(_) => Ok(BoolExpr::Var(self.used_var()?)),
            _ => self.error(&["expression"]),
        }
    }
}

/// Parses program text. Checks declaration of every variable use and
/// uniqueness of procedure names; everything else is left to
/// [`super::validate`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        scope: HashSet::new(),
        proc_name: String::new(),
    };
    let program = p.program()?;
    p.expect(Tok::Eof)?;
    Ok(program)
}
