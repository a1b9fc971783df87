//! Recursive-descent parser for programs, target terms, types and values.

use super::lexer::{lex, Tok, Token};
use super::SyntaxError;
use crate::eval::Value;
use crate::ops::{Op1, Op2};
use crate::term::{FoldKind, Name, Term};
use crate::types::{Context, Type};

const KEYWORDS: &[&str] = &[
    "let", "in", "if", "then", "else", "fun", "ctx", "true", "false", "fst", "snd", "shift1L",
    "shift1R", "gt0", "map2", "map", "reduce", "foldl", "scanl", "scanr", "scanlp", "scanrp",
    "sin", "cos", "exp", "log",
];

/// Placeholder annotation for lambda parameters written without a type.
pub fn unannotated() -> Type {
    Type::Abstract("_".into())
}

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s) || proj_index(s).is_some()
}

fn proj_index(s: &str) -> Option<usize> {
    let rest = s.strip_prefix("pi")?;
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok().filter(|k| *k >= 1)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    allow_arrays: bool,
}

impl Parser {
    fn new(src: &str, allow_arrays: bool) -> Result<Self, SyntaxError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            allow_arrays,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: impl Into<String>) -> SyntaxError {
        let t = &self.toks[self.pos];
        SyntaxError {
            line: t.line,
            col: t.col,
            expected: format!("{}, found {}", expected.into(), t.tok.describe()),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        let same = match (self.peek(), t) {
            (Tok::LParen { .. }, Tok::LParen { .. }) => true,
            (a, b) => a == b,
        };
        if same {
            self.bump();
        }
        same
    }

    fn expect(&mut self, t: Tok) -> Result<(), SyntaxError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.err(t.describe()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<Name, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.err("an identifier")),
        }
    }

    fn finish(&mut self) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.err("end of input"))
        }
    }

    // Types.

    fn ty(&mut self) -> Result<Type, SyntaxError> {
        let first = self.ty_postfix()?;
        if *self.peek() != Tok::Star {
            return Ok(first);
        }
        let mut ts = vec![first];
        while self.eat(&Tok::Star) {
            ts.push(self.ty_postfix()?);
        }
        Ok(Type::Prod(ts))
    }

    fn ty_postfix(&mut self) -> Result<Type, SyntaxError> {
        let mut t = self.ty_atom()?;
        while self.eat(&Tok::Caret) {
            match self.bump() {
                Tok::Num(n) if n >= 0.0 && n.fract() == 0.0 => t = Type::array(t, n as usize),
                _ => return Err(self.err("an array size")),
            }
        }
        Ok(t)
    }

    fn ty_atom(&mut self) -> Result<Type, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "real" => {
                self.bump();
                Ok(Type::Real)
            }
            Tok::Ident(s) if s == "bool" => {
                self.bump();
                Ok(Type::Bool)
            }
            Tok::Ident(s) if s == "unit" => {
                self.bump();
                Ok(Type::Prod(vec![]))
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(Type::Abstract(s))
            }
            Tok::LParen { .. } => {
                self.bump();
                let mut ts = Vec::new();
                if *self.peek() != Tok::RParen {
                    ts.push(self.ty()?);
                    while self.eat(&Tok::Comma) {
                        ts.push(self.ty()?);
                    }
                }
                self.expect(Tok::RParen)?;
                if self.eat(&Tok::Arrow) {
                    let r = self.ty_postfix()?;
                    return Ok(Type::func(ts, r));
                }
                if ts.len() == 1 {
                    Ok(ts.pop().unwrap())
                } else {
                    Err(self.err("`->` after a parameter type list"))
                }
            }
            _ => Err(self.err("a type")),
        }
    }

    // Expressions.

    fn expr(&mut self) -> Result<Term, SyntaxError> {
        if self.is_kw("let") {
            self.bump();
            let mut pat = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                pat.push(self.ident()?);
            }
            self.expect(Tok::Eq)?;
            let e1 = self.expr()?;
            self.expect_kw("in")?;
            let e2 = self.expr()?;
            return Ok(Term::Let(pat, Box::new(e1), Box::new(e2)));
        }
        if self.is_kw("if") {
            self.bump();
            let c = self.expr()?;
            self.expect_kw("then")?;
            let t = self.expr()?;
            self.expect_kw("else")?;
            let f = self.expr()?;
            return Ok(Term::if_(c, t, f));
        }
        if self.is_kw("fun") {
            self.bump();
            self.expect(Tok::LParen { tight: false })?;
            let mut ps = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    let n = self.ident()?;
                    let t = if self.eat(&Tok::Colon) {
                        self.ty()?
                    } else {
                        unannotated()
                    };
                    ps.push((n, t));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            self.expect(Tok::Arrow)?;
            let body = self.expr()?;
            return Ok(Term::Lambda(ps, Box::new(body)));
        }
        self.additive()
    }

    fn additive(&mut self) -> Result<Term, SyntaxError> {
        let mut lhs = self.mult()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Op2::Add,
                Tok::Minus => Op2::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mult()?;
            lhs = Term::op2(op, lhs, rhs);
        }
    }

    fn mult(&mut self) -> Result<Term, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => Op2::Mul,
                Tok::Slash => Op2::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Term::op2(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Term, SyntaxError> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.postfix(),
        };
        if let Some(op) = Op1::from_name(&kw) {
            self.bump();
            return Ok(Term::op1(op, self.unary()?));
        }
        if let Some(k) = proj_index(&kw) {
            self.bump();
            return Ok(Term::proj(k, self.unary()?));
        }
        match kw.as_str() {
            "fst" => {
                self.bump();
                Ok(Term::proj(1, self.unary()?))
            }
            "snd" => {
                self.bump();
                Ok(Term::proj(2, self.unary()?))
            }
            "shift1L" => {
                self.bump();
                Ok(Term::shift1l(self.unary()?))
            }
            "shift1R" => {
                self.bump();
                Ok(Term::shift1r(self.unary()?))
            }
            "gt0" => {
                self.bump();
                Ok(Term::Gt0(Box::new(self.unary()?)))
            }
            "map2" => {
                self.bump();
                let (x, y, body) = self.binder2()?;
                let a = self.postfix()?;
                let b = self.postfix()?;
                Ok(Term::map2(&x, &y, body, a, b))
            }
            "map" => {
                self.bump();
                self.expect(Tok::LParen { tight: false })?;
                let x = self.ident()?;
                self.expect(Tok::Dot)?;
                let body = self.expr()?;
                self.expect(Tok::RParen)?;
                let a = self.postfix()?;
                Ok(Term::map(&x, body, a))
            }
            _ => {
                if let Some(kind) = FoldKind::from_keyword(&kw) {
                    self.bump();
                    let (x, y, body) = self.binder2()?;
                    let init = self.postfix()?;
                    let arr = self.postfix()?;
                    Ok(Term::fold(kind, &x, &y, body, init, arr))
                } else {
                    self.postfix()
                }
            }
        }
    }

    /// `(x y. e)`, `(x, y. e)` or an operator symbol standing for `(x y. x op y)`.
    fn binder2(&mut self) -> Result<(Name, Name, Term), SyntaxError> {
        let op = match self.peek() {
            Tok::Plus => Some(Op2::Add),
            Tok::Minus => Some(Op2::Sub),
            Tok::Star => Some(Op2::Mul),
            Tok::Slash => Some(Op2::Div),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            return Ok(("x".into(), "y".into(), Term::op2(op, Term::var("x"), Term::var("y"))));
        }
        self.expect(Tok::LParen { tight: false })?;
        let x = self.ident()?;
        self.eat(&Tok::Comma);
        let y = self.ident()?;
        self.expect(Tok::Dot)?;
        let body = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok((x, y, body))
    }

    fn postfix(&mut self) -> Result<Term, SyntaxError> {
        let mut head = self.atom()?;
        while let Tok::LParen { tight: true } = self.peek() {
            self.bump();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                args.push(self.expr()?);
                while self.eat(&Tok::Comma) {
                    args.push(self.expr()?);
                }
            }
            self.expect(Tok::RParen)?;
            head = Term::apply(head, args);
        }
        Ok(head)
    }

    fn atom(&mut self) -> Result<Term, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Term::Const(n))
            }
            Tok::Minus => {
                if let Tok::Num(n) = self.peek_at(1).clone() {
                    self.bump();
                    self.bump();
                    Ok(Term::Const(-n))
                } else {
                    Err(self.err("an expression"))
                }
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Term::BoolLit(true))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Term::BoolLit(false))
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(Term::Var(s))
            }
            Tok::LAngle => {
                self.bump();
                let mut es = Vec::new();
                if *self.peek() != Tok::RAngle {
                    es.push(self.expr()?);
                    while self.eat(&Tok::Comma) {
                        es.push(self.expr()?);
                    }
                }
                self.expect(Tok::RAngle)?;
                Ok(Term::tuple(es))
            }
            Tok::LParen { .. } => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBrack if self.allow_arrays => {
                self.bump();
                let mut es = Vec::new();
                if *self.peek() != Tok::RBrack {
                    es.push(self.expr()?);
                    while self.eat(&Tok::Comma) {
                        es.push(self.expr()?);
                    }
                }
                self.expect(Tok::RBrack)?;
                Ok(Term::ArrayLit(es))
            }
            _ => Err(self.err("an expression")),
        }
    }

    // Values.

    fn value(&mut self) -> Result<Value, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Value::Real(n))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Num(n) => Ok(Value::Real(-n)),
                    _ => Err(self.err("a number")),
                }
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Value::Bool(s == "true"))
            }
            Tok::LBrack => {
                self.bump();
                let vs = self.value_list(&Tok::RBrack)?;
                Ok(Value::Array(vs))
            }
            Tok::LAngle => {
                self.bump();
                let vs = self.value_list(&Tok::RAngle)?;
                Ok(if vs.len() == 1 {
                    vs.into_iter().next().unwrap()
                } else {
                    Value::Tuple(vs)
                })
            }
            _ => Err(self.err("a value literal")),
        }
    }

    fn value_list(&mut self, close: &Tok) -> Result<Vec<Value>, SyntaxError> {
        let mut vs = Vec::new();
        if self.peek() != close {
            vs.push(self.value()?);
            while self.eat(&Tok::Comma) {
                vs.push(self.value()?);
            }
        }
        self.expect(close.clone())?;
        Ok(vs)
    }
}

/// Parses `ctx x:real, A:real^4; expr`.
pub fn parse_program(text: &str) -> Result<(Context, Term), SyntaxError> {
    let mut p = Parser::new(text, false)?;
    p.expect_kw("ctx")?;
    let mut entries = Vec::new();
    if *p.peek() != Tok::Semi {
        loop {
            let (line, col) = (p.toks[p.pos].line, p.toks[p.pos].col);
            let n = p.ident()?;
            p.expect(Tok::Colon)?;
            let t = p.ty()?;
            entries.push((n, t, line, col));
            if !p.eat(&Tok::Comma) {
                break;
            }
        }
    }
    p.expect(Tok::Semi)?;
    let mut ctx = Context::new();
    for (n, t, line, col) in entries {
        if ctx.position(&n).is_some() {
            return Err(SyntaxError {
                line,
                col,
                expected: format!("a fresh name, `{n}` is declared twice"),
            });
        }
        ctx.push(&n, t);
    }
    let e = p.expr()?;
    p.finish()?;
    Ok((ctx, e))
}

/// Parses a single target term; array literals are allowed.
pub fn parse_term(text: &str) -> Result<Term, SyntaxError> {
    let mut p = Parser::new(text, true)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parses a type such as `real * real^3`.
pub fn parse_type(text: &str) -> Result<Type, SyntaxError> {
    let mut p = Parser::new(text, false)?;
    let t = p.ty()?;
    p.finish()?;
    Ok(t)
}

/// Parses a value literal.
pub fn parse_value(text: &str) -> Result<Value, SyntaxError> {
    let mut p = Parser::new(text, true)?;
    let v = p.value()?;
    p.finish()?;
    Ok(v)
}

/// Parses a `.vals` file: one `name = literal` per line.
pub fn parse_values(text: &str) -> Result<Vec<(Name, Value)>, SyntaxError> {
    let mut p = Parser::new(text, true)?;
    let mut out: Vec<(Name, Value)> = Vec::new();
    while *p.peek() != Tok::Eof {
        let n = p.ident()?;
        p.expect(Tok::Eq)?;
        let v = p.value()?;
        if out.iter().any(|(m, _)| *m == n) {
            return Err(p.err(format!("a single binding for `{n}`")));
        }
        out.push((n, v));
        p.eat(&Tok::Semi);
    }
    Ok(out)
}
