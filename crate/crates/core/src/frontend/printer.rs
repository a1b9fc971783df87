//! Deterministic printing with minimal parentheses.

use crate::ops::Op2;
use crate::term::Term;
use crate::types::Context;

const LVL_LET: u8 = 0;
const LVL_ADD: u8 = 1;
const LVL_MUL: u8 = 2;
const LVL_PREFIX: u8 = 3;
const LVL_ATOM: u8 = 4;

fn level(e: &Term) -> u8 {
    match e {
        Term::Let(..) | Term::If(..) | Term::Lambda(..) => LVL_LET,
        Term::Op2(Op2::Add | Op2::Sub, ..) => LVL_ADD,
        Term::Op2(Op2::Mul | Op2::Div, ..) => LVL_MUL,
        Term::Op1(..)
        | Term::Proj(..)
        | Term::Gt0(_)
        | Term::Shift1L(_)
        | Term::Shift1R(_)
        | Term::Map2 { .. }
        | Term::Map { .. }
        | Term::Fold { .. } => LVL_PREFIX,
        Term::Const(c) if c.is_sign_negative() => LVL_PREFIX,
        _ => LVL_ATOM,
    }
}

/// Prints a term on one line.
pub fn print_term(e: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, e);
    s
}

/// Prints a program in `.src` form.
pub fn print_program(ctx: &Context, e: &Term) -> String {
    let decls: Vec<String> = ctx.entries().iter().map(|(n, t)| format!("{n}:{t}")).collect();
    format!("ctx {};\n{}\n", decls.join(", "), print_pretty(e))
}

fn write_num(out: &mut String, c: f64) {
    out.push_str(&format!("{c}"));
}

fn wrap(out: &mut String, e: &Term, min: u8) {
    if level(e) < min {
        out.push('(');
        write_term(out, e);
        out.push(')');
    } else {
        write_term(out, e);
    }
}

/// Arguments of prefix operators; array operators are parenthesised.
fn wrap_arg(out: &mut String, e: &Term) {
    let min = match e {
        Term::Map2 { .. } | Term::Map { .. } | Term::Fold { .. } => LVL_ATOM,
        _ => LVL_PREFIX,
    };
    wrap(out, e, min);
}

fn write_list(out: &mut String, es: &[Term]) {
    for (i, e) in es.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_term(out, e);
    }
}

/// The operator shorthand applies when the body is `x op y` over binders
/// named `x` and `y`, the names the parser gives the shorthand back.
fn shorthand(x: &str, y: &str, body: &Term) -> Option<Op2> {
    match body {
        Term::Op2(op, a, b) if x == "x" && y == "y" && a.as_var() == Some(x) && b.as_var() == Some(y) => Some(*op),
        _ => None,
    }
}

fn write_binder2(out: &mut String, x: &str, y: &str, body: &Term) {
    if let Some(op) = shorthand(x, y, body) {
        out.push_str(op.symbol());
    } else {
        out.push_str(&format!("({x} {y}. "));
        write_term(out, body);
        out.push(')');
    }
}

fn write_term(out: &mut String, e: &Term) {
    match e {
        Term::Var(v) => out.push_str(v),
        Term::Const(c) => write_num(out, *c),
        Term::BoolLit(b) => out.push_str(if *b { "true" } else { "false" }),
        Term::Let(p, e1, e2) => {
            out.push_str("let ");
            out.push_str(&p.join(", "));
            out.push_str(" = ");
            write_term(out, e1);
            out.push_str(" in ");
            write_term(out, e2);
        }
        Term::Tuple(es) => {
            out.push('<');
            write_list(out, es);
            out.push('>');
        }
        Term::ArrayLit(es) => {
            out.push('[');
            write_list(out, es);
            out.push(']');
        }
        Term::Proj(i, t) => {
            match i {
                1 => out.push_str("fst "),
                2 => out.push_str("snd "),
                k => out.push_str(&format!("pi{k} ")),
            }
            wrap_arg(out, t);
        }
        Term::Op1(op, t) => {
            out.push_str(op.name());
            out.push(' ');
            wrap_arg(out, t);
        }
        Term::Op2(op, a, b) => {
            let l = level(e);
            wrap(out, a, l);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            wrap(out, b, l + 1);
        }
        Term::Gt0(t) => {
            out.push_str("gt0 ");
            wrap_arg(out, t);
        }
        Term::Shift1L(t) => {
            out.push_str("shift1L ");
            wrap_arg(out, t);
        }
        Term::Shift1R(t) => {
            out.push_str("shift1R ");
            wrap_arg(out, t);
        }
        Term::If(c, t, f) => {
            out.push_str("if ");
            write_term(out, c);
            out.push_str(" then ");
            write_term(out, t);
            out.push_str(" else ");
            write_term(out, f);
        }
        Term::Map2 { x, y, body, a, b } => {
            out.push_str("map2 ");
            write_binder2(out, x, y, body);
            out.push(' ');
            wrap(out, a, LVL_ATOM);
            out.push(' ');
            wrap(out, b, LVL_ATOM);
        }
        Term::Map { x, body, a } => {
            out.push_str(&format!("map ({x}. "));
            write_term(out, body);
            out.push_str(") ");
            wrap(out, a, LVL_ATOM);
        }
        Term::Fold { kind, x, y, body, init, arr } => {
            out.push_str(kind.keyword());
            out.push(' ');
            write_binder2(out, x, y, body);
            out.push(' ');
            wrap(out, init, LVL_ATOM);
            out.push(' ');
            wrap(out, arr, LVL_ATOM);
        }
        Term::Lambda(ps, body) => {
            let names: Vec<&str> = ps.iter().map(|(n, _)| n.as_str()).collect();
            out.push_str(&format!("fun ({}) -> ", names.join(", ")));
            write_term(out, body);
        }
        Term::Apply(f, args) => {
            wrap(out, f, LVL_ATOM);
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
    }
}

/// Prints a term with one let binding per line and lambda bodies indented.
pub fn print_pretty(e: &Term) -> String {
    let mut s = String::new();
    pretty(&mut s, e, 0);
    s
}

fn breaks(e: &Term) -> bool {
    matches!(e, Term::Let(..) | Term::Lambda(..))
}

fn pretty(out: &mut String, e: &Term, indent: usize) {
    let pad = |n: usize| " ".repeat(n);
    match e {
        Term::Let(p, e1, e2) => {
            out.push_str(&format!("let {} = ", p.join(", ")));
            if breaks(e1) {
                out.push('\n');
                out.push_str(&pad(indent + 2));
                pretty(out, e1, indent + 2);
                out.push('\n');
                out.push_str(&pad(indent));
                out.push_str("in\n");
            } else {
                write_term(out, e1);
                out.push_str(" in\n");
            }
            out.push_str(&pad(indent));
            pretty(out, e2, indent);
        }
        Term::Lambda(ps, body) if breaks(body) => {
            let names: Vec<&str> = ps.iter().map(|(n, _)| n.as_str()).collect();
            out.push_str(&format!("fun ({}) ->\n", names.join(", ")));
            out.push_str(&pad(indent + 2));
            pretty(out, body, indent + 2);
        }
        Term::Tuple(es) if es.iter().any(breaks) => {
            out.push_str("<\n");
            for (i, c) in es.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                pretty(out, c, indent + 2);
                if i + 1 < es.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('>');
        }
        _ => write_term(out, e),
    }
}
