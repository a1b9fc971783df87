//! Unary normal form: variable-free terms over type lists.
//!
//! Every primitive is indexed by the type list it receives and returns that
//! whole list plus its result (or, for `proj`, with a middle segment
//! dropped). Array and conditional primitives carry their source bodies and
//! an environment mapping the bodies' free names to list positions.

use std::fmt;

use thiserror::Error;

use crate::ops::{Op1, Op2};
use crate::term::{Name, Term};
use crate::types::Type;

pub type TypeList = Vec<Type>;

/// Free names of an embedded body and their zero-based list positions.
pub type UnfEnv = Vec<(Name, usize)>;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum UnfError {
    #[error("judgment mismatch at `{at}`: expected [{expected}], found [{found}]")]
    JudgmentMismatch {
        expected: String,
        found: String,
        at: String,
    },
    #[error("composition needs a continuation slot, found [{0}]")]
    MissingContinuationSlot(String),
    #[error("not the image of differentiation: {0}")]
    MalformedDiffImage(String),
    #[error("construct not allowed in source UNF: {0}")]
    NotSource(String),
    #[error(transparent)]
    Type(#[from] crate::typecheck::TypeError),
    #[error("differentiating an embedded body: {0}")]
    Body(String),
}

/// The operation of an `op` primitive; constants have no arguments and
/// projections are unary.
#[derive(Clone, Debug, PartialEq)]
pub enum PrimOp {
    Const(f64),
    Op1(Op1),
    Op2(Op2),
    Proj(usize),
}

impl PrimOp {
    pub fn arity(&self) -> usize {
        match self {
            PrimOp::Const(_) => 0,
            PrimOp::Op1(_) | PrimOp::Proj(_) => 1,
            PrimOp::Op2(_) => 2,
        }
    }

    pub fn name(&self) -> String {
        match self {
            PrimOp::Const(c) => format!("{c}"),
            PrimOp::Op1(o) => o.name().to_string(),
            PrimOp::Op2(o) => o.word().to_string(),
            PrimOp::Proj(i) => format!("pi{i}"),
        }
    }
}

/// Source and target UNF terms; the target adds `Jt`, `Compose` and
/// `PairTerm`.
#[derive(Clone, Debug, PartialEq)]
pub enum Unf {
    /// `var_{T;i}`: `T → T, T_i` with one-based `i`.
    Var { t: TypeList, i: usize },
    /// `op_{T}`: `T, args → T, args, result`.
    Op { t: TypeList, args: TypeList, op: PrimOp },
    /// `pair_{T;A×B}`: `T, A, B → T, A×B`.
    Pair { t: TypeList, a: Type, b: Type },
    /// `proj_{T1;T2;T3}`: `T1, T2, T3 → T1, T3`.
    Proj { t1: TypeList, t2: TypeList, t3: TypeList },
    Seq(Box<Unf>, Box<Unf>),
    /// `T, ℝ[n], ℝ[n] → T, ℝ[n], ℝ[n], ℝ[n]`.
    Map2 { t: TypeList, n: usize, x: Name, y: Name, body: Term, env: UnfEnv },
    /// `T, ℝ[n] → T, ℝ[n], ℝ`.
    Reduce { t: TypeList, n: usize, x: Name, y: Name, body: Term, init: Term, env: UnfEnv },
    /// `T, ℝ[n] → T, ℝ[n], ℝ[n]`.
    Map { t: TypeList, n: usize, x: Name, body: Term, env: UnfEnv },
    /// `T, ℝ, ℝ[n] → T, ℝ, ℝ[n], ℝ`.
    Foldl { t: TypeList, n: usize, x: Name, y: Name, body: Term, env: UnfEnv },
    /// `T → T, ℝ`.
    If { t: TypeList, cond: Term, then: Term, els: Term, env: UnfEnv },
    /// Transpose Jacobian of a primitive: `T → [T' → T]`.
    Jt(Box<Unf>),
    /// Precomposition of a continuation by a transpose Jacobian.
    Compose(Box<Unf>, Box<Unf>),
    /// Runs both terms on the same input and concatenates the outputs.
    PairTerm(Box<Unf>, Box<Unf>),
}

impl Unf {
    pub fn seq(a: Unf, b: Unf) -> Unf {
        Unf::Seq(Box::new(a), Box::new(b))
    }

    /// Right-nested sequence of the given terms.
    pub fn seq_all(mut parts: Vec<Unf>) -> Unf {
        let mut acc = parts.pop().expect("non-empty sequence");
        while let Some(p) = parts.pop() {
            acc = Unf::seq(p, acc);
        }
        acc
    }

    pub fn compose(a: Unf, b: Unf) -> Unf {
        Unf::Compose(Box::new(a), Box::new(b))
    }

    pub fn pair_term(a: Unf, b: Unf) -> Unf {
        Unf::PairTerm(Box::new(a), Box::new(b))
    }

    pub fn jt(p: Unf) -> Unf {
        Unf::Jt(Box::new(p))
    }

    pub fn is_primitive(&self) -> bool {
        !matches!(self, Unf::Seq(..) | Unf::Jt(_) | Unf::Compose(..) | Unf::PairTerm(..))
    }

    /// The input list of a primitive.
    pub fn input(&self) -> Option<TypeList> {
        let arr = |n: usize| Type::real_array(n);
        Some(match self {
            Unf::Var { t, .. } => t.clone(),
            Unf::Op { t, args, .. } => [t.clone(), args.clone()].concat(),
            Unf::Pair { t, a, b } => [t.clone(), vec![a.clone(), b.clone()]].concat(),
            Unf::Proj { t1, t2, t3 } => [t1.clone(), t2.clone(), t3.clone()].concat(),
            Unf::Map2 { t, n, .. } => [t.clone(), vec![arr(*n), arr(*n)]].concat(),
            Unf::Reduce { t, n, .. } | Unf::Map { t, n, .. } => [t.clone(), vec![arr(*n)]].concat(),
            Unf::Foldl { t, n, .. } => [t.clone(), vec![Type::Real, arr(*n)]].concat(),
            Unf::If { t, .. } => t.clone(),
            Unf::Seq(a, _) => return a.input(),
            _ => return None,
        })
    }
}

fn list(ts: &[Type]) -> String {
    if ts.is_empty() {
        "[]".into()
    } else {
        ts.iter().map(Type::compact).collect::<Vec<_>>().join(",")
    }
}

fn mismatch(expected: &[Type], found: &[Type], at: &Unf) -> UnfError {
    UnfError::JudgmentMismatch {
        expected: list(expected),
        found: list(found),
        at: print_short(at),
    }
}

fn expect(input: &[Type], want: &[Type], at: &Unf) -> Result<(), UnfError> {
    if input == want {
        Ok(())
    } else {
        Err(mismatch(want, input, at))
    }
}

fn prim_output(p: &Unf, input: &[Type]) -> Result<TypeList, UnfError> {
    let want = p.input().expect("primitive");
    expect(input, &want, p)?;
    let mut out = input.to_vec();
    match p {
        Unf::Var { t, i } => {
            let ty = t.get(i.wrapping_sub(1)).ok_or_else(|| mismatch(t, input, p))?;
            out.push(ty.clone());
        }
        Unf::Op { args, op, .. } => {
            let r = match (op, args.as_slice()) {
                (PrimOp::Const(_), []) => Type::Real,
                (PrimOp::Op1(_), [Type::Real]) => Type::Real,
                (PrimOp::Op2(_), [Type::Real, Type::Real]) => Type::Real,
                (PrimOp::Proj(i), [Type::Prod(ts)]) if *i >= 1 && *i <= ts.len() => ts[*i - 1].clone(),
                _ => return Err(mismatch(args, args, p)),
            };
            out.push(r);
        }
        Unf::Pair { t, a, b } => {
            out = t.clone();
            out.push(Type::Prod(vec![a.clone(), b.clone()]));
        }
        Unf::Proj { t1, t3, .. } => out = [t1.clone(), t3.clone()].concat(),
        Unf::Map2 { n, .. } | Unf::Map { n, .. } => out.push(Type::real_array(*n)),
        Unf::Reduce { .. } | Unf::Foldl { .. } | Unf::If { .. } => out.push(Type::Real),
        _ => unreachable!("not a primitive"),
    }
    Ok(out)
}

/// The output list of `e` on input `t1`, in source UNF.
pub fn typecheck_unf_source(t1: &[Type], e: &Unf) -> Result<TypeList, UnfError> {
    match e {
        Unf::Seq(a, b) => {
            let mid = typecheck_unf_source(t1, a)?;
            typecheck_unf_source(&mid, b)
        }
        Unf::Jt(_) | Unf::Compose(..) | Unf::PairTerm(..) => Err(UnfError::NotSource(print_short(e))),
        p => prim_output(p, t1),
    }
}

/// The output list of `e` on input `t1`, in target UNF.
pub fn typecheck_unf_target(t1: &[Type], e: &Unf) -> Result<TypeList, UnfError> {
    match e {
        Unf::Seq(a, b) => {
            let mid = typecheck_unf_target(t1, a)?;
            typecheck_unf_target(&mid, b)
        }
        Unf::Jt(p) => {
            if !p.is_primitive() {
                return Err(UnfError::MalformedDiffImage(print_short(e)));
            }
            let out = prim_output(p, t1)?;
            Ok(vec![Type::func(out, Type::tuple(t1.to_vec()))])
        }
        Unf::Compose(l, r) => {
            let lo = typecheck_unf_target(t1, l)?;
            let ro = typecheck_unf_target(t1, r)?;
            match (lo.as_slice(), ro.as_slice()) {
                ([Type::Func(largs, rho)], [Type::Func(rargs, rret)]) => {
                    if Type::tuple(largs.clone()) != **rret {
                        return Err(mismatch(largs, &[(**rret).clone()], e));
                    }
                    Ok(vec![Type::Func(rargs.clone(), rho.clone())])
                }
                _ => Err(UnfError::MissingContinuationSlot(format!("{}; {}", list(&lo), list(&ro)))),
            }
        }
        Unf::PairTerm(a, b) => {
            let mut out = typecheck_unf_target(t1, a)?;
            out.extend(typecheck_unf_target(t1, b)?);
            Ok(out)
        }
        p => prim_output(p, t1),
    }
}

fn env_text(env: &UnfEnv) -> String {
    env.iter().map(|(n, i)| format!("{n}@{}", i + 1)).collect::<Vec<_>>().join(",")
}

fn write(f: &mut String, e: &Unf, full: bool, top: bool) {
    use crate::frontend::print_term;
    let sub = |s: String| if full { format!("_{{{s}}}") } else { String::new() };
    match e {
        Unf::Var { t, i } => f.push_str(&format!("var{}", sub(format!("{};{i}", list(t))))),
        Unf::Op { t, op, .. } => f.push_str(&format!("{}{}", op.name(), sub(list(t)))),
        Unf::Pair { t, a, b } => {
            let p = Type::Prod(vec![a.clone(), b.clone()]);
            f.push_str(&format!("pair{}", sub(format!("{};{}", list(t), p.compact()))))
        }
        Unf::Proj { t1, t2, t3 } => {
            f.push_str(&format!("proj{}", sub(format!("{};{};{}", list(t1), list(t2), list(t3)))))
        }
        Unf::Map2 { t, x, y, body, env, .. } => f.push_str(&format!(
            "map2{}({x} {y}. {}{})",
            sub(list(t)),
            print_term(body),
            if full && !env.is_empty() { format!(" | {}", env_text(env)) } else { String::new() }
        )),
        Unf::Reduce { t, x, y, body, init, env, .. } => f.push_str(&format!(
            "reduce{}({x} {y}. {}; {}{})",
            sub(list(t)),
            print_term(body),
            print_term(init),
            if full && !env.is_empty() { format!(" | {}", env_text(env)) } else { String::new() }
        )),
        Unf::Map { t, x, body, env, .. } => f.push_str(&format!(
            "map{}({x}. {}{})",
            sub(list(t)),
            print_term(body),
            if full && !env.is_empty() { format!(" | {}", env_text(env)) } else { String::new() }
        )),
        Unf::Foldl { t, x, y, body, env, .. } => f.push_str(&format!(
            "foldl{}({x} {y}. {}{})",
            sub(list(t)),
            print_term(body),
            if full && !env.is_empty() { format!(" | {}", env_text(env)) } else { String::new() }
        )),
        Unf::If { t, cond, then, els, env } => f.push_str(&format!(
            "if{}({}; {}; {}{})",
            sub(list(t)),
            print_term(cond),
            print_term(then),
            print_term(els),
            if full && !env.is_empty() { format!(" | {}", env_text(env)) } else { String::new() }
        )),
        Unf::Seq(a, b) => {
            let sep = if top { " ; " } else { ";" };
            write(f, a, full, top);
            f.push_str(sep);
            write(f, b, full, top);
        }
        Unf::Jt(p) => {
            f.push_str("JT");
            write(f, p, full, false);
        }
        Unf::Compose(a, b) => {
            let paren = |f: &mut String, x: &Unf| {
                if matches!(x, Unf::Seq(..)) {
                    f.push('(');
                    write(f, x, full, false);
                    f.push(')');
                } else {
                    write(f, x, full, false);
                }
            };
            paren(f, a);
            f.push_str(" ∘ ");
            paren(f, b);
        }
        Unf::PairTerm(a, b) => {
            f.push('<');
            write(f, a, full, false);
            f.push_str(", ");
            write(f, b, full, false);
            f.push('>');
        }
    }
}

/// The compact form without type indices, as used in worked examples.
pub fn print_short(e: &Unf) -> String {
    let mut s = String::new();
    write(&mut s, e, false, true);
    s
}

impl fmt::Display for Unf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write(&mut s, self, true, true);
        f.write_str(&s)
    }
}
