//! The additive monoid on ground types, its lifting to contexts, and the
//! multiplicative scaling used by open array bodies.
//!
//! Zeros of array types are built as `map (t. 0) w` from a witness term `w`
//! of the same type, which keeps every array size static.

use thiserror::Error;

use crate::term::Term;
use crate::types::Type;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MonoidError {
    #[error("position {index} is out of range for a context of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("type {0} is not ground")]
    NotGround(Type),
}

/// Projects component `i` (one-based) of a term of product type, reducing
/// projections of literal tuples on the spot.
pub fn component(t: &Term, i: usize) -> Term {
    match t {
        Term::Tuple(es) if i >= 1 && i <= es.len() => es[i - 1].clone(),
        _ => Term::proj(i, t.clone()),
    }
}

/// The zero of a ground type; array zeros take their shape from `witness`.
pub fn zero_like(t: &Type, witness: &Term) -> Term {
    match t {
        Type::Real => Term::Const(0.0),
        Type::Prod(ts) => Term::Tuple(
            ts.iter()
                .enumerate()
                .map(|(i, ti)| zero_like(ti, &component(witness, i + 1)))
                .collect(),
        ),
        Type::Array(e, _) => match **e {
            Type::Real => Term::map("t", Term::Const(0.0), witness.clone()),
            _ => Term::map("t", zero_like(e, &Term::var("t")), witness.clone()),
        },
        _ => Term::Tuple(vec![]),
    }
}

/// The array `map (t. 1) witness`.
pub fn ones_like(witness: &Term) -> Term {
    Term::map("t", Term::Const(1.0), witness.clone())
}

/// `a +̂ b` at a ground type.
pub fn hat_add(t: &Type, a: Term, b: Term) -> Term {
    match t {
        Type::Real => Term::add(a, b),
        Type::Prod(ts) => Term::Tuple(
            ts.iter()
                .enumerate()
                .map(|(i, ti)| hat_add(ti, component(&a, i + 1), component(&b, i + 1)))
                .collect(),
        ),
        Type::Array(e, _) => Term::map2(
            "x",
            "y",
            hat_add(e, Term::var("x"), Term::var("y")),
            a,
            b,
        ),
        _ => a,
    }
}

/// `g ×̂ c`: scales every scalar coordinate of `g` by the real `c`.
/// `fresh` supplies a binder name that does not occur in `c`.
pub fn hat_scale(t: &Type, g: Term, c: &Term, fresh: &mut dyn FnMut() -> String) -> Term {
    match t {
        Type::Real => Term::mul(g, c.clone()),
        Type::Prod(ts) => Term::Tuple(
            ts.iter()
                .enumerate()
                .map(|(i, ti)| hat_scale(ti, component(&g, i + 1), c, fresh))
                .collect(),
        ),
        Type::Array(e, _) => {
            let b = fresh();
            let body = hat_scale(e, Term::var(&b), c, fresh);
            Term::map(&b, body, g)
        }
        _ => g,
    }
}

/// The context lifting `p +̂ q` of two tuples of terms.
pub fn hat_add_ctx(types: &[Type], p: Vec<Term>, q: Vec<Term>) -> Vec<Term> {
    types
        .iter()
        .zip(p.into_iter().zip(q))
        .map(|(t, (a, b))| hat_add(t, a, b))
        .collect()
}

/// `0_Γ` with each entry's zero shaped by the matching witness.
pub fn zero_ctx(types: &[Type], witnesses: &[Term]) -> Vec<Term> {
    types.iter().zip(witnesses).map(|(t, w)| zero_like(t, w)).collect()
}

/// `[i]z`: the tuple that is zero everywhere except `z` at one-based `i`.
pub fn inject_at(types: &[Type], witnesses: &[Term], i: usize, z: Term) -> Result<Term, MonoidError> {
    if i == 0 || i > types.len() {
        return Err(MonoidError::IndexOutOfRange {
            index: i,
            len: types.len(),
        });
    }
    let mut out = zero_ctx(types, witnesses);
    out[i - 1] = z;
    Ok(Term::tuple(out))
}

/// `1_Γ`: ones at every coordinate, shaped by witnesses.
pub fn one_like(t: &Type, witness: &Term) -> Term {
    match t {
        Type::Real => Term::Const(1.0),
        Type::Prod(ts) => Term::Tuple(
            ts.iter()
                .enumerate()
                .map(|(i, ti)| one_like(ti, &component(witness, i + 1)))
                .collect(),
        ),
        Type::Array(e, _) => match **e {
            Type::Real => ones_like(witness),
            _ => Term::map("t", one_like(e, &Term::var("t")), witness.clone()),
        },
        _ => Term::Tuple(vec![]),
    }
}

/// `a ×̂ b`: the coordinatewise product of two values of a ground type.
pub fn hat_mul(t: &Type, a: Term, b: Term) -> Term {
    match t {
        Type::Real => Term::mul(a, b),
        Type::Prod(ts) => Term::Tuple(
            ts.iter()
                .enumerate()
                .map(|(i, ti)| hat_mul(ti, component(&a, i + 1), component(&b, i + 1)))
                .collect(),
        ),
        Type::Array(e, _) => Term::map2(
            "x",
            "y",
            hat_mul(e, Term::var("x"), Term::var("y")),
            a,
            b,
        ),
        _ => a,
    }
}
