//! Static cost model over the lambda-free target fragment, the nesting
//! depth of array operations, and the cheap-gradient check.

use std::fmt;
use std::ops::{Add, Mul};

use serde::Serialize;
use thiserror::Error;

use crate::frontend::print_term;
use crate::term::{FoldKind, Term};
use crate::typecheck::{typecheck_target, TypeError};
use crate::types::{Context, Type};

/// Counts of moves, additions, multiplications and non-linear operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct CostVector {
    pub moves: u64,
    pub adds: u64,
    pub mults: u64,
    pub nlops: u64,
}

impl CostVector {
    pub const ZERO: CostVector = CostVector::new(0, 0, 0, 0);

    pub const fn new(moves: u64, adds: u64, mults: u64, nlops: u64) -> Self {
        CostVector {
            moves,
            adds,
            mults,
            nlops,
        }
    }

    pub fn moves(n: u64) -> Self {
        CostVector::new(n, 0, 0, 0)
    }

    pub fn total(&self) -> u64 {
        self.moves + self.adds + self.mults + self.nlops
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.moves, self.adds, self.mults, self.nlops]
    }

    /// Componentwise `<=`.
    pub fn le(&self, other: &CostVector) -> bool {
        self.as_array().iter().zip(other.as_array()).all(|(a, b)| *a <= b)
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &CostVector) -> CostVector {
        CostVector::new(
            self.moves.max(other.moves),
            self.adds.max(other.adds),
            self.mults.max(other.mults),
            self.nlops.max(other.nlops),
        )
    }
}

impl Add for CostVector {
    type Output = CostVector;
    fn add(self, o: CostVector) -> CostVector {
        CostVector::new(
            self.moves + o.moves,
            self.adds + o.adds,
            self.mults + o.mults,
            self.nlops + o.nlops,
        )
    }
}

impl Mul<CostVector> for u64 {
    type Output = CostVector;
    fn mul(self, c: CostVector) -> CostVector {
        CostVector::new(self * c.moves, self * c.adds, self * c.mults, self * c.nlops)
    }
}

impl std::iter::Sum for CostVector {
    fn sum<I: Iterator<Item = CostVector>>(it: I) -> CostVector {
        it.fold(CostVector::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for CostVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.moves, self.adds, self.mults, self.nlops)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CostError {
    #[error("term is outside the lambda-free fragment at `{0}`")]
    NotInRestrictedFragment(String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

fn outside(e: &Term) -> CostError {
    let s = print_term(e);
    let s = if s.chars().count() > 60 {
        format!("{}...", s.chars().take(57).collect::<String>())
    } else {
        s
    };
    CostError::NotInRestrictedFragment(s)
}

fn array_len(ctx: &Context, e: &Term) -> Result<u64, CostError> {
    match typecheck_target(ctx, e)? {
        Type::Array(_, n) => Ok(n as u64),
        _ => Err(outside(e)),
    }
}

/// The cost of a term in the restricted target fragment; array sizes come
/// from the static types under `ctx`.
pub fn cost(ctx: &Context, e: &Term) -> Result<CostVector, CostError> {
    let one = CostVector::moves(1);
    Ok(match e {
        Term::Const(_) | Term::BoolLit(_) => one,
        Term::Var(x) => match ctx.lookup(x) {
            Some(t) if t.is_ground() || *t == Type::Bool => one,
            Some(_) => return Err(outside(e)),
            None => return Err(TypeError::UnboundVariable(x.clone()).into()),
        },
        Term::Op1(op, a) => op.cost() + cost(ctx, a)?,
        Term::Op2(op, a, b) => op.cost() + cost(ctx, a)? + cost(ctx, b)?,
        Term::Gt0(a) => CostVector::moves(2) + cost(ctx, a)?,
        Term::Tuple(es) | Term::ArrayLit(es) => es
            .iter()
            .map(|x| cost(ctx, x))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .sum(),
        Term::Proj(_, a) => one + cost(ctx, a)?,
        Term::Let(pat, e1, e2) => {
            let t1 = typecheck_target(ctx, e1)?;
            let mut inner = ctx.clone();
            if pat.len() == 1 {
                inner.push(&pat[0], t1);
            } else if let Type::Prod(ts) = &t1 {
                for (n, t) in pat.iter().zip(ts) {
                    inner.push(n, t.clone());
                }
            } else {
                return Err(outside(e));
            }
            CostVector::moves(pat.len() as u64) + cost(ctx, e1)? + cost(&inner, e2)?
        }
        Term::If(c, t, f) => one + cost(ctx, c)? + cost(ctx, t)?.max(&cost(ctx, f)?),
        Term::Map2 { x, y, body, a, b } => {
            let n = array_len(ctx, a)?;
            let ta = typecheck_target(ctx, a)?;
            let tb = typecheck_target(ctx, b)?;
            let inner = ctx
                .extend(x, ta.array_elem().cloned().unwrap_or(Type::Real))
                .extend(y, tb.array_elem().cloned().unwrap_or(Type::Real));
            n * (cost(&inner, body)? + CostVector::moves(2)) + cost(ctx, a)? + cost(ctx, b)?
        }
        Term::Map { x, body, a } => {
            let n = array_len(ctx, a)?;
            let ta = typecheck_target(ctx, a)?;
            let inner = ctx.extend(x, ta.array_elem().cloned().unwrap_or(Type::Real));
            n * (cost(&inner, body)? + CostVector::moves(2)) + cost(ctx, a)?
        }
        Term::Fold { kind, x, y, body, init, arr } => {
            let n = array_len(ctx, arr)?;
            let ti = typecheck_target(ctx, init)?;
            let ta = typecheck_target(ctx, arr)?;
            let inner = ctx
                .extend(x, ti)
                .extend(y, ta.array_elem().cloned().unwrap_or(Type::Real));
            let step = match kind {
                FoldKind::Reduce | FoldKind::Foldl => CostVector::moves(2),
                FoldKind::Scanl | FoldKind::Scanr => CostVector::moves(3),
                FoldKind::ScanlPair | FoldKind::ScanrPair => CostVector::moves(3),
            };
            let extra = match kind {
                FoldKind::ScanlPair | FoldKind::ScanrPair => one,
                _ => CostVector::ZERO,
            };
            n * (cost(&inner, body)? + step) + cost(ctx, init)? + cost(ctx, arr)? + extra
        }
        Term::Shift1L(a) | Term::Shift1R(a) => {
            let n = array_len(ctx, e)?;
            cost(ctx, a)? + CostVector::moves(n)
        }
        Term::Lambda(..) | Term::Apply(..) => return Err(outside(e)),
    })
}

/// Nesting depth of array operations in a source term.
pub fn nao(e: &Term) -> usize {
    match e {
        Term::Map2 { body, a, b, .. } => (1 + nao(body)).max(nao(a)).max(nao(b)),
        Term::Map { body, a, .. } => (1 + nao(body)).max(nao(a)),
        Term::Fold { body, init, arr, .. } => (1 + nao(body)).max(nao(init)).max(nao(arr)),
        _ => {
            let mut m = 0;
            e.for_each_child(&mut |c| m = m.max(nao(c)));
            m
        }
    }
}

/// Outcome of checking `cost(PE(grad e)) <= 4 * 3^p * cost(e)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheapGradientReport {
    pub moves: u64,
    pub adds: u64,
    pub mults: u64,
    pub nlops: u64,
    pub p: usize,
    pub bound: [u64; 4],
    pub holds: bool,
    pub source: [u64; 4],
    pub factor: u64,
    pub total_source: u64,
    pub total_grad: u64,
    pub total_bound: u64,
    pub holds_total: bool,
}

impl CheapGradientReport {
    /// Compares a gradient cost against the bound for a source cost.
    pub fn new(cost_e: CostVector, cost_grad: CostVector, p: usize) -> Self {
        let factor = 4 * 3u64.pow(p as u32);
        let bound = factor * cost_e;
        CheapGradientReport {
            moves: cost_grad.moves,
            adds: cost_grad.adds,
            mults: cost_grad.mults,
            nlops: cost_grad.nlops,
            p,
            bound: bound.as_array(),
            holds: cost_grad.le(&bound),
            source: cost_e.as_array(),
            factor,
            total_source: cost_e.total(),
            total_grad: cost_grad.total(),
            total_bound: bound.total(),
            holds_total: cost_grad.total() <= bound.total(),
        }
    }

    pub fn cost_grad(&self) -> CostVector {
        CostVector::new(self.moves, self.adds, self.mults, self.nlops)
    }

    /// Components where the gradient exceeds the bound.
    pub fn violations(&self) -> Vec<&'static str> {
        let names = ["moves", "adds", "mults", "nlops"];
        let g = self.cost_grad().as_array();
        names
            .into_iter()
            .zip(g.iter().zip(self.bound))
            .filter(|(_, (g, b))| **g > *b)
            .map(|(n, _)| n)
            .collect()
    }
}

/// Failure while building or costing the gradient for the cheap-gradient
/// check.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum CheapGradientError {
    #[error(transparent)]
    Diff(#[from] crate::diff::DiffError),
    #[error(transparent)]
    Opt(#[from] crate::opt::OptError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Checks `cost(PE(∇e)) <= 4 * 3^NAO(e) * cost(e)` componentwise, using the
/// direct gradient after partial evaluation.
pub fn check_cheap_gradient(
    ctx: &Context,
    e: &Term,
    ext: crate::ext::Extensions,
) -> Result<CheapGradientReport, CheapGradientError> {
    let g = crate::diff::gradient(ctx, e, ext)?;
    let pe = crate::opt::partial_evaluate(ctx, &g)?;
    let cost_e = cost(ctx, e)?;
    let cost_g = cost(ctx, &pe)?;
    Ok(CheapGradientReport::new(cost_e, cost_g, nao(e)))
}
