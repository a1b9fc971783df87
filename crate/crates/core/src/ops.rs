//! Scalar operator registry: evaluation, closed-form partial derivatives,
//! costs and algebraic metadata.

use std::fmt;

use crate::cost::CostVector;
use crate::term::Term;

/// Unary real operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op1 {
    Sin,
    Cos,
    Exp,
    Log,
}

/// Binary real operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op2 {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op1 {
    pub const ALL: [Op1; 4] = [Op1::Sin, Op1::Cos, Op1::Exp, Op1::Log];

    pub fn name(self) -> &'static str {
        match self {
            Op1::Sin => "sin",
            Op1::Cos => "cos",
            Op1::Exp => "exp",
            Op1::Log => "log",
        }
    }

    pub fn from_name(s: &str) -> Option<Op1> {
        Op1::ALL.into_iter().find(|o| o.name() == s)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Op1::Sin => x.sin(),
            Op1::Cos => x.cos(),
            Op1::Exp => x.exp(),
            Op1::Log => x.ln(),
        }
    }

    /// The derivative as a target term in the argument `x`.
    pub fn derivative(self, x: Term) -> Term {
        match self {
            Op1::Sin => Term::op1(Op1::Cos, x),
            Op1::Cos => Term::op2(Op2::Sub, Term::Const(0.0), Term::op1(Op1::Sin, x)),
            Op1::Exp => Term::op1(Op1::Exp, x),
            Op1::Log => Term::op2(Op2::Div, Term::Const(1.0), x),
        }
    }

    pub fn cost(self) -> CostVector {
        CostVector::new(2, 0, 0, 1)
    }
}

impl Op2 {
    pub const ALL: [Op2; 4] = [Op2::Add, Op2::Sub, Op2::Mul, Op2::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            Op2::Add => "+",
            Op2::Sub => "-",
            Op2::Mul => "*",
            Op2::Div => "/",
        }
    }

    /// Word form used in UNF primitive names.
    pub fn word(self) -> &'static str {
        match self {
            Op2::Add => "add",
            Op2::Sub => "sub",
            Op2::Mul => "mul",
            Op2::Div => "div",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Op2> {
        Op2::ALL.into_iter().find(|o| o.symbol() == s)
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Op2::Add => a + b,
            Op2::Sub => a - b,
            Op2::Mul => a * b,
            Op2::Div => a / b,
        }
    }

    /// Both partial derivatives as target terms in the arguments.
    pub fn partials(self, a: Term, b: Term) -> (Term, Term) {
        match self {
            Op2::Add => (Term::Const(1.0), Term::Const(1.0)),
            Op2::Sub => (Term::Const(1.0), Term::Const(-1.0)),
            Op2::Mul => (b, a),
            Op2::Div => {
                let d1 = Term::op2(Op2::Div, Term::Const(1.0), b.clone());
                let d2 = Term::op2(
                    Op2::Sub,
                    Term::Const(0.0),
                    Term::op2(Op2::Div, a, Term::op2(Op2::Mul, b.clone(), b)),
                );
                (d1, d2)
            }
        }
    }

    /// Costs; subtraction is charged like addition and division like
    /// multiplication.
    pub fn cost(self) -> CostVector {
        match self {
            Op2::Add | Op2::Sub => CostVector::new(3, 1, 0, 0),
            Op2::Mul | Op2::Div => CostVector::new(3, 0, 1, 0),
        }
    }

    /// Two-sided unit, when one exists.
    pub fn unit(self) -> Option<f64> {
        match self {
            Op2::Add => Some(0.0),
            Op2::Mul => Some(1.0),
            Op2::Sub | Op2::Div => None,
        }
    }

    pub fn is_associative(self) -> bool {
        matches!(self, Op2::Add | Op2::Mul)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Op2::Add | Op2::Mul)
    }
}

impl fmt::Display for Op1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Op2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
