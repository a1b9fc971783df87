//! Call-by-value big-step interpreter for the target language.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::term::{free_vars, FoldKind, Name, Term};
use crate::types::{Context, Type};

/// Runtime values.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Bool(bool),
    Tuple(Vec<Value>),
    Array(Vec<Value>),
    Closure(Arc<Closure>),
}

/// A lambda together with the values of its free variables.
#[derive(Debug, PartialEq)]
pub struct Closure {
    pub params: Vec<Name>,
    pub body: Term,
    pub env: Vec<(Name, Value)>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("dynamic type error: {0}")]
    DynamicTypeError(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
}

/// Variable bindings; later bindings shadow earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env {
    vars: Vec<(Name, Value)>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Name, Value)>) -> Self {
        Env {
            vars: pairs.into_iter().collect(),
        }
    }

    /// Binds the context variables, in order, to the given point.
    pub fn from_context(ctx: &Context, point: &[Value]) -> Result<Self, EvalError> {
        if ctx.len() != point.len() {
            return Err(EvalError::ArityMismatch {
                expected: ctx.len(),
                found: point.len(),
            });
        }
        Ok(Env::from_pairs(ctx.names().into_iter().zip(point.iter().cloned())))
    }

    pub fn bind(&mut self, name: &str, v: Value) {
        self.vars.push((name.to_string(), v));
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        self.vars.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Extremes of sensitive operator arguments met during one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalStats {
    /// Smallest absolute divisor.
    pub min_abs_divisor: f64,
    /// Smallest argument of `log`.
    pub min_log_arg: f64,
    /// Smallest absolute argument of the `> 0` test.
    pub min_abs_test: f64,
}

impl Default for EvalStats {
    fn default() -> Self {
        EvalStats {
            min_abs_divisor: f64::INFINITY,
            min_log_arg: f64::INFINITY,
            min_abs_test: f64::INFINITY,
        }
    }
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn reals(xs: &[f64]) -> Value {
        Value::Array(xs.iter().map(|x| Value::Real(*x)).collect())
    }

    /// The zero of a ground type.
    pub fn zero_of(t: &Type) -> Value {
        match t {
            Type::Real => Value::Real(0.0),
            Type::Prod(ts) => Value::Tuple(ts.iter().map(Value::zero_of).collect()),
            Type::Array(e, n) => Value::Array(vec![Value::zero_of(e); *n]),
            Type::Bool => Value::Bool(false),
            Type::Func(..) | Type::Abstract(_) => Value::Tuple(vec![]),
        }
    }

    /// Whether the value is an inhabitant of the ground type `t`.
    pub fn has_type(&self, t: &Type) -> bool {
        match (self, t) {
            (Value::Real(_), Type::Real) | (Value::Bool(_), Type::Bool) => true,
            (Value::Tuple(vs), Type::Prod(ts)) => vs.len() == ts.len() && vs.iter().zip(ts).all(|(v, t)| v.has_type(t)),
            (Value::Array(vs), Type::Array(e, n)) => vs.len() == *n && vs.iter().all(|v| v.has_type(e)),
            _ => false,
        }
    }

    /// Appends every scalar coordinate in order.
    pub fn flatten(&self, out: &mut Vec<f64>) {
        match self {
            Value::Real(r) => out.push(*r),
            Value::Tuple(vs) | Value::Array(vs) => vs.iter().for_each(|v| v.flatten(out)),
            Value::Bool(_) | Value::Closure(_) => {}
        }
    }

    /// Rebuilds a value of a ground type from scalar coordinates.
    pub fn from_flat(t: &Type, xs: &mut impl Iterator<Item = f64>) -> Option<Value> {
        Some(match t {
            Type::Real => Value::Real(xs.next()?),
            Type::Prod(ts) => Value::Tuple(
                ts.iter()
                    .map(|t| Value::from_flat(t, xs))
                    .collect::<Option<Vec<_>>>()?,
            ),
            Type::Array(e, n) => Value::Array(
                (0..*n)
                    .map(|_| Value::from_flat(e, xs))
                    .collect::<Option<Vec<_>>>()?,
            ),
            _ => return None,
        })
    }

    /// Largest coordinatewise difference, or `None` on a shape mismatch.
    pub fn max_abs_diff(&self, other: &Value) -> Option<f64> {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => Some(if a == b { 0.0 } else { (a - b).abs() }),
            (Value::Bool(a), Value::Bool(b)) => Some(if a == b { 0.0 } else { f64::INFINITY }),
            (Value::Tuple(xs), Value::Tuple(ys)) | (Value::Array(xs), Value::Array(ys))
                if xs.len() == ys.len() =>
            {
                xs.iter()
                    .zip(ys)
                    .try_fold(0.0f64, |m, (x, y)| Some(m.max(x.max_abs_diff(y)?)))
            }
            _ => None,
        }
    }

    /// Whether every coordinate agrees within `tol` relative to `max(1, |b|)`.
    pub fn approx_eq(&self, other: &Value, tol: f64) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => {
                a.to_bits() == b.to_bits() || (a - b).abs() <= tol * b.abs().max(1.0)
            }
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Tuple(xs), Value::Tuple(ys)) | (Value::Array(xs), Value::Array(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x.approx_eq(y, tol))
            }
            _ => false,
        }
    }

    /// Bitwise structural equality, treating equal NaN payloads as equal.
    pub fn bit_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits() || a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Tuple(xs), Value::Tuple(ys)) | (Value::Array(xs), Value::Array(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x.bit_eq(y))
            }
            _ => false,
        }
    }

    fn describe(&self) -> &'static str {
        match self {
            Value::Real(_) => "a real",
            Value::Bool(_) => "a boolean",
            Value::Tuple(_) => "a tuple",
            Value::Array(_) => "an array",
            Value::Closure(_) => "a closure",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, vs: &[Value]) -> fmt::Result {
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            Ok(())
        }
        match self {
            Value::Real(r) => write!(f, "{r}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Tuple(vs) => {
                write!(f, "<")?;
                list(f, vs)?;
                write!(f, ">")
            }
            Value::Array(vs) => {
                write!(f, "[")?;
                list(f, vs)?;
                write!(f, "]")
            }
            Value::Closure(c) => write!(f, "<fun/{}>", c.params.len()),
        }
    }
}

fn type_err(what: &str, v: &Value) -> EvalError {
    EvalError::DynamicTypeError(format!("expected {what}, found {}", v.describe()))
}

fn real(v: &Value) -> Result<f64, EvalError> {
    v.as_real().ok_or_else(|| type_err("a real", v))
}

fn array(v: Value) -> Result<Vec<Value>, EvalError> {
    match v {
        Value::Array(vs) => Ok(vs),
        other => Err(type_err("an array", &other)),
    }
}

struct Machine<'s> {
    env: Vec<(Name, Value)>,
    stats: Option<&'s mut EvalStats>,
}

impl Machine<'_> {
    fn lookup(&self, x: &str) -> Result<Value, EvalError> {
        self.env
            .iter()
            .rev()
            .find(|(n, _)| n == x)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| EvalError::UnboundVariable(x.to_string()))
    }

    fn with2(&mut self, x: &str, a: Value, y: &str, b: Value, body: &Term) -> Result<Value, EvalError> {
        let k = self.env.len();
        self.env.push((x.to_string(), a));
        self.env.push((y.to_string(), b));
        let r = self.eval(body);
        self.env.truncate(k);
        r
    }

    fn apply(&mut self, f: Value, args: Vec<Value>) -> Result<Value, EvalError> {
        let c = match f {
            Value::Closure(c) => c,
            other => return Err(type_err("a function", &other)),
        };
        if c.params.len() != args.len() {
            return Err(EvalError::ArityMismatch {
                expected: c.params.len(),
                found: args.len(),
            });
        }
        let mut env = c.env.clone();
        env.extend(c.params.iter().cloned().zip(args));
        let saved = std::mem::replace(&mut self.env, env);
        let r = self.eval(&c.body);
        self.env = saved;
        r
    }

    fn eval(&mut self, e: &Term) -> Result<Value, EvalError> {
        match e {
            Term::Var(x) => self.lookup(x),
            Term::Const(c) => Ok(Value::Real(*c)),
            Term::BoolLit(b) => Ok(Value::Bool(*b)),
            Term::Let(pat, e1, e2) => {
                let v = self.eval(e1)?;
                let k = self.env.len();
                if pat.len() == 1 {
                    self.env.push((pat[0].clone(), v));
                } else {
                    match v {
                        Value::Tuple(vs) if vs.len() == pat.len() => {
                            self.env.extend(pat.iter().cloned().zip(vs));
                        }
                        other => return Err(type_err(&format!("a {}-tuple", pat.len()), &other)),
                    }
                }
                let r = self.eval(e2);
                self.env.truncate(k);
                r
            }
            Term::Tuple(es) => Ok(Value::Tuple(
                es.iter().map(|x| self.eval(x)).collect::<Result<_, _>>()?,
            )),
            Term::ArrayLit(es) => Ok(Value::Array(
                es.iter().map(|x| self.eval(x)).collect::<Result<_, _>>()?,
            )),
            Term::Proj(i, t) => match self.eval(t)? {
                Value::Tuple(mut vs) if *i >= 1 && *i <= vs.len() => Ok(vs.swap_remove(*i - 1)),
                other => Err(type_err(&format!("a tuple with component {i}"), &other)),
            },
            Term::Op1(op, t) => {
                let x = real(&self.eval(t)?)?;
                if let (crate::ops::Op1::Log, Some(s)) = (op, self.stats.as_deref_mut()) {
                    s.min_log_arg = s.min_log_arg.min(x);
                }
                Ok(Value::Real(op.apply(x)))
            }
            Term::Op2(op, a, b) => {
                let x = real(&self.eval(a)?)?;
                let y = real(&self.eval(b)?)?;
                if let (crate::ops::Op2::Div, Some(s)) = (op, self.stats.as_deref_mut()) {
                    s.min_abs_divisor = s.min_abs_divisor.min(y.abs());
                }
                Ok(Value::Real(op.apply(x, y)))
            }
            Term::Gt0(t) => {
                let x = real(&self.eval(t)?)?;
                if let Some(s) = self.stats.as_deref_mut() {
                    s.min_abs_test = s.min_abs_test.min(x.abs());
                }
                Ok(Value::Bool(x > 0.0))
            }
            Term::If(c, t, f) => match self.eval(c)? {
                Value::Bool(true) => self.eval(t),
                Value::Bool(false) => self.eval(f),
                other => Err(type_err("a boolean", &other)),
            },
            Term::Map2 { x, y, body, a, b } => {
                let va = array(self.eval(a)?)?;
                let vb = array(self.eval(b)?)?;
                if va.len() != vb.len() {
                    return Err(EvalError::DynamicTypeError(format!(
                        "map2 over arrays of lengths {} and {}",
                        va.len(),
                        vb.len()
                    )));
                }
                let out = va
                    .into_iter()
                    .zip(vb)
                    .map(|(p, q)| self.with2(x, p, y, q, body))
                    .collect::<Result<_, _>>()?;
                Ok(Value::Array(out))
            }
            Term::Map { x, body, a } => {
                let va = array(self.eval(a)?)?;
                let mut out = Vec::with_capacity(va.len());
                for v in va {
                    let k = self.env.len();
                    self.env.push((x.clone(), v));
                    let r = self.eval(body);
                    self.env.truncate(k);
                    out.push(r?);
                }
                Ok(Value::Array(out))
            }
            Term::Fold { kind, x, y, body, init, arr } => {
                let v0 = self.eval(init)?;
                let xs = array(self.eval(arr)?)?;
                self.fold(*kind, x, y, body, v0, xs)
            }
            Term::Shift1L(t) => {
                let mut vs = array(self.eval(t)?)?;
                if !vs.is_empty() {
                    vs.remove(0);
                }
                Ok(Value::Array(vs))
            }
            Term::Shift1R(t) => {
                let mut vs = array(self.eval(t)?)?;
                vs.pop();
                Ok(Value::Array(vs))
            }
            Term::Lambda(ps, body) => {
                let params: Vec<Name> = ps.iter().map(|(n, _)| n.clone()).collect();
                let mut env = Vec::new();
                for v in free_vars(e) {
                    env.push((v.clone(), self.lookup(&v)?));
                }
                Ok(Value::Closure(Arc::new(Closure {
                    params,
                    body: (**body).clone(),
                    env,
                })))
            }
            Term::Apply(f, args) => {
                let fv = self.eval(f)?;
                let vs = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                self.apply(fv, vs)
            }
        }
    }

    fn fold(
        &mut self,
        kind: FoldKind,
        x: &str,
        y: &str,
        body: &Term,
        v0: Value,
        xs: Vec<Value>,
    ) -> Result<Value, EvalError> {
        match kind {
            FoldKind::Reduce | FoldKind::Foldl => {
                let mut acc = v0;
                for a in xs {
                    acc = self.with2(x, acc, y, a, body)?;
                }
                Ok(acc)
            }
            FoldKind::Scanl | FoldKind::ScanlPair => {
                let mut out = Vec::with_capacity(xs.len() + 1);
                let mut acc = v0;
                for a in xs {
                    let next = self.with2(x, acc.clone(), y, a, body)?;
                    out.push(acc);
                    acc = next;
                }
                if kind == FoldKind::Scanl {
                    out.push(acc);
                    Ok(Value::Array(out))
                } else {
                    Ok(Value::Tuple(vec![Value::Array(out), acc]))
                }
            }
            FoldKind::Scanr | FoldKind::ScanrPair => {
                let n = xs.len();
                let mut out = vec![Value::Real(0.0); n + 1];
                let mut acc = v0;
                for (i, a) in xs.into_iter().enumerate().rev() {
                    let next = self.with2(x, acc.clone(), y, a, body)?;
                    out[i + 1] = acc;
                    acc = next;
                }
                out[0] = acc;
                if kind == FoldKind::Scanr {
                    Ok(Value::Array(out))
                } else {
                    let first = out.remove(0);
                    Ok(Value::Tuple(vec![first, Value::Array(out)]))
                }
            }
        }
    }
}

/// Evaluates a term under an environment.
pub fn eval(env: &Env, e: &Term) -> Result<Value, EvalError> {
    Machine {
        env: env.vars.clone(),
        stats: None,
    }
    .eval(e)
}

/// Evaluates a closed term.
pub fn eval_closed(e: &Term) -> Result<Value, EvalError> {
    eval(&Env::new(), e)
}

/// Evaluates and records the smallest divisor and `log` argument seen.
pub fn eval_with_stats(env: &Env, e: &Term) -> Result<(Value, EvalStats), EvalError> {
    let mut stats = EvalStats::default();
    let v = Machine {
        env: env.vars.clone(),
        stats: Some(&mut stats),
    }
    .eval(e)?;
    Ok((v, stats))
}

/// Applies a closure value to arguments.
pub fn apply_value(f: &Value, args: Vec<Value>) -> Result<Value, EvalError> {
    Machine {
        env: Vec::new(),
        stats: None,
    }
    .apply(f.clone(), args)
}

/// Binds the context to `point`, evaluates a gradient term and returns its
/// components, one per context entry.
pub fn eval_gradient_entry(ctx: &Context, grad: &Term, point: &[Value]) -> Result<Vec<Value>, EvalError> {
    let env = Env::from_context(ctx, point)?;
    let v = eval(&env, grad)?;
    split_components(ctx.len(), v)
}

/// Splits a context-shaped tuple into its components.
pub fn split_components(n: usize, v: Value) -> Result<Vec<Value>, EvalError> {
    if n == 1 {
        return Ok(vec![v]);
    }
    match v {
        Value::Tuple(vs) if vs.len() == n => Ok(vs),
        Value::Tuple(vs) => Err(EvalError::ArityMismatch {
            expected: n,
            found: vs.len(),
        }),
        other => Err(type_err(&format!("a {n}-tuple"), &other)),
    }
}
