//! A substitution-based small-step interpreter kept as an oracle for the
//! big-step evaluator.
//!
//! Terms are stepped by locating the leftmost redex under call-by-value
//! evaluation contexts and rewriting it with one redex rule. Intermediate
//! forms for the scans use explicit cons and snoc nodes.

use adc_core::eval::Value;
use adc_core::ops::{Op1, Op2};
use adc_core::term::FoldKind;
use adc_core::{Name, Term};

#[derive(Clone, Debug)]
enum S {
    Var(Name),
    Real(f64),
    Bool(bool),
    Let(Vec<Name>, Box<S>, Box<S>),
    Tuple(Vec<S>),
    Proj(usize, Box<S>),
    Op1(Op1, Box<S>),
    Op2(Op2, Box<S>, Box<S>),
    Gt0(Box<S>),
    If(Box<S>, Box<S>, Box<S>),
    Map2(Name, Name, Box<S>, Box<S>, Box<S>),
    Map(Name, Box<S>, Box<S>),
    Fold(FoldKind, Name, Name, Box<S>, Box<S>, Box<S>),
    Shift1L(Box<S>),
    Shift1R(Box<S>),
    Lambda(Vec<Name>, Box<S>),
    Apply(Box<S>, Vec<S>),
    Array(Vec<S>),
    /// `v :: e`, prepending a value to an array.
    Cons(Box<S>, Box<S>),
    /// `e :: v`, appending a value to an array.
    Snoc(Box<S>, Box<S>),
    /// `<v :: fst e, snd e>` once `e` is a pair value.
    ConsFst(Box<S>, Box<S>),
    /// `<fst e, snd e :: v>` once `e` is a pair value.
    SnocSnd(Box<S>, Box<S>),
}

fn b(s: S) -> Box<S> {
    Box::new(s)
}

fn lower(e: &Term) -> S {
    match e {
        Term::Var(x) => S::Var(x.clone()),
        Term::Const(c) => S::Real(*c),
        Term::BoolLit(v) => S::Bool(*v),
        Term::Let(p, e1, e2) => S::Let(p.clone(), b(lower(e1)), b(lower(e2))),
        Term::Tuple(es) => S::Tuple(es.iter().map(lower).collect()),
        Term::Proj(i, t) => S::Proj(*i, b(lower(t))),
        Term::Op1(o, t) => S::Op1(*o, b(lower(t))),
        Term::Op2(o, l, r) => S::Op2(*o, b(lower(l)), b(lower(r))),
        Term::Gt0(t) => S::Gt0(b(lower(t))),
        Term::If(c, t, f) => S::If(b(lower(c)), b(lower(t)), b(lower(f))),
        Term::Map2 { x, y, body, a, b: q } => S::Map2(x.clone(), y.clone(), b(lower(body)), b(lower(a)), b(lower(q))),
        Term::Map { x, body, a } => S::Map(x.clone(), b(lower(body)), b(lower(a))),
        Term::Fold { kind, x, y, body, init, arr } => {
            S::Fold(*kind, x.clone(), y.clone(), b(lower(body)), b(lower(init)), b(lower(arr)))
        }
        Term::Shift1L(t) => S::Shift1L(b(lower(t))),
        Term::Shift1R(t) => S::Shift1R(b(lower(t))),
        Term::Lambda(ps, body) => S::Lambda(ps.iter().map(|(n, _)| n.clone()).collect(), b(lower(body))),
        Term::Apply(f, args) => S::Apply(b(lower(f)), args.iter().map(lower).collect()),
        Term::ArrayLit(es) => S::Array(es.iter().map(lower).collect()),
    }
}

fn lift(v: &Value) -> S {
    match v {
        Value::Real(r) => S::Real(*r),
        Value::Bool(x) => S::Bool(*x),
        Value::Tuple(vs) => S::Tuple(vs.iter().map(lift).collect()),
        Value::Array(vs) => S::Array(vs.iter().map(lift).collect()),
        Value::Closure(_) => panic!("closures cannot be supplied as inputs"),
    }
}

fn is_value(s: &S) -> bool {
    match s {
        S::Real(_) | S::Bool(_) | S::Lambda(..) => true,
        S::Tuple(vs) | S::Array(vs) => vs.iter().all(is_value),
        _ => false,
    }
}

/// Substitutes closed values, so no capture can occur.
fn subst(s: &S, x: &str, v: &S) -> S {
    let go = |t: &S| subst(t, x, v);
    let under = |names: &[&Name], t: &S| if names.iter().any(|n| n.as_str() == x) { t.clone() } else { subst(t, x, v) };
    match s {
        S::Var(y) if y == x => v.clone(),
        S::Var(_) | S::Real(_) | S::Bool(_) => s.clone(),
        S::Let(p, e1, e2) => S::Let(p.clone(), b(go(e1)), b(under(&p.iter().collect::<Vec<_>>(), e2))),
        S::Tuple(es) => S::Tuple(es.iter().map(go).collect()),
        S::Array(es) => S::Array(es.iter().map(go).collect()),
        S::Proj(i, t) => S::Proj(*i, b(go(t))),
        S::Op1(o, t) => S::Op1(*o, b(go(t))),
        S::Op2(o, l, r) => S::Op2(*o, b(go(l)), b(go(r))),
        S::Gt0(t) => S::Gt0(b(go(t))),
        S::If(c, t, f) => S::If(b(go(c)), b(go(t)), b(go(f))),
        S::Map2(p, q, body, l, r) => S::Map2(p.clone(), q.clone(), b(under(&[p, q], body)), b(go(l)), b(go(r))),
        S::Map(p, body, a) => S::Map(p.clone(), b(under(&[p], body)), b(go(a))),
        S::Fold(k, p, q, body, i, a) => S::Fold(*k, p.clone(), q.clone(), b(under(&[p, q], body)), b(go(i)), b(go(a))),
        S::Shift1L(t) => S::Shift1L(b(go(t))),
        S::Shift1R(t) => S::Shift1R(b(go(t))),
        S::Lambda(ps, body) => S::Lambda(ps.clone(), b(under(&ps.iter().collect::<Vec<_>>(), body))),
        S::Apply(f, args) => S::Apply(b(go(f)), args.iter().map(go).collect()),
        S::Cons(h, t) => S::Cons(b(go(h)), b(go(t))),
        S::Snoc(h, t) => S::Snoc(b(go(h)), b(go(t))),
        S::ConsFst(h, t) => S::ConsFst(b(go(h)), b(go(t))),
        S::SnocSnd(h, t) => S::SnocSnd(b(go(h)), b(go(t))),
    }
}

fn body_at(body: &S, x: &str, y: &str, vx: &S, vy: &S) -> S {
    // Substitute y first so that a body binding x and y to the same name
    // sees x shadowing y, as the big-step environment does.
    subst(&subst(body, y, vy), x, vx)
}

fn real(s: &S) -> f64 {
    match s {
        S::Real(r) => *r,
        other => panic!("stuck: expected a real, found {other:?}"),
    }
}

fn elems(s: &S) -> Vec<S> {
    match s {
        S::Array(vs) => vs.clone(),
        other => panic!("stuck: expected an array, found {other:?}"),
    }
}

/// Steps the first non-value among `items`, left to right.
fn step_first(items: &[&S]) -> Option<(usize, S)> {
    items.iter().enumerate().find(|(_, s)| !is_value(s)).map(|(i, s)| (i, step(s)))
}

/// Rewrites the whole term by one redex rule, or steps a subterm in
/// evaluation position.
fn step(s: &S) -> S {
    match s {
        S::Var(x) => panic!("stuck: free variable {x}"),
        S::Let(p, e1, e2) => {
            if !is_value(e1) {
                return S::Let(p.clone(), b(step(e1)), e2.clone());
            }
            if p.len() == 1 {
                return subst(e2, &p[0], e1);
            }
            let S::Tuple(vs) = &**e1 else { panic!("stuck: destructuring a non-tuple") };
            p.iter().zip(vs).fold((**e2).clone(), |acc, (n, v)| subst(&acc, n, v))
        }
        S::Tuple(es) => {
            let (i, t) = step_first(&es.iter().collect::<Vec<_>>()).expect("tuple is a value");
            let mut es = es.clone();
            es[i] = t;
            S::Tuple(es)
        }
        S::Array(es) => {
            let (i, t) = step_first(&es.iter().collect::<Vec<_>>()).expect("array is a value");
            let mut es = es.clone();
            es[i] = t;
            S::Array(es)
        }
        S::Proj(i, t) => match &**t {
            S::Tuple(vs) if is_value(t) => vs[*i - 1].clone(),
            _ => S::Proj(*i, b(step(t))),
        },
        S::Op1(o, t) => {
            if is_value(t) {
                S::Real(o.apply(real(t)))
            } else {
                S::Op1(*o, b(step(t)))
            }
        }
        S::Op2(o, l, r) => match step_first(&[l, r]) {
            Some((0, t)) => S::Op2(*o, b(t), r.clone()),
            Some((_, t)) => S::Op2(*o, l.clone(), b(t)),
            None => S::Real(o.apply(real(l), real(r))),
        },
        S::Gt0(t) => {
            if is_value(t) {
                S::Bool(real(t) > 0.0)
            } else {
                S::Gt0(b(step(t)))
            }
        }
        S::If(c, t, f) => match &**c {
            S::Bool(true) => (**t).clone(),
            S::Bool(false) => (**f).clone(),
            _ => S::If(b(step(c)), t.clone(), f.clone()),
        },
        S::Map2(x, y, body, l, r) => match step_first(&[l, r]) {
            Some((0, t)) => S::Map2(x.clone(), y.clone(), body.clone(), b(t), r.clone()),
            Some((_, t)) => S::Map2(x.clone(), y.clone(), body.clone(), l.clone(), b(t)),
            None => {
                let (ls, rs) = (elems(l), elems(r));
                assert_eq!(ls.len(), rs.len(), "stuck: map2 length mismatch");
                S::Array(ls.iter().zip(&rs).map(|(p, q)| body_at(body, x, y, p, q)).collect())
            }
        },
        S::Map(x, body, a) => {
            if is_value(a) {
                S::Array(elems(a).iter().map(|v| subst(body, x, v)).collect())
            } else {
                S::Map(x.clone(), body.clone(), b(step(a)))
            }
        }
        S::Fold(k, x, y, body, init, arr) => match step_first(&[init, arr]) {
            Some((0, t)) => S::Fold(*k, x.clone(), y.clone(), body.clone(), b(t), arr.clone()),
            Some((_, t)) => S::Fold(*k, x.clone(), y.clone(), body.clone(), init.clone(), b(t)),
            None => fold_rule(*k, x, y, body, init, &elems(arr)),
        },
        S::Shift1L(t) => {
            if !is_value(t) {
                return S::Shift1L(b(step(t)));
            }
            let vs = elems(t);
            S::Array(vs.into_iter().skip(1).collect())
        }
        S::Shift1R(t) => {
            if !is_value(t) {
                return S::Shift1R(b(step(t)));
            }
            let mut vs = elems(t);
            vs.pop();
            S::Array(vs)
        }
        S::Apply(f, args) => {
            let mut items: Vec<&S> = vec![f];
            items.extend(args.iter());
            match step_first(&items) {
                Some((0, t)) => S::Apply(b(t), args.clone()),
                Some((i, t)) => {
                    let mut args = args.clone();
                    args[i - 1] = t;
                    S::Apply(f.clone(), args)
                }
                None => {
                    let S::Lambda(ps, body) = &**f else { panic!("stuck: applying a non-function") };
                    assert_eq!(ps.len(), args.len(), "stuck: arity mismatch");
                    // Values are closed, so sequential substitution is
                    // simultaneous.
                    ps.iter().zip(args).fold((**body).clone(), |acc, (p, v)| subst(&acc, p, v))
                }
            }
        }
        S::Cons(h, t) => {
            if is_value(t) {
                let mut vs = vec![(**h).clone()];
                vs.extend(elems(t));
                S::Array(vs)
            } else {
                S::Cons(h.clone(), b(step(t)))
            }
        }
        S::Snoc(t, h) => {
            if is_value(t) {
                let mut vs = elems(t);
                vs.push((**h).clone());
                S::Array(vs)
            } else {
                S::Snoc(b(step(t)), h.clone())
            }
        }
        S::ConsFst(h, t) => match &**t {
            S::Tuple(p) if is_value(t) => S::Tuple(vec![S::Cons(h.clone(), b(p[0].clone())), p[1].clone()]),
            _ => S::ConsFst(h.clone(), b(step(t))),
        },
        S::SnocSnd(t, h) => match &**t {
            S::Tuple(p) if is_value(t) => S::Tuple(vec![p[0].clone(), S::Snoc(b(p[1].clone()), h.clone())]),
            _ => S::SnocSnd(b(step(t)), h.clone()),
        },
        S::Real(_) | S::Bool(_) | S::Lambda(..) => panic!("values do not step"),
    }
}

fn fold_rule(k: FoldKind, x: &Name, y: &Name, body: &S, v: &S, vs: &[S]) -> S {
    let again = |init: S, rest: &[S]| S::Fold(k, x.clone(), y.clone(), b(body.clone()), b(init), b(S::Array(rest.to_vec())));
    match (k, vs) {
        (FoldKind::Reduce | FoldKind::Foldl, []) => v.clone(),
        (FoldKind::Reduce | FoldKind::Foldl, [v1, rest @ ..]) => again(body_at(body, x, y, v, v1), rest),
        (FoldKind::Scanl, []) => S::Array(vec![v.clone()]),
        (FoldKind::Scanl, [v1, rest @ ..]) => S::Cons(b(v.clone()), b(again(body_at(body, x, y, v, v1), rest))),
        (FoldKind::Scanr, []) => S::Array(vec![v.clone()]),
        (FoldKind::Scanr, [rest @ .., vn]) => S::Snoc(b(again(body_at(body, x, y, v, vn), rest)), b(v.clone())),
        (FoldKind::ScanlPair, []) => S::Tuple(vec![S::Array(vec![]), v.clone()]),
        (FoldKind::ScanlPair, [v1, rest @ ..]) => S::ConsFst(b(v.clone()), b(again(body_at(body, x, y, v, v1), rest))),
        (FoldKind::ScanrPair, []) => S::Tuple(vec![v.clone(), S::Array(vec![])]),
        (FoldKind::ScanrPair, [rest @ .., vn]) => S::SnocSnd(b(again(body_at(body, x, y, v, vn), rest)), b(v.clone())),
    }
}

fn to_value(s: &S) -> Value {
    match s {
        S::Real(r) => Value::Real(*r),
        S::Bool(x) => Value::Bool(*x),
        S::Tuple(vs) => Value::Tuple(vs.iter().map(to_value).collect()),
        S::Array(vs) => Value::Array(vs.iter().map(to_value).collect()),
        other => panic!("not a first-order value: {other:?}"),
    }
}

/// Runs a term to a value after substituting the given inputs, returning the
/// value and the number of steps taken.
pub fn run(e: &Term, inputs: &[(Name, Value)]) -> (Value, usize) {
    let mut s = lower(e);
    for (n, v) in inputs {
        s = subst(&s, n, &lift(v));
    }
    let mut steps = 0;
    while !is_value(&s) {
        s = step(&s);
        steps += 1;
        assert!(steps < 1_000_000, "stepper did not terminate");
    }
    (to_value(&s), steps)
}
