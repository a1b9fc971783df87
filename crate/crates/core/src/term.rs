//! Terms of the source and target languages and binder-safe manipulation.
//!
//! Source terms are the sub-language accepted by
//! [`typecheck_source`](crate::typecheck::typecheck_source); both languages
//! share one syntax tree.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::ops::{Op1, Op2};
pub use crate::types::Name;
use crate::types::Type;

/// Array folds sharing the `(x, y. body) init array` shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FoldKind {
    /// Fold left over an associative body with a unit init.
    Reduce,
    /// Fold left with an arbitrary body and init.
    Foldl,
    /// All intermediate results of a left fold, `n + 1` of them.
    Scanl,
    /// All intermediate results of a right fold, `n + 1` of them.
    Scanr,
    /// Left scan returning `<first n intermediates, final>`.
    ScanlPair,
    /// Right scan returning `<final, last n intermediates>`.
    ScanrPair,
}

impl FoldKind {
    pub fn keyword(self) -> &'static str {
        match self {
            FoldKind::Reduce => "reduce",
            FoldKind::Foldl => "foldl",
            FoldKind::Scanl => "scanl",
            FoldKind::Scanr => "scanr",
            FoldKind::ScanlPair => "scanlp",
            FoldKind::ScanrPair => "scanrp",
        }
    }

    pub fn from_keyword(s: &str) -> Option<FoldKind> {
        [
            FoldKind::Reduce,
            FoldKind::Foldl,
            FoldKind::Scanl,
            FoldKind::Scanr,
            FoldKind::ScanlPair,
            FoldKind::ScanrPair,
        ]
        .into_iter()
        .find(|k| k.keyword() == s)
    }
}

/// Abstract syntax shared by the source and target languages.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(Name),
    Const(f64),
    BoolLit(bool),
    /// `let x = e1 in e2`, or `let x1, ..., xk = e1 in e2` destructuring a
    /// k-tuple when the pattern has more than one name.
    Let(Vec<Name>, Box<Term>, Box<Term>),
    /// Pairs and n-ary tuples; the empty tuple is the unit value.
    Tuple(Vec<Term>),
    /// One-based tuple projection.
    Proj(usize, Box<Term>),
    Op1(Op1, Box<Term>),
    Op2(Op2, Box<Term>, Box<Term>),
    /// The non-smooth test `e > 0`.
    Gt0(Box<Term>),
    If(Box<Term>, Box<Term>, Box<Term>),
    Map2 {
        x: Name,
        y: Name,
        body: Box<Term>,
        a: Box<Term>,
        b: Box<Term>,
    },
    Map {
        x: Name,
        body: Box<Term>,
        a: Box<Term>,
    },
    Fold {
        kind: FoldKind,
        x: Name,
        y: Name,
        body: Box<Term>,
        init: Box<Term>,
        arr: Box<Term>,
    },
    Shift1L(Box<Term>),
    Shift1R(Box<Term>),
    /// Multi-argument lambda; binder types are annotations for checking.
    Lambda(Vec<(Name, Type)>, Box<Term>),
    Apply(Box<Term>, Vec<Term>),
    ArrayLit(Vec<Term>),
}

/// Source programs are terms accepted by the source checker.
pub type SourceTerm = Term;
/// Target programs may use every constructor.
pub type TargetTerm = Term;

impl Term {
    pub fn var(n: &str) -> Term {
        Term::Var(n.to_string())
    }

    pub fn op1(op: Op1, e: Term) -> Term {
        Term::Op1(op, Box::new(e))
    }

    pub fn op2(op: Op2, a: Term, b: Term) -> Term {
        Term::Op2(op, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Term, b: Term) -> Term {
        Term::op2(Op2::Add, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Term, b: Term) -> Term {
        Term::op2(Op2::Sub, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Term, b: Term) -> Term {
        Term::op2(Op2::Mul, a, b)
    }

    pub fn let1(x: &str, e1: Term, e2: Term) -> Term {
        Term::Let(vec![x.to_string()], Box::new(e1), Box::new(e2))
    }

    pub fn let_tuple(xs: Vec<Name>, e1: Term, e2: Term) -> Term {
        Term::Let(xs, Box::new(e1), Box::new(e2))
    }

    /// A tuple, collapsing the singleton case to its element.
    pub fn tuple(mut es: Vec<Term>) -> Term {
        if es.len() == 1 {
            es.pop().unwrap()
        } else {
            Term::Tuple(es)
        }
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Tuple(vec![a, b])
    }

    pub fn proj(i: usize, e: Term) -> Term {
        Term::Proj(i, Box::new(e))
    }

    pub fn if_(c: Term, t: Term, e: Term) -> Term {
        Term::If(Box::new(c), Box::new(t), Box::new(e))
    }

    pub fn map2(x: &str, y: &str, body: Term, a: Term, b: Term) -> Term {
        Term::Map2 {
            x: x.to_string(),
            y: y.to_string(),
            body: Box::new(body),
            a: Box::new(a),
            b: Box::new(b),
        }
    }

    pub fn map(x: &str, body: Term, a: Term) -> Term {
        Term::Map {
            x: x.to_string(),
            body: Box::new(body),
            a: Box::new(a),
        }
    }

    pub fn fold(kind: FoldKind, x: &str, y: &str, body: Term, init: Term, arr: Term) -> Term {
        Term::Fold {
            kind,
            x: x.to_string(),
            y: y.to_string(),
            body: Box::new(body),
            init: Box::new(init),
            arr: Box::new(arr),
        }
    }

    pub fn reduce(x: &str, y: &str, body: Term, init: Term, arr: Term) -> Term {
        Term::fold(FoldKind::Reduce, x, y, body, init, arr)
    }

    pub fn shift1l(e: Term) -> Term {
        Term::Shift1L(Box::new(e))
    }

    pub fn shift1r(e: Term) -> Term {
        Term::Shift1R(Box::new(e))
    }

    pub fn lambda(params: Vec<(Name, Type)>, body: Term) -> Term {
        Term::Lambda(params, Box::new(body))
    }

    pub fn apply(f: Term, args: Vec<Term>) -> Term {
        Term::Apply(Box::new(f), args)
    }

    pub fn is_value_like(&self) -> bool {
        matches!(self, Term::Var(_) | Term::Const(_) | Term::BoolLit(_) | Term::Lambda(..))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Term::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Number of syntax nodes.
    pub fn size(&self) -> usize {
        let mut n = 1;
        self.for_each_child(&mut |c| n += c.size());
        n
    }

    /// Visits immediate subterms in evaluation order.
    pub fn for_each_child(&self, f: &mut dyn FnMut(&Term)) {
        match self {
            Term::Var(_) | Term::Const(_) | Term::BoolLit(_) => {}
            Term::Let(_, a, b) => {
                f(a);
                f(b);
            }
            Term::Tuple(es) | Term::ArrayLit(es) => es.iter().for_each(f),
            Term::Proj(_, e)
            | Term::Op1(_, e)
            | Term::Gt0(e)
            | Term::Shift1L(e)
            | Term::Shift1R(e)
            | Term::Lambda(_, e) => f(e),
            Term::Op2(_, a, b) => {
                f(a);
                f(b);
            }
            Term::If(c, t, e) => {
                f(c);
                f(t);
                f(e);
            }
            Term::Map2 { body, a, b, .. } => {
                f(a);
                f(b);
                f(body);
            }
            Term::Map { body, a, .. } => {
                f(a);
                f(body);
            }
            Term::Fold { body, init, arr, .. } => {
                f(init);
                f(arr);
                f(body);
            }
            Term::Apply(h, args) => {
                f(h);
                args.iter().for_each(f);
            }
        }
    }

    /// Rebuilds the node with every immediate subterm mapped; binders are
    /// left untouched, so `f` must be binder-agnostic.
    pub fn map_children(&self, f: &mut dyn FnMut(&Term) -> Term) -> Term {
        let b = |t: &Term, f: &mut dyn FnMut(&Term) -> Term| Box::new(f(t));
        match self {
            Term::Var(_) | Term::Const(_) | Term::BoolLit(_) => self.clone(),
            Term::Let(p, e1, e2) => {
                let e1 = b(e1, f);
                Term::Let(p.clone(), e1, b(e2, f))
            }
            Term::Tuple(es) => Term::Tuple(es.iter().map(&mut *f).collect()),
            Term::ArrayLit(es) => Term::ArrayLit(es.iter().map(&mut *f).collect()),
            Term::Proj(i, e) => Term::Proj(*i, b(e, f)),
            Term::Op1(o, e) => Term::Op1(*o, b(e, f)),
            Term::Op2(o, x, y) => {
                let x = b(x, f);
                Term::Op2(*o, x, b(y, f))
            }
            Term::Gt0(e) => Term::Gt0(b(e, f)),
            Term::If(c, t, e) => {
                let c = b(c, f);
                let t = b(t, f);
                Term::If(c, t, b(e, f))
            }
            Term::Map2 { x, y, body, a, b: bb } => {
                let a = b(a, f);
                let bb = b(bb, f);
                Term::Map2 {
                    x: x.clone(),
                    y: y.clone(),
                    body: b(body, f),
                    a,
                    b: bb,
                }
            }
            Term::Map { x, body, a } => {
                let a = b(a, f);
                Term::Map {
                    x: x.clone(),
                    body: b(body, f),
                    a,
                }
            }
            Term::Fold { kind, x, y, body, init, arr } => {
                let init = b(init, f);
                let arr = b(arr, f);
                Term::Fold {
                    kind: *kind,
                    x: x.clone(),
                    y: y.clone(),
                    body: b(body, f),
                    init,
                    arr,
                }
            }
            Term::Shift1L(e) => Term::Shift1L(b(e, f)),
            Term::Shift1R(e) => Term::Shift1R(b(e, f)),
            Term::Lambda(ps, e) => Term::Lambda(ps.clone(), b(e, f)),
            Term::Apply(h, args) => {
                let h = b(h, f);
                Term::Apply(h, args.iter().map(f).collect())
            }
        }
    }

    /// Whether any node satisfies the predicate.
    pub fn any(&self, p: &dyn Fn(&Term) -> bool) -> bool {
        if p(self) {
            return true;
        }
        let mut found = false;
        self.for_each_child(&mut |c| {
            if !found && c.any(p) {
                found = true;
            }
        });
        found
    }
}

/// Free variables in sorted order.
pub fn free_vars(e: &Term) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut out);
    out
}

fn collect_free(e: &Term, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    let with = |names: &[&Name], t: &Term, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>| {
        let k = bound.len();
        bound.extend(names.iter().map(|n| (*n).clone()));
        collect_free(t, bound, out);
        bound.truncate(k);
    };
    match e {
        Term::Var(v) => {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        }
        Term::Let(p, e1, e2) => {
            collect_free(e1, bound, out);
            let names: Vec<&Name> = p.iter().collect();
            with(&names, e2, bound, out);
        }
        Term::Map2 { x, y, body, a, b } => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
            with(&[x, y], body, bound, out);
        }
        Term::Map { x, body, a } => {
            collect_free(a, bound, out);
            with(&[x], body, bound, out);
        }
        Term::Fold { x, y, body, init, arr, .. } => {
            collect_free(init, bound, out);
            collect_free(arr, bound, out);
            with(&[x, y], body, bound, out);
        }
        Term::Lambda(ps, body) => {
            let names: Vec<&Name> = ps.iter().map(|(n, _)| n).collect();
            with(&names, body, bound, out);
        }
        _ => e.for_each_child(&mut |c| collect_free(c, bound, out)),
    }
}

/// Every name occurring in the term, bound or free.
pub fn all_names(e: &Term) -> HashSet<Name> {
    let mut out = HashSet::new();
    collect_names(e, &mut out);
    out
}

fn collect_names(e: &Term, out: &mut HashSet<Name>) {
    match e {
        Term::Var(v) => {
            out.insert(v.clone());
        }
        Term::Let(p, _, _) => out.extend(p.iter().cloned()),
        Term::Map2 { x, y, .. } | Term::Fold { x, y, .. } => {
            out.insert(x.clone());
            out.insert(y.clone());
        }
        Term::Map { x, .. } => {
            out.insert(x.clone());
        }
        Term::Lambda(ps, _) => out.extend(ps.iter().map(|(n, _)| n.clone())),
        _ => {}
    }
    e.for_each_child(&mut |c| collect_names(c, out));
}

/// Number of free occurrences of `x`.
pub fn count_occurrences(e: &Term, x: &str) -> usize {
    match e {
        Term::Var(v) => usize::from(v == x),
        Term::Let(p, e1, e2) => {
            count_occurrences(e1, x)
                + if p.iter().any(|n| n == x) { 0 } else { count_occurrences(e2, x) }
        }
        Term::Map2 { x: bx, y: by, body, a, b } => {
            count_occurrences(a, x)
                + count_occurrences(b, x)
                + if bx == x || by == x { 0 } else { count_occurrences(body, x) }
        }
        Term::Map { x: bx, body, a } => {
            count_occurrences(a, x) + if bx == x { 0 } else { count_occurrences(body, x) }
        }
        Term::Fold { x: bx, y: by, body, init, arr, .. } => {
            count_occurrences(init, x)
                + count_occurrences(arr, x)
                + if bx == x || by == x { 0 } else { count_occurrences(body, x) }
        }
        Term::Lambda(ps, body) => {
            if ps.iter().any(|(n, _)| n == x) {
                0
            } else {
                count_occurrences(body, x)
            }
        }
        _ => {
            let mut n = 0;
            e.for_each_child(&mut |c| n += count_occurrences(c, x));
            n
        }
    }
}

/// Whether `x` occurs free inside a lambda, map or fold body, where one
/// syntactic occurrence may be evaluated many times.
pub fn occurs_under_binder_body(e: &Term, x: &str) -> bool {
    match e {
        Term::Var(_) | Term::Const(_) | Term::BoolLit(_) => false,
        Term::Let(p, e1, e2) => {
            occurs_under_binder_body(e1, x)
                || (!p.iter().any(|n| n == x) && occurs_under_binder_body(e2, x))
        }
        Term::Map2 { x: bx, y: by, body, a, b } => {
            occurs_under_binder_body(a, x)
                || occurs_under_binder_body(b, x)
                || (bx != x && by != x && count_occurrences(body, x) > 0)
        }
        Term::Map { x: bx, body, a } => {
            occurs_under_binder_body(a, x) || (bx != x && count_occurrences(body, x) > 0)
        }
        Term::Fold { x: bx, y: by, body, init, arr, .. } => {
            occurs_under_binder_body(init, x)
                || occurs_under_binder_body(arr, x)
                || (bx != x && by != x && count_occurrences(body, x) > 0)
        }
        Term::Lambda(ps, body) => !ps.iter().any(|(n, _)| n == x) && count_occurrences(body, x) > 0,
        _ => {
            let mut found = false;
            e.for_each_child(&mut |c| found = found || occurs_under_binder_body(c, x));
            found
        }
    }
}

/// Capture-avoiding substitution of a single variable.
pub fn substitute(e: &Term, x: &str, v: &Term) -> Term {
    let mut m = HashMap::new();
    m.insert(x.to_string(), v.clone());
    substitute_many(e, &m)
}

/// Capture-avoiding simultaneous substitution.
pub fn substitute_many(e: &Term, m: &HashMap<Name, Term>) -> Term {
    if m.is_empty() {
        return e.clone();
    }
    let fv_repl: HashSet<Name> = m.values().flat_map(free_vars).collect();
    subst_rec(e, m, &fv_repl)
}

fn subst_rec(e: &Term, m: &HashMap<Name, Term>, fv_repl: &HashSet<Name>) -> Term {
    match e {
        Term::Var(v) => m.get(v).cloned().unwrap_or_else(|| e.clone()),
        Term::Let(p, e1, e2) => {
            let e1 = subst_rec(e1, m, fv_repl);
            let (p, e2) = under_binders(p, e2, m, fv_repl);
            Term::Let(p, Box::new(e1), Box::new(e2))
        }
        Term::Map2 { x, y, body, a, b } => {
            let a = subst_rec(a, m, fv_repl);
            let b = subst_rec(b, m, fv_repl);
            let (names, body) = under_binders(&[x.clone(), y.clone()], body, m, fv_repl);
            Term::map2(&names[0], &names[1], body, a, b)
        }
        Term::Map { x, body, a } => {
            let a = subst_rec(a, m, fv_repl);
            let (names, body) = under_binders(std::slice::from_ref(x), body, m, fv_repl);
            Term::map(&names[0], body, a)
        }
        Term::Fold { kind, x, y, body, init, arr } => {
            let init = subst_rec(init, m, fv_repl);
            let arr = subst_rec(arr, m, fv_repl);
            let (names, body) = under_binders(&[x.clone(), y.clone()], body, m, fv_repl);
            Term::fold(*kind, &names[0], &names[1], body, init, arr)
        }
        Term::Lambda(ps, body) => {
            let names: Vec<Name> = ps.iter().map(|(n, _)| n.clone()).collect();
            let (names, body) = under_binders(&names, body, m, fv_repl);
            let ps = names
                .into_iter()
                .zip(ps.iter())
                .map(|(n, (_, t))| (n, t.clone()))
                .collect();
            Term::Lambda(ps, Box::new(body))
        }
        _ => e.map_children(&mut |c| subst_rec(c, m, fv_repl)),
    }
}

/// Substitutes under a binder group, renaming binders that would capture.
fn under_binders(
    names: &[Name],
    body: &Term,
    m: &HashMap<Name, Term>,
    fv_repl: &HashSet<Name>,
) -> (Vec<Name>, Term) {
    let mut inner: HashMap<Name, Term> = m.clone();
    for n in names {
        inner.remove(n);
    }
    if inner.is_empty() {
        return (names.to_vec(), body.clone());
    }
    let body_fv = free_vars(body);
    let live: HashSet<Name> = inner
        .iter()
        .filter(|(k, _)| body_fv.contains(*k))
        .flat_map(|(_, v)| free_vars(v))
        .collect();
    let mut out_names = Vec::with_capacity(names.len());
    for n in names {
        if live.contains(n) {
            let mut avoid: HashSet<Name> = fv_repl.clone();
            avoid.extend(body_fv.iter().cloned());
            avoid.extend(names.iter().cloned());
            avoid.extend(out_names.iter().cloned());
            let fresh = prime_fresh(n, &avoid);
            inner.insert(n.clone(), Term::Var(fresh.clone()));
            out_names.push(fresh);
        } else {
            out_names.push(n.clone());
        }
    }
    let new_fv: HashSet<Name> = inner.values().flat_map(free_vars).collect();
    (out_names, subst_rec(body, &inner, &new_fv))
}

/// Appends primes until the name is unused.
pub fn prime_fresh(base: &str, avoid: &HashSet<Name>) -> Name {
    let mut s = format!("{base}'");
    while avoid.contains(&s) {
        s.push('\'');
    }
    s
}

/// Alpha-equivalence; lambda annotations are ignored and constants are
/// compared numerically.
pub fn alpha_equal(a: &Term, b: &Term) -> bool {
    alpha_rec(a, b, &mut Vec::new())
}

fn alpha_rec(a: &Term, b: &Term, env: &mut Vec<(Name, Name)>) -> bool {
    fn lookup(env: &[(Name, Name)], x: &str, y: &str) -> bool {
        for (l, r) in env.iter().rev() {
            if l == x || r == y {
                return l == x && r == y;
            }
        }
        x == y
    }
    fn bind(
        env: &mut Vec<(Name, Name)>,
        ls: &[&Name],
        rs: &[&Name],
        a: &Term,
        b: &Term,
    ) -> bool {
        if ls.len() != rs.len() {
            return false;
        }
        let k = env.len();
        for (l, r) in ls.iter().zip(rs) {
            env.push(((*l).clone(), (*r).clone()));
        }
        let ok = alpha_rec(a, b, env);
        env.truncate(k);
        ok
    }
    match (a, b) {
        (Term::Var(x), Term::Var(y)) => lookup(env, x, y),
        (Term::Const(x), Term::Const(y)) => x == y,
        (Term::BoolLit(x), Term::BoolLit(y)) => x == y,
        (Term::Let(p, a1, a2), Term::Let(q, b1, b2)) => {
            let ls: Vec<&Name> = p.iter().collect();
            let rs: Vec<&Name> = q.iter().collect();
            alpha_rec(a1, b1, env) && bind(env, &ls, &rs, a2, b2)
        }
        (Term::Tuple(xs), Term::Tuple(ys)) | (Term::ArrayLit(xs), Term::ArrayLit(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| alpha_rec(x, y, env))
        }
        (Term::Proj(i, x), Term::Proj(j, y)) => i == j && alpha_rec(x, y, env),
        (Term::Op1(o, x), Term::Op1(p, y)) => o == p && alpha_rec(x, y, env),
        (Term::Op2(o, x1, x2), Term::Op2(p, y1, y2)) => {
            o == p && alpha_rec(x1, y1, env) && alpha_rec(x2, y2, env)
        }
        (Term::Gt0(x), Term::Gt0(y))
        | (Term::Shift1L(x), Term::Shift1L(y))
        | (Term::Shift1R(x), Term::Shift1R(y)) => alpha_rec(x, y, env),
        (Term::If(c1, t1, e1), Term::If(c2, t2, e2)) => {
            alpha_rec(c1, c2, env) && alpha_rec(t1, t2, env) && alpha_rec(e1, e2, env)
        }
        (
            Term::Map2 { x: x1, y: y1, body: b1, a: a1, b: bb1 },
            Term::Map2 { x: x2, y: y2, body: b2, a: a2, b: bb2 },
        ) => {
            alpha_rec(a1, a2, env)
                && alpha_rec(bb1, bb2, env)
                && bind(env, &[x1, y1], &[x2, y2], b1, b2)
        }
        (Term::Map { x: x1, body: b1, a: a1 }, Term::Map { x: x2, body: b2, a: a2 }) => {
            alpha_rec(a1, a2, env) && bind(env, &[x1], &[x2], b1, b2)
        }
        (
            Term::Fold { kind: k1, x: x1, y: y1, body: b1, init: i1, arr: r1 },
            Term::Fold { kind: k2, x: x2, y: y2, body: b2, init: i2, arr: r2 },
        ) => {
            k1 == k2
                && alpha_rec(i1, i2, env)
                && alpha_rec(r1, r2, env)
                && bind(env, &[x1, y1], &[x2, y2], b1, b2)
        }
        (Term::Lambda(p, x), Term::Lambda(q, y)) => {
            let ls: Vec<&Name> = p.iter().map(|(n, _)| n).collect();
            let rs: Vec<&Name> = q.iter().map(|(n, _)| n).collect();
            bind(env, &ls, &rs, x, y)
        }
        (Term::Apply(f, xs), Term::Apply(g, ys)) => {
            alpha_rec(f, g, env)
                && xs.len() == ys.len()
                && xs.iter().zip(ys).all(|(x, y)| alpha_rec(x, y, env))
        }
        _ => false,
    }
}

/// Deterministic fresh-name generator scoped to one transformation call.
#[derive(Clone, Debug, Default)]
pub struct NameSupply {
    used: HashSet<Name>,
    counters: HashMap<Name, usize>,
}

impl NameSupply {
    pub fn new() -> Self {
        NameSupply::default()
    }

    /// A supply that never returns any name occurring in `terms` or `extra`.
    pub fn avoiding<'a>(terms: impl IntoIterator<Item = &'a Term>, extra: &[Name]) -> Self {
        let mut s = NameSupply::new();
        for t in terms {
            s.used.extend(all_names(t));
        }
        s.used.extend(extra.iter().cloned());
        s
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn is_used(&self, name: &str) -> bool {
        self.used.contains(name)
    }

    /// Returns `base{k}` for the smallest unused `k` above the last one handed
    /// out for this base.
    pub fn fresh(&mut self, base: &str) -> Name {
        let k = self.counters.entry(base.to_string()).or_insert(0);
        loop {
            *k += 1;
            let cand = format!("{base}{k}");
            if !self.used.contains(&cand) {
                self.used.insert(cand.clone());
                return cand;
            }
        }
    }
}

/// Renames every binder to a fresh name so that binders are pairwise distinct
/// and distinct from `reserved`.
pub fn uniquify(e: &Term, reserved: &[Name], supply: &mut NameSupply) -> Term {
    for r in reserved {
        supply.reserve(r);
    }
    let mut seen: HashSet<Name> = reserved.iter().cloned().collect();
    uniq_rec(e, &mut seen, supply, &HashMap::new())
}

fn uniq_rec(
    e: &Term,
    seen: &mut HashSet<Name>,
    supply: &mut NameSupply,
    ren: &HashMap<Name, Name>,
) -> Term {
    let pick = |n: &Name, seen: &mut HashSet<Name>, supply: &mut NameSupply| -> Name {
        if seen.contains(n) {
            let base = n.trim_end_matches(|c: char| c.is_ascii_digit() || c == '\'');
            let base = if base.is_empty() { "v" } else { base };
            let f = supply.fresh(base);
            seen.insert(f.clone());
            f
        } else {
            seen.insert(n.clone());
            supply.reserve(n);
            n.clone()
        }
    };
    match e {
        Term::Var(v) => Term::Var(ren.get(v).cloned().unwrap_or_else(|| v.clone())),
        Term::Let(p, e1, e2) => {
            let e1 = uniq_rec(e1, seen, supply, ren);
            let mut r = ren.clone();
            let p2: Vec<Name> = p
                .iter()
                .map(|n| {
                    let f = pick(n, seen, supply);
                    r.insert(n.clone(), f.clone());
                    f
                })
                .collect();
            Term::Let(p2, Box::new(e1), Box::new(uniq_rec(e2, seen, supply, &r)))
        }
        Term::Map2 { x, y, body, a, b } => {
            let a = uniq_rec(a, seen, supply, ren);
            let b = uniq_rec(b, seen, supply, ren);
            let mut r = ren.clone();
            let x2 = pick(x, seen, supply);
            r.insert(x.clone(), x2.clone());
            let y2 = pick(y, seen, supply);
            r.insert(y.clone(), y2.clone());
            Term::map2(&x2, &y2, uniq_rec(body, seen, supply, &r), a, b)
        }
        Term::Map { x, body, a } => {
            let a = uniq_rec(a, seen, supply, ren);
            let mut r = ren.clone();
            let x2 = pick(x, seen, supply);
            r.insert(x.clone(), x2.clone());
            Term::map(&x2, uniq_rec(body, seen, supply, &r), a)
        }
        Term::Fold { kind, x, y, body, init, arr } => {
            let init = uniq_rec(init, seen, supply, ren);
            let arr = uniq_rec(arr, seen, supply, ren);
            let mut r = ren.clone();
            let x2 = pick(x, seen, supply);
            r.insert(x.clone(), x2.clone());
            let y2 = pick(y, seen, supply);
            r.insert(y.clone(), y2.clone());
            Term::fold(*kind, &x2, &y2, uniq_rec(body, seen, supply, &r), init, arr)
        }
        Term::Lambda(ps, body) => {
            let mut r = ren.clone();
            let ps2 = ps
                .iter()
                .map(|(n, t)| {
                    let f = pick(n, seen, supply);
                    r.insert(n.clone(), f.clone());
                    (f, t.clone())
                })
                .collect();
            Term::Lambda(ps2, Box::new(uniq_rec(body, seen, supply, &r)))
        }
        _ => e.map_children(&mut |c| uniq_rec(c, seen, supply, ren)),
    }
}
