//! Rewriting optimizer for target terms.
//!
//! Partial evaluation (inlining, forward substitution, tuple and let
//! normalisation) runs to a fixpoint first; the algebraic, array and
//! conditional groups then join it until nothing fires. Rules are tried
//! outermost first, left to right, and every substitution is capture-avoiding.

use std::collections::HashSet;

use thiserror::Error;

use crate::frontend::print_term;
use crate::ops::Op2;
use crate::term::{
    alpha_equal, all_names, count_occurrences, free_vars, occurs_under_binder_body, prime_fresh,
    substitute, FoldKind, Name, Term,
};
use crate::typecheck::typecheck_target;
use crate::types::{Context, Type};

/// How much optimization to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptLevel {
    None,
    Pe,
    PeAlgebra,
    All,
}

impl OptLevel {
    pub fn parse(s: &str) -> Option<OptLevel> {
        match s {
            "none" => Some(OptLevel::None),
            "pe" => Some(OptLevel::Pe),
            "pe+algebra" => Some(OptLevel::PeAlgebra),
            "all" => Some(OptLevel::All),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptLevel::None => "none",
            OptLevel::Pe => "pe",
            OptLevel::PeAlgebra => "pe+algebra",
            OptLevel::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OptError {
    #[error("rewriting did not reach a fixpoint within {0} steps")]
    FixpointBudgetExceeded(usize),
}

/// Rule families, in the order they are tried at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleGroup {
    Inlining,
    TuplePe,
    LetNormalisation,
    Algebraic,
    ArrayAlgebraic,
    ClassicArray,
    Conditionals,
    ConstantPropagation,
}

impl RuleGroup {
    /// Whether the group belongs to partial evaluation.
    pub fn is_pe(self) -> bool {
        matches!(self, RuleGroup::Inlining | RuleGroup::TuplePe | RuleGroup::LetNormalisation)
    }
}

/// A selection of rule groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub groups: Vec<RuleGroup>,
}

impl RuleSet {
    pub fn pe() -> RuleSet {
        RuleSet {
            groups: vec![RuleGroup::Inlining, RuleGroup::TuplePe, RuleGroup::LetNormalisation],
        }
    }

    pub fn pe_algebra() -> RuleSet {
        let mut s = RuleSet::pe();
        s.groups.extend([
            RuleGroup::Algebraic,
            RuleGroup::ArrayAlgebraic,
            RuleGroup::ClassicArray,
            RuleGroup::Conditionals,
        ]);
        s
    }

    pub fn all() -> RuleSet {
        let mut s = RuleSet::pe_algebra();
        s.groups.push(RuleGroup::ConstantPropagation);
        s
    }

    fn contains(&self, g: RuleGroup) -> bool {
        self.groups.contains(&g)
    }
}

/// What a rule may ask about the position it fires at.
#[derive(Clone, Debug)]
enum Binding {
    Known(Type),
    Expr(Term, Option<usize>),
    Elem(Term),
}

/// The typing scope at the current position, resolved only on demand.
#[derive(Clone, Debug)]
pub struct Scope {
    base: Context,
    stack: Vec<(Name, Binding)>,
}

impl Scope {
    pub fn new(base: &Context) -> Scope {
        Scope {
            base: base.clone(),
            stack: Vec::new(),
        }
    }

    fn unknown() -> Type {
        Type::Abstract("?".into())
    }

    /// The context in force at the current position.
    pub fn context(&self) -> Context {
        let mut c = self.base.clone();
        for (n, b) in &self.stack {
            let t = match b {
                Binding::Known(t) => t.clone(),
                Binding::Expr(e, None) => typecheck_target(&c, e).unwrap_or_else(|_| Scope::unknown()),
                Binding::Expr(e, Some(i)) => match typecheck_target(&c, e) {
                    Ok(Type::Prod(ts)) if *i < ts.len() => ts[*i].clone(),
                    _ => Scope::unknown(),
                },
                Binding::Elem(e) => match typecheck_target(&c, e) {
                    Ok(Type::Array(t, _)) => *t,
                    _ => Scope::unknown(),
                },
            };
            c.push(n, t);
        }
        c
    }

    pub fn type_of(&self, e: &Term) -> Option<Type> {
        typecheck_target(&self.context(), e).ok()
    }

    fn push(&mut self, n: &str, b: Binding) {
        self.stack.push((n.to_string(), b));
    }

    fn pop(&mut self, k: usize) {
        let len = self.stack.len();
        self.stack.truncate(len - k);
    }
}

type RuleFn = fn(&Scope, &Term) -> Option<Term>;

/// A named rewrite rule `L ⇝ R`, applied at the root of a term.
#[derive(Clone, Copy)]
pub struct Rule {
    pub name: &'static str,
    pub group: RuleGroup,
    apply: RuleFn,
}

impl std::fmt::Debug for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({:?})", self.name, self.group)
    }
}

impl Rule {
    /// Tries the rule at the root of `e` under the typing context `ctx`.
    pub fn apply_at_root(&self, ctx: &Context, e: &Term) -> Option<Term> {
        (self.apply)(&Scope::new(ctx), e)
    }
}

const RULES: &[Rule] = &[
    Rule { name: "beta", group: RuleGroup::Inlining, apply: r_beta },
    Rule { name: "let-var", group: RuleGroup::Inlining, apply: r_let_var },
    Rule { name: "let-zero-one", group: RuleGroup::Inlining, apply: r_let_01 },
    Rule { name: "dead-let", group: RuleGroup::Inlining, apply: r_dead_let },
    Rule { name: "let-return", group: RuleGroup::Inlining, apply: r_let_return },
    Rule { name: "inline-lambda", group: RuleGroup::Inlining, apply: r_inline_lambda },
    Rule { name: "proj-tuple", group: RuleGroup::TuplePe, apply: r_proj_tuple },
    Rule { name: "let-split", group: RuleGroup::TuplePe, apply: r_let_split },
    Rule { name: "let-let", group: RuleGroup::LetNormalisation, apply: r_let_let },
    Rule { name: "let-float", group: RuleGroup::LetNormalisation, apply: r_let_float },
    Rule { name: "scalar-identity", group: RuleGroup::Algebraic, apply: r_scalar_identity },
    Rule { name: "map2-zeros", group: RuleGroup::ArrayAlgebraic, apply: r_map2_zeros },
    Rule { name: "map2-ones", group: RuleGroup::ArrayAlgebraic, apply: r_map2_ones },
    Rule { name: "map-identity", group: RuleGroup::ArrayAlgebraic, apply: r_map_identity },
    Rule { name: "reduce-units", group: RuleGroup::ArrayAlgebraic, apply: r_reduce_units },
    Rule { name: "shift-const-map", group: RuleGroup::ArrayAlgebraic, apply: r_shift_const_map },
    Rule { name: "scan-ones", group: RuleGroup::ArrayAlgebraic, apply: r_scan_ones },
    Rule { name: "map2-unused-binder", group: RuleGroup::ArrayAlgebraic, apply: r_map2_unused },
    Rule { name: "map2-commute", group: RuleGroup::ArrayAlgebraic, apply: r_map2_commute },
    Rule { name: "map-map2-fusion", group: RuleGroup::ClassicArray, apply: r_map_map2_fusion },
    Rule { name: "map-map-fusion", group: RuleGroup::ClassicArray, apply: r_map_map_fusion },
    Rule { name: "if-same", group: RuleGroup::Conditionals, apply: r_if_same },
    Rule { name: "if-const", group: RuleGroup::Conditionals, apply: r_if_const },
    Rule { name: "proj-if", group: RuleGroup::Conditionals, apply: r_proj_if },
    Rule { name: "apply-if", group: RuleGroup::Conditionals, apply: r_apply_if },
    Rule { name: "let-const", group: RuleGroup::ConstantPropagation, apply: r_let_const },
    Rule { name: "const-fold", group: RuleGroup::ConstantPropagation, apply: r_const_fold },
    Rule { name: "forward-array", group: RuleGroup::ConstantPropagation, apply: r_forward_array },
];

/// Every rule, in priority order.
pub fn rules() -> &'static [Rule] {
    RULES
}

/// Looks a rule up by name.
pub fn rule(name: &str) -> Option<&'static Rule> {
    RULES.iter().find(|r| r.name == name)
}

/// Optimizes `e`, typed under `ctx`, at the given level.
pub fn optimize(ctx: &Context, e: &Term, level: OptLevel) -> Result<Term, OptError> {
    match level {
        OptLevel::None => Ok(e.clone()),
        OptLevel::Pe => rewrite_fixpoint(ctx, e, &RuleSet::pe()),
        OptLevel::PeAlgebra => {
            let p = rewrite_fixpoint(ctx, e, &RuleSet::pe())?;
            rewrite_fixpoint(ctx, &p, &RuleSet::pe_algebra())
        }
        OptLevel::All => {
            let p = rewrite_fixpoint(ctx, e, &RuleSet::pe())?;
            rewrite_fixpoint(ctx, &p, &RuleSet::all())
        }
    }
}

/// Partial evaluation alone.
pub fn partial_evaluate(ctx: &Context, e: &Term) -> Result<Term, OptError> {
    optimize(ctx, e, OptLevel::Pe)
}

/// Rewrites with the given groups until no rule fires.
pub fn rewrite_fixpoint(ctx: &Context, e: &Term, set: &RuleSet) -> Result<Term, OptError> {
    let active: Vec<&Rule> = RULES.iter().filter(|r| set.contains(r.group)).collect();
    let budget = 20_000 + 200 * e.size();
    let mut eng = Engine {
        rules: active,
        steps: 0,
        budget,
        scope: Scope::new(ctx),
    };
    let mut cur = e.clone();
    loop {
        let (next, changed) = eng.rewrite(&cur)?;
        cur = next;
        if !changed {
            return Ok(cur);
        }
    }
}

struct Engine<'r> {
    rules: Vec<&'r Rule>,
    steps: usize,
    budget: usize,
    scope: Scope,
}

impl Engine<'_> {
    fn try_root(&self, e: &Term) -> Option<Term> {
        self.rules.iter().find_map(|r| (r.apply)(&self.scope, e))
    }

    fn tick(&mut self) -> Result<(), OptError> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(OptError::FixpointBudgetExceeded(self.budget))
        } else {
            Ok(())
        }
    }

    fn rewrite(&mut self, e: &Term) -> Result<(Term, bool), OptError> {
        let mut cur = e.clone();
        let mut changed = false;
        while let Some(n) = self.try_root(&cur) {
            cur = n;
            changed = true;
            self.tick()?;
        }
        loop {
            let (n, c) = self.rewrite_children(&cur)?;
            cur = n;
            if !c {
                return Ok((cur, changed));
            }
            changed = true;
            let mut fired = false;
            while let Some(n) = self.try_root(&cur) {
                cur = n;
                fired = true;
                self.tick()?;
            }
            if !fired {
                return Ok((cur, changed));
            }
        }
    }

    fn rewrite_children(&mut self, e: &Term) -> Result<(Term, bool), OptError> {
        match e {
            Term::Let(p, e1, e2) => {
                let (e1, c1) = self.rewrite(e1)?;
                for (i, n) in p.iter().enumerate() {
                    let idx = if p.len() == 1 { None } else { Some(i) };
                    self.scope.push(n, Binding::Expr(e1.clone(), idx));
                }
                let r = self.rewrite(e2);
                self.scope.pop(p.len());
                let (e2, c2) = r?;
                Ok((Term::Let(p.clone(), Box::new(e1), Box::new(e2)), c1 || c2))
            }
            Term::Map2 { x, y, body, a, b } => {
                let (a, c1) = self.rewrite(a)?;
                let (b, c2) = self.rewrite(b)?;
                self.scope.push(x, Binding::Elem(a.clone()));
                self.scope.push(y, Binding::Elem(b.clone()));
                let r = self.rewrite(body);
                self.scope.pop(2);
                let (body, c3) = r?;
                Ok((Term::map2(x, y, body, a, b), c1 || c2 || c3))
            }
            Term::Map { x, body, a } => {
                let (a, c1) = self.rewrite(a)?;
                self.scope.push(x, Binding::Elem(a.clone()));
                let r = self.rewrite(body);
                self.scope.pop(1);
                let (body, c2) = r?;
                Ok((Term::map(x, body, a), c1 || c2))
            }
            Term::Fold { kind, x, y, body, init, arr } => {
                let (init, c1) = self.rewrite(init)?;
                let (arr, c2) = self.rewrite(arr)?;
                self.scope.push(x, Binding::Expr(init.clone(), None));
                self.scope.push(y, Binding::Elem(arr.clone()));
                let r = self.rewrite(body);
                self.scope.pop(2);
                let (body, c3) = r?;
                Ok((Term::fold(*kind, x, y, body, init, arr), c1 || c2 || c3))
            }
            Term::Lambda(ps, body) => {
                for (n, t) in ps {
                    self.scope.push(n, Binding::Known(t.clone()));
                }
                let r = self.rewrite(body);
                self.scope.pop(ps.len());
                let (body, c) = r?;
                Ok((Term::Lambda(ps.clone(), Box::new(body)), c))
            }
            _ => {
                let mut err = None;
                let mut changed = false;
                let out = e.map_children(&mut |c| {
                    if err.is_some() {
                        return c.clone();
                    }
                    match self.rewrite(c) {
                        Ok((n, ch)) => {
                            changed |= ch;
                            n
                        }
                        Err(x) => {
                            err = Some(x);
                            c.clone()
                        }
                    }
                });
                match err {
                    Some(x) => Err(x),
                    None => Ok((out, changed)),
                }
            }
        }
    }
}

/// Whether every variable of function type, free or bound, occurs exactly
/// once in its scope.
pub fn check_linear_continuations(ctx: &Context, e: &Term) -> bool {
    for (n, t) in ctx.entries() {
        if matches!(t, Type::Func(..)) && count_occurrences(e, n) != 1 {
            return false;
        }
    }
    linear_rec(ctx, e)
}

fn linear_rec(ctx: &Context, e: &Term) -> bool {
    match e {
        Term::Let(p, e1, e2) => {
            if !linear_rec(ctx, e1) {
                return false;
            }
            let t = typecheck_target(ctx, e1).unwrap_or(Type::Abstract("?".into()));
            let ts: Vec<Type> = match (&t, p.len()) {
                (_, 1) => vec![t.clone()],
                (Type::Prod(ts), k) if ts.len() == k => ts.clone(),
                _ => vec![Type::Abstract("?".into()); p.len()],
            };
            let mut inner = ctx.clone();
            for (n, t) in p.iter().zip(&ts) {
                if matches!(t, Type::Func(..)) && count_occurrences(e2, n) != 1 {
                    return false;
                }
                inner.push(n, t.clone());
            }
            linear_rec(&inner, e2)
        }
        Term::Lambda(ps, body) => {
            let mut inner = ctx.clone();
            for (n, t) in ps {
                if matches!(t, Type::Func(..)) && count_occurrences(body, n) != 1 {
                    return false;
                }
                inner.push(n, t.clone());
            }
            linear_rec(&inner, body)
        }
        Term::Map2 { x, y, body, a, b } => {
            let elem = |t: &Term| match typecheck_target(ctx, t) {
                Ok(Type::Array(t, _)) => *t,
                _ => Type::Real,
            };
            let inner = ctx.extend(x, elem(a)).extend(y, elem(b));
            linear_rec(ctx, a) && linear_rec(ctx, b) && linear_rec(&inner, body)
        }
        Term::Map { x, body, a } => {
            let elem = match typecheck_target(ctx, a) {
                Ok(Type::Array(t, _)) => *t,
                _ => Type::Real,
            };
            linear_rec(ctx, a) && linear_rec(&ctx.extend(x, elem), body)
        }
        Term::Fold { x, y, body, init, arr, .. } => {
            let acc = typecheck_target(ctx, init).unwrap_or(Type::Real);
            let elem = match typecheck_target(ctx, arr) {
                Ok(Type::Array(t, _)) => *t,
                _ => Type::Real,
            };
            let inner = ctx.extend(x, acc).extend(y, elem);
            linear_rec(ctx, init) && linear_rec(ctx, arr) && linear_rec(&inner, body)
        }
        _ => {
            let mut ok = true;
            e.for_each_child(&mut |c| ok = ok && linear_rec(ctx, c));
            ok
        }
    }
}

/// Whether the term still contains a lambda abstraction.
pub fn contains_lambda(e: &Term) -> bool {
    e.any(&|t| matches!(t, Term::Lambda(..)))
}

fn fv_set(e: &Term) -> HashSet<Name> {
    free_vars(e).into_iter().collect()
}

fn is_value(e: &Term) -> bool {
    e.is_value_like()
}

/// Renames the binders in `names` that lie in `clash`, substituting in
/// `body`; fresh names also avoid `avoid`.
fn rename_away(names: &[Name], body: &Term, clash: &HashSet<Name>, avoid: &HashSet<Name>) -> (Vec<Name>, Term) {
    let mut taken: HashSet<Name> = clash.clone();
    taken.extend(avoid.iter().cloned());
    taken.extend(all_names(body));
    taken.extend(names.iter().cloned());
    let mut out = Vec::with_capacity(names.len());
    let mut body = body.clone();
    for n in names {
        if clash.contains(n) {
            let f = prime_fresh(n, &taken);
            taken.insert(f.clone());
            body = substitute(&body, n, &Term::Var(f.clone()));
            out.push(f);
        } else {
            out.push(n.clone());
        }
    }
    (out, body)
}

fn r_beta(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Apply(f, args) = e else { return None };
    let Term::Lambda(ps, body) = &**f else { return None };
    if ps.len() != args.len() {
        return None;
    }
    let names: Vec<Name> = ps.iter().map(|(n, _)| n.clone()).collect();
    let fv_args: HashSet<Name> = args.iter().flat_map(free_vars).collect();
    let (names, body) = rename_away(&names, body, &fv_args, &fv_args);
    // Arguments whose parameter is used once, outside any binder body, are
    // forward-substituted; the others are let-bound in order.
    let mut out = body;
    let mut bound = Vec::new();
    for (n, a) in names.iter().zip(args) {
        if count_occurrences(&out, n) == 1 && !occurs_under_binder_body(&out, n) {
            out = substitute(&out, n, a);
        } else {
            bound.push((n, a));
        }
    }
    for (n, a) in bound.into_iter().rev() {
        out = Term::let1(n, a.clone(), out);
    }
    Some(out)
}

fn single_let(e: &Term) -> Option<(&Name, &Term, &Term)> {
    match e {
        Term::Let(p, e1, e2) if p.len() == 1 => Some((&p[0], e1, e2)),
        _ => None,
    }
}

fn r_let_var(_: &Scope, e: &Term) -> Option<Term> {
    let (x, e1, e2) = single_let(e)?;
    match e1 {
        Term::Var(_) => Some(substitute(e2, x, e1)),
        _ => None,
    }
}

fn r_let_01(_: &Scope, e: &Term) -> Option<Term> {
    let (x, e1, e2) = single_let(e)?;
    match e1 {
        Term::Const(c) if *c == 0.0 || *c == 1.0 => Some(substitute(e2, x, e1)),
        _ => None,
    }
}

fn r_let_const(_: &Scope, e: &Term) -> Option<Term> {
    let (x, e1, e2) = single_let(e)?;
    match e1 {
        Term::Const(_) | Term::BoolLit(_) => Some(substitute(e2, x, e1)),
        _ => None,
    }
}

fn r_dead_let(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Let(p, _, e2) = e else { return None };
    let fv = free_vars(e2);
    if p.iter().any(|n| fv.contains(n)) {
        None
    } else {
        Some((**e2).clone())
    }
}

fn r_let_return(_: &Scope, e: &Term) -> Option<Term> {
    let (x, e1, e2) = single_let(e)?;
    (e2.as_var() == Some(x.as_str())).then(|| e1.clone())
}

/// Whether `x` occurs free inside a map or fold body.
fn occurs_in_array_body(e: &Term, x: &str) -> bool {
    match e {
        Term::Var(_) | Term::Const(_) | Term::BoolLit(_) => false,
        Term::Let(p, e1, e2) => {
            occurs_in_array_body(e1, x) || (!p.iter().any(|n| n == x) && occurs_in_array_body(e2, x))
        }
        Term::Map2 { x: bx, y: by, body, a, b } => {
            occurs_in_array_body(a, x)
                || occurs_in_array_body(b, x)
                || (bx != x && by != x && count_occurrences(body, x) > 0)
        }
        Term::Map { x: bx, body, a } => {
            occurs_in_array_body(a, x) || (bx != x && count_occurrences(body, x) > 0)
        }
        Term::Fold { x: bx, y: by, body, init, arr, .. } => {
            occurs_in_array_body(init, x)
                || occurs_in_array_body(arr, x)
                || (bx != x && by != x && count_occurrences(body, x) > 0)
        }
        Term::Lambda(ps, body) => !ps.iter().any(|(n, _)| n == x) && occurs_in_array_body(body, x),
        _ => {
            let mut found = false;
            e.for_each_child(&mut |c| found = found || occurs_in_array_body(c, x));
            found
        }
    }
}

fn r_inline_lambda(_: &Scope, e: &Term) -> Option<Term> {
    let (f, e1, e2) = single_let(e)?;
    if !matches!(e1, Term::Lambda(..)) {
        return None;
    }
    if count_occurrences(e2, f) == 1 && !occurs_in_array_body(e2, f) {
        Some(substitute(e2, f, e1))
    } else {
        None
    }
}

fn syntactically_array(e: &Term) -> Option<bool> {
    match e {
        Term::Map { .. } | Term::Map2 { .. } | Term::Shift1L(_) | Term::Shift1R(_) | Term::ArrayLit(_) => {
            Some(true)
        }
        Term::Fold { kind: FoldKind::Scanl | FoldKind::Scanr, .. } => Some(true),
        Term::Fold { kind: FoldKind::Reduce | FoldKind::Foldl, .. } => Some(false),
        Term::Const(_) | Term::BoolLit(_) | Term::Op1(..) | Term::Op2(..) | Term::Gt0(_) => Some(false),
        Term::Tuple(_) | Term::Lambda(..) => Some(false),
        Term::Let(_, _, b) => syntactically_array(b),
        _ => None,
    }
}

/// In the full level, single-use array-valued lets are substituted so that
/// array combinators meet and fuse; scalar temporaries stay named.
fn r_forward_array(s: &Scope, e: &Term) -> Option<Term> {
    let (x, e1, e2) = single_let(e)?;
    if is_value(e1) || count_occurrences(e2, x) != 1 || occurs_under_binder_body(e2, x) {
        return None;
    }
    let is_array = match syntactically_array(e1) {
        Some(b) => b,
        None => matches!(s.type_of(e1), Some(Type::Array(..))),
    };
    is_array.then(|| substitute(e2, x, e1))
}

fn r_proj_tuple(_: &Scope, e: &Term) -> Option<Term> {
    match e {
        Term::Proj(i, t) => match &**t {
            Term::Tuple(es) if *i >= 1 && *i <= es.len() => Some(es[*i - 1].clone()),
            _ => None,
        },
        _ => None,
    }
}

fn r_let_split(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Let(p, e1, body) = e else { return None };
    let Term::Tuple(es) = &**e1 else { return None };
    if p.len() < 2 || p.len() != es.len() {
        return None;
    }
    let later_fv: Vec<HashSet<Name>> = (0..es.len())
        .map(|i| es[i + 1..].iter().flat_map(free_vars).collect())
        .collect();
    let mut names = p.clone();
    let mut body = (**body).clone();
    for i in 0..names.len() {
        if later_fv[i].contains(&names[i]) {
            let clash: HashSet<Name> = [names[i].clone()].into_iter().collect();
            let mut avoid = later_fv[i].clone();
            avoid.extend(names.iter().cloned());
            let (renamed, b) = rename_away(&names[i..=i], &body, &clash, &avoid);
            names[i] = renamed[0].clone();
            body = b;
        }
    }
    let mut out = body;
    for (n, v) in names.iter().zip(es).rev() {
        out = Term::let1(n, v.clone(), out);
    }
    Some(out)
}

/// Immediate subterms in evaluation-context position.
fn eval_children(e: &Term) -> Vec<&Term> {
    match e {
        Term::Tuple(es) | Term::ArrayLit(es) => es.iter().collect(),
        Term::Proj(_, t) | Term::Op1(_, t) | Term::Gt0(t) | Term::Shift1L(t) | Term::Shift1R(t) => vec![t],
        Term::Op2(_, a, b) => vec![a, b],
        Term::If(c, _, _) => vec![c],
        Term::Map2 { a, b, .. } => vec![a, b],
        Term::Map { a, .. } => vec![a],
        Term::Fold { init, arr, .. } => vec![init, arr],
        Term::Apply(h, args) => std::iter::once(&**h).chain(args.iter()).collect(),
        Term::Let(_, e1, _) => vec![e1],
        _ => vec![],
    }
}

fn replace_eval_child(e: &Term, k: usize, new: Term) -> Term {
    let mut i = 0;
    let mut new = Some(new);
    let mut pick = |c: &Term| {
        let r = if i == k { new.take().unwrap() } else { c.clone() };
        i += 1;
        r
    };
    match e {
        Term::Tuple(es) => Term::Tuple(es.iter().map(&mut pick).collect()),
        Term::ArrayLit(es) => Term::ArrayLit(es.iter().map(&mut pick).collect()),
        Term::Proj(j, t) => Term::Proj(*j, Box::new(pick(t))),
        Term::Op1(o, t) => Term::Op1(*o, Box::new(pick(t))),
        Term::Gt0(t) => Term::Gt0(Box::new(pick(t))),
        Term::Shift1L(t) => Term::Shift1L(Box::new(pick(t))),
        Term::Shift1R(t) => Term::Shift1R(Box::new(pick(t))),
        Term::Op2(o, a, b) => {
            let a = pick(a);
            Term::Op2(*o, Box::new(a), Box::new(pick(b)))
        }
        Term::If(c, t, f) => Term::If(Box::new(pick(c)), t.clone(), f.clone()),
        Term::Map2 { x, y, body, a, b } => {
            let a = pick(a);
            Term::map2(x, y, (**body).clone(), a, pick(b))
        }
        Term::Map { x, body, a } => Term::map(x, (**body).clone(), pick(a)),
        Term::Fold { kind, x, y, body, init, arr } => {
            let init = pick(init);
            Term::fold(*kind, x, y, (**body).clone(), init, pick(arr))
        }
        Term::Apply(h, args) => {
            let h = pick(h);
            Term::Apply(Box::new(h), args.iter().map(&mut pick).collect())
        }
        Term::Let(p, e1, e2) => Term::Let(p.clone(), Box::new(pick(e1)), e2.clone()),
        _ => e.clone(),
    }
}

/// Moves a let out of the first evaluation position whose predecessors are
/// all values.
fn float_let(e: &Term, only_let_parent: bool) -> Option<Term> {
    if only_let_parent != matches!(e, Term::Let(..)) {
        return None;
    }
    let kids = eval_children(e);
    let mut k = None;
    for (i, c) in kids.iter().enumerate() {
        if matches!(c, Term::Let(..)) {
            k = Some(i);
            break;
        }
        if !is_value(c) {
            return None;
        }
    }
    let k = k?;
    let Term::Let(q, e1, e2) = kids[k] else { return None };
    let rest_fv = fv_set(&replace_eval_child(e, k, Term::Tuple(vec![])));
    let clash: HashSet<Name> = q.iter().filter(|n| rest_fv.contains(*n)).cloned().collect();
    let (q2, e2) = rename_away(q, e2, &clash, &rest_fv);
    Some(Term::Let(q2, e1.clone(), Box::new(replace_eval_child(e, k, e2))))
}

fn r_let_let(_: &Scope, e: &Term) -> Option<Term> {
    float_let(e, true)
}

fn r_let_float(_: &Scope, e: &Term) -> Option<Term> {
    float_let(e, false)
}

fn r_scalar_identity(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Op2(op, a, b) = e else { return None };
    let ca = a.as_const();
    let cb = b.as_const();
    match op {
        Op2::Mul if ca == Some(0.0) || cb == Some(0.0) => Some(Term::Const(0.0)),
        Op2::Mul if ca == Some(1.0) => Some((**b).clone()),
        Op2::Mul if cb == Some(1.0) => Some((**a).clone()),
        Op2::Add if ca == Some(0.0) => Some((**b).clone()),
        Op2::Add if cb == Some(0.0) => Some((**a).clone()),
        Op2::Sub if cb == Some(0.0) => Some((**a).clone()),
        Op2::Div if cb == Some(1.0) => Some((**a).clone()),
        _ => None,
    }
}

/// `Some(op)` when the body is `x op y` for the binders `x`, `y`.
fn op_body(x: &str, y: &str, body: &Term) -> Option<Op2> {
    match body {
        Term::Op2(op, a, b) if x != y && a.as_var() == Some(x) && b.as_var() == Some(y) => Some(*op),
        _ => None,
    }
}

fn const_map(e: &Term) -> Option<f64> {
    match e {
        Term::Map { body, .. } => body.as_const(),
        _ => None,
    }
}

fn is_zeros(e: &Term) -> bool {
    const_map(e) == Some(0.0)
}

fn is_ones(e: &Term) -> bool {
    const_map(e) == Some(1.0)
}

fn r_map2_zeros(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Map2 { x, y, body, a, b } = e else { return None };
    match op_body(x, y, body)? {
        Op2::Add if is_zeros(a) => Some((**b).clone()),
        Op2::Add | Op2::Sub if is_zeros(b) => Some((**a).clone()),
        Op2::Mul if is_zeros(a) => Some((**a).clone()),
        Op2::Mul if is_zeros(b) => Some((**b).clone()),
        _ => None,
    }
}

fn r_map2_ones(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Map2 { x, y, body, a, b } = e else { return None };
    match op_body(x, y, body)? {
        Op2::Mul if is_ones(a) => Some((**b).clone()),
        Op2::Mul | Op2::Div if is_ones(b) => Some((**a).clone()),
        _ => None,
    }
}

fn r_map_identity(_: &Scope, e: &Term) -> Option<Term> {
    match e {
        Term::Map { x, body, a } if body.as_var() == Some(x.as_str()) => Some((**a).clone()),
        _ => None,
    }
}

fn r_reduce_units(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Fold { kind: FoldKind::Reduce, x, y, body, init, arr } = e else { return None };
    match (op_body(x, y, body)?, init.as_const()?) {
        (Op2::Mul, c) if c == 1.0 && is_ones(arr) => Some(Term::Const(1.0)),
        (Op2::Add, c) if c == 0.0 && is_zeros(arr) => Some(Term::Const(0.0)),
        _ => None,
    }
}

fn r_shift_const_map(_: &Scope, e: &Term) -> Option<Term> {
    let (inner, left) = match e {
        Term::Shift1L(t) => (t, true),
        Term::Shift1R(t) => (t, false),
        _ => return None,
    };
    let Term::Map { x, body, a } = &**inner else { return None };
    if free_vars(body).contains(x) {
        return None;
    }
    let a = if left { Term::shift1l((**a).clone()) } else { Term::shift1r((**a).clone()) };
    Some(Term::map(x, (**body).clone(), a))
}

/// `scan* 1 (map (t. 1) (shift W))` is `map (t. 1) W` when `W` is non-empty.
fn r_scan_ones(s: &Scope, e: &Term) -> Option<Term> {
    let Term::Fold { kind: FoldKind::Scanl | FoldKind::Scanr, x, y, body, init, arr } = e else {
        return None;
    };
    if op_body(x, y, body)? != Op2::Mul || init.as_const()? != 1.0 || !is_ones(arr) {
        return None;
    }
    let Term::Map { x: t, a, .. } = &**arr else { return None };
    let (Term::Shift1L(w) | Term::Shift1R(w)) = &**a else { return None };
    match s.type_of(w)? {
        Type::Array(_, n) if n >= 1 => Some(Term::map(t, Term::Const(1.0), (**w).clone())),
        _ => None,
    }
}

fn r_map2_unused(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Map2 { x, y, body, a, b } = e else { return None };
    let fv = free_vars(body);
    if !fv.contains(x) {
        Some(Term::map(y, (**body).clone(), (**b).clone()))
    } else if !fv.contains(y) {
        Some(Term::map(x, (**body).clone(), (**a).clone()))
    } else {
        None
    }
}

fn commutative(op: Op2) -> bool {
    matches!(op, Op2::Add | Op2::Mul)
}

fn r_map2_commute(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Map2 { x, y, body, a, b } = e else { return None };
    if let Some(op) = op_body(y, x, body) {
        if commutative(op) {
            return Some(Term::map2(x, y, Term::op2(op, Term::var(x), Term::var(y)), (**a).clone(), (**b).clone()));
        }
    }
    let op = op_body(x, y, body)?;
    if commutative(op) && print_term(a) > print_term(b) {
        Some(Term::map2(x, y, (**body).clone(), (**b).clone(), (**a).clone()))
    } else {
        None
    }
}

fn r_map_map2_fusion(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Map { x: z, body: outer, a } = e else { return None };
    let Term::Map2 { x, y, body: inner, a: a2, b: b2 } = &**a else { return None };
    let mut clash: HashSet<Name> = fv_set(outer);
    clash.insert(z.clone());
    let (names, inner) = rename_away(&[x.clone(), y.clone()], inner, &clash, &clash);
    Some(Term::map2(
        &names[0],
        &names[1],
        Term::let1(z, inner, (**outer).clone()),
        (**a2).clone(),
        (**b2).clone(),
    ))
}

fn r_map_map_fusion(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Map { x: z, body: outer, a } = e else { return None };
    let Term::Map { x, body: inner, a: a2 } = &**a else { return None };
    let mut clash: HashSet<Name> = fv_set(outer);
    clash.insert(z.clone());
    let (names, inner) = rename_away(std::slice::from_ref(x), inner, &clash, &clash);
    Some(Term::map(&names[0], Term::let1(z, inner, (**outer).clone()), (**a2).clone()))
}

fn r_if_same(_: &Scope, e: &Term) -> Option<Term> {
    match e {
        Term::If(_, t, f) if alpha_equal(t, f) => Some((**t).clone()),
        _ => None,
    }
}

fn r_if_const(_: &Scope, e: &Term) -> Option<Term> {
    match e {
        Term::If(c, t, f) => match &**c {
            Term::BoolLit(true) => Some((**t).clone()),
            Term::BoolLit(false) => Some((**f).clone()),
            _ => None,
        },
        _ => None,
    }
}

fn r_proj_if(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Proj(i, t) = e else { return None };
    let Term::If(c, a, b) = &**t else { return None };
    Some(Term::if_(
        (**c).clone(),
        Term::proj(*i, (**a).clone()),
        Term::proj(*i, (**b).clone()),
    ))
}

fn r_apply_if(_: &Scope, e: &Term) -> Option<Term> {
    let Term::Apply(h, args) = e else { return None };
    let Term::If(c, f, g) = &**h else { return None };
    if !args.iter().all(is_value) {
        return None;
    }
    Some(Term::if_(
        (**c).clone(),
        Term::apply((**f).clone(), args.clone()),
        Term::apply((**g).clone(), args.clone()),
    ))
}

fn r_const_fold(_: &Scope, e: &Term) -> Option<Term> {
    let v = match e {
        Term::Op1(op, a) => op.apply(a.as_const()?),
        Term::Op2(op, a, b) => op.apply(a.as_const()?, b.as_const()?),
        Term::Gt0(a) => return Some(Term::BoolLit(a.as_const()? > 0.0)),
        _ => return None,
    };
    v.is_finite().then_some(Term::Const(v))
}
