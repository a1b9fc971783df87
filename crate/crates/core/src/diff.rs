//! The direct reverse-mode transformation `D` and the gradient entry points.
//!
//! `D_Γ^Y(e)` pairs the value of `e` with a continuation that takes the
//! cotangents accumulated so far for `Γ` plus the cotangent of `e`, adds the
//! contribution of `e`, and passes the result to `Y`. Every generated
//! continuation variable is used exactly once.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ext::Extensions;
use crate::monoid::{component, hat_add, hat_scale, zero_ctx, zero_like, MonoidError};
use crate::opt::{optimize, OptError, OptLevel};
use crate::term::{all_names, free_vars, uniquify, FoldKind, Name, NameSupply, Term};
use crate::typecheck::{typecheck_source_ext, TypeError};
use crate::types::{Context, Type};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("the program must have type real, found {0}")]
    NotScalarOutput(Type),
    #[error("unknown variable `{0}`")]
    UnknownVariable(Name),
    #[error(transparent)]
    Monoid(#[from] MonoidError),
    #[error("conditional branches must have type real, found {0}")]
    NonScalarBranches(Type),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("UNF pipeline: {0}")]
    Unf(String),
}

/// Which pipeline computes gradients, including those of array bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// The macro `D` applied to source terms.
    Direct,
    /// Source to UNF, `D` on UNF, and back.
    Unf,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "direct" => Some(Method::Direct),
            "unf" => Some(Method::Unf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Unf => "unf",
        }
    }
}

/// Parameters of one application of `D`.
#[derive(Clone, Debug)]
pub struct DiffConfig {
    pub gamma: Context,
    /// Result type of the continuation `Y`.
    pub rho: Type,
    /// Name of the free continuation variable.
    pub cont: Name,
    pub ext: Extensions,
}

impl DiffConfig {
    /// `Y : Γ → Γ` with the base language.
    pub fn new(gamma: Context) -> Self {
        let rho = gamma.tuple_type();
        DiffConfig {
            gamma,
            rho,
            cont: "Y".into(),
            ext: Extensions::none(),
        }
    }

    pub fn with_ext(mut self, ext: Extensions) -> Self {
        self.ext = ext;
        self
    }

    /// The type of the continuation variable.
    pub fn cont_type(&self) -> Type {
        Type::func(self.gamma.types(), self.rho.clone())
    }
}

/// `D_Γ^Y(e)` with `Y` left free.
pub fn diff(cfg: &DiffConfig, e: &Term) -> Result<Term, DiffError> {
    typecheck_source_ext(&cfg.gamma, e, cfg.ext)?;
    let mut reserved = cfg.gamma.names();
    reserved.push(cfg.cont.clone());
    let mut supply = NameSupply::avoiding([e], &reserved);
    let e = uniquify(e, &reserved, &mut supply);
    let mut d = Differ::new(&mut supply, cfg.ext, Method::Direct, &e, &cfg.gamma, &[&cfg.cont]);
    Ok(d.d(&cfg.gamma, &cfg.cont, &e)?.0)
}

/// The raw gradient `let Y = Id_Γ in (π₂ D(e))(0_Γ, 1)`, before optimization.
pub fn gradient(ctx: &Context, e: &Term, ext: Extensions) -> Result<Term, DiffError> {
    let all = ctx.names();
    nabla_sub(ctx, &all, e, ext, Method::Direct)
}

/// The raw gradient with respect to `subset`, in the order given.
pub fn nabla_sub(
    ctx: &Context,
    subset: &[Name],
    e: &Term,
    ext: Extensions,
    method: Method,
) -> Result<Term, DiffError> {
    let mut supply = NameSupply::avoiding([e], &ctx.names());
    nabla_raw(ctx, subset, e, &mut supply, ext, method)
}

/// The gradient computed by either pipeline, optimized at `level`.
pub fn gradient_with(
    ctx: &Context,
    e: &Term,
    ext: Extensions,
    method: Method,
    level: OptLevel,
) -> Result<Term, DiffError> {
    let raw = match method {
        Method::Direct => gradient(ctx, e, ext)?,
        Method::Unf => crate::unf::pipeline_gradient(ctx, e, ext).map_err(|x| DiffError::Unf(x.to_string()))?,
    };
    Ok(optimize(ctx, &raw, level)?)
}

/// An optimized gradient of an array body with respect to `subset`, sharing
/// the caller's name supply.
pub fn sub_gradient(
    method: Method,
    ctx: &Context,
    subset: &[Name],
    e: &Term,
    supply: &mut NameSupply,
    ext: Extensions,
) -> Result<Term, DiffError> {
    let raw = match method {
        Method::Direct => nabla_raw(ctx, subset, e, supply, ext, method)?,
        Method::Unf => crate::unf::nabla_sub_unf(ctx, subset, e, supply, ext)
            .map_err(|x| DiffError::Unf(x.to_string()))?,
    };
    Ok(optimize(ctx, &raw, OptLevel::PeAlgebra)?)
}

fn nabla_raw(
    ctx: &Context,
    subset: &[Name],
    e: &Term,
    supply: &mut NameSupply,
    ext: Extensions,
    method: Method,
) -> Result<Term, DiffError> {
    let t = typecheck_source_ext(ctx, e, ext)?;
    if t != Type::Real {
        return Err(DiffError::NotScalarOutput(t));
    }
    let positions = subset
        .iter()
        .map(|s| ctx.position(s).ok_or_else(|| DiffError::UnknownVariable(s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let e = uniquify(e, &ctx.names(), supply);
    let yname = supply.fresh("Y");
    let mut d = Differ::new(supply, ext, method, &e, ctx, &[&yname]);
    let params: Vec<(Name, Type)> = ctx
        .entries()
        .iter()
        .enumerate()
        .map(|(i, (_, t))| (d.p(i), t.clone()))
        .collect();
    let selected: Vec<Term> = positions.iter().map(|&i| Term::Var(d.p(i))).collect();
    let id = Term::lambda(params, Term::tuple(selected));
    let (dt, _) = d.d(ctx, &yname, &e)?;
    let witnesses: Vec<Term> = ctx.names().iter().map(|n| Term::var(n)).collect();
    let mut args = zero_ctx(&ctx.types(), &witnesses);
    args.push(Term::Const(1.0));
    Ok(Term::let1(&yname, id, Term::apply(Term::proj(2, dt), args)))
}

fn is_indexed(name: &str, prefix: &str) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

struct Differ<'s> {
    supply: &'s mut NameSupply,
    ext: Extensions,
    method: Method,
    prefix: String,
    cot: Name,
}

impl<'s> Differ<'s> {
    /// Continuation parameters are `y1, y2, ...` unless the program already
    /// uses such names; the cotangent is `z` unless taken.
    fn new(
        supply: &'s mut NameSupply,
        ext: Extensions,
        method: Method,
        e: &Term,
        gamma: &Context,
        extra: &[&Name],
    ) -> Self {
        let mut names = all_names(e);
        names.extend(gamma.names());
        names.extend(extra.iter().map(|n| (*n).clone()));
        let mut prefix = None;
        for k in 1.. {
            for base in ["y", "p", "q", "u"] {
                let cand = base.repeat(k);
                if !names.iter().any(|n| is_indexed(n, &cand)) {
                    prefix = Some(cand);
                    break;
                }
            }
            if prefix.is_some() {
                break;
            }
        }
        let cot = if names.contains("z") { supply.fresh("z") } else { "z".to_string() };
        Differ {
            supply,
            ext,
            method,
            prefix: prefix.unwrap_or_default(),
            cot,
        }
    }

    fn p(&self, i: usize) -> Name {
        format!("{}{}", self.prefix, i + 1)
    }

    fn pvars(&self, g: &Context) -> Vec<Term> {
        (0..g.len()).map(|i| Term::Var(self.p(i))).collect()
    }

    fn z(&self) -> Term {
        Term::Var(self.cot.clone())
    }

    fn lam(&self, g: &Context, cot_ty: Type, body: Term) -> Term {
        let mut ps: Vec<(Name, Type)> = g
            .entries()
            .iter()
            .enumerate()
            .map(|(i, (_, t))| (self.p(i), t.clone()))
            .collect();
        ps.push((self.cot.clone(), cot_ty));
        Term::Lambda(ps, Box::new(body))
    }

    fn fresh(&mut self, base: &str) -> Name {
        self.supply.fresh(base)
    }

    fn scale(&mut self, t: &Type, g: Term, c: &Term) -> Term {
        let supply = &mut *self.supply;
        hat_scale(t, g, c, &mut || supply.fresh("s"))
    }

    fn sub(&mut self, ctx: &Context, subset: &[Name], body: &Term) -> Result<Term, DiffError> {
        sub_gradient(self.method, ctx, subset, body, self.supply, self.ext)
    }

    fn position(g: &Context, x: &str) -> Result<usize, DiffError> {
        g.position(x).ok_or_else(|| DiffError::UnknownVariable(x.to_string()))
    }

    /// Context variables free in `body` other than the binders, in context
    /// order.
    fn free_context(g: &Context, body: &Term, binders: &[&Name]) -> Context {
        let fv: BTreeSet<Name> = free_vars(body);
        g.restrict(&|n| fv.contains(n) && !binders.iter().any(|b| b.as_str() == n))
    }

    /// Adds `contrib(j)` to the argument slot of each free context variable.
    fn add_free(
        &mut self,
        g: &Context,
        fvc: &Context,
        args: &mut [Term],
        contrib: &mut dyn FnMut(&mut Self, usize, &Type) -> Term,
    ) -> Result<(), DiffError> {
        for (j, (n, t)) in fvc.entries().iter().enumerate() {
            let k = Self::position(g, n)?;
            let c = contrib(self, j, t);
            args[k] = hat_add(t, args[k].clone(), c);
        }
        Ok(())
    }

    fn d(&mut self, g: &Context, y: &Name, e: &Term) -> Result<(Term, Type), DiffError> {
        let yv = Term::var(y);
        match e {
            Term::Const(c) => {
                let body = Term::apply(yv, self.pvars(g));
                Ok((Term::pair(Term::Const(*c), self.lam(g, Type::Real, body)), Type::Real))
            }
            Term::Var(x) => {
                let i = Self::position(g, x)?;
                let t = g.entries()[i].1.clone();
                let mut args = self.pvars(g);
                args[i] = hat_add(&t, args[i].clone(), self.z());
                let l = self.lam(g, t.clone(), Term::apply(yv, args));
                Ok((Term::pair(Term::var(x), l), t))
            }
            Term::Let(p, e1, e2) => {
                if p.len() != 1 {
                    return Err(DiffError::Unsupported("tuple patterns in source programs".into()));
                }
                let x = &p[0];
                let (d1, t1) = self.d(g, y, e1)?;
                let y1 = self.fresh("Y");
                let g2 = g.extend(x, t1.clone());
                let (d2, t2) = self.d(&g2, &y1, e2)?;
                let v = self.fresh("v");
                let y2 = self.fresh("Y");
                let mut args = self.pvars(g);
                args.push(zero_like(&t1, &Term::var(x)));
                args.push(self.z());
                let l = self.lam(g, t2.clone(), Term::apply(Term::var(&y2), args));
                let out = Term::let_tuple(
                    vec![x.clone(), y1],
                    d1,
                    Term::let_tuple(vec![v.clone(), y2], d2, Term::pair(Term::var(&v), l)),
                );
                Ok((out, t2))
            }
            Term::Tuple(es) if es.len() == 2 => {
                let (d1, t1) = self.d(g, y, &es[0])?;
                let v1 = self.fresh("v");
                let y1 = self.fresh("Y");
                let g2 = g.extend(&v1, t1.clone());
                let (d2, t2) = self.d(&g2, &y1, &es[1])?;
                let v2 = self.fresh("v");
                let y2 = self.fresh("Y");
                let ty = Type::Prod(vec![t1, t2]);
                let mut args = self.pvars(g);
                args.push(Term::proj(1, self.z()));
                args.push(Term::proj(2, self.z()));
                let l = self.lam(g, ty.clone(), Term::apply(Term::var(&y2), args));
                let out = Term::let_tuple(
                    vec![v1.clone(), y1],
                    d1,
                    Term::let_tuple(
                        vec![v2.clone(), y2],
                        d2,
                        Term::pair(Term::pair(Term::var(&v1), Term::var(&v2)), l),
                    ),
                );
                Ok((out, ty))
            }
            Term::Proj(i, inner) => {
                let (d1, t1) = self.d(g, y, inner)?;
                let Type::Prod(ts) = &t1 else {
                    return Err(DiffError::Unsupported(format!("projection from {t1}")));
                };
                if *i == 0 || *i > ts.len() {
                    return Err(DiffError::Monoid(MonoidError::IndexOutOfRange {
                        index: *i,
                        len: ts.len(),
                    }));
                }
                let v = self.fresh("v");
                let y1 = self.fresh("Y");
                let vv = Term::var(&v);
                let cot: Vec<Term> = ts
                    .iter()
                    .enumerate()
                    .map(|(j, tj)| {
                        if j + 1 == *i {
                            self.z()
                        } else {
                            zero_like(tj, &component(&vv, j + 1))
                        }
                    })
                    .collect();
                let mut args = self.pvars(g);
                args.push(Term::Tuple(cot));
                let ti = ts[*i - 1].clone();
                let l = self.lam(g, ti.clone(), Term::apply(Term::var(&y1), args));
                let out = Term::let_tuple(vec![v, y1], d1, Term::pair(Term::proj(*i, vv), l));
                Ok((out, ti))
            }
            Term::Op1(op, a) => {
                let (d1, _) = self.d(g, y, a)?;
                let v = self.fresh("v");
                let y1 = self.fresh("Y");
                let vv = Term::var(&v);
                let mut args = self.pvars(g);
                args.push(Term::mul(op.derivative(vv.clone()), self.z()));
                let l = self.lam(g, Type::Real, Term::apply(Term::var(&y1), args));
                let out = Term::let_tuple(vec![v, y1], d1, Term::pair(Term::op1(*op, vv), l));
                Ok((out, Type::Real))
            }
            Term::Op2(op, a, b) => {
                let (d1, _) = self.d(g, y, a)?;
                let v1 = self.fresh("v");
                let y1 = self.fresh("Y");
                let g2 = g.extend(&v1, Type::Real);
                let (d2, _) = self.d(&g2, &y1, b)?;
                let v2 = self.fresh("v");
                let y2 = self.fresh("Y");
                let (p1, p2) = op.partials(Term::var(&v1), Term::var(&v2));
                let mut args = self.pvars(g);
                args.push(Term::mul(p1, self.z()));
                args.push(Term::mul(p2, self.z()));
                let l = self.lam(g, Type::Real, Term::apply(Term::var(&y2), args));
                let out = Term::let_tuple(
                    vec![v1.clone(), y1],
                    d1,
                    Term::let_tuple(
                        vec![v2.clone(), y2],
                        d2,
                        Term::pair(Term::op2(*op, Term::var(&v1), Term::var(&v2)), l),
                    ),
                );
                Ok((out, Type::Real))
            }
            Term::Map2 { x, y: by, body, a, b } => self.d_map2(g, y, x, by, body, a, b),
            Term::Map { x, body, a } => self.d_map(g, y, x, body, a),
            Term::Fold { kind: FoldKind::Reduce, x, y: by, body, init, arr } => {
                self.d_reduce(g, y, x, by, body, init, arr)
            }
            Term::Fold { kind: FoldKind::Foldl, x, y: by, body, init, arr } => {
                self.d_foldl(g, y, x, by, body, init, arr)
            }
            Term::If(c, t, f) => self.d_if(g, y, c, t, f),
            other => Err(DiffError::Unsupported(crate::frontend::print_term(other))),
        }
    }

    /// The sum over array positions of the gradient of `body` with respect to
    /// its free context variables, each weighted by the cotangent at that
    /// position: `let G = map2 (c g. g ×̂ c) Z grads in let R = reduce +̂ 0 G`.
    fn free_sum(&mut self, fvc: &Context, zs: Term, grads: Term) -> (Vec<(Name, Term)>, Term) {
        let tfv = fvc.tuple_type();
        let c = self.fresh("c");
        let gname = self.fresh("g");
        let scaled = self.scale(&tfv, Term::var(&gname), &Term::var(&c));
        let gbind = self.fresh("G");
        let rbind = self.fresh("R");
        let witness = Term::tuple(fvc.names().iter().map(|n| Term::var(n)).collect());
        let gterm = Term::map2(&c, &gname, scaled, zs, grads);
        let rterm = Term::reduce(
            "x",
            "y",
            hat_add(&tfv, Term::var("x"), Term::var("y")),
            zero_like(&tfv, &witness),
            Term::var(&gbind),
        );
        (vec![(gbind, gterm), (rbind.clone(), rterm)], Term::var(&rbind))
    }

    fn wrap_lets(binds: Vec<(Name, Term)>, body: Term) -> Term {
        binds.into_iter().rev().fold(body, |acc, (n, v)| Term::let1(&n, v, acc))
    }

    fn comp(t: &Term, j: usize, len: usize) -> Term {
        if len == 1 {
            t.clone()
        } else {
            component(t, j + 1)
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn d_map2(
        &mut self,
        g: &Context,
        y: &Name,
        x: &Name,
        by: &Name,
        body: &Term,
        a: &Term,
        b: &Term,
    ) -> Result<(Term, Type), DiffError> {
        let (da, ta) = self.d(g, y, a)?;
        let an = self.fresh("A");
        let y1 = self.fresh("Y");
        let g2 = g.extend(&an, ta.clone());
        let (db, _) = self.d(&g2, &y1, b)?;
        let bn = self.fresh("B");
        let y2 = self.fresh("Y");
        let fvc = Self::free_context(g, body, &[x, by]);
        let mut sub_ctx = Context::new();
        sub_ctx.push(x, Type::Real);
        sub_ctx.push(by, Type::Real);
        for (n, t) in fvc.entries() {
            sub_ctx.push(n, t.clone());
        }
        let gx = self.sub(&sub_ctx, std::slice::from_ref(x), body)?;
        let gy = self.sub(&sub_ctx, std::slice::from_ref(by), body)?;
        let (av, bv, zv) = (Term::var(&an), Term::var(&bn), self.z());
        let times = |d: Term, s: &Term| {
            Term::map2("x", "y", Term::mul(Term::var("x"), Term::var("y")), d, s.clone())
        };
        let cot_a = times(Term::map2(x, by, gx, av.clone(), bv.clone()), &zv);
        let cot_b = times(Term::map2(x, by, gy, av.clone(), bv.clone()), &zv);
        let mut args = self.pvars(g);
        let mut binds = Vec::new();
        if !fvc.is_empty() {
            let gfv = self.sub(&sub_ctx, &fvc.names(), body)?;
            let grads = Term::map2(x, by, gfv, av.clone(), bv.clone());
            let (bs, r) = self.free_sum(&fvc, zv.clone(), grads);
            binds = bs;
            let len = fvc.len();
            self.add_free(g, &fvc, &mut args, &mut |_, j, _| Self::comp(&r, j, len))?;
        }
        args.push(cot_a);
        args.push(cot_b);
        let l = self.lam(g, ta.clone(), Self::wrap_lets(binds, Term::apply(Term::var(&y2), args)));
        let primal = Term::map2(x, by, body.clone(), av, bv);
        let out = Term::let_tuple(
            vec![an, y1],
            da,
            Term::let_tuple(vec![bn, y2], db, Term::pair(primal, l)),
        );
        Ok((out, ta))
    }

    fn d_map(
        &mut self,
        g: &Context,
        y: &Name,
        x: &Name,
        body: &Term,
        a: &Term,
    ) -> Result<(Term, Type), DiffError> {
        let (da, ta) = self.d(g, y, a)?;
        let an = self.fresh("A");
        let y1 = self.fresh("Y");
        let fvc = Self::free_context(g, body, &[x]);
        let mut sub_ctx = Context::new();
        sub_ctx.push(x, Type::Real);
        for (n, t) in fvc.entries() {
            sub_ctx.push(n, t.clone());
        }
        let gx = self.sub(&sub_ctx, std::slice::from_ref(x), body)?;
        let c = self.fresh("c");
        let (av, zv) = (Term::var(&an), self.z());
        let cot_a = Term::map2(x, &c, Term::mul(gx, Term::var(&c)), av.clone(), zv.clone());
        let mut args = self.pvars(g);
        let mut binds = Vec::new();
        if !fvc.is_empty() {
            let gfv = self.sub(&sub_ctx, &fvc.names(), body)?;
            let grads = Term::map(x, gfv, av.clone());
            let (bs, r) = self.free_sum(&fvc, zv, grads);
            binds = bs;
            let len = fvc.len();
            self.add_free(g, &fvc, &mut args, &mut |_, j, _| Self::comp(&r, j, len))?;
        }
        args.push(cot_a);
        let l = self.lam(g, ta.clone(), Self::wrap_lets(binds, Term::apply(Term::var(&y1), args)));
        let primal = Term::map(x, body.clone(), av);
        Ok((Term::let_tuple(vec![an, y1], da, Term::pair(primal, l)), ta))
    }

    /// The contribution of an open body's free variables, accumulated along
    /// the fold: `B₀ = map2 ∇_FV A₀ A`, `B₁ = map2 ×̂ A₃ B₀`,
    /// `B₂ = reduce +̂ 0 B₁`.
    #[allow(clippy::too_many_arguments)]
    fn open_chain(
        &mut self,
        sub_ctx: &Context,
        fvc: &Context,
        x: &Name,
        by: &Name,
        body: &Term,
        a0: &Term,
        a: &Term,
        a3: &Term,
    ) -> Result<(Vec<(Name, Term)>, Term), DiffError> {
        let tfv = fvc.tuple_type();
        let gfv = self.sub(sub_ctx, &fvc.names(), body)?;
        let b0 = self.fresh("B");
        let b1 = self.fresh("B");
        let b2 = self.fresh("B");
        let s = self.fresh("c");
        let gn = self.fresh("g");
        let scaled = self.scale(&tfv, Term::var(&gn), &Term::var(&s));
        let witness = Term::tuple(fvc.names().iter().map(|n| Term::var(n)).collect());
        let binds = vec![
            (b0.clone(), Term::map2(x, by, gfv, a0.clone(), a.clone())),
            (b1.clone(), Term::map2(&s, &gn, scaled, a3.clone(), Term::var(&b0))),
            (
                b2.clone(),
                Term::reduce(
                    "x",
                    "y",
                    hat_add(&tfv, Term::var("x"), Term::var("y")),
                    zero_like(&tfv, &witness),
                    Term::var(&b1),
                ),
            ),
        ];
        Ok((binds, Term::var(&b2)))
    }

    fn fold_sub_ctx(g: &Context, x: &Name, by: &Name, body: &Term) -> (Context, Context) {
        let fvc = Self::free_context(g, body, &[x, by]);
        let mut sub_ctx = Context::new();
        sub_ctx.push(x, Type::Real);
        sub_ctx.push(by, Type::Real);
        for (n, t) in fvc.entries() {
            sub_ctx.push(n, t.clone());
        }
        (fvc, sub_ctx)
    }

    fn times_z() -> impl Fn(&Term) -> Term {
        |z: &Term| {
            Term::mul(Term::mul(Term::var("x"), Term::var("y")), z.clone())
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn d_reduce(
        &mut self,
        g: &Context,
        y: &Name,
        x: &Name,
        by: &Name,
        body: &Term,
        init: &Term,
        arr: &Term,
    ) -> Result<(Term, Type), DiffError> {
        let (di, _) = self.d(g, y, init)?;
        let v0 = self.fresh("v");
        let y1 = self.fresh("Y");
        let g2 = g.extend(&v0, Type::Real);
        let (da, ta) = self.d(&g2, &y1, arr)?;
        let an = self.fresh("A");
        let y2 = self.fresh("Y");
        let n = ta.array_size().unwrap_or(0);
        let (fvc, sub_ctx) = Self::fold_sub_ctx(g, x, by, body);
        if !fvc.is_empty() && !self.ext.reduce_open {
            return Err(DiffError::Type(TypeError::IllegalFreeVariableInReduce(
                fvc.names()[0].clone(),
            )));
        }
        let (v0v, av, zv) = (Term::var(&v0), Term::var(&an), self.z());
        let primal = Term::reduce(x, by, body.clone(), v0v.clone(), av.clone());
        let mut args = self.pvars(g);
        if n == 0 {
            args.push(Term::Const(0.0));
            args.push(zero_like(&ta, &av));
            let l = self.lam(g, Type::Real, Term::apply(Term::var(&y2), args));
            let out = Term::let_tuple(
                vec![v0, y1],
                di,
                Term::let_tuple(vec![an, y2], da, Term::pair(primal, l)),
            );
            return Ok((out, Type::Real));
        }
        let gx = self.sub(&sub_ctx, std::slice::from_ref(x), body)?;
        let gy = self.sub(&sub_ctx, std::slice::from_ref(by), body)?;
        let a0 = self.fresh("A");
        let a1 = self.fresh("A");
        let a2 = self.fresh("A");
        let a3 = self.fresh("A");
        let (a0v, a3v) = (Term::var(&a0), Term::var(&a3));
        let mut binds = vec![
            (
                a0.clone(),
                Term::shift1r(Term::fold(FoldKind::Scanl, x, by, body.clone(), v0v, av.clone())),
            ),
            (a1.clone(), Term::shift1l(Term::map2(x, by, gx, a0v.clone(), av.clone()))),
            (a2.clone(), Term::map2(x, by, gy, a0v.clone(), av.clone())),
            (
                a3.clone(),
                Term::fold(
                    FoldKind::Scanr,
                    "x",
                    "y",
                    Term::mul(Term::var("x"), Term::var("y")),
                    Term::Const(1.0),
                    Term::var(&a1),
                ),
            ),
        ];
        if !fvc.is_empty() {
            let (bs, b2) = self.open_chain(&sub_ctx, &fvc, x, by, body, &a0v, &av, &a3v)?;
            binds.extend(bs);
            let len = fvc.len();
            let z = zv.clone();
            self.add_free(g, &fvc, &mut args, &mut |me, j, t| {
                let part = Self::comp(&b2, j, len);
                me.scale(t, part, &z)
            })?;
        }
        args.push(Term::Const(0.0));
        args.push(Term::map2("x", "y", Self::times_z()(&zv), Term::var(&a2), a3v));
        let l = self.lam(g, Type::Real, Term::apply(Term::var(&y2), args));
        let out = Term::let_tuple(
            vec![v0, y1],
            di,
            Term::let_tuple(vec![an, y2], da, Self::wrap_lets(binds, Term::pair(primal, l))),
        );
        Ok((out, Type::Real))
    }

    #[allow(clippy::too_many_arguments)]
    fn d_foldl(
        &mut self,
        g: &Context,
        y: &Name,
        x: &Name,
        by: &Name,
        body: &Term,
        init: &Term,
        arr: &Term,
    ) -> Result<(Term, Type), DiffError> {
        let (di, _) = self.d(g, y, init)?;
        let v = self.fresh("v");
        let y1 = self.fresh("Y");
        let g2 = g.extend(&v, Type::Real);
        let (da, _) = self.d(&g2, &y1, arr)?;
        let an = self.fresh("A");
        let y2 = self.fresh("Y");
        let (fvc, sub_ctx) = Self::fold_sub_ctx(g, x, by, body);
        let gx = self.sub(&sub_ctx, std::slice::from_ref(x), body)?;
        let gy = self.sub(&sub_ctx, std::slice::from_ref(by), body)?;
        let (vv, av, zv) = (Term::var(&v), Term::var(&an), self.z());
        let a0 = self.fresh("A");
        let r1 = self.fresh("r");
        let a1 = self.fresh("A");
        let a2 = self.fresh("A");
        let r2 = self.fresh("r");
        let a3 = self.fresh("A");
        let (a0v, a3v) = (Term::var(&a0), Term::var(&a3));
        let scan = Term::fold(FoldKind::ScanlPair, x, by, body.clone(), vv, av.clone());
        let back = Term::fold(
            FoldKind::ScanrPair,
            "x",
            "y",
            Term::mul(Term::var("x"), Term::var("y")),
            Term::Const(1.0),
            Term::var(&a1),
        );
        let mut chain: Vec<(Vec<Name>, Term)> = vec![
            (vec![a0.clone(), r1.clone()], scan),
            (vec![a1.clone()], Term::map2(x, by, gx, a0v.clone(), av.clone())),
            (vec![a2.clone()], Term::map2(x, by, gy, a0v.clone(), av.clone())),
            (vec![r2.clone(), a3.clone()], back),
        ];
        let mut args = self.pvars(g);
        if !fvc.is_empty() {
            let (bs, b2) = self.open_chain(&sub_ctx, &fvc, x, by, body, &a0v, &av, &a3v)?;
            chain.extend(bs.into_iter().map(|(n, t)| (vec![n], t)));
            let len = fvc.len();
            let z = zv.clone();
            self.add_free(g, &fvc, &mut args, &mut |me, j, t| {
                let part = Self::comp(&b2, j, len);
                me.scale(t, part, &z)
            })?;
        }
        let w = self.fresh("v");
        let wa = self.fresh("B");
        args.push(Term::var(&w));
        args.push(Term::var(&wa));
        let cots = Term::pair(
            Term::mul(Term::var(&r2), zv.clone()),
            Term::map2("x", "y", Self::times_z()(&zv), Term::var(&a2), a3v),
        );
        let body_l = Term::let_tuple(vec![w, wa], cots, Term::apply(Term::var(&y2), args));
        let l = self.lam(g, Type::Real, body_l);
        let inner = chain
            .into_iter()
            .rev()
            .fold(Term::pair(Term::var(&r1), l), |acc, (p, t)| Term::let_tuple(p, t, acc));
        let out = Term::let_tuple(vec![v, y1], di, Term::let_tuple(vec![an, y2], da, inner));
        Ok((out, Type::Real))
    }

    fn d_if(&mut self, g: &Context, y: &Name, c: &Term, t: &Term, f: &Term) -> Result<(Term, Type), DiffError> {
        let tt = typecheck_source_ext(g, t, self.ext)?;
        if tt != Type::Real {
            return Err(DiffError::NonScalarBranches(tt));
        }
        let mut fv = free_vars(t);
        fv.extend(free_vars(f));
        let sctx = g.restrict(&|n| fv.contains(n));
        let b = self.fresh("b");
        let bf = self.fresh("bf");
        let (bfv, zv) = (Term::var(&bf), self.z());
        let mut args = self.pvars(g);
        let mut binds = Vec::new();
        if !sctx.is_empty() {
            let names = sctx.names();
            let g2 = self.sub(&sctx, &names, t)?;
            let g3 = self.sub(&sctx, &names, f)?;
            let g2n = self.fresh("G");
            let g3n = self.fresh("G");
            binds.push((g2n.clone(), g2));
            binds.push((g3n.clone(), g3));
            let len = sctx.len();
            let not_bf = Term::sub(Term::Const(1.0), bfv.clone());
            self.add_free(g, &sctx, &mut args, &mut |me, j, ty| {
                let left = me.scale(ty, Self::comp(&Term::var(&g2n), j, len), &bfv);
                let right = me.scale(ty, Self::comp(&Term::var(&g3n), j, len), &not_bf);
                let sum = hat_add(ty, left, right);
                me.scale(ty, sum, &zv)
            })?;
        }
        let l = self.lam(g, Type::Real, Self::wrap_lets(binds, Term::apply(Term::var(y), args)));
        let primal = Term::if_(Term::var(&b), t.clone(), f.clone());
        let out = Term::let1(
            &b,
            c.clone(),
            Term::let1(
                &bf,
                Term::if_(Term::var(&b), Term::Const(1.0), Term::Const(0.0)),
                Term::pair(primal, l),
            ),
        );
        Ok((out, Type::Real))
    }
}
