//! The three-stage gradient pipeline: source to UNF, `D` on UNF, and the
//! translation of the differentiated UNF term back to a named target term.

use std::collections::{BTreeSet, HashMap};

use crate::diff::{sub_gradient, Method};
use crate::ext::Extensions;
use crate::monoid::{component, hat_add, hat_scale, zero_ctx, zero_like};
use crate::term::{all_names, free_vars, substitute_many, uniquify, FoldKind, Name, NameSupply, Term};
use crate::typecheck::{typecheck_source_ext, TypeError};
use crate::types::{Context, Type};

use super::ir::{typecheck_unf_target, PrimOp, TypeList, Unf, UnfEnv, UnfError};

/// Inserts `a` at position `pos` of every list in `e`, shifting indices and
/// environment positions at or after it.
fn weaken_at(e: &Unf, pos: usize, a: &Type) -> Unf {
    let ins = |t: &TypeList| {
        let mut t = t.clone();
        t.insert(pos.min(t.len()), a.clone());
        t
    };
    let shift_env = |env: &UnfEnv| {
        env.iter()
            .map(|(n, i)| (n.clone(), if *i >= pos { i + 1 } else { *i }))
            .collect::<UnfEnv>()
    };
    match e {
        Unf::Var { t, i } => Unf::Var { t: ins(t), i: if *i > pos { i + 1 } else { *i } },
        Unf::Op { t, args, op } => Unf::Op { t: ins(t), args: args.clone(), op: op.clone() },
        Unf::Pair { t, a: x, b } => Unf::Pair { t: ins(t), a: x.clone(), b: b.clone() },
        Unf::Proj { t1, t2, t3 } => Unf::Proj { t1: ins(t1), t2: t2.clone(), t3: t3.clone() },
        Unf::Seq(x, y) => Unf::seq(weaken_at(x, pos, a), weaken_at(y, pos, a)),
        Unf::Map2 { t, n, x, y, body, env } => Unf::Map2 {
            t: ins(t),
            n: *n,
            x: x.clone(),
            y: y.clone(),
            body: body.clone(),
            env: shift_env(env),
        },
        Unf::Reduce { t, n, x, y, body, init, env } => Unf::Reduce {
            t: ins(t),
            n: *n,
            x: x.clone(),
            y: y.clone(),
            body: body.clone(),
            init: init.clone(),
            env: shift_env(env),
        },
        Unf::Map { t, n, x, body, env } => Unf::Map {
            t: ins(t),
            n: *n,
            x: x.clone(),
            body: body.clone(),
            env: shift_env(env),
        },
        Unf::Foldl { t, n, x, y, body, env } => Unf::Foldl {
            t: ins(t),
            n: *n,
            x: x.clone(),
            y: y.clone(),
            body: body.clone(),
            env: shift_env(env),
        },
        Unf::If { t, cond, then, els, env } => Unf::If {
            t: ins(t),
            cond: cond.clone(),
            then: then.clone(),
            els: els.clone(),
            env: shift_env(env),
        },
        Unf::Jt(p) => Unf::jt(weaken_at(p, pos, a)),
        Unf::Compose(x, y) => Unf::compose(weaken_at(x, pos, a), weaken_at(y, pos, a)),
        Unf::PairTerm(x, y) => Unf::pair_term(weaken_at(x, pos, a), weaken_at(y, pos, a)),
    }
}

/// `ẽ`: from `e : T → T, B` builds `T, A → T, A, B`.
pub fn weaken_tilde(e: &Unf, a: &Type) -> Unf {
    let pos = e.input().map(|t| t.len()).unwrap_or(0);
    weaken_at(e, pos, a)
}

fn env_of(ctx: &Context, terms: &[&Term], binders: &[&Name]) -> UnfEnv {
    let mut fv: BTreeSet<Name> = BTreeSet::new();
    for t in terms {
        fv.extend(free_vars(t));
    }
    ctx.entries()
        .iter()
        .enumerate()
        .filter(|(_, (n, _))| fv.contains(n) && !binders.iter().any(|b| b.as_str() == n))
        .map(|(i, (n, _))| (n.clone(), i))
        .collect()
}

fn to_unf_in(ctx: &Context, e: &Term) -> Result<(Unf, Type), UnfError> {
    let t = ctx.types();
    let r = Type::Real;
    let sub = |ctx: &Context, e: &Term| to_unf_in(ctx, e);
    Ok(match e {
        Term::Const(c) => (Unf::Op { t, args: vec![], op: PrimOp::Const(*c) }, r),
        Term::Var(x) => {
            let i = ctx
                .position(x)
                .ok_or_else(|| TypeError::UnboundVariable(x.clone()))?;
            (Unf::Var { t: t.clone(), i: i + 1 }, t[i].clone())
        }
        Term::Let(xs, e1, e2) if xs.len() == 1 => {
            let (u1, a) = sub(ctx, e1)?;
            let (u2, b) = sub(&ctx.extend(&xs[0], a.clone()), e2)?;
            (Unf::seq_all(vec![u1, u2, Unf::Proj { t1: t, t2: vec![a], t3: vec![b.clone()] }]), b)
        }
        Term::Let(xs, e1, e2) => {
            // A destructuring let is a let of the tuple followed by lets of
            // its projections.
            let mut supply = NameSupply::avoiding([e, e1.as_ref(), e2.as_ref()], &ctx.names());
            let tup = supply.fresh("p");
            let mut body = (**e2).clone();
            for (i, x) in xs.iter().enumerate().rev() {
                body = Term::let1(x, Term::proj(i + 1, Term::var(&tup)), body);
            }
            return sub(ctx, &Term::let1(&tup, (**e1).clone(), body));
        }
        Term::Tuple(es) if es.len() == 2 => {
            let (u1, a) = sub(ctx, &es[0])?;
            let (u2, b) = sub(ctx, &es[1])?;
            let p = Type::Prod(vec![a.clone(), b.clone()]);
            (
                Unf::seq_all(vec![u1, weaken_at(&u2, t.len(), &a), Unf::Pair { t, a, b }]),
                p,
            )
        }
        Term::Tuple(es) if es.len() > 2 => {
            // Wider tuples are nested pairs read back by projections; only
            // pairs occur in the supported source fragment.
            return Err(UnfError::Type(TypeError::UnsupportedConstruct(format!(
                "{}-tuple in UNF",
                es.len()
            ))));
        }
        Term::Proj(i, e1) => {
            let (u, a) = sub(ctx, e1)?;
            let ai = match &a {
                Type::Prod(ts) if *i >= 1 && *i <= ts.len() => ts[*i - 1].clone(),
                _ => return Err(UnfError::Type(TypeError::UnsupportedConstruct(format!("projection of {a}")))),
            };
            (
                Unf::seq_all(vec![
                    u,
                    Unf::Op { t: t.clone(), args: vec![a.clone()], op: PrimOp::Proj(*i) },
                    Unf::Proj { t1: t, t2: vec![a], t3: vec![ai.clone()] },
                ]),
                ai,
            )
        }
        Term::Op1(op, e1) => {
            let (u, _) = sub(ctx, e1)?;
            (
                Unf::seq_all(vec![
                    u,
                    Unf::Op { t: t.clone(), args: vec![r.clone()], op: PrimOp::Op1(*op) },
                    Unf::Proj { t1: t, t2: vec![r.clone()], t3: vec![r.clone()] },
                ]),
                r,
            )
        }
        Term::Op2(op, e1, e2) => {
            let (u1, _) = sub(ctx, e1)?;
            let (u2, _) = sub(ctx, e2)?;
            (
                Unf::seq_all(vec![
                    u1,
                    weaken_at(&u2, t.len(), &r),
                    Unf::Op { t: t.clone(), args: vec![r.clone(), r.clone()], op: PrimOp::Op2(*op) },
                    Unf::Proj { t1: t, t2: vec![r.clone(), r.clone()], t3: vec![r.clone()] },
                ]),
                r,
            )
        }
        Term::Map2 { x, y, body, a, b } => {
            let (ua, ta) = sub(ctx, a)?;
            let (ub, _) = sub(ctx, b)?;
            let n = ta.array_size().unwrap_or(0);
            let env = env_of(ctx, &[body], &[x, y]);
            (
                Unf::seq_all(vec![
                    ua,
                    weaken_at(&ub, t.len(), &ta),
                    Unf::Map2 { t: t.clone(), n, x: x.clone(), y: y.clone(), body: (**body).clone(), env },
                    Unf::Proj { t1: t, t2: vec![ta.clone(), ta.clone()], t3: vec![ta.clone()] },
                ]),
                ta,
            )
        }
        Term::Map { x, body, a } => {
            let (ua, ta) = sub(ctx, a)?;
            let n = ta.array_size().unwrap_or(0);
            let env = env_of(ctx, &[body], &[x]);
            (
                Unf::seq_all(vec![
                    ua,
                    Unf::Map { t: t.clone(), n, x: x.clone(), body: (**body).clone(), env },
                    Unf::Proj { t1: t, t2: vec![ta.clone()], t3: vec![ta.clone()] },
                ]),
                ta,
            )
        }
        Term::Fold { kind: FoldKind::Reduce, x, y, body, init, arr } => {
            let (ua, ta) = sub(ctx, arr)?;
            let n = ta.array_size().unwrap_or(0);
            let mut env = env_of(ctx, &[body], &[x, y]);
            for p in env_of(ctx, &[init], &[]) {
                if !env.contains(&p) {
                    env.push(p);
                }
            }
            env.sort_by_key(|(_, i)| *i);
            (
                Unf::seq_all(vec![
                    ua,
                    Unf::Reduce {
                        t: t.clone(),
                        n,
                        x: x.clone(),
                        y: y.clone(),
                        body: (**body).clone(),
                        init: (**init).clone(),
                        env,
                    },
                    Unf::Proj { t1: t, t2: vec![ta], t3: vec![r.clone()] },
                ]),
                r,
            )
        }
        Term::Fold { kind: FoldKind::Foldl, x, y, body, init, arr } => {
            let (ui, _) = sub(ctx, init)?;
            let (ua, ta) = sub(ctx, arr)?;
            let n = ta.array_size().unwrap_or(0);
            let env = env_of(ctx, &[body], &[x, y]);
            (
                Unf::seq_all(vec![
                    ui,
                    weaken_at(&ua, t.len(), &r),
                    Unf::Foldl { t: t.clone(), n, x: x.clone(), y: y.clone(), body: (**body).clone(), env },
                    Unf::Proj { t1: t, t2: vec![r.clone(), ta], t3: vec![r.clone()] },
                ]),
                r,
            )
        }
        Term::If(c, a, b) => {
            let env = env_of(ctx, &[c, a, b], &[]);
            (
                Unf::If { t, cond: (**c).clone(), then: (**a).clone(), els: (**b).clone(), env },
                r,
            )
        }
        other => {
            return Err(UnfError::Type(TypeError::UnsupportedConstruct(format!(
                "{other:?} in UNF"
            ))))
        }
    })
}

/// `UNF(e)`: a term of type `Γ → Γ, B` for `Γ ⊢ e : B`.
pub fn to_unf(ctx: &Context, e: &Term, ext: Extensions) -> Result<Unf, UnfError> {
    typecheck_source_ext(ctx, e, ext)?;
    let mut supply = NameSupply::avoiding([e], &ctx.names());
    let e = uniquify(e, &ctx.names(), &mut supply);
    Ok(to_unf_in(ctx, &e)?.0)
}

/// `D_ρ(e)` on UNF: each primitive `p : T → T'` becomes
/// `<proj; p, proj ∘ (proj; JT p)>` on `T, (T → ρ)`.
pub fn diff_unf(rho: &Type, e: &Unf) -> Result<Unf, UnfError> {
    match e {
        Unf::Seq(a, b) => Ok(Unf::seq(diff_unf(rho, a)?, diff_unf(rho, b)?)),
        p if p.is_primitive() => {
            let tin = p.input().expect("primitive");
            let f = Type::func(tin.clone(), rho.clone());
            let drop_k = || Unf::Proj { t1: tin.clone(), t2: vec![f.clone()], t3: vec![] };
            Ok(Unf::pair_term(
                Unf::seq(drop_k(), p.clone()),
                Unf::compose(
                    Unf::Proj { t1: vec![], t2: tin.clone(), t3: vec![f.clone()] },
                    Unf::seq(drop_k(), Unf::jt(p.clone())),
                ),
            ))
        }
        other => Err(UnfError::NotSource(super::ir::print_short(other))),
    }
}

fn flatten<'a>(e: &'a Unf, out: &mut Vec<&'a Unf>) {
    match e {
        Unf::Seq(a, b) => {
            flatten(a, out);
            flatten(b, out);
        }
        other => out.push(other),
    }
}

/// Recognises `<proj; p, proj ∘ (proj; JT p)>` and returns `p`.
fn diff_item(e: &Unf) -> Option<&Unf> {
    let Unf::PairTerm(l, r) = e else { return None };
    let Unf::Seq(l1, p) = l.as_ref() else { return None };
    let Unf::Compose(c1, c2) = r.as_ref() else { return None };
    let Unf::Seq(c21, jt) = c2.as_ref() else { return None };
    let Unf::Jt(q) = jt.as_ref() else { return None };
    let ok = matches!(l1.as_ref(), Unf::Proj { .. })
        && matches!(c1.as_ref(), Unf::Proj { .. })
        && matches!(c21.as_ref(), Unf::Proj { .. })
        && p.is_primitive()
        && **p == **q;
    ok.then_some(p.as_ref())
}

fn embedded_terms(p: &Unf) -> Vec<&Term> {
    match p {
        Unf::Map2 { body, .. } | Unf::Map { body, .. } | Unf::Foldl { body, .. } => vec![body],
        Unf::Reduce { body, init, .. } => vec![body, init],
        Unf::If { cond, then, els, .. } => vec![cond, then, els],
        _ => vec![],
    }
}

type Binds = Vec<(Vec<Name>, Term)>;

fn wrap(binds: Binds, body: Term) -> Term {
    binds.into_iter().rev().fold(body, |acc, (p, t)| Term::let_tuple(p, t, acc))
}

struct Back {
    supply: NameSupply,
    ext: Extensions,
    cur: Vec<(Name, Type)>,
    k: Name,
    lets: Binds,
}

impl Back {
    fn fresh(&mut self, base: &str) -> Name {
        self.supply.fresh(base)
    }

    fn scale(&mut self, t: &Type, g: Term, c: &Term) -> Term {
        let supply = &mut self.supply;
        hat_scale(t, g, c, &mut || supply.fresh("s"))
    }

    fn sub(&mut self, ctx: &Context, subset: &[Name], body: &Term) -> Result<Term, UnfError> {
        sub_gradient(Method::Unf, ctx, subset, body, &mut self.supply, self.ext)
            .map_err(|e| UnfError::Body(e.to_string()))
    }

    /// Renames the free names of embedded terms to the current list names.
    fn rename(&self, env: &UnfEnv, terms: Vec<Term>) -> Vec<Term> {
        let m: HashMap<Name, Term> = env
            .iter()
            .map(|(n, i)| (n.clone(), Term::var(&self.cur[*i].0)))
            .collect();
        terms.iter().map(|t| substitute_many(t, &m)).collect()
    }

    /// Renames a binder body, returning fresh binders that avoid every name
    /// in scope.
    fn rename_binder(&mut self, env: &UnfEnv, binders: &[&Name], body: &Term) -> (Vec<Name>, Term) {
        let fresh: Vec<Name> = binders.iter().map(|b| self.fresh(&base_of(b))).collect();
        let mut m: HashMap<Name, Term> = env
            .iter()
            .map(|(n, i)| (n.clone(), Term::var(&self.cur[*i].0)))
            .collect();
        for (b, f) in binders.iter().zip(&fresh) {
            m.insert((*b).clone(), Term::var(f));
        }
        (fresh, substitute_many(body, &m))
    }

    fn free_ctx(&self, terms: &[&Term], binders: &[&Name]) -> Context {
        let mut fv = BTreeSet::new();
        for t in terms {
            fv.extend(free_vars(t));
        }
        let entries: Vec<(Name, Type)> = self
            .cur
            .iter()
            .filter(|(n, _)| fv.contains(n) && !binders.iter().any(|b| b.as_str() == n))
            .cloned()
            .collect();
        Context::from_entries(entries).expect("distinct names")
    }

    fn pos(&self, name: &str) -> usize {
        self.cur.iter().position(|(n, _)| n == name).expect("name in list")
    }

    fn push_let(&mut self, ty: Type, value: Term) -> Term {
        let n = self.fresh("x");
        self.lets.push((vec![n.clone()], value));
        self.cur.push((n.clone(), ty));
        Term::var(&n)
    }

    /// `G = map2 (c g. g ×̂ c) Z grads`, `R = reduce +̂ 0 G`.
    fn free_sum(&mut self, fvc: &Context, zs: Term, grads: Term, binds: &mut Binds) -> Term {
        let tfv = fvc.tuple_type();
        let c = self.fresh("c");
        let g = self.fresh("g");
        let scaled = self.scale(&tfv, Term::var(&g), &Term::var(&c));
        let gn = self.fresh("G");
        let rn = self.fresh("R");
        let witness = Term::tuple(fvc.names().iter().map(|n| Term::var(n)).collect());
        binds.push((vec![gn.clone()], Term::map2(&c, &g, scaled, zs, grads)));
        binds.push((
            vec![rn.clone()],
            Term::reduce(
                "x",
                "y",
                hat_add(&tfv, Term::var("x"), Term::var("y")),
                zero_like(&tfv, &witness),
                Term::var(&gn),
            ),
        ));
        Term::var(&rn)
    }

    /// `B₀ = map2 ∇_FV A₀ A`, `B₁ = map2 ×̂ A₃ B₀`, `B₂ = reduce +̂ 0 B₁`.
    #[allow(clippy::too_many_arguments)]
    fn open_chain(
        &mut self,
        sub_ctx: &Context,
        fvc: &Context,
        xs: &[Name],
        body: &Term,
        a0: &Term,
        a: &Term,
        a3: &Term,
        binds: &mut Binds,
    ) -> Result<Term, UnfError> {
        let tfv = fvc.tuple_type();
        let gfv = self.sub(sub_ctx, &fvc.names(), body)?;
        let b0 = self.fresh("B");
        let b1 = self.fresh("B");
        let b2 = self.fresh("B");
        let s = self.fresh("c");
        let gn = self.fresh("g");
        let scaled = self.scale(&tfv, Term::var(&gn), &Term::var(&s));
        let witness = Term::tuple(fvc.names().iter().map(|n| Term::var(n)).collect());
        binds.push((vec![b0.clone()], Term::map2(&xs[0], &xs[1], gfv, a0.clone(), a.clone())));
        binds.push((vec![b1.clone()], Term::map2(&s, &gn, scaled, a3.clone(), Term::var(&b0))));
        binds.push((
            vec![b2.clone()],
            Term::reduce(
                "x",
                "y",
                hat_add(&tfv, Term::var("x"), Term::var("y")),
                zero_like(&tfv, &witness),
                Term::var(&b1),
            ),
        ));
        Ok(Term::var(&b2))
    }

    fn add_free(&mut self, fvc: &Context, cots: &mut [Term], part: &mut dyn FnMut(&mut Self, usize, &Type) -> Term) {
        for (j, (n, t)) in fvc.entries().iter().enumerate() {
            let k = self.pos(n);
            let c = part(self, j, t);
            cots[k] = hat_add(t, cots[k].clone(), c);
        }
    }

    /// Emits the primal let of `p` and the continuation `JT p` precomposed
    /// with the current continuation.
    fn step(&mut self, p: &Unf) -> Result<(), UnfError> {
        let old = self.cur.clone();
        let want = p.input().expect("primitive");
        let have: TypeList = old.iter().map(|(_, t)| t.clone()).collect();
        if want != have {
            return Err(UnfError::JudgmentMismatch {
                expected: want.iter().map(Type::compact).collect::<Vec<_>>().join(","),
                found: have.iter().map(Type::compact).collect::<Vec<_>>().join(","),
                at: super::ir::print_short(p),
            });
        }
        let n = old.len();
        let ov = |i: usize| Term::var(&old[i].0);
        // Primal step; `cots` is filled after the parameters are named.
        let mut binds: Binds = Vec::new();
        let new_types: TypeList;
        let params: Vec<Name>;
        let cots: Vec<Term>;
        match p {
            Unf::Var { i, .. } => {
                let ty = old[i - 1].1.clone();
                self.push_let(ty.clone(), ov(i - 1));
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|x| Term::var(x)).collect();
                c[i - 1] = hat_add(&ty, c[i - 1].clone(), Term::var(&params[n]));
                cots = c;
            }
            Unf::Op { args, op, .. } => {
                let ar = args.len();
                let a = |k: usize| ov(n - ar + k);
                let (value, ty) = match op {
                    PrimOp::Const(c) => (Term::Const(*c), Type::Real),
                    PrimOp::Op1(o) => (Term::op1(*o, a(0)), Type::Real),
                    PrimOp::Op2(o) => (Term::op2(*o, a(0), a(1)), Type::Real),
                    PrimOp::Proj(i) => match &args[0] {
                        Type::Prod(ts) => (Term::proj(*i, a(0)), ts[*i - 1].clone()),
                        other => {
                            return Err(UnfError::MalformedDiffImage(format!("projection of {other}")))
                        }
                    },
                };
                self.push_let(ty, value);
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|x| Term::var(x)).collect();
                let cr = Term::var(&params[n]);
                match op {
                    PrimOp::Const(_) => {}
                    PrimOp::Op1(o) => {
                        c[n - 1] = Term::add(c[n - 1].clone(), Term::mul(o.derivative(a(0)), cr));
                    }
                    PrimOp::Op2(o) => {
                        let (d1, d2) = o.partials(a(0), a(1));
                        c[n - 2] = Term::add(c[n - 2].clone(), Term::mul(d1, cr.clone()));
                        c[n - 1] = Term::add(c[n - 1].clone(), Term::mul(d2, cr));
                    }
                    PrimOp::Proj(i) => {
                        let Type::Prod(ts) = &args[0] else { unreachable!() };
                        let inj = Term::Tuple(
                            ts.iter()
                                .enumerate()
                                .map(|(j, tj)| {
                                    if j + 1 == *i {
                                        cr.clone()
                                    } else {
                                        zero_like(tj, &component(&a(0), j + 1))
                                    }
                                })
                                .collect(),
                        );
                        c[n - 1] = hat_add(&args[0], c[n - 1].clone(), inj);
                    }
                }
                cots = c;
            }
            Unf::Pair { a, b, .. } => {
                let (x1, x2) = (ov(n - 2), ov(n - 1));
                self.cur.truncate(n - 2);
                self.push_let(Type::Prod(vec![a.clone(), b.clone()]), Term::pair(x1, x2));
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n - 2].iter().map(|x| Term::var(x)).collect();
                let cp = Term::var(&params[n - 2]);
                c.push(component(&cp, 1));
                c.push(component(&cp, 2));
                cots = c;
            }
            Unf::Proj { t1, t2, .. } => {
                let (l1, l2) = (t1.len(), t2.len());
                self.cur = [old[..l1].to_vec(), old[l1 + l2..].to_vec()].concat();
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let pv: Vec<Term> = params.iter().map(|x| Term::var(x)).collect();
                let witnesses: Vec<Term> = (l1..l1 + l2).map(ov).collect();
                let mut c = pv[..l1].to_vec();
                c.extend(zero_ctx(t2, &witnesses));
                c.extend(pv[l1..].iter().cloned());
                cots = c;
            }
            Unf::Map2 { n: len, x, y, body, env, .. } => {
                let (bs, body) = self.rename_binder(env, &[x, y], body);
                let (x, y) = (bs[0].clone(), bs[1].clone());
                let (av, bv) = (ov(n - 2), ov(n - 1));
                let ta = Type::real_array(*len);
                self.push_let(ta.clone(), Term::map2(&x, &y, body.clone(), av.clone(), bv.clone()));
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|v| Term::var(v)).collect();
                let zv = Term::var(&params[n]);
                let fvc = self.free_ctx(&[&body], &[&x, &y]);
                let sub_ctx = bin_ctx(&[&x, &y], &fvc);
                let gx = self.sub(&sub_ctx, std::slice::from_ref(&x), &body)?;
                let gy = self.sub(&sub_ctx, std::slice::from_ref(&y), &body)?;
                let times = |d: Term, s: &Term| {
                    Term::map2("x", "y", Term::mul(Term::var("x"), Term::var("y")), d, s.clone())
                };
                let ca = times(Term::map2(&x, &y, gx, av.clone(), bv.clone()), &zv);
                let cb = times(Term::map2(&x, &y, gy, av.clone(), bv.clone()), &zv);
                c[n - 2] = hat_add(&ta, c[n - 2].clone(), ca);
                c[n - 1] = hat_add(&ta, c[n - 1].clone(), cb);
                if !fvc.is_empty() {
                    let gfv = self.sub(&sub_ctx, &fvc.names(), &body)?;
                    let grads = Term::map2(&x, &y, gfv, av, bv);
                    let r = self.free_sum(&fvc, zv, grads, &mut binds);
                    let len = fvc.len();
                    self.add_free(&fvc, &mut c, &mut |_, j, _| comp(&r, j, len));
                }
                cots = c;
            }
            Unf::Map { n: len, x, body, env, .. } => {
                let (bs, body) = self.rename_binder(env, &[x], body);
                let x = bs[0].clone();
                let av = ov(n - 1);
                let ta = Type::real_array(*len);
                self.push_let(ta.clone(), Term::map(&x, body.clone(), av.clone()));
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|v| Term::var(v)).collect();
                let zv = Term::var(&params[n]);
                let fvc = self.free_ctx(&[&body], &[&x]);
                let sub_ctx = bin_ctx(&[&x], &fvc);
                let gx = self.sub(&sub_ctx, std::slice::from_ref(&x), &body)?;
                let cn = self.fresh("c");
                let ca = Term::map2(&x, &cn, Term::mul(gx, Term::var(&cn)), av.clone(), zv.clone());
                c[n - 1] = hat_add(&ta, c[n - 1].clone(), ca);
                if !fvc.is_empty() {
                    let gfv = self.sub(&sub_ctx, &fvc.names(), &body)?;
                    let grads = Term::map(&x, gfv, av);
                    let r = self.free_sum(&fvc, zv, grads, &mut binds);
                    let len = fvc.len();
                    self.add_free(&fvc, &mut c, &mut |_, j, _| comp(&r, j, len));
                }
                cots = c;
            }
            Unf::Reduce { n: len, x, y, body, init, env, .. } => {
                let (bs, body) = self.rename_binder(env, &[x, y], body);
                let (x, y) = (bs[0].clone(), bs[1].clone());
                let init = self.rename(env, vec![init.clone()]).remove(0);
                let av = ov(n - 1);
                let ta = Type::real_array(*len);
                self.push_let(Type::Real, Term::reduce(&x, &y, body.clone(), init.clone(), av.clone()));
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|v| Term::var(v)).collect();
                let zv = Term::var(&params[n]);
                if *len > 0 {
                    let fvc = self.free_ctx(&[&body], &[&x, &y]);
                    let sub_ctx = bin_ctx(&[&x, &y], &fvc);
                    let gx = self.sub(&sub_ctx, std::slice::from_ref(&x), &body)?;
                    let gy = self.sub(&sub_ctx, std::slice::from_ref(&y), &body)?;
                    let names: Vec<Name> = (0..4).map(|_| self.fresh("A")).collect();
                    let a0v = Term::var(&names[0]);
                    let a3v = Term::var(&names[3]);
                    binds.push((
                        vec![names[0].clone()],
                        Term::shift1r(Term::fold(FoldKind::Scanl, &x, &y, body.clone(), init, av.clone())),
                    ));
                    binds.push((
                        vec![names[1].clone()],
                        Term::shift1l(Term::map2(&x, &y, gx, a0v.clone(), av.clone())),
                    ));
                    binds.push((vec![names[2].clone()], Term::map2(&x, &y, gy, a0v.clone(), av.clone())));
                    binds.push((
                        vec![names[3].clone()],
                        Term::fold(
                            FoldKind::Scanr,
                            "x",
                            "y",
                            Term::mul(Term::var("x"), Term::var("y")),
                            Term::Const(1.0),
                            Term::var(&names[1]),
                        ),
                    ));
                    if !fvc.is_empty() {
                        let b2 = self.open_chain(&sub_ctx, &fvc, &[x, y], &body, &a0v, &av, &a3v, &mut binds)?;
                        let len = fvc.len();
                        let z = zv.clone();
                        self.add_free(&fvc, &mut c, &mut |me, j, t| {
                            let part = comp(&b2, j, len);
                            me.scale(t, part, &z)
                        });
                    }
                    let ca = Term::map2("x", "y", times_z(&zv), Term::var(&names[2]), a3v);
                    c[n - 1] = hat_add(&ta, c[n - 1].clone(), ca);
                }
                cots = c;
            }
            Unf::Foldl { n: len, x, y, body, env, .. } => {
                let (bs, body) = self.rename_binder(env, &[x, y], body);
                let (x, y) = (bs[0].clone(), bs[1].clone());
                let (vv, av) = (ov(n - 2), ov(n - 1));
                let ta = Type::real_array(*len);
                self.push_let(
                    Type::Real,
                    Term::fold(FoldKind::Foldl, &x, &y, body.clone(), vv.clone(), av.clone()),
                );
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|v| Term::var(v)).collect();
                let zv = Term::var(&params[n]);
                let fvc = self.free_ctx(&[&body], &[&x, &y]);
                let sub_ctx = bin_ctx(&[&x, &y], &fvc);
                let gx = self.sub(&sub_ctx, std::slice::from_ref(&x), &body)?;
                let gy = self.sub(&sub_ctx, std::slice::from_ref(&y), &body)?;
                let a0 = self.fresh("A");
                let r1 = self.fresh("r");
                let a1 = self.fresh("A");
                let a2 = self.fresh("A");
                let r2 = self.fresh("r");
                let a3 = self.fresh("A");
                let (a0v, a3v) = (Term::var(&a0), Term::var(&a3));
                binds.push((
                    vec![a0, r1],
                    Term::fold(FoldKind::ScanlPair, &x, &y, body.clone(), vv, av.clone()),
                ));
                binds.push((vec![a1.clone()], Term::map2(&x, &y, gx, a0v.clone(), av.clone())));
                binds.push((vec![a2.clone()], Term::map2(&x, &y, gy, a0v.clone(), av.clone())));
                binds.push((
                    vec![r2.clone(), a3],
                    Term::fold(
                        FoldKind::ScanrPair,
                        "x",
                        "y",
                        Term::mul(Term::var("x"), Term::var("y")),
                        Term::Const(1.0),
                        Term::var(&a1),
                    ),
                ));
                if !fvc.is_empty() {
                    let b2 = self.open_chain(&sub_ctx, &fvc, &[x, y], &body, &a0v, &av, &a3v, &mut binds)?;
                    let len = fvc.len();
                    let z = zv.clone();
                    self.add_free(&fvc, &mut c, &mut |me, j, t| {
                        let part = comp(&b2, j, len);
                        me.scale(t, part, &z)
                    });
                }
                c[n - 2] = Term::add(c[n - 2].clone(), Term::mul(Term::var(&r2), zv.clone()));
                let ca = Term::map2("x", "y", times_z(&zv), Term::var(&a2), a3v);
                c[n - 1] = hat_add(&ta, c[n - 1].clone(), ca);
                cots = c;
            }
            Unf::If { cond, then, els, env, .. } => {
                let mut ts = self.rename(env, vec![cond.clone(), then.clone(), els.clone()]);
                let f = ts.pop().expect("else");
                let t = ts.pop().expect("then");
                let cnd = ts.pop().expect("cond");
                let b = self.fresh("b");
                self.lets.push((vec![b.clone()], cnd));
                self.push_let(Type::Real, Term::if_(Term::var(&b), t.clone(), f.clone()));
                new_types = self.cur.iter().map(|(_, t)| t.clone()).collect();
                params = self.params(new_types.len());
                let mut c: Vec<Term> = params[..n].iter().map(|v| Term::var(v)).collect();
                let zv = Term::var(&params[n]);
                let tt = typecheck_source_ext(&self.context(&old), &t, Extensions::all())?;
                if tt != Type::Real {
                    return Err(UnfError::Body(format!("conditional branches must have type real, found {tt}")));
                }
                let sctx = self.free_ctx(&[&t, &f], &[]);
                if !sctx.is_empty() {
                    let names = sctx.names();
                    let g2 = self.sub(&sctx, &names, &t)?;
                    let g3 = self.sub(&sctx, &names, &f)?;
                    let bf = self.fresh("bf");
                    let g2n = self.fresh("G");
                    let g3n = self.fresh("G");
                    binds.push((vec![bf.clone()], Term::if_(Term::var(&b), Term::Const(1.0), Term::Const(0.0))));
                    binds.push((vec![g2n.clone()], g2));
                    binds.push((vec![g3n.clone()], g3));
                    let bfv = Term::var(&bf);
                    let not_bf = Term::sub(Term::Const(1.0), bfv.clone());
                    let len = sctx.len();
                    self.add_free(&sctx, &mut c, &mut |me, j, ty| {
                        let left = me.scale(ty, comp(&Term::var(&g2n), j, len), &bfv);
                        let right = me.scale(ty, comp(&Term::var(&g3n), j, len), &not_bf);
                        let sum = hat_add(ty, left, right);
                        me.scale(ty, sum, &zv)
                    });
                }
                cots = c;
            }
            other => return Err(UnfError::MalformedDiffImage(super::ir::print_short(other))),
        }
        let typed: Vec<(Name, Type)> = params.into_iter().zip(new_types).collect();
        let body = wrap(binds, Term::apply(Term::var(&self.k), cots));
        let k2 = self.fresh("Y");
        self.lets.push((vec![k2.clone()], Term::lambda(typed, body)));
        self.k = k2;
        Ok(())
    }

    fn params(&mut self, n: usize) -> Vec<Name> {
        (0..n).map(|_| self.fresh("c")).collect()
    }

    fn context(&self, entries: &[(Name, Type)]) -> Context {
        Context::from_entries(entries.to_vec()).expect("distinct names")
    }
}

fn base_of(b: &str) -> String {
    let s = b.trim_end_matches(|c: char| c.is_ascii_digit() || c == '\'');
    if s.is_empty() { "v".into() } else { s.to_string() }
}

fn bin_ctx(binders: &[&Name], fvc: &Context) -> Context {
    let mut c = Context::new();
    for b in binders {
        c.push(b, Type::Real);
    }
    for (n, t) in fvc.entries() {
        c.push(n, t.clone());
    }
    c
}

fn comp(t: &Term, j: usize, len: usize) -> Term {
    if len == 1 {
        t.clone()
    } else {
        component(t, j + 1)
    }
}

fn times_z(z: &Term) -> Term {
    Term::mul(Term::mul(Term::var("x"), Term::var("y")), z.clone())
}

/// `UNF⁻¹`: reads a differentiated UNF term on inputs `x₁ … x_{n+1}` (the
/// last being the continuation) back as `<result, continuation>`.
pub fn from_unf(input: &[Type], e: &Unf) -> Result<Term, UnfError> {
    from_unf_with(input, e, Extensions::all())
}

fn from_unf_with(input: &[Type], e: &Unf, ext: Extensions) -> Result<Term, UnfError> {
    let Some(Type::Func(..)) = input.last() else {
        return Err(UnfError::MalformedDiffImage("the last input must be a continuation".into()));
    };
    typecheck_unf_target(input, e)?;
    let mut items = Vec::new();
    flatten(e, &mut items);
    let prims = items
        .iter()
        .map(|it| diff_item(it).ok_or_else(|| UnfError::MalformedDiffImage(super::ir::print_short(it))))
        .collect::<Result<Vec<_>, _>>()?;
    let n = input.len() - 1;
    let inputs: Vec<Name> = (1..=n + 1).map(|i| format!("x{i}")).collect();
    let mut supply = NameSupply::new();
    for p in &prims {
        for t in embedded_terms(p) {
            for name in all_names(t) {
                supply.reserve(&name);
            }
        }
    }
    for x in &inputs {
        supply.reserve(x);
    }
    let mut b = Back {
        supply,
        ext,
        cur: inputs[..n].iter().cloned().zip(input[..n].iter().cloned()).collect(),
        k: inputs[n].clone(),
        lets: Vec::new(),
    };
    for p in prims {
        b.step(p)?;
    }
    let last = b
        .cur
        .last()
        .map(|(x, _)| Term::var(x))
        .ok_or_else(|| UnfError::MalformedDiffImage("empty output list".into()))?;
    let out = Term::pair(last, Term::var(&b.k));
    Ok(wrap(b.lets, out))
}

fn gradient_via_unf(
    ctx: &Context,
    subset: &[Name],
    e: &Term,
    ext: Extensions,
) -> Result<Term, UnfError> {
    let t = typecheck_source_ext(ctx, e, ext)?;
    if t != Type::Real {
        return Err(UnfError::Body(format!("the program must have type real, found {t}")));
    }
    let positions = subset
        .iter()
        .map(|s| ctx.position(s).ok_or_else(|| TypeError::UnboundVariable(s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let u = to_unf(ctx, e, ext)?;
    let gamma = ctx.types();
    let rho = Type::tuple(positions.iter().map(|&i| gamma[i].clone()).collect());
    let d = diff_unf(&rho, &u)?;
    let mut input = gamma.clone();
    input.push(Type::func(gamma.clone(), rho));
    let back = from_unf_with(&input, &d, ext)?;
    let mut supply = NameSupply::avoiding([&back, e], &ctx.names());
    let y = supply.fresh("Y");
    let mut m: HashMap<Name, Term> = ctx
        .names()
        .iter()
        .enumerate()
        .map(|(i, n)| (format!("x{}", i + 1), Term::var(n)))
        .collect();
    m.insert(format!("x{}", gamma.len() + 1), Term::var(&y));
    let back = substitute_many(&back, &m);
    let params: Vec<(Name, Type)> = gamma.iter().map(|t| (supply.fresh("p"), t.clone())).collect();
    let id = Term::lambda(
        params.clone(),
        Term::tuple(positions.iter().map(|&i| Term::var(&params[i].0)).collect()),
    );
    let witnesses: Vec<Term> = ctx.names().iter().map(|n| Term::var(n)).collect();
    let mut args = zero_ctx(&gamma, &witnesses);
    args.push(Term::Const(1.0));
    Ok(Term::let1(&y, id, Term::apply(Term::proj(2, back), args)))
}

/// The gradient of `Γ ⊢ e : ℝ` through the UNF pipeline, unoptimized.
pub fn pipeline_gradient(ctx: &Context, e: &Term, ext: Extensions) -> Result<Term, UnfError> {
    gradient_via_unf(ctx, &ctx.names(), e, ext)
}

/// The gradient of `e` with respect to `subset` through the UNF pipeline,
/// used for the bodies of array operators.
pub fn nabla_sub_unf(
    ctx: &Context,
    subset: &[Name],
    e: &Term,
    supply: &mut NameSupply,
    ext: Extensions,
) -> Result<Term, UnfError> {
    let out = gradient_via_unf(ctx, subset, e, ext)?;
    for n in all_names(&out) {
        supply.reserve(&n);
    }
    Ok(out)
}
