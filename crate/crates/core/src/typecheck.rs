//! Type checkers for the source and target languages.

use thiserror::Error;

use crate::ext::Extensions;
use crate::frontend::print_term;
use crate::term::{FoldKind, Term};
use crate::types::{Context, Type};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type mismatch in `{location}`: expected {expected}, found {found}")]
    TypeMismatch {
        expected: String,
        found: String,
        location: String,
    },
    #[error("array size mismatch: {0} vs {1}")]
    ArraySizeMismatch(usize, usize),
    #[error("reduce body mentions free variable `{0}`")]
    IllegalFreeVariableInReduce(String),
    #[error("arity mismatch in `{location}`: expected {expected}, found {found}")]
    ArityMismatch {
        expected: usize,
        found: usize,
        location: String,
    },
    #[error("construct not allowed here: {0}")]
    UnsupportedConstruct(String),
    #[error("lambda parameter `{0}` needs a ground type annotation")]
    MissingAnnotation(String),
}

fn loc(e: &Term) -> String {
    let s = print_term(e);
    if s.chars().count() > 60 {
        let cut: String = s.chars().take(57).collect();
        format!("{cut}...")
    } else {
        s
    }
}

fn mismatch(expected: impl ToString, found: &Type, at: &Term) -> TypeError {
    TypeError::TypeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
        location: loc(at),
    }
}

/// Which language the checker accepts.
#[derive(Clone, Copy, Debug)]
enum Mode {
    Source(Extensions),
    Target,
}

/// Types a source program; extensions widen the accepted fragment.
pub fn typecheck_source_ext(ctx: &Context, e: &Term, ext: Extensions) -> Result<Type, TypeError> {
    for (n, t) in ctx.entries() {
        if !t.is_source() {
            return Err(TypeError::UnsupportedConstruct(format!(
                "context entry {n}:{t} is not a source type"
            )));
        }
    }
    check(ctx, e, Mode::Source(ext))
}

/// Types a source program in the base language.
pub fn typecheck_source(ctx: &Context, e: &Term) -> Result<Type, TypeError> {
    typecheck_source_ext(ctx, e, Extensions::none())
}

/// Types a target program.
pub fn typecheck_target(ctx: &Context, e: &Term) -> Result<Type, TypeError> {
    check(ctx, e, Mode::Target)
}

fn expect(t: &Type, want: &Type, at: &Term) -> Result<(), TypeError> {
    if t == want {
        Ok(())
    } else {
        Err(mismatch(want, t, at))
    }
}

fn expect_array(t: &Type, at: &Term) -> Result<(Type, usize), TypeError> {
    match t {
        Type::Array(e, n) => Ok(((**e).clone(), *n)),
        _ => Err(mismatch("an array", t, at)),
    }
}

fn check(ctx: &Context, e: &Term, mode: Mode) -> Result<Type, TypeError> {
    let source = matches!(mode, Mode::Source(_));
    let ext = match mode {
        Mode::Source(x) => x,
        Mode::Target => Extensions::all(),
    };
    let unsupported = || TypeError::UnsupportedConstruct(loc(e));
    match e {
        Term::Var(x) => ctx
            .lookup(x)
            .cloned()
            .ok_or_else(|| TypeError::UnboundVariable(x.clone())),
        Term::Const(_) => Ok(Type::Real),
        Term::BoolLit(_) => {
            if source && !ext.cond {
                return Err(unsupported());
            }
            Ok(Type::Bool)
        }
        Term::Let(pat, e1, e2) => {
            let t1 = check(ctx, e1, mode)?;
            if pat.len() == 1 {
                if source && t1 == Type::Bool {
                    return Err(unsupported());
                }
                return check(&ctx.extend(&pat[0], t1), e2, mode);
            }
            if source {
                return Err(unsupported());
            }
            match &t1 {
                Type::Prod(ts) if ts.len() == pat.len() => {
                    let mut c = ctx.clone();
                    for (n, t) in pat.iter().zip(ts) {
                        c.push(n, t.clone());
                    }
                    check(&c, e2, mode)
                }
                _ => Err(TypeError::ArityMismatch {
                    expected: pat.len(),
                    found: match &t1 {
                        Type::Prod(ts) => ts.len(),
                        _ => 1,
                    },
                    location: loc(e),
                }),
            }
        }
        Term::Tuple(es) => {
            if source && es.len() != 2 {
                return Err(unsupported());
            }
            let ts = es
                .iter()
                .map(|x| check(ctx, x, mode))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Type::Prod(ts))
        }
        Term::Proj(i, inner) => {
            let t = check(ctx, inner, mode)?;
            match &t {
                Type::Prod(ts) if *i >= 1 && *i <= ts.len() && (!source || ts.len() == 2) => {
                    Ok(ts[*i - 1].clone())
                }
                _ => Err(mismatch(format!("a product with component {i}"), &t, e)),
            }
        }
        Term::Op1(_, a) => {
            let t = check(ctx, a, mode)?;
            expect(&t, &Type::Real, a)?;
            Ok(Type::Real)
        }
        Term::Op2(_, a, b) => {
            let ta = check(ctx, a, mode)?;
            expect(&ta, &Type::Real, a)?;
            let tb = check(ctx, b, mode)?;
            expect(&tb, &Type::Real, b)?;
            Ok(Type::Real)
        }
        Term::Gt0(a) => {
            if source && !(ext.cond && ext.gt0) {
                return Err(unsupported());
            }
            let t = check(ctx, a, mode)?;
            expect(&t, &Type::Real, a)?;
            Ok(Type::Bool)
        }
        Term::If(c, t, f) => {
            if source {
                if !ext.cond {
                    return Err(unsupported());
                }
                if !matches!(**c, Term::BoolLit(_) | Term::Gt0(_)) {
                    return Err(TypeError::UnsupportedConstruct(format!(
                        "condition must be true, false or gt0: {}",
                        loc(c)
                    )));
                }
            }
            let tc = check(ctx, c, mode)?;
            expect(&tc, &Type::Bool, c)?;
            let tt = check(ctx, t, mode)?;
            let tf = check(ctx, f, mode)?;
            expect(&tf, &tt, f)?;
            Ok(tt)
        }
        Term::Map2 { x, y, body, a, b } => {
            let ta = check(ctx, a, mode)?;
            let (ea, na) = expect_array(&ta, a)?;
            let tb = check(ctx, b, mode)?;
            let (eb, nb) = expect_array(&tb, b)?;
            if na != nb {
                return Err(TypeError::ArraySizeMismatch(na, nb));
            }
            if source {
                expect(&ea, &Type::Real, a)?;
                expect(&eb, &Type::Real, b)?;
            }
            let inner = ctx.extend(x, ea).extend(y, eb);
            let tr = check(&inner, body, mode)?;
            if source {
                expect(&tr, &Type::Real, body)?;
            }
            Ok(Type::array(tr, na))
        }
        Term::Map { x, body, a } => {
            if source && !ext.foldl {
                return Err(unsupported());
            }
            let ta = check(ctx, a, mode)?;
            let (ea, n) = expect_array(&ta, a)?;
            if source {
                expect(&ea, &Type::Real, a)?;
            }
            let tr = check(&ctx.extend(x, ea), body, mode)?;
            if source {
                expect(&tr, &Type::Real, body)?;
            }
            Ok(Type::array(tr, n))
        }
        Term::Fold {
            kind,
            x,
            y,
            body,
            init,
            arr,
        } => {
            if source {
                match kind {
                    FoldKind::Reduce => {}
                    FoldKind::Foldl if ext.foldl => {}
                    _ => return Err(unsupported()),
                }
            }
            let ti = check(ctx, init, mode)?;
            let ta = check(ctx, arr, mode)?;
            let (ea, n) = expect_array(&ta, arr)?;
            if source {
                expect(&ti, &Type::Real, init)?;
                expect(&ea, &Type::Real, arr)?;
            }
            let closed_reduce = source && *kind == FoldKind::Reduce && !ext.reduce_open;
            let body_ctx = if closed_reduce {
                for v in crate::term::free_vars(body) {
                    if &v != x && &v != y {
                        return Err(TypeError::IllegalFreeVariableInReduce(v));
                    }
                }
                Context::new().extend(x, ti.clone()).extend(y, ea)
            } else {
                ctx.extend(x, ti.clone()).extend(y, ea)
            };
            let tb = check(&body_ctx, body, mode)?;
            expect(&tb, &ti, body)?;
            Ok(match kind {
                FoldKind::Reduce | FoldKind::Foldl => ti,
                FoldKind::Scanl | FoldKind::Scanr => Type::array(ti, n + 1),
                FoldKind::ScanlPair => Type::Prod(vec![Type::array(ti.clone(), n), ti]),
                FoldKind::ScanrPair => Type::Prod(vec![ti.clone(), Type::array(ti, n)]),
            })
        }
        Term::Shift1L(a) | Term::Shift1R(a) => {
            if source {
                return Err(unsupported());
            }
            let t = check(ctx, a, mode)?;
            let (el, n) = expect_array(&t, a)?;
            Ok(Type::array(el, n.saturating_sub(1)))
        }
        Term::Lambda(ps, body) => {
            if source {
                return Err(unsupported());
            }
            let mut c = ctx.clone();
            let mut tys = Vec::new();
            for (n, t) in ps {
                if !t.is_ground() {
                    return Err(TypeError::MissingAnnotation(n.clone()));
                }
                c.push(n, t.clone());
                tys.push(t.clone());
            }
            let tr = check(&c, body, mode)?;
            Ok(Type::func(tys, tr))
        }
        Term::Apply(f, args) => {
            if source {
                return Err(unsupported());
            }
            let tf = check(ctx, f, mode)?;
            match &tf {
                Type::Func(ps, r) => {
                    if ps.len() != args.len() {
                        return Err(TypeError::ArityMismatch {
                            expected: ps.len(),
                            found: args.len(),
                            location: loc(e),
                        });
                    }
                    for (p, a) in ps.iter().zip(args) {
                        let ta = check(ctx, a, mode)?;
                        expect(&ta, p, a)?;
                    }
                    Ok((**r).clone())
                }
                _ => Err(mismatch("a function", &tf, f)),
            }
        }
        Term::ArrayLit(es) => {
            if source {
                return Err(unsupported());
            }
            let mut elem = None;
            for x in es {
                let t = check(ctx, x, mode)?;
                match &elem {
                    None => elem = Some(t),
                    Some(t0) => expect(&t, t0, x)?,
                }
            }
            Ok(Type::array(elem.unwrap_or(Type::Real), es.len()))
        }
    }
}
