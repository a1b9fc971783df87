//! Numerical verification: a central finite-difference oracle and seeded
//! semantic-equivalence checks between gradient pipelines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::diff::{gradient_with, DiffError, Method};
use crate::eval::{eval, eval_gradient_entry, eval_with_stats, Env, EvalError, Value};
use crate::ext::Extensions;
use crate::opt::OptLevel;
use crate::term::Term;
use crate::typecheck::{typecheck_source_ext, typecheck_target, TypeError};
use crate::types::{Context, Type};

/// Default finite-difference step.
pub const DEFAULT_H: f64 = 1e-4;
/// Relative part of the acceptance tolerance.
pub const REL_TOL: f64 = 1e-5;
/// Absolute part of the acceptance tolerance.
pub const ABS_TOL: f64 = 1e-8;
/// Points closer than this to a pole, a `log` singularity or a branch
/// boundary are resampled.
pub const DOMAIN_GUARD: f64 = 0.1;
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradcheckError {
    #[error("the program must have type real, found {0}")]
    NonScalarProgram(Type),
    #[error("context entry `{0}` is not of ground type")]
    NotGround(String),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("terms have different types: {0} and {1}")]
    TypeDisagreement(Type, Type),
    #[error("no sample point away from singularities after {0} draws")]
    NoValidPoint(usize),
}

/// `|ad - fd| <= 1e-5 * max(1, |fd|) + 1e-8`.
pub fn within_tolerance(ad: f64, fd: f64) -> bool {
    (ad - fd).abs() <= REL_TOL * fd.abs().max(1.0) + ABS_TOL
}

fn flat(vs: &[Value]) -> Vec<f64> {
    let mut out = Vec::new();
    for v in vs {
        v.flatten(&mut out);
    }
    out
}

fn unflat(types: &[Type], xs: &[f64]) -> Vec<Value> {
    let mut it = xs.iter().copied();
    types
        .iter()
        .map(|t| Value::from_flat(t, &mut it).expect("ground type with enough coordinates"))
        .collect()
}

fn scalar_coords(ctx: &Context) -> Result<usize, GradcheckError> {
    let mut n = 0;
    for (name, t) in ctx.entries() {
        if !t.is_ground() {
            return Err(GradcheckError::NotGround(name.clone()));
        }
        n += t.scalar_count();
    }
    Ok(n)
}

fn eval_real(ctx: &Context, e: &Term, point: &[Value]) -> Result<f64, GradcheckError> {
    let v = eval(&Env::from_context(ctx, point)?, e)?;
    match v {
        Value::Real(r) => Ok(r),
        _ => Err(GradcheckError::NonScalarProgram(Type::Bool)),
    }
}

/// Central differences `(f(x + h eᵢ) - f(x - h eᵢ)) / 2h` for every scalar
/// coordinate, reshaped to the context's types.
pub fn finite_diff_gradient(ctx: &Context, e: &Term, point: &[Value], h: f64) -> Result<Vec<Value>, GradcheckError> {
    let t = typecheck_source_ext(ctx, e, Extensions::all())?;
    if t != Type::Real {
        return Err(GradcheckError::NonScalarProgram(t));
    }
    scalar_coords(ctx)?;
    let base = flat(point);
    let types = ctx.types();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut up = base.clone();
        up[i] += h;
        let mut down = base.clone();
        down[i] -= h;
        let fu = eval_real(ctx, e, &unflat(&types, &up))?;
        let fd = eval_real(ctx, e, &unflat(&types, &down))?;
        grad.push((fu - fd) / (2.0 * h));
    }
    Ok(unflat(&types, &grad))
}

fn uniform_point(ctx: &Context, rng: &mut ChaCha8Rng) -> Vec<Value> {
    let n: usize = ctx.types().iter().map(Type::scalar_count).sum();
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    unflat(&ctx.types(), &xs)
}

/// `n` points drawn uniformly from `[-2, 2]` per coordinate, skipping points
/// within the domain guard of a divisor, a `log` argument or a branch test.
pub fn sample_points(ctx: &Context, e: &Term, n: usize, seed: u64) -> Result<Vec<Vec<Value>>, GradcheckError> {
    scalar_coords(ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n {
        if draws >= MAX_RESAMPLES {
            return Err(GradcheckError::NoValidPoint(draws));
        }
        draws += 1;
        let p = uniform_point(ctx, &mut rng);
        let (_, s) = eval_with_stats(&Env::from_context(ctx, &p)?, e)?;
        if s.min_abs_divisor >= DOMAIN_GUARD && s.min_log_arg >= DOMAIN_GUARD && s.min_abs_test >= DOMAIN_GUARD {
            out.push(p);
        }
    }
    Ok(out)
}

/// Agreement of one pipeline with the oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Outcome of `check_gradient`, serialised as the verification report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub h: f64,
    pub points: usize,
    pub methods: Vec<MethodReport>,
    /// Largest relative disagreement between the two pipelines.
    pub pipeline_max_rel_diff: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Options of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckConfig {
    pub points: usize,
    pub seed: u64,
    pub h: f64,
    pub ext: Extensions,
    pub level: OptLevel,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            points: 20,
            seed: 0,
            h: DEFAULT_H,
            ext: Extensions::all(),
            level: OptLevel::All,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a.to_bits() == b.to_bits() {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1.0)
    }
}

/// Compares both pipelines' gradients against central differences at
/// `n_points` seeded points.
pub fn check_gradient(ctx: &Context, e: &Term, n_points: usize, seed: u64) -> Result<GradcheckReport, GradcheckError> {
    check_gradient_with(
        ctx,
        e,
        &CheckConfig {
            points: n_points,
            seed,
            ..CheckConfig::default()
        },
    )
}

/// `check_gradient` with an explicit step, extension set and optimization
/// level.
pub fn check_gradient_with(ctx: &Context, e: &Term, cfg: &CheckConfig) -> Result<GradcheckReport, GradcheckError> {
    let t = typecheck_source_ext(ctx, e, cfg.ext)?;
    if t != Type::Real {
        return Err(GradcheckError::NonScalarProgram(t));
    }
    let points = sample_points(ctx, e, cfg.points, cfg.seed)?;
    let methods = [Method::Direct, Method::Unf];
    let grads = methods
        .iter()
        .map(|m| gradient_with(ctx, e, cfg.ext, *m, cfg.level))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports: Vec<MethodReport> = methods
        .iter()
        .map(|m| MethodReport {
            method: m.name().into(),
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            pass: true,
        })
        .collect();
    let mut pipeline = 0.0f64;
    for p in &points {
        let fd = flat(&finite_diff_gradient(ctx, e, p, cfg.h)?);
        let mut ads = Vec::new();
        for (r, g) in reports.iter_mut().zip(&grads) {
            let ad = flat(&eval_gradient_entry(ctx, g, p)?);
            for (a, f) in ad.iter().zip(&fd) {
                r.max_abs_err = r.max_abs_err.max((a - f).abs());
                r.max_rel_err = r.max_rel_err.max(rel(*a, *f));
                r.pass &= within_tolerance(*a, *f);
            }
            r.pass &= ad.len() == fd.len();
            ads.push(ad);
        }
        for (a, b) in ads[0].iter().zip(&ads[1]) {
            pipeline = pipeline.max(rel(*b, *a));
        }
    }
    let max_rel_err = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let pass = reports.iter().all(|r| r.pass);
    Ok(GradcheckReport {
        seed: cfg.seed,
        h: cfg.h,
        points: points.len(),
        methods: reports,
        pipeline_max_rel_diff: pipeline,
        max_rel_err,
        pass,
    })
}

/// Whether two target terms agree within `tol` (relative to `max(1, |b|)`)
/// at `n_points` seeded points of `ctx`.
pub fn semantic_equiv(
    t1: &Term,
    t2: &Term,
    ctx: &Context,
    n_points: usize,
    tol: f64,
    seed: u64,
) -> Result<bool, GradcheckError> {
    let a = typecheck_target(ctx, t1)?;
    let b = typecheck_target(ctx, t2)?;
    if a != b {
        return Err(GradcheckError::TypeDisagreement(a, b));
    }
    scalar_coords(ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_points {
        let env = Env::from_context(ctx, &uniform_point(ctx, &mut rng))?;
        let v1 = eval(&env, t1)?;
        let v2 = eval(&env, t2)?;
        let same = if tol == 0.0 { v1.bit_eq(&v2) } else { v1.approx_eq(&v2, tol) };
        if !same {
            return Ok(false);
        }
    }
    Ok(true)
}
