//! The acceptance criteria as functions returning a verdict and a one-line
//! detail.

use adc_core::diff::DiffConfig;
use adc_core::eval::{eval, Env};
use adc_core::frontend::{parse_term, parse_values};
use adc_core::gradcheck::{check_gradient_with, CheckConfig};
use adc_core::opt::{check_linear_continuations, contains_lambda, rules};
use adc_core::unf::{typecheck_unf_source, typecheck_unf_target};
use adc_core::*;

use super::{corpus, goldens, load, rules as rule_gen, stepper, Program, UNIT_CORPUS};

/// Verdict of one criterion.
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn from_failures(failures: Vec<String>, ok: String) -> Outcome {
        if failures.is_empty() {
            Outcome { pass: true, detail: ok }
        } else {
            Outcome {
                pass: false,
                detail: failures.join("; "),
            }
        }
    }
}

/// Criterion 1: both pipelines match central differences at 20 points.
pub fn gradient_correctness() -> Outcome {
    let progs = corpus();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for p in &progs {
        match check_gradient_with(&p.ctx, &p.term, &CheckConfig::default()) {
            Ok(r) => {
                worst = worst.max(r.max_rel_err);
                if !r.pass || r.points != 20 {
                    failures.push(format!("{} (max rel err {:.2e})", p.name, r.max_rel_err));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
    }
    let ok = format!("{} programs x 20 points, worst relative error {worst:.2e}", progs.len());
    if progs.len() < 15 {
        failures.push(format!("corpus has only {} programs", progs.len()));
    }
    Outcome::from_failures(failures, ok)
}

/// Criterion 2: the pipelines agree to `1e-9` relative at the same points.
pub fn pipeline_equivalence() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for p in corpus() {
        match check_gradient_with(&p.ctx, &p.term, &CheckConfig::default()) {
            Ok(r) => {
                worst = worst.max(r.pipeline_max_rel_diff);
                if r.pipeline_max_rel_diff > 1e-9 {
                    failures.push(format!("{} ({:.2e})", p.name, r.pipeline_max_rel_diff));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
    }
    Outcome::from_failures(failures, format!("worst relative disagreement {worst:.2e}"))
}

/// Criterion 3: the fully optimized closed forms of sum, dot and prod.
pub fn closed_forms() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |what: &str, got: Result<Term, String>, want: &str| match got {
        Ok(g) if alpha_equal(&g, &parse_term(want).unwrap()) => {}
        Ok(g) => failures.push(format!("{what}: {}", print_term(&g))),
        Err(e) => failures.push(format!("{what}: {e}")),
    };
    for m in [Method::Direct, Method::Unf] {
        let all = |p: &Program| {
            gradient_with(&p.ctx, &p.term, Extensions::all(), m, OptLevel::All).map_err(|e| e.to_string())
        };
        check(&format!("sum ({})", m.name()), all(&load("sum")), &goldens::read("sum_grad"));
        check(&format!("prod ({})", m.name()), all(&load("prod")), &goldens::read("prod_grad"));
        let dot = load("dot");
        let wrt_a = nabla_sub(&dot.ctx, &["A".to_string()], &dot.term, Extensions::all(), m)
            .map_err(|e| e.to_string())
            .and_then(|g| optimize(&dot.ctx, &g, OptLevel::All).map_err(|e| e.to_string()));
        check(&format!("dot wrt A ({})", m.name()), wrt_a, &goldens::read("dot_grad_a"));
    }
    Outcome::from_failures(failures, "sum, dot wrt A and prod alpha-equal for both pipelines".into())
}

/// Criterion 4: `cost(PE(grad e)) <= 4 * 3^NAO(e) * cost(e)` componentwise.
pub fn cheap_gradient() -> Outcome {
    let progs = corpus();
    let mut failures = Vec::new();
    let mut total_failures = 0;
    for p in &progs {
        match check_cheap_gradient(&p.ctx, &p.term, Extensions::all()) {
            Ok(r) => {
                if !r.holds_total {
                    total_failures += 1;
                }
                if !r.holds {
                    failures.push(format!("{} exceeds {}", p.name, r.violations().join("+")));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
    }
    let mut out = Outcome::from_failures(failures, format!("{} programs within the bound", progs.len()));
    if !out.pass {
        out.detail = format!(
            "{} (scalar totals exceed the bound for {total_failures} of {} programs)",
            out.detail,
            progs.len()
        );
    }
    out
}

/// Criterion 5: linearity before partial evaluation, no closures after it,
/// and the typing rules of every transformation.
pub fn structural_properties() -> Outcome {
    let mut failures = Vec::new();
    for p in corpus() {
        let cfg = DiffConfig::new(p.ctx.clone()).with_ext(Extensions::all());
        let outer = p.ctx.extend(&cfg.cont, cfg.cont_type());
        let mut cont_args = p.ctx.types();
        cont_args.push(Type::Real);
        let d_type = Type::Prod(vec![Type::Real, Type::func(cont_args.clone(), cfg.rho.clone())]);
        match diff(&cfg, &p.term) {
            Ok(d) => {
                if typecheck_target(&outer, &d).ok() != Some(d_type.clone()) {
                    failures.push(format!("{}: D is ill-typed", p.name));
                }
                if !check_linear_continuations(&outer, &d) {
                    failures.push(format!("{}: D is not linear", p.name));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
        for m in [Method::Direct, Method::Unf] {
            let Ok(g) = gradient_with(&p.ctx, &p.term, Extensions::all(), m, OptLevel::None) else {
                failures.push(format!("{} ({}): no gradient", p.name, m.name()));
                continue;
            };
            if !check_linear_continuations(&p.ctx, &g) {
                failures.push(format!("{} ({}): raw gradient is not linear", p.name, m.name()));
            }
            match partial_evaluate(&p.ctx, &g) {
                Ok(pe) if contains_lambda(&pe) || pe.any(&|t| matches!(t, Term::Apply(..))) => {
                    failures.push(format!("{} ({}): closure survives PE", p.name, m.name()))
                }
                Ok(pe) if typecheck_target(&p.ctx, &pe).ok() != Some(p.ctx.tuple_type()) => {
                    failures.push(format!("{} ({}): PE is ill-typed", p.name, m.name()))
                }
                Ok(_) => {}
                Err(e) => failures.push(format!("{}: {e}", p.name)),
            }
        }
        let gamma = p.ctx.types();
        let rho = p.ctx.tuple_type();
        let Ok(u) = to_unf(&p.ctx, &p.term, Extensions::all()) else {
            failures.push(format!("{}: UNF failed", p.name));
            continue;
        };
        if typecheck_unf_source(&gamma, &u).ok() != Some(cont_args.clone()) {
            failures.push(format!("{}: UNF is ill-typed", p.name));
        }
        let mut input = gamma.clone();
        input.push(Type::func(gamma.clone(), rho.clone()));
        let mut output = cont_args.clone();
        output.push(Type::func(cont_args.clone(), rho.clone()));
        let Ok(du) = diff_unf(&rho, &u) else {
            failures.push(format!("{}: UNF differentiation failed", p.name));
            continue;
        };
        if typecheck_unf_target(&input, &du).ok() != Some(output) {
            failures.push(format!("{}: D(UNF) is ill-typed", p.name));
        }
        let mut xs = Context::new();
        for (i, t) in input.iter().enumerate() {
            xs.push(&format!("x{}", i + 1), t.clone());
        }
        match from_unf(&input, &du) {
            Ok(back) if typecheck_target(&xs, &back).ok() == Some(d_type) && check_linear_continuations(&xs, &back) => {}
            Ok(_) => failures.push(format!("{}: UNF inverse is ill-typed or not linear", p.name)),
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
    }
    Outcome::from_failures(failures, "linearity, closure elimination and typing hold on the corpus".into())
}

/// Criterion 6: big-step and small-step evaluation agree exactly.
pub fn small_step_fidelity() -> Outcome {
    let mut failures = Vec::new();
    for (src, vals) in UNIT_CORPUS {
        let e = parse_term(src).unwrap();
        let inputs = parse_values(vals).unwrap();
        let big = eval(&Env::from_pairs(inputs.clone()), &e);
        let (small, _) = stepper::run(&e, &inputs);
        match big {
            Ok(v) if v.bit_eq(&small) => {}
            Ok(v) => failures.push(format!("{src}: {v} vs {small}")),
            Err(e) => failures.push(format!("{src}: {e}")),
        }
    }
    Outcome::from_failures(failures, format!("{} programs agree bit for bit", UNIT_CORPUS.len()))
}

/// Criterion 7: rule soundness, bit-exact optimization and idempotence.
pub fn optimizer_soundness() -> Outcome {
    let mut failures: Vec<String> = rules().iter().filter_map(|r| rule_gen::check_rule(r).err()).collect();
    for p in corpus() {
        let env = Env::from_pairs(p.ctx.names().into_iter().zip(p.point.clone()));
        for m in [Method::Direct, Method::Unf] {
            let raw = gradient_with(&p.ctx, &p.term, Extensions::all(), m, OptLevel::None).unwrap();
            let opt = optimize(&p.ctx, &raw, OptLevel::All).unwrap();
            let same = match (eval(&env, &raw), eval(&env, &opt)) {
                (Ok(a), Ok(b)) => a.bit_eq(&b),
                _ => false,
            };
            if !same {
                failures.push(format!("{} ({}): optimize changed the value", p.name, m.name()));
            }
            if !alpha_equal(&opt, &optimize(&p.ctx, &opt, OptLevel::All).unwrap()) {
                failures.push(format!("{} ({}): optimize is not idempotent", p.name, m.name()));
            }
        }
    }
    Outcome::from_failures(
        failures,
        format!("{} rules x {} instances sound; corpus bit-exact and idempotent", rules().len(), rule_gen::INSTANCES),
    )
}

/// Criterion 8: the worked examples reproduce their goldens.
pub fn worked_examples() -> Outcome {
    let checks = goldens::check_all();
    let n = checks.len();
    let failures = checks
        .into_iter()
        .filter_map(|(name, r)| r.err().map(|e| format!("{name}: {e}")))
        .collect();
    Outcome::from_failures(failures, format!("{n} goldens reproduced"))
}
