//! Gradient values, the finite-difference oracle and the reverse macro on
//! small programs.

mod common;

use adc_core::eval::eval_gradient_entry;
use adc_core::gradcheck::{check_gradient_with, CheckConfig};
use adc_core::opt::check_linear_continuations;
use adc_core::*;

fn real(x: f64) -> Value {
    Value::Real(x)
}

fn grad_at(src: &str, point: &[Value], method: Method) -> Vec<Value> {
    let (ctx, e) = parse_program(src).unwrap();
    let g = gradient_with(&ctx, &e, Extensions::all(), method, OptLevel::All).unwrap();
    eval_gradient_entry(&ctx, &g, point).unwrap()
}

#[test]
fn intro_gradient_at_3_5_7() {
    for m in [Method::Direct, Method::Unf] {
        let g = grad_at(
            "ctx x1:real, x2:real, x3:real; let w1 = x1*x2 in let w2 = w1*x1 in w2",
            &[real(3.0), real(5.0), real(7.0)],
            m,
        );
        assert_eq!(g, vec![real(30.0), real(9.0), real(0.0)]);
    }
}

#[test]
fn prod_and_sum_gradients() {
    for m in [Method::Direct, Method::Unf] {
        let g = grad_at("ctx A:real^3; reduce (x y. x*y) 1 A", &[Value::reals(&[2.0, 3.0, 4.0])], m);
        assert_eq!(g, vec![Value::reals(&[12.0, 8.0, 6.0])]);
        let g = grad_at("ctx A:real^3; reduce + 0 A", &[Value::reals(&[1.0, 9.0, 4.0])], m);
        assert_eq!(g, vec![Value::reals(&[1.0, 1.0, 1.0])]);
    }
}

#[test]
fn constant_program_has_zero_gradient() {
    for m in [Method::Direct, Method::Unf] {
        let g = grad_at("ctx x:real, A:real^2; 3", &[real(1.5), Value::reals(&[1.0, 2.0])], m);
        assert_eq!(g, vec![real(0.0), Value::reals(&[0.0, 0.0])]);
    }
}

#[test]
fn finite_differences_of_prod() {
    let (ctx, e) = parse_program("ctx A:real^3; reduce (x y. x*y) 1 A").unwrap();
    let g = finite_diff_gradient(&ctx, &e, &[Value::reals(&[2.0, 3.0, 4.0])], 1e-4).unwrap();
    let mut flat = Vec::new();
    g[0].flatten(&mut flat);
    for (a, b) in flat.iter().zip([12.0, 8.0, 6.0]) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn finite_differences_of_constant() {
    let (ctx, e) = parse_program("ctx x:real, y:real; 2.5").unwrap();
    let g = finite_diff_gradient(&ctx, &e, &[real(0.3), real(-1.0)], 1e-4).unwrap();
    assert_eq!(g, vec![real(0.0), real(0.0)]);
}

#[test]
fn variable_clause_injects_at_position() {
    let ctx = parse_program("ctx x1:real, x2:real; 0").unwrap().0;
    let d = diff(&DiffConfig::new(ctx), &parse_term("x2").unwrap()).unwrap();
    let want = parse_term("<x2, fun (y1: real, y2: real, z: real) -> Y(y1, y2 + z)>").unwrap();
    assert!(alpha_equal(&d, &want), "{}", print_term(&d));
}

#[test]
fn sub_gradients_of_a_bilinear_form() {
    let (ctx, e) = parse_program("ctx x:real, y:real; x * y").unwrap();
    for m in [Method::Direct, Method::Unf] {
        let sub = |names: &[&str]| {
            let names: Vec<Name> = names.iter().map(|s| s.to_string()).collect();
            let g = nabla_sub(&ctx, &names, &e, Extensions::none(), m).unwrap();
            optimize(&ctx, &g, OptLevel::All).unwrap()
        };
        assert!(alpha_equal(&sub(&["x"]), &parse_term("y").unwrap()));
        assert!(alpha_equal(&sub(&["y"]), &parse_term("x").unwrap()));
        assert!(alpha_equal(&sub(&["x", "y"]), &parse_term("<y, x>").unwrap()));
    }
}

#[test]
fn unknown_subset_variable_is_rejected() {
    let (ctx, e) = parse_program("ctx x:real; x").unwrap();
    let r = nabla_sub(&ctx, &["q".to_string()], &e, Extensions::none(), Method::Direct);
    assert!(matches!(r, Err(DiffError::UnknownVariable(_))));
}

#[test]
fn dot_gradient_is_b_exactly() {
    let p = common::load("dot");
    let r = check_gradient_with(&p.ctx, &p.term, &CheckConfig::default()).unwrap();
    assert!(r.pass);
    for m in [Method::Direct, Method::Unf] {
        let g = nabla_sub(&p.ctx, &["A".to_string()], &p.term, Extensions::all(), m).unwrap();
        let env = Env::from_context(&p.ctx, &p.point).unwrap();
        assert!(eval(&env, &g).unwrap().bit_eq(&p.point[1]));
    }
}

#[test]
fn intro_passes_the_check() {
    let p = common::load("intro");
    assert!(check_gradient(&p.ctx, &p.term, 20, 0).unwrap().pass);
}

#[test]
fn pass_status_is_stable_across_step_sizes() {
    for p in common::corpus() {
        for h in [1e-3, 1e-4, 1e-5] {
            let cfg = CheckConfig { h, ..CheckConfig::default() };
            let r = check_gradient_with(&p.ctx, &p.term, &cfg).unwrap();
            assert!(r.pass, "{} fails at h = {h}: {:.2e}", p.name, r.max_rel_err);
        }
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    for name in ["prod", "div_log", "nested_map2"] {
        let p = common::load(name);
        let a = check_gradient(&p.ctx, &p.term, 10, 42).unwrap();
        let b = check_gradient(&p.ctx, &p.term, 10, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, check_gradient(&p.ctx, &p.term, 10, 43).unwrap());
    }
}

#[test]
fn semantic_equiv_separates_sum_and_product() {
    let ctx = parse_program("ctx x:real, y:real; 0").unwrap().0;
    let s = parse_term("x + y").unwrap();
    let m = parse_term("x * y").unwrap();
    assert!(!semantic_equiv(&s, &m, &ctx, 10, 1e-9, 0).unwrap());
    assert!(semantic_equiv(&s, &parse_term("y + x").unwrap(), &ctx, 10, 0.0, 0).unwrap());
}

#[test]
fn optimized_gradient_equals_raw_at_tolerance_zero() {
    for p in common::corpus() {
        let g = gradient(&p.ctx, &p.term, Extensions::all()).unwrap();
        let o = optimize(&p.ctx, &g, OptLevel::All).unwrap();
        assert!(semantic_equiv(&o, &g, &p.ctx, 5, 0.0, 1).unwrap(), "{}", p.name);
    }
}

#[test]
fn hat_add_with_zero_is_identity() {
    use adc_core::monoid::{hat_add, zero_like};
    for p in common::corpus() {
        let env = Env::from_context(&p.ctx, &p.point).unwrap();
        for (name, t) in p.ctx.entries() {
            let v = Term::var(name);
            let sum = hat_add(t, v.clone(), zero_like(t, &v));
            assert!(eval(&env, &sum).unwrap().bit_eq(env.lookup(name).unwrap()), "{name} in {}", p.name);
        }
    }
}

#[test]
fn random_programs_differentiate_linearly_and_well_typed() {
    use rand::{Rng, SeedableRng};
    let ctx = parse_program("ctx x:real, y:real, A:real^3, B:real^3; 0").unwrap().0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    fn scalar(rng: &mut impl Rng, depth: u32) -> String {
        let leaf = ["x", "y", "2", "0.5"];
        if depth == 0 {
            return leaf[rng.gen_range(0..leaf.len())].to_string();
        }
        let a = scalar(rng, depth - 1);
        let b = scalar(rng, depth - 1);
        match rng.gen_range(0..7) {
            0 => format!("({a} + {b})"),
            1 => format!("({a} * {b})"),
            2 => format!("sin ({a})"),
            3 => format!("(let v{depth} = {a} in v{depth} * {b})"),
            4 => format!("fst <{a}, {b}>"),
            5 => format!("reduce + 0 (map2 (p q. p * q - {}) A B)", leaf[rng.gen_range(2..4)]),
            _ => format!("reduce * 1 A - {a}"),
        }
    }
    for _ in 0..200 {
        let e = parse_term(&scalar(&mut rng, 3)).unwrap();
        let cfg = DiffConfig::new(ctx.clone());
        let d = diff(&cfg, &e).unwrap();
        let outer = ctx.extend(&cfg.cont, cfg.cont_type());
        let mut args = ctx.types();
        args.push(Type::Real);
        let want = Type::Prod(vec![Type::Real, Type::func(args, cfg.rho.clone())]);
        assert_eq!(typecheck_target(&outer, &d).unwrap(), want, "{}", print_term(&e));
        assert!(check_linear_continuations(&outer, &d), "{}", print_term(&e));
    }
}

#[test]
fn sampled_points_keep_away_from_poles() {
    use adc_core::gradcheck::{sample_points, DOMAIN_GUARD};
    let (ctx, e) = parse_program("ctx x:real, y:real; x / y + log (x * x)").unwrap();
    let points = sample_points(&ctx, &e, 200, 3).unwrap();
    assert_eq!(points.len(), 200);
    for p in &points {
        let (x, y) = (p[0].as_real().unwrap(), p[1].as_real().unwrap());
        assert!(y.abs() >= DOMAIN_GUARD && x * x >= DOMAIN_GUARD, "{x}, {y}");
    }
    assert!(check_gradient(&ctx, &e, 20, 0).unwrap().pass);
}
