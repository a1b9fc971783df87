//! Worked-example goldens: each check compares a transformation output with a
//! committed golden file.

use adc_core::diff::DiffConfig;
use adc_core::frontend::parse_term;
use adc_core::ops::Op1;
use adc_core::term::count_occurrences;
use adc_core::unf::{print_short, PrimOp};
use adc_core::*;

use super::{golden_dir, load};

pub fn read(name: &str) -> String {
    std::fs::read_to_string(golden_dir().join(format!("{name}.golden")))
        .unwrap_or_else(|e| panic!("golden {name}: {e}"))
}

fn golden_term(name: &str) -> Term {
    parse_term(&read(name)).unwrap_or_else(|e| panic!("golden {name}: {e}"))
}

fn expect_alpha(what: &str, got: &Term, want: &Term) -> Result<(), String> {
    if alpha_equal(got, want) {
        Ok(())
    } else {
        Err(format!("{what}: got {}, want {}", print_term(got), print_term(want)))
    }
}

fn d_of(name: &str) -> (Context, Term) {
    let p = load(name);
    let cfg = DiffConfig::new(p.ctx.clone()).with_ext(Extensions::all());
    let d = diff(&cfg, &p.term).unwrap();
    (p.ctx.extend(&cfg.cont, cfg.cont_type()), d)
}

/// The continuation of the intro term after partial evaluation in its
/// hand-written form, with two slips repaired: the undefined `y4` is the
/// zero cotangent of the `w1` slot and `y'` is `y1'`.
const INTRO_PE_DISPLAY: &str = "let w1 = x1 * x2 in let w2 = w1 * x1 in \
    <w2, fun (y1: real, y2: real, y3: real, z: real) -> let y1' = y1 + w1 * z in let z' = 0 + x1 * z in \
    Y(y1' + x2 * z', y2 + x1 * z', y3)>";

/// `<fst T, (snd T)(r1, ..., rk)>` with `Y` bound to the identity on `k - 1`
/// reals, so that continuation terms can be compared by evaluation.
fn observe(t: &Term, k: usize) -> Term {
    let ps: Vec<(Name, Type)> = (1..k).map(|i| (format!("a{i}"), Type::Real)).collect();
    let id = Term::lambda(ps.clone(), Term::tuple(ps.iter().map(|(n, _)| Term::var(n)).collect()));
    let args = (1..=k).map(|i| Term::var(&format!("r{i}"))).collect();
    Term::let1(
        "Y",
        id,
        Term::let1(
            "T",
            t.clone(),
            Term::pair(Term::proj(1, Term::var("T")), Term::apply(Term::proj(2, Term::var("T")), args)),
        ),
    )
}

/// Two primal lets, then a pair whose continuation calls `Y` exactly once.
fn intro_pe_shape(t: &Term) -> Result<(), String> {
    let bad = || Err(format!("unexpected shape: {}", print_term(t)));
    let Term::Let(w1, e1, rest) = t else { return bad() };
    let Term::Let(w2, e2, pair) = &**rest else { return bad() };
    if w1.len() != 1 || w2.len() != 1 || !matches!(**e1, Term::Op2(..)) || !matches!(**e2, Term::Op2(..)) {
        return bad();
    }
    let Term::Tuple(parts) = &**pair else { return bad() };
    match parts.as_slice() {
        [Term::Var(v), Term::Lambda(ps, body)] if *v == w2[0] && ps.len() == 4 => {
            let applies = {
                let mut n = 0;
                fn walk(e: &Term, n: &mut usize) {
                    if matches!(e, Term::Apply(..)) {
                        *n += 1;
                    }
                    e.for_each_child(&mut |c| walk(c, n));
                }
                walk(body, &mut n);
                n
            };
            if count_occurrences(body, "Y") == 1 && applies == 1 {
                Ok(())
            } else {
                bad()
            }
        }
        _ => bad(),
    }
}

fn intro_pe() -> Result<(), String> {
    let (outer, d) = d_of("intro");
    let pe = partial_evaluate(&outer, &d).map_err(|e| e.to_string())?;
    expect_alpha("intro PE", &pe, &golden_term("intro_pe"))?;
    intro_pe_shape(&pe)?;
    let display = parse_term(INTRO_PE_DISPLAY).unwrap();
    let ctx = parse_program_ctx("ctx x1:real, x2:real, x3:real, r1:real, r2:real, r3:real, r4:real");
    if semantic_equiv(&observe(&pe, 4), &observe(&display, 4), &ctx, 20, 1e-12, 0).map_err(|e| e.to_string())? {
        Ok(())
    } else {
        Err("intro PE disagrees with the displayed continuation".into())
    }
}

fn parse_program_ctx(header: &str) -> Context {
    adc_core::parse_program(&format!("{header}; 0")).unwrap().0
}

/// The differentiated UNF term of `cos ; pair`, built from the display.
fn cos_pair_display() -> Unf {
    let r = || Type::Real;
    let rho = Type::Abstract("rho".into());
    let k = |n: usize| Type::func(vec![Type::Real; n], rho.clone());
    let cos = Unf::Op { t: vec![r(), r()], args: vec![r()], op: PrimOp::Op1(Op1::Cos) };
    let pair = Unf::Pair { t: vec![r(), r()], a: r(), b: r() };
    let step = |n: usize, p: Unf| {
        Unf::pair_term(
            Unf::seq(Unf::Proj { t1: vec![r(); n], t2: vec![k(n)], t3: vec![] }, p.clone()),
            Unf::compose(
                Unf::Proj { t1: vec![], t2: vec![r(); n], t3: vec![k(n)] },
                Unf::seq(Unf::Proj { t1: vec![r(); n], t2: vec![k(n)], t3: vec![] }, Unf::jt(p)),
            ),
        )
    };
    Unf::seq(step(3, cos), step(4, pair))
}

fn cos_pair() -> Result<(), String> {
    let r = || Type::Real;
    let e = Unf::seq(
        Unf::Op { t: vec![r(), r()], args: vec![r()], op: PrimOp::Op1(Op1::Cos) },
        Unf::Pair { t: vec![r(), r()], a: r(), b: r() },
    );
    let d = diff_unf(&Type::Abstract("rho".into()), &e).map_err(|e| e.to_string())?;
    if d != cos_pair_display() {
        return Err(format!("UNF term differs from the display: {d}"));
    }
    if d.to_string() != read("cos_pair_unf").trim_end() {
        return Err(format!("UNF print differs from the golden: {d}"));
    }
    if print_short(&d) != "<proj;cos, proj ∘ (proj;JTcos)> ; <proj;pair, proj ∘ (proj;JTpair)>" {
        return Err(format!("short print: {}", print_short(&d)));
    }
    Ok(())
}

fn optimized(name: &str, method: Method) -> (Context, Term) {
    let p = load(name);
    let g = gradient_with(&p.ctx, &p.term, Extensions::all(), method, OptLevel::All).unwrap();
    (p.ctx, g)
}

fn intro_opt_all() -> Result<(), String> {
    let want = golden_term("intro_opt_all");
    for m in [Method::Direct, Method::Unf] {
        expect_alpha(&format!("intro --opt all ({})", m.name()), &optimized("intro", m).1, &want)?;
    }
    // The displayed form keeps the dead `w2`; partial evaluation drops it.
    let p = load("intro");
    let display = parse_term("let w1 = x1 * x2 in let w2 = w1 * x1 in <w1 + x2 * x1, x1 * x1, 0>").unwrap();
    let pe = optimize(&p.ctx, &display, OptLevel::Pe).unwrap();
    expect_alpha("intro display after PE", &pe, &want)
}

/// Every golden check with its outcome.
pub fn check_all() -> Vec<(&'static str, Result<(), String>)> {
    let expansion = |name: &str, golden: &str| {
        let (_, d) = d_of(name);
        expect_alpha(&format!("D({name})"), &d, &golden_term(golden))
    };
    let pe = |name: &str, golden: &str| {
        let (outer, d) = d_of(name);
        let pe = partial_evaluate(&outer, &d).map_err(|e| e.to_string())?;
        expect_alpha(&format!("PE(D({name}))"), &pe, &golden_term(golden))
    };
    let grad = |name: &str, golden: &str| {
        for m in [Method::Direct, Method::Unf] {
            expect_alpha(&format!("grad {name} ({})", m.name()), &optimized(name, m).1, &golden_term(golden))?;
        }
        Ok(())
    };
    vec![
        ("intro expansion", expansion("intro", "intro_expansion")),
        ("prod expansion", expansion("prod", "prod_expansion")),
        ("intro partial evaluation", intro_pe()),
        ("prod partial evaluation", pe("prod", "prod_pe")),
        ("intro fully optimized", intro_opt_all()),
        ("sum gradient", grad("sum", "sum_grad")),
        ("prod gradient", grad("prod", "prod_grad")),
        ("cos;pair UNF", cos_pair()),
    ]
}
