//! Parsing, printing and binder handling on random and committed programs.

mod common;

use adc_core::term::{substitute, uniquify, NameSupply};
use adc_core::*;
use proptest::prelude::*;

/// Well-typed real terms over `x, y : real` and `A, B : real^3`.
fn arb_term() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("2".to_string()),
        Just("0.25".to_string())
    ];
    leaf.prop_recursive(4, 48, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b}) * {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / ({b})")),
            inner.clone().prop_map(|a| format!("cos ({a})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("(let v = {a} in v * ({b}))")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("snd <{a}, {b}>")),
            inner.clone().prop_map(|a| format!("(reduce + ({a}) (map2 (p q. p * q + 1) A B))")),
            (inner.clone(), inner.clone(), inner)
                .prop_map(|(a, b, c)| format!("(if true then {a} else fst <{b}, {c}>)")),
        ]
    })
}

fn ctx() -> Context {
    parse_program("ctx x:real, y:real, A:real^3, B:real^3; 0").unwrap().0
}

proptest! {
    #[test]
    fn parse_print_round_trip(src in arb_term()) {
        let e = parse_term(&src).unwrap();
        let printed = print_term(&e);
        prop_assert_eq!(&parse_term(&printed).unwrap(), &e);
        prop_assert_eq!(print_term(&parse_term(&printed).unwrap()), printed);
    }

    #[test]
    fn renaming_bound_variables_preserves_alpha_equality(src in arb_term()) {
        let e = parse_term(&src).unwrap();
        let mut supply = NameSupply::avoiding([&e], &ctx().names());
        let renamed = uniquify(&e, &ctx().names(), &mut supply);
        prop_assert!(alpha_equal(&e, &renamed));
        prop_assert!(alpha_equal(&renamed, &e));
    }

    #[test]
    fn substitution_preserves_types(src in arb_term(), v in arb_term()) {
        let e = parse_term(&src).unwrap();
        let v = parse_term(&v).unwrap();
        let want = typecheck_source_with_ext(&e);
        prop_assert_eq!(typecheck_source_with_ext(&substitute(&e, "x", &v)), want);
    }
}

fn typecheck_source_with_ext(e: &Term) -> Type {
    adc_core::typecheck::typecheck_source_ext(&ctx(), e, Extensions::all()).unwrap()
}

#[test]
fn committed_programs_round_trip() {
    for p in common::corpus() {
        let printed = print_term(&p.term);
        assert_eq!(parse_term(&printed).unwrap(), p.term, "{}", p.name);
    }
    for (src, _) in common::UNIT_CORPUS {
        let e = parse_term(src).unwrap();
        assert_eq!(parse_term(&print_term(&e)).unwrap(), e, "{src}");
    }
}

#[test]
fn distinct_corpus_programs_print_distinctly() {
    let progs = common::corpus();
    for (i, a) in progs.iter().enumerate() {
        for b in &progs[i + 1..] {
            if !alpha_equal(&a.term, &b.term) {
                assert_ne!(print_term(&a.term), print_term(&b.term), "{} vs {}", a.name, b.name);
            }
        }
    }
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_program("ctx x:real;\nx + * 2").unwrap_err().to_string();
    assert!(err.contains('2'), "{err}");
    assert!(parse_program("ctx ;").is_err());
    assert!(parse_program("ctx x:real; [1, 2]").is_err());
}
