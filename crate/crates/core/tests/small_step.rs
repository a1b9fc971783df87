//! The big-step evaluator agrees exactly with the small-step stepper.

mod common;

use adc_core::eval::{eval, Env, Value};
use adc_core::frontend::{parse_term, parse_values};

use common::UNIT_CORPUS;


fn env_of(vals: &str) -> Vec<(String, Value)> {
    parse_values(vals).unwrap()
}

#[test]
fn unit_corpus_agrees_exactly() {
    for (src, vals) in UNIT_CORPUS {
        let e = parse_term(src).unwrap();
        let inputs = env_of(vals);
        let big = eval(&Env::from_pairs(inputs.clone()), &e).unwrap();
        let (small, steps) = common::stepper::run(&e, &inputs);
        assert!(steps > 0, "{src}");
        assert!(big.bit_eq(&small), "{src}: big-step {big} vs small-step {small}");
    }
}

#[test]
fn edge_rules_have_the_stated_results() {
    let check = |src: &str, vals: &str, want: &str| {
        let (v, _) = common::stepper::run(&parse_term(src).unwrap(), &env_of(vals));
        assert_eq!(v.to_string(), want, "{src}");
    };
    check("shift1L A", "A = []", "[]");
    check("shift1R A", "A = []", "[]");
    check("scanl + 7 A", "A = []", "[7]");
    check("scanr + 7 A", "A = []", "[7]");
    check("scanl + 0 A", "A = [1, 2, 3]", "[0, 1, 3, 6]");
    check("scanr * 1 A", "A = [2, 3, 4]", "[24, 12, 4, 1]");
}

#[test]
fn committed_corpus_and_its_gradients_agree() {
    use adc_core::{gradient_with, Extensions, Method, OptLevel};
    for p in common::corpus() {
        let inputs: Vec<_> = p.ctx.names().into_iter().zip(p.point.clone()).collect();
        let big = eval(&Env::from_pairs(inputs.clone()), &p.term).unwrap();
        let (small, _) = common::stepper::run(&p.term, &inputs);
        assert!(big.bit_eq(&small), "{}", p.name);
        for m in [Method::Direct, Method::Unf] {
            let g = gradient_with(&p.ctx, &p.term, Extensions::all(), m, OptLevel::None).unwrap();
            let big = eval(&Env::from_pairs(inputs.clone()), &g).unwrap();
            let (small, _) = common::stepper::run(&g, &inputs);
            assert!(big.bit_eq(&small), "{} {:?}", p.name, m);
        }
    }
}
