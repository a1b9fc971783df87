//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod criteria;
pub mod goldens;
pub mod rules;
pub mod stepper;

use std::path::PathBuf;

use adc_core::eval::Value;
use adc_core::frontend::{parse_program, parse_values};
use adc_core::{Context, Term};

/// One program of the committed corpus with its sample values.
pub struct Program {
    pub name: String,
    pub ctx: Context,
    pub term: Term,
    pub point: Vec<Value>,
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn load(name: &str) -> Program {
    let dir = corpus_dir();
    let src = std::fs::read_to_string(dir.join(format!("{name}.src"))).expect("corpus source");
    let (ctx, term) = parse_program(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
    let vals = std::fs::read_to_string(dir.join(format!("{name}.vals"))).expect("corpus values");
    let vals = parse_values(&vals).unwrap_or_else(|e| panic!("{name}.vals: {e}"));
    let point = ctx
        .names()
        .iter()
        .map(|n| {
            vals.iter()
                .find(|(m, _)| m == n)
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| panic!("{name}.vals lacks {n}"))
        })
        .collect();
    Program {
        name: name.to_string(),
        ctx,
        term,
        point,
    }
}

/// Every corpus program, sorted by name.
pub fn corpus() -> Vec<Program> {
    let mut names: Vec<String> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            if p.extension()? != "src" {
                return None;
            }
            Some(p.file_stem()?.to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names.iter().map(|n| load(n)).collect()
}

/// Programs paired with their inputs, covering every redex rule including the
/// empty-array edges of the shifts and the scan base cases.
pub const UNIT_CORPUS: [(&str, &str); 30] = [
    ("1 + 2 * 3", ""),
    ("sin x + cos x * exp x - log (x * x)", "x = 0.7"),
    ("x / y - y / x", "x = 1.5; y = -0.25"),
    ("let a = x * x in let b = a + x in a * b", "x = 3"),
    ("let p, q = <x, x + 1> in p * q", "x = 2"),
    ("fst <x, 2> + snd <3, x>", "x = 4"),
    ("pi3 <1, 2, x>", "x = 5"),
    ("if true then x else 0 - x", "x = 2"),
    ("if gt0 (x) then x * x else x", "x = -1.5"),
    ("map2 (a b. a * b + 1) A B", "A = [1, 2, 3]; B = [4, 5, 6]"),
    ("map2 (a b. a + b) A A", "A = []"),
    ("map (a. sin a) A", "A = [0.5, 1, 1.5]"),
    ("map (a. a) A", "A = []"),
    ("reduce + 0 A", "A = [1, 2, 3, 4]"),
    ("reduce * 1 A", "A = []"),
    ("foldl (a b. a * b - x) x A", "x = 0.5; A = [2, 3, 4]"),
    ("scanl + 0 A", "A = [1, 2, 3]"),
    ("scanl + 7 A", "A = []"),
    ("scanr * 1 A", "A = [2, 3, 4]"),
    ("scanr * 7 A", "A = []"),
    ("scanr (a b. a - b) 0 A", "A = [1, 2, 3]"),
    ("shift1L A", "A = [1, 2, 3]"),
    ("shift1L A", "A = []"),
    ("shift1R A", "A = [1, 2, 3]"),
    ("shift1R A", "A = []"),
    ("scanlp (a b. a * b) 2 A", "A = [3, 4]"),
    ("scanrp (a b. a * b) 2 A", "A = [3, 4]"),
    ("(fun (a, b) -> a * b + x)(2, 3)", "x = 1"),
    ("let f = fun (a) -> a * x in f(f(3))", "x = 2"),
    ("map2 * (scanr * 1 (shift1L A)) (shift1R (scanl * 1 A))", "A = [2, 3, 4, 5]"),
];
