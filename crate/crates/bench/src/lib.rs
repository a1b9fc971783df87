//! Program generators for benchmarks: families of source programs indexed by
//! array size, with a matching evaluation point.

use adc_core::{parse_program, Context, Term, Value};

/// A benchmark program with a point to evaluate it at.
pub struct Workload {
    pub name: &'static str,
    pub ctx: Context,
    pub term: Term,
    pub point: Vec<Value>,
}

fn ramp(n: usize, scale: f64) -> Value {
    Value::reals(&(0..n).map(|i| 1.0 + scale * i as f64).collect::<Vec<_>>())
}

fn build(name: &'static str, src: String, point: Vec<Value>) -> Workload {
    let (ctx, term) = parse_program(&src).expect("generated program parses");
    Workload { name, ctx, term, point }
}

/// `prod(A)` over `real^n`.
pub fn prod(n: usize) -> Workload {
    build("prod", format!("ctx A:real^{n}; reduce * 1 A"), vec![ramp(n, 1e-3)])
}

/// `dot(A, B)` over `real^n`.
pub fn dot(n: usize) -> Workload {
    build(
        "dot",
        format!("ctx A:real^{n}, B:real^{n}; reduce + 0 (map2 * A B)"),
        vec![ramp(n, 0.5), ramp(n, -0.25)],
    )
}

/// A doubly nested `map2`, quadratic in `n`.
pub fn nested(n: usize) -> Workload {
    build(
        "nested",
        format!(
            "ctx A:real^{n}, B:real^{n}; \
             reduce + 0 (map2 (a b. reduce + 0 (map2 (c d. a * c + sin (d * b)) A B)) A B)"
        ),
        vec![ramp(n, 0.1), ramp(n, -0.1)],
    )
}

/// A straight-line chain of `k` scalar operations.
pub fn chain(k: usize) -> Workload {
    let mut body = String::from("x");
    for i in 0..k {
        body = format!("let v{i} = sin ({body}) * y + x in v{i}");
    }
    build(
        "chain",
        format!("ctx x:real, y:real; {body}"),
        vec![Value::Real(0.3), Value::Real(0.7)],
    )
}
