//! Random instances of the left-hand side of every rewrite rule.

use adc_core::frontend::parse_program;
use adc_core::Context;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Instances checked per rule.
pub const INSTANCES: usize = 50;

pub fn ctx() -> Context {
    parse_program("ctx x:real, y:real, z:real, A:real^3, B:real^3; 0").unwrap().0
}

/// A random smooth scalar expression over `vars`, free of poles.
pub fn scalar(rng: &mut ChaCha8Rng, vars: &[&str], depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        return if rng.gen_bool(0.7) {
            vars[rng.gen_range(0..vars.len())].to_string()
        } else {
            format!("{}", rng.gen_range(-3i32..=3) as f64 / 2.0)
        };
    }
    match rng.gen_range(0..5) {
        0 => format!("({} + {})", scalar(rng, vars, depth - 1), scalar(rng, vars, depth - 1)),
        1 => format!("({} - {})", scalar(rng, vars, depth - 1), scalar(rng, vars, depth - 1)),
        2 => format!("({} * {})", scalar(rng, vars, depth - 1), scalar(rng, vars, depth - 1)),
        3 => format!("sin ({})", scalar(rng, vars, depth - 1)),
        _ => format!("cos ({})", scalar(rng, vars, depth - 1)),
    }
}

/// A random array of length three.
pub fn array(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => ["A", "B"][rng.gen_range(0..2)].to_string(),
        1 => format!("map (t. {}) {}", scalar(rng, &["t", "x", "y"], 2), ["A", "B"][rng.gen_range(0..2)]),
        _ => format!("map2 (u v. {}) A B", scalar(rng, &["u", "v", "z"], 2)),
    }
}

/// An instance of the rule's left-hand side.
pub fn instance(name: &str, rng: &mut ChaCha8Rng) -> String {
    let g = |rng: &mut ChaCha8Rng| scalar(rng, &["x", "y", "z"], 3);
    let gp = |rng: &mut ChaCha8Rng| scalar(rng, &["p", "x", "y"], 3);
    let gpq = |rng: &mut ChaCha8Rng| scalar(rng, &["p", "q", "x"], 3);
    let c = |rng: &mut ChaCha8Rng| format!("{}", rng.gen_range(-8i32..=8) as f64 / 4.0);
    match name {
        "beta" => format!("(fun (p: real, q: real) -> {})({}, {})", gpq(rng), g(rng), g(rng)),
        "let-var" => format!("let p = {} in {}", ["x", "y", "z"][rng.gen_range(0..3)], gp(rng)),
        "let-zero-one" => format!("let p = {} in {}", rng.gen_range(0..2), gp(rng)),
        "dead-let" => format!("let p = {} in {}", g(rng), g(rng)),
        "let-return" => format!("let p = {} in p", g(rng)),
        "inline-lambda" => format!("let f = fun (p: real) -> {} in f({}) + {}", gp(rng), g(rng), g(rng)),
        "proj-tuple" => format!("{} <{}, {}>", ["fst", "snd"][rng.gen_range(0..2)], g(rng), g(rng)),
        "let-split" => format!("let p, q = <{}, {}> in {}", g(rng), g(rng), gpq(rng)),
        "let-let" => format!("let p = (let q = {} in {}) in {}", g(rng), scalar(rng, &["q", "x"], 2), gp(rng)),
        "let-float" => format!("(let q = {} in {}) * {}", g(rng), scalar(rng, &["q", "y"], 2), g(rng)),
        "scalar-identity" => {
            let e = g(rng);
            match rng.gen_range(0..7) {
                0 => format!("{e} * 1"),
                1 => format!("1 * {e}"),
                2 => format!("0 + {e}"),
                3 => format!("{e} + 0"),
                4 => format!("{e} - 0"),
                5 => format!("{e} / 1"),
                _ => format!("0 * {e}"),
            }
        }
        "map2-zeros" => {
            let a = array(rng);
            match rng.gen_range(0..4) {
                0 => format!("map2 + (map (t. 0) A) ({a})"),
                1 => format!("map2 - ({a}) (map (t. 0) B)"),
                2 => format!("map2 * (map (t. 0) A) ({a})"),
                _ => format!("map2 * ({a}) (map (t. 0) B)"),
            }
        }
        "map2-ones" => {
            let a = array(rng);
            match rng.gen_range(0..3) {
                0 => format!("map2 * (map (t. 1) A) ({a})"),
                1 => format!("map2 * ({a}) (map (t. 1) B)"),
                _ => format!("map2 / ({a}) (map (t. 1) B)"),
            }
        }
        "map-identity" => format!("map (s. s) ({})", array(rng)),
        "reduce-units" => {
            if rng.gen_bool(0.5) {
                format!("reduce * 1 (map (t. 1) ({}))", array(rng))
            } else {
                format!("reduce + 0 (map (t. 0) ({}))", array(rng))
            }
        }
        "shift-const-map" => format!(
            "{} (map (t. {}) ({}))",
            ["shift1L", "shift1R"][rng.gen_range(0..2)],
            g(rng),
            array(rng)
        ),
        "scan-ones" => format!(
            "{} * 1 (map (t. 1) ({} ({})))",
            ["scanl", "scanr"][rng.gen_range(0..2)],
            ["shift1L", "shift1R"][rng.gen_range(0..2)],
            array(rng)
        ),
        "map2-unused-binder" => {
            if rng.gen_bool(0.5) {
                format!("map2 (p q. {}) ({}) ({})", gp(rng), array(rng), array(rng))
            } else {
                format!("map2 (p q. {}) ({}) ({})", scalar(rng, &["q", "x"], 3), array(rng), array(rng))
            }
        }
        "map2-commute" => {
            let op = ["+", "*"][rng.gen_range(0..2)];
            if rng.gen_bool(0.5) {
                format!("map2 (p q. q {op} p) ({}) ({})", array(rng), array(rng))
            } else {
                // Commuted only when the arguments are out of print order.
                format!("map2 {op} (map (t. {}) B) A", scalar(rng, &["t", "x"], 2))
            }
        }
        "map-map2-fusion" => format!(
            "map (s. {}) (map2 (p q. {}) ({}) ({}))",
            scalar(rng, &["s", "x"], 3),
            gpq(rng),
            array(rng),
            array(rng)
        ),
        "map-map-fusion" => format!("map (s. {}) (map (p. {}) ({}))", scalar(rng, &["s", "y"], 3), gp(rng), array(rng)),
        "if-same" => {
            let e = g(rng);
            format!("if gt0 ({}) then {e} else {e}", g(rng))
        }
        "if-const" => format!("if {} then {} else {}", ["true", "false"][rng.gen_range(0..2)], g(rng), g(rng)),
        "proj-if" => format!(
            "{} (if gt0 ({}) then <{}, {}> else <{}, {}>)",
            ["fst", "snd"][rng.gen_range(0..2)],
            g(rng),
            g(rng),
            g(rng),
            g(rng),
            g(rng)
        ),
        "apply-if" => format!(
            "(if gt0 ({}) then fun (p: real) -> {} else fun (p: real) -> {})({})",
            g(rng),
            gp(rng),
            gp(rng),
            c(rng)
        ),
        "let-const" => format!("let p = {} in {}", c(rng), gp(rng)),
        "const-fold" => match rng.gen_range(0..3) {
            0 => format!("{} ({})", ["sin", "cos", "exp"][rng.gen_range(0..3)], c(rng)),
            1 => format!("{} {} {}", c(rng), ["+", "-", "*"][rng.gen_range(0..3)], c(rng)),
            _ => format!("gt0 ({})", c(rng)),
        },
        "forward-array" => format!(
            "let P = map (t. {}) A in map2 * P ({})",
            scalar(rng, &["t", "y"], 2),
            array(rng)
        ),
        other => panic!("no instance generator for rule {other}"),
    }
}

/// Checks `INSTANCES` random instances of one rule for semantic equality of
/// both sides.
pub fn check_rule(r: &adc_core::opt::Rule) -> Result<(), String> {
    use adc_core::frontend::parse_term;
    use rand::SeedableRng;
    let ctx = ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(r.name.len() as u64 * 7919);
    for i in 0..INSTANCES {
        let src = instance(r.name, &mut rng);
        let lhs = parse_term(&src).map_err(|e| format!("{src}: {e}"))?;
        let rhs = r
            .apply_at_root(&ctx, &lhs)
            .ok_or_else(|| format!("rule {} did not fire on {src}", r.name))?;
        let same = adc_core::semantic_equiv(&lhs, &rhs, &ctx, 5, 1e-12, i as u64)
            .map_err(|e| format!("rule {} on {src}: {e}", r.name))?;
        if !same {
            return Err(format!("rule {} changed the meaning of {src}", r.name));
        }
    }
    Ok(())
}
