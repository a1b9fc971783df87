//! `adc`: type-check, differentiate, evaluate, cost and verify programs
//! written in the source language.
//!
//! Exit codes: 0 on success, 1 on an input error, 2 when a verification or
//! the cheap-gradient bound fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adc_core::frontend::{parse_program, parse_values, SyntaxError};
use adc_core::gradcheck::{check_gradient_with, CheckConfig, DEFAULT_H};
use adc_core::typecheck::typecheck_source_ext;
use adc_core::{
    check_cheap_gradient, eval, gradient_with, print_term, semantic_equiv,
    Context, Env, Extensions, Method, OptLevel, Term,
};
use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable that overrides `--seed`.
const SEED_VAR: &str = "ADC_SEED";
/// Points and tolerance used by `grad --method both`.
const BOTH_POINTS: usize = 20;
const BOTH_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "adc", version, about = "Reverse-mode differentiation of a small array language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ExtArg {
    /// Language extensions: any of reduce-open, cond, foldl, gt0, or all.
    #[arg(long, default_value = "")]
    ext: String,
}

impl ExtArg {
    fn parse(&self) -> Result<Extensions> {
        Extensions::parse(&self.ext).map_err(|e| anyhow!(e))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Type-check a program and print its type.
    Check {
        program: PathBuf,
        #[command(flatten)]
        ext: ExtArg,
    },
    /// Print the gradient of a program.
    Grad {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Direct)]
        method: MethodArg,
        /// Optimization level: none, pe, pe+algebra or all.
        #[arg(long, alias = "rules", default_value = "all", value_parser = parse_level)]
        opt: OptLevel,
        /// Write the term to this file instead of standard output.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[command(flatten)]
        ext: ExtArg,
    },
    /// Evaluate a program on the values in a `.vals` file.
    Eval {
        program: PathBuf,
        values: PathBuf,
        #[command(flatten)]
        ext: ExtArg,
    },
    /// Report the cost of a program or of its gradient as JSON.
    Cost {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = CostOf::Grad)]
        of: CostOf,
        #[command(flatten)]
        ext: ExtArg,
    },
    /// Compare both gradient pipelines with finite differences.
    Verify {
        program: PathBuf,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_H)]
        h: f64,
        #[command(flatten)]
        ext: ExtArg,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Direct,
    Unf,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CostOf {
    Source,
    Grad,
}

fn parse_level(s: &str) -> Result<OptLevel, String> {
    OptLevel::parse(s).ok_or_else(|| format!("unknown level `{s}` (expected none, pe, pe+algebra or all)"))
}

/// What a command produced: text for standard output and whether a check
/// failed.
struct Outcome {
    text: String,
    failed: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, failed: false }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))
}

fn located(path: &Path, e: SyntaxError) -> anyhow::Error {
    anyhow!("{}:{}:{}: expected {}", path.display(), e.line, e.col, e.expected)
}

/// Parses and type-checks a program file.
fn load(path: &Path, ext: Extensions) -> Result<(Context, Term, adc_core::Type)> {
    let (ctx, term) = parse_program(&read(path)?).map_err(|e| located(path, e))?;
    let ty = typecheck_source_ext(&ctx, &term, ext).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((ctx, term, ty))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn cmd_check(path: &Path, ext: Extensions) -> Result<Outcome> {
    let (_, _, ty) = load(path, ext)?;
    Ok(Outcome::ok(ty.to_string()))
}

fn cmd_grad(path: &Path, method: MethodArg, level: OptLevel, output: Option<&Path>, ext: Extensions) -> Result<Outcome> {
    let (ctx, term, _) = load(path, ext)?;
    let grad = |m: Method| gradient_with(&ctx, &term, ext, m, level).map_err(|e| anyhow!("{}: {e}", path.display()));
    let (g, failed) = match method {
        MethodArg::Direct => (grad(Method::Direct)?, false),
        MethodArg::Unf => (grad(Method::Unf)?, false),
        MethodArg::Both => {
            let d = grad(Method::Direct)?;
            let u = grad(Method::Unf)?;
            let agree = semantic_equiv(&d, &u, &ctx, BOTH_POINTS, BOTH_TOL, seed_override()?.unwrap_or(0))?;
            if !agree {
                eprintln!("{}: the direct and UNF gradients disagree", path.display());
            }
            (d, !agree)
        }
    };
    let text = print_term(&g);
    match output {
        Some(out) => {
            std::fs::write(out, format!("{text}\n")).with_context(|| format!("{}: cannot write", out.display()))?;
            Ok(Outcome { text: String::new(), failed })
        }
        None => Ok(Outcome { text, failed }),
    }
}

fn cmd_eval(path: &Path, values: &Path, ext: Extensions) -> Result<Outcome> {
    let (ctx, term, _) = load(path, ext)?;
    let vals = parse_values(&read(values)?).map_err(|e| located(values, e))?;
    let mut point = Vec::with_capacity(ctx.len());
    for (name, ty) in ctx.entries() {
        let v = vals
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| anyhow!("{}: no value for `{name}`", values.display()))?;
        if !v.has_type(ty) {
            bail!("{}: `{name}` = {v} is not of type {ty}", values.display());
        }
        point.push(v);
    }
    let env = Env::from_context(&ctx, &point)?;
    let v = eval(&env, &term).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(Outcome::ok(v.to_string()))
}

/// The `cost` report: the costed term's vector, the nesting depth and the
/// cheap-gradient comparison.
#[derive(Serialize)]
struct CostReport {
    of: &'static str,
    moves: u64,
    adds: u64,
    mults: u64,
    nlops: u64,
    p: usize,
    factor: u64,
    source: [u64; 4],
    grad: [u64; 4],
    bound: [u64; 4],
    holds: bool,
    violations: Vec<&'static str>,
    total_grad: u64,
    total_bound: u64,
    holds_total: bool,
}

fn cmd_cost(path: &Path, of: CostOf, ext: Extensions) -> Result<Outcome> {
    let (ctx, term, _) = load(path, ext)?;
    let at = |e: &dyn std::fmt::Display| anyhow!("{}: {e}", path.display());
    let r = check_cheap_gradient(&ctx, &term, ext).map_err(|e| at(&e))?;
    let costed = match of {
        CostOf::Source => r.source,
        CostOf::Grad => r.cost_grad().as_array(),
    };
    let report = CostReport {
        of: match of {
            CostOf::Source => "source",
            CostOf::Grad => "grad",
        },
        moves: costed[0],
        adds: costed[1],
        mults: costed[2],
        nlops: costed[3],
        p: r.p,
        factor: r.factor,
        source: r.source,
        grad: r.cost_grad().as_array(),
        bound: r.bound,
        holds: r.holds,
        violations: r.violations(),
        total_grad: r.total_grad,
        total_bound: r.total_bound,
        holds_total: r.holds_total,
    };
    Ok(Outcome {
        text: json(&report)?,
        failed: of == CostOf::Grad && !r.holds,
    })
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_VAR}={s} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

fn cmd_verify(path: &Path, points: usize, seed: u64, h: f64, ext: Extensions) -> Result<Outcome> {
    if !(h > 0.0 && h.is_finite()) {
        bail!("--h must be positive, found {h}");
    }
    let (ctx, term, _) = load(path, ext)?;
    let cfg = CheckConfig {
        points,
        seed: seed_override()?.unwrap_or(seed),
        h,
        ext,
        level: OptLevel::All,
    };
    let report = check_gradient_with(&ctx, &term, &cfg).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    #[derive(Serialize)]
    struct Verify<'a> {
        program: String,
        #[serde(flatten)]
        report: &'a adc_core::GradcheckReport,
    }
    let text = json(&Verify {
        program: path.display().to_string(),
        report: &report,
    })?;
    Ok(Outcome {
        text,
        failed: !report.pass,
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Check { program, ext } => cmd_check(&program, ext.parse()?),
        Command::Grad {
            program,
            method,
            opt,
            output,
            ext,
        } => cmd_grad(&program, method, opt, output.as_deref(), ext.parse()?),
        Command::Eval { program, values, ext } => cmd_eval(&program, &values, ext.parse()?),
        Command::Cost { program, of, ext } => cmd_cost(&program, of, ext.parse()?),
        Command::Verify {
            program,
            points,
            seed,
            h,
            ext,
        } => cmd_verify(&program, points, seed, h, ext.parse()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            // A closed pipe on stdout is not an error of the command.
            if !out.text.is_empty() {
                let _ = writeln!(std::io::stdout().lock(), "{}", out.text);
            }
            if out.failed {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
