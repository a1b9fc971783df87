//! Source-to-source reverse-mode differentiation for a small first-order
//! functional array language.

pub mod cost;
pub mod diff;
pub mod eval;
pub mod ext;
pub mod frontend;
pub mod gradcheck;
pub mod monoid;
pub mod ops;
pub mod opt;
pub mod term;
pub mod typecheck;
pub mod types;
pub mod unf;

pub use cost::{check_cheap_gradient, cost, nao, CheapGradientReport, CostVector};
pub use diff::{diff, gradient, gradient_with, nabla_sub, DiffConfig, DiffError, Method};
pub use eval::{eval, Env, Value};
pub use ext::Extensions;
pub use frontend::{parse_program, parse_term, print_term};
pub use gradcheck::{check_gradient, finite_diff_gradient, semantic_equiv, GradcheckReport};
pub use opt::{optimize, partial_evaluate, OptLevel};
pub use term::{alpha_equal, Name, Term};
pub use typecheck::{typecheck_source, typecheck_target, TypeError};
pub use types::{Context, Type};
pub use unf::{diff_unf, from_unf, pipeline_gradient, to_unf, Unf, UnfError};
