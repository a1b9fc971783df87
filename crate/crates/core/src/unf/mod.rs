//! Unary normal form and the gradient pipeline through it.

mod ir;
mod pipeline;

pub use ir::{print_short, typecheck_unf_source, typecheck_unf_target, PrimOp, TypeList, Unf, UnfEnv, UnfError};
pub use pipeline::{diff_unf, from_unf, nabla_sub_unf, pipeline_gradient, to_unf, weaken_tilde};
