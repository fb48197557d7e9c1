//! Rewrites naïve array-based accelerator kernels into buffered,
//! stream-based form, and proves each rewrite.
//!
//! The pipeline: [`frontend`] parses and checks the little kernel language;
//! [`semantics`] gives it an executable big-step interpretation over
//! registers, arrays and streams; [`assertions`] is a restricted relational
//! assertion language connecting array programs to stream programs;
//! [`bufferpass`] plans shift-register buffers from the loop access
//! pattern; [`vcgen`] discharges the verification conditions that justify
//! each loop conversion, solving for stream index ranges by template
//! enumeration; [`translate`] orchestrates the rewrite and emits a
//! machine-checkable derivation; [`emit`] renders the result as HLS-style
//! C++; [`cli`] wraps it all in a command-line tool.

pub mod assertions;
pub mod ast;
pub mod bufferpass;
pub mod frontend;
pub mod semantics;
pub mod vcgen;

pub use ast::{Expr, Op, Program, Stmt, Ty, TypeEnv};
pub use frontend::{parse_program, typecheck};
pub use semantics::{run_source, run_target, ExecReport, Input};
