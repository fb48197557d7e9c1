//! Orientation-aware type checking.
//!
//! Array orientations are declared from the kernel's point of view: `rarr a`
//! means the kernel reads `a`, so host code sees the flipped orientation and
//! may only write it. A statement is checked against the environment of the
//! region it sits in — declared orientations inside `kernel { .. }`, flipped
//! orientations outside.
//!
//! Source programs must be stream- and buffer-free; target programs may use
//! `.read()`/`.write()` and buffer registers.

use std::collections::BTreeSet;

use crate::ast::{Atom, Expr, Name, Program, Stmt, Ty, TypeEnv};
use crate::frontend::SourceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Array programs: no streams, no buffers.
    Source,
    /// Stream programs: array, stream and buffer operations.
    Target,
}

pub fn typecheck(prog: &Program, mode: Mode) -> Result<(), SourceError> {
    let mut seen = BTreeSet::new();
    for d in &prog.decls {
        if !seen.insert(&d.name) {
            return Err(SourceError::plain(format!("`{}` is declared twice", d.name)));
        }
    }
    let declared = prog.env();
    let top = declared.flip();
    for item in prog.body.flatten() {
        match item {
            Stmt::Kernel(body) => check(body, &declared, mode)?,
            other => check(other, &top, mode)?,
        }
    }
    Ok(())
}

/// What a name may stand for in a given position.
#[derive(Clone, Copy)]
enum Want {
    /// An integer value: an `int` variable or a param.
    IntLike,
    /// An assignable integer register: an `int` variable.
    IntReg,
    /// An integer or buffer value.
    IntOrBuf,
    /// An assignable integer or buffer register.
    IntOrBufReg,
    Array(Ty),
}

fn describe(t: Option<Ty>, is_param: bool) -> String {
    if is_param {
        "a param".to_string()
    } else {
        match t {
            None => "undeclared".to_string(),
            Some(Ty::Int) => "an int variable".to_string(),
            Some(Ty::Buf) => "a buffer".to_string(),
            Some(Ty::RArr) => "a read array here".to_string(),
            Some(Ty::WArr) => "a write array here".to_string(),
        }
    }
}

fn name_is(env: &TypeEnv, mode: Mode, x: &Name, want: Want) -> Result<(), SourceError> {
    let ty = env.lookup(x);
    let is_param = env.is_param(x);
    if ty.is_none() && !is_param {
        return Err(SourceError::plain(format!("`{x}` is not declared")));
    }
    if mode == Mode::Source && ty == Some(Ty::Buf) {
        return Err(SourceError::plain(format!(
            "`{x}` is a buffer; buffers may not appear in array programs"
        )));
    }
    let ok = match want {
        Want::IntLike => is_param || ty == Some(Ty::Int),
        Want::IntReg => !is_param && ty == Some(Ty::Int),
        Want::IntOrBuf => is_param || matches!(ty, Some(Ty::Int) | Some(Ty::Buf)),
        Want::IntOrBufReg => !is_param && matches!(ty, Some(Ty::Int) | Some(Ty::Buf)),
        Want::Array(o) => !is_param && ty == Some(o),
    };
    if ok {
        return Ok(());
    }
    let wanted = match want {
        Want::IntLike => "an integer value",
        Want::IntReg => "an assignable int variable",
        Want::IntOrBuf => "an integer or buffer value",
        Want::IntOrBufReg => "an assignable int variable or buffer",
        Want::Array(Ty::RArr) => "readable in this region",
        Want::Array(Ty::WArr) => "writable in this region",
        Want::Array(_) => unreachable!("array wants are orientations"),
    };
    Err(SourceError::plain(format!(
        "`{x}` is {}, but must be {wanted}",
        describe(ty, is_param)
    )))
}

fn atom_int(env: &TypeEnv, mode: Mode, a: &Atom) -> Result<(), SourceError> {
    match a {
        Atom::Const(_) => Ok(()),
        Atom::Var(x) => name_is(env, mode, x, Want::IntLike),
    }
}

fn expr_int(env: &TypeEnv, mode: Mode, e: &Expr) -> Result<(), SourceError> {
    match e {
        Expr::Atom(a) => atom_int(env, mode, a),
        Expr::Bin(_, l, r) => {
            atom_int(env, mode, l)?;
            atom_int(env, mode, r)
        }
    }
}

/// Every register name the statement can write.
fn assigned_vars(s: &Stmt) -> BTreeSet<&Name> {
    let mut out = BTreeSet::new();
    fn go<'a>(s: &'a Stmt, out: &mut BTreeSet<&'a Name>) {
        match s {
            Stmt::Assign { dst, .. }
            | Stmt::ReadArr { dst, .. }
            | Stmt::ReadStream { dst, .. } => {
                out.insert(dst);
            }
            Stmt::Seq(a, b) => {
                go(a, out);
                go(b, out);
            }
            Stmt::If { then_s, else_s, .. } => {
                go(then_s, out);
                go(else_s, out);
            }
            Stmt::For { var, body, .. } => {
                out.insert(var);
                go(body, out);
            }
            Stmt::Kernel(b) => go(b, out),
            _ => {}
        }
    }
    go(s, &mut out);
    out
}

fn check(s: &Stmt, env: &TypeEnv, mode: Mode) -> Result<(), SourceError> {
    match s {
        Stmt::Skip => Ok(()),
        Stmt::Assign { dst, expr } => {
            name_is(env, mode, dst, Want::IntOrBufReg)?;
            match expr {
                // A bare variable is a register move and may involve buffers.
                Expr::Atom(Atom::Var(x)) => name_is(env, mode, x, Want::IntOrBuf)?,
                Expr::Atom(Atom::Const(_)) => {}
                // Arithmetic works on integer values only.
                bin => {
                    expr_int(env, mode, bin)?;
                    name_is(env, mode, dst, Want::IntReg)?;
                }
            }
            Ok(())
        }
        Stmt::ReadArr { dst, arr, idx } => {
            name_is(env, mode, dst, Want::IntReg)?;
            name_is(env, mode, arr, Want::Array(Ty::RArr))?;
            expr_int(env, mode, idx)
        }
        Stmt::WriteArr { arr, idx, src } => {
            name_is(env, mode, arr, Want::Array(Ty::WArr))?;
            expr_int(env, mode, idx)?;
            name_is(env, mode, src, Want::IntLike)
        }
        Stmt::ReadStream { dst, stream } => {
            if mode == Mode::Source {
                return Err(SourceError::plain(format!(
                    "`{stream}.read()` is a stream operation; array programs may not use streams"
                )));
            }
            name_is(env, mode, dst, Want::IntOrBufReg)?;
            name_is(env, mode, stream, Want::Array(Ty::RArr))
        }
        Stmt::WriteStream { stream, src } => {
            if mode == Mode::Source {
                return Err(SourceError::plain(format!(
                    "`{stream}.write(..)` is a stream operation; array programs may not use streams"
                )));
            }
            name_is(env, mode, stream, Want::Array(Ty::WArr))?;
            name_is(env, mode, src, Want::IntOrBuf)
        }
        Stmt::Seq(a, b) => {
            check(a, env, mode)?;
            check(b, env, mode)
        }
        Stmt::If { cond, then_s, else_s } => {
            name_is(env, mode, cond, Want::IntLike)?;
            check(then_s, env, mode)?;
            check(else_s, env, mode)
        }
        Stmt::For { var, init, bound, body, .. } => {
            name_is(env, mode, var, Want::IntReg)?;
            expr_int(env, mode, init)?;
            expr_int(env, mode, bound)?;
            if assigned_vars(body).contains(var) {
                return Err(SourceError::plain(format!(
                    "loop body must not assign the loop variable `{var}`"
                )));
            }
            check(body, env, mode)
        }
        Stmt::Kernel(_) => Err(SourceError::plain(
            "kernel regions must appear at the top level of the program and must not nest"
                .to_string(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn check_src(src: &str, mode: Mode) -> Result<(), SourceError> {
        typecheck(&parse_program(src).unwrap(), mode)
    }

    #[test]
    fn orientation_flips_at_kernel_boundary() {
        // `in` is read by the kernel, written by the host.
        let good = "param N;\nrarr in;\nint x, y;\n\
                    for (x = 0; x != N; x += 1) { in[x] = x; }\n\
                    kernel { for (x = 0; x != N; x += 1) { y = in[x]; } }";
        assert!(check_src(good, Mode::Source).is_ok());

        // Host reading `in` uses the wrong orientation.
        let bad = "param N;\nrarr in;\nint x, y;\ny = in[0];\n";
        assert!(check_src(bad, Mode::Source).is_err());

        // Kernel writing `in` uses the wrong orientation.
        let bad2 = "param N;\nrarr in;\nint x;\nkernel { in[0] = x; }\n";
        assert!(check_src(bad2, Mode::Source).is_err());
    }

    #[test]
    fn source_mode_rejects_streams_and_buffers() {
        let streams = "rarr a;\nint x;\nkernel { x = a.read(); }";
        assert!(check_src(streams, Mode::Source).is_err());
        assert!(check_src(streams, Mode::Target).is_ok());

        let bufs = "buf b;\nint x;\nkernel { b = x; }";
        assert!(check_src(bufs, Mode::Source).is_err());
        assert!(check_src(bufs, Mode::Target).is_ok());
    }

    #[test]
    fn params_are_not_assignable() {
        assert!(check_src("param N;\nN = 1;", Mode::Source).is_err());
        assert!(check_src("param N;\nint x;\nx = N + 1;", Mode::Source).is_ok());
        assert!(check_src("param N;\nfor (N = 0; N != 3; N += 1) {}", Mode::Source).is_err());
    }

    #[test]
    fn arithmetic_on_buffers_is_rejected() {
        let p = "buf b;\nint x, y;\nkernel { y = b + x; }";
        assert!(check_src(p, Mode::Target).is_err());
        let mv = "buf b;\nint x, y;\nkernel { x = b; }";
        assert!(check_src(mv, Mode::Target).is_ok());
    }

    #[test]
    fn undeclared_names_are_rejected() {
        assert!(check_src("int x;\nx = y;", Mode::Source).is_err());
        assert!(check_src("int x;\nx = a[0];", Mode::Source).is_err());
    }

    #[test]
    fn duplicate_declarations_are_rejected() {
        assert!(check_src("int x;\nint x;", Mode::Source).is_err());
        assert!(check_src("param N;\nint N;", Mode::Source).is_err());
    }

    #[test]
    fn loop_variable_is_immutable_inside_body() {
        let p = "param N;\nint x;\nfor (x = 0; x != N; x += 1) { x = 0; }";
        assert!(check_src(p, Mode::Source).is_err());
        let nested = "param N;\nint x;\nfor (x = 0; x != N; x += 1) { for (x = 0; x != N; x += 1) {} }";
        assert!(check_src(nested, Mode::Source).is_err());
    }

    #[test]
    fn kernel_must_be_top_level() {
        let p = "param N;\nint x;\nfor (x = 0; x != N; x += 1) { kernel {} }";
        assert!(check_src(p, Mode::Source).is_err());
    }

    #[test]
    fn write_stream_accepts_buffer_sources() {
        let p = "warr out;\nbuf b;\nkernel { out.write(b); }";
        assert!(check_src(p, Mode::Target).is_ok());
    }
}
