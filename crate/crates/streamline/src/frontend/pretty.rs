//! Canonical printer for programs.
//!
//! Printing then re-parsing yields the identical core program, so passes can
//! hand programs around as text without drift. One declaration per line,
//! two-space indentation, loop invariants as `//@ invariant ...` pragmas.

use num_traits::Zero;

use crate::ast::{DeclKind, Program, Stmt};

pub fn print_program(prog: &Program) -> String {
    let mut out = String::new();
    for d in &prog.decls {
        match &d.kind {
            DeclKind::Param { min } => {
                if min.is_zero() {
                    out.push_str(&format!("param {};\n", d.name));
                } else {
                    out.push_str(&format!("param {} >= {};\n", d.name, min));
                }
            }
            DeclKind::Var(ty) => out.push_str(&format!("{ty} {};\n", d.name)),
        }
    }
    if !prog.decls.is_empty() {
        out.push('\n');
    }
    for item in prog.body.flatten() {
        print_stmt(item, 0, &mut out);
    }
    out
}

/// Renders one statement (with trailing newline) at the given indent level.
pub fn print_stmt(s: &Stmt, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Skip => {}
        Stmt::Assign { dst, expr } => out.push_str(&format!("{pad}{dst} = {expr};\n")),
        Stmt::ReadArr { dst, arr, idx } => {
            out.push_str(&format!("{pad}{dst} = {arr}[{idx}];\n"));
        }
        Stmt::WriteArr { arr, idx, src } => {
            out.push_str(&format!("{pad}{arr}[{idx}] = {src};\n"));
        }
        Stmt::ReadStream { dst, stream } => {
            out.push_str(&format!("{pad}{dst} = {stream}.read();\n"));
        }
        Stmt::WriteStream { stream, src } => {
            out.push_str(&format!("{pad}{stream}.write({src});\n"));
        }
        Stmt::Seq(a, b) => {
            print_stmt(a, indent, out);
            print_stmt(b, indent, out);
        }
        Stmt::If { .. } => {
            out.push_str(&pad);
            print_if_chain(s, indent, out);
            out.push('\n');
        }
        Stmt::For { var, init, bound, step, body, annot } => {
            if let Some(a) = annot {
                out.push_str(&format!("{pad}//@ invariant {a}\n"));
            }
            out.push_str(&format!("{pad}for ({var} = {init}; {var} != {bound}; {var} += {step}) "));
            print_block(body, indent, out);
            out.push('\n');
        }
        Stmt::Kernel(body) => {
            out.push_str(&format!("{pad}kernel "));
            print_block(body, indent, out);
            out.push('\n');
        }
    }
}

/// Renders an `if`/`else if`/`else` chain without leading pad or trailing
/// newline; nested chain links share the outer indent.
fn print_if_chain(s: &Stmt, indent: usize, out: &mut String) {
    let Stmt::If { cond, then_s, else_s } = s else {
        unreachable!("print_if_chain takes an if statement");
    };
    out.push_str(&format!("if ({cond}) "));
    print_block(then_s, indent, out);
    match &**else_s {
        Stmt::Skip => {}
        nested @ Stmt::If { .. } => {
            out.push_str(" else ");
            print_if_chain(nested, indent, out);
        }
        other => {
            out.push_str(" else ");
            print_block(other, indent, out);
        }
    }
}

/// Renders `{ ... }` without a trailing newline so callers can append
/// `else` or terminate the line themselves.
fn print_block(body: &Stmt, indent: usize, out: &mut String) {
    if *body == Stmt::Skip {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    print_stmt(body, indent + 1, out);
    out.push_str(&format!("{}}}", "  ".repeat(indent)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn roundtrip(src: &str) {
        let p1 = parse_program(src).unwrap();
        let printed = print_program(&p1);
        let p2 = parse_program(&printed).unwrap();
        assert_eq!(p1, p2, "printed form:\n{printed}");
        // Printing is a fixpoint: the reprint is byte-identical.
        assert_eq!(printed, print_program(&p2));
    }

    #[test]
    fn roundtrips_a_kernel_program() {
        roundtrip(
            "param N >= 1;\nrarr in;\nwarr out;\nint x, y0, y1, z0, z1;\n\
             for (x = 0; x != N; x += 1) { in[x] = x; }\n\
             kernel {\n\
               for (x = 0; x != N - 1; x += 1) {\n\
                 y0 = in[x]; y1 = in[x + 1]; z0 = y0 + y1; z1 = z0 / 2; out[x] = z1;\n\
               }\n\
             }",
        );
    }

    #[test]
    fn roundtrips_branches_and_annotations() {
        roundtrip(
            "param N;\nint i, j, c;\n\
             //@ invariant i <= N\n\
             for (i = 0; i != N; i += 1) {\n\
               c = i < j;\n\
               if (c) { j = j + 1; } else if (i) { j = 0; } else { j = 1; }\n\
             }",
        );
    }

    #[test]
    fn roundtrips_streams_and_empty_blocks() {
        roundtrip(
            "rarr a;\nwarr b;\nbuf t;\nint x;\n\
             kernel {\n t = a.read(); x = t; b.write(x);\n if (x) {}\n }",
        );
    }

    #[test]
    fn roundtrips_negative_steps_and_constants() {
        roundtrip(
            "param N >= 1;\nint x, y;\n\
             for (x = N - 1; x != -1; x += -1) { y = x + -2; }",
        );
    }

    #[test]
    fn prints_empty_loop_body_inline() {
        let p = parse_program("param N;\nint x;\nfor (x = 0; x != N; x += 1) {}").unwrap();
        let printed = print_program(&p);
        assert!(printed.contains("for (x = 0; x != N; x += 1) {}"));
    }
}
