//! Surface syntax: lexing, parsing, inlining, lowering, type checking and
//! printing.
//!
//! [`parse_program`] runs the full pipeline from text to the flat core AST;
//! [`typecheck`] validates a core program against the array / stream typing
//! discipline of its mode.

mod inline;
mod lexer;
mod normalize;
mod parser;
mod pretty;
mod raw;
mod typecheck;

pub use inline::NameGen;
pub use pretty::{print_program, print_stmt};
pub use typecheck::{typecheck, Mode};

use thiserror::Error;

use crate::ast::{Program, Stmt};

/// A frontend failure, with a source position when one is known.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub struct SourceError {
    pub line: Option<(usize, usize)>,
    pub msg: String,
}

impl SourceError {
    pub fn at(line: usize, col: usize, msg: impl Into<String>) -> SourceError {
        SourceError { line: Some((line, col)), msg: msg.into() }
    }

    pub fn plain(msg: impl Into<String>) -> SourceError {
        SourceError { line: None, msg: msg.into() }
    }
}

impl std::fmt::Display for SourceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some((l, c)) => write!(f, "line {l}, column {c}: {}", self.msg),
            None => write!(f, "{}", self.msg),
        }
    }
}

/// Text to core AST: lex, parse, inline calls, lower expressions, normalize
/// statement shape, and canonicalize loop-invariant annotations.
pub fn parse_program(src: &str) -> Result<Program, SourceError> {
    let tokens = lexer::lex(src)?;
    let parsed = parser::parse(&tokens)?;
    let mut gen = NameGen::new(
        parsed
            .decls
            .iter()
            .map(|d| d.name.clone())
            .chain(parsed.fns.iter().flat_map(|f| {
                std::iter::once(f.name.clone())
                    .chain(f.formals.iter().cloned())
                    .chain(f.locals.iter().map(|d| d.name.clone()))
            })),
    );
    let inlined = inline::inline(parsed, &mut gen)?;
    let (decls, body) = normalize::lower(&inlined, &mut gen)?;
    let body = canonicalize_annotations(&body)?;
    Ok(Program { decls, body })
}

/// Parses each `//@ invariant` annotation and re-prints it in canonical
/// form, so annotation text compares structurally downstream.
fn canonicalize_annotations(s: &Stmt) -> Result<Stmt, SourceError> {
    Ok(match s {
        Stmt::Seq(a, b) => Stmt::Seq(
            Box::new(canonicalize_annotations(a)?),
            Box::new(canonicalize_annotations(b)?),
        ),
        Stmt::If { cond, then_s, else_s } => Stmt::If {
            cond: cond.clone(),
            then_s: Box::new(canonicalize_annotations(then_s)?),
            else_s: Box::new(canonicalize_annotations(else_s)?),
        },
        Stmt::For { var, init, bound, step, body, annot } => {
            let annot = match annot {
                None => None,
                Some(text) => {
                    let f = crate::assertions::text::parse_formula(text).map_err(|e| {
                        SourceError::plain(format!("invalid loop invariant `{text}`: {e}"))
                    })?;
                    Some(crate::assertions::text::print_formula(&f.normalize()))
                }
            };
            Stmt::For {
                var: var.clone(),
                init: init.clone(),
                bound: bound.clone(),
                step: step.clone(),
                body: Box::new(canonicalize_annotations(body)?),
                annot,
            }
        }
        Stmt::Kernel(b) => Stmt::Kernel(Box::new(canonicalize_annotations(b)?)),
        leaf => leaf.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{DeclKind, Ty};

    #[test]
    fn parse_program_runs_the_full_pipeline() {
        let p = parse_program(
            "param N >= 1;\nrarr in;\nint x, y;\n\
             fn touch(v) { int t; t = v + 1; v = t; }\n\
             for (x = 0; x != N; x += 1) { in[x] = 2 * x + 1; touch(y); }\n",
        )
        .unwrap();
        // Function is gone, its local and the expression temp are declared.
        assert!(p.decls.iter().any(|d| d.name == "t_0"));
        assert!(p.decls.iter().any(|d| d.name == "_t0"
            && d.kind == DeclKind::Var(Ty::Int)));
        assert!(!crate::frontend::print_program(&p).contains("touch"));
    }

    #[test]
    fn invariant_text_is_canonicalized() {
        let p = parse_program(
            "param N;\nint x;\n//@ invariant x<=N&&true\nfor (x = 0; x != N; x += 1) {}\n",
        )
        .unwrap();
        let Stmt::For { annot, .. } = p.body.flatten()[0] else { panic!() };
        assert_eq!(annot.as_deref(), Some("x <= N"));
    }

    #[test]
    fn bad_invariant_text_is_a_parse_error() {
        let err = parse_program(
            "param N;\nint x;\n//@ invariant x <=\nfor (x = 0; x != N; x += 1) {}\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("invalid loop invariant"));
    }
}
