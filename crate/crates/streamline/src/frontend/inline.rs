//! Function inlining.
//!
//! Functions are call-by-name macros over variables: each call site splices
//! a copy of the body with formals renamed to the actual argument names and
//! locals renamed to fresh program-level declarations. Calls may nest;
//! recursion (direct or mutual) is rejected.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Decl, DeclKind, Name};
use crate::frontend::raw::{RawFn, RawProgram, RawStmt, Renaming};
use crate::frontend::SourceError;

/// Generates names that collide with nothing seen so far.
#[derive(Debug, Default)]
pub struct NameGen {
    used: BTreeSet<Name>,
}

impl NameGen {
    pub fn new<I: IntoIterator<Item = Name>>(used: I) -> NameGen {
        NameGen { used: used.into_iter().collect() }
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn fresh(&mut self, stem: &str) -> Name {
        for i in 0.. {
            let cand = format!("{stem}{i}");
            if self.used.insert(cand.clone()) {
                return cand;
            }
        }
        unreachable!("name space is unbounded");
    }
}

/// Replaces every call with the callee's body. New declarations created for
/// function locals are appended to the program's declaration list.
pub fn inline(prog: RawProgram, gen: &mut NameGen) -> Result<RawProgram, SourceError> {
    let mut fns: BTreeMap<Name, RawFn> = BTreeMap::new();
    for f in prog.fns {
        gen.reserve(&f.name);
        for local in &f.locals {
            gen.reserve(&local.name);
            if matches!(local.kind, DeclKind::Param { .. }) {
                return Err(SourceError::at(
                    f.line,
                    f.col,
                    format!("fn `{}` declares a param; params are program-level only", f.name),
                ));
            }
        }
        if has_annotated_loop(&f.body) {
            return Err(SourceError::at(
                f.line,
                f.col,
                format!("fn `{}` contains an invariant pragma; annotate loops at the call site program level instead", f.name),
            ));
        }
        let name = f.name.clone();
        if fns.insert(name.clone(), f).is_some() {
            return Err(SourceError::plain(format!("fn `{name}` is defined twice")));
        }
    }

    let mut new_decls = prog.decls.clone();
    let mut stack = Vec::new();
    let body = expand(&prog.body, &fns, &mut stack, &mut new_decls, gen)?;
    Ok(RawProgram { decls: new_decls, fns: Vec::new(), body })
}

fn has_annotated_loop(s: &RawStmt) -> bool {
    match s {
        RawStmt::For { annot, body, .. } => annot.is_some() || has_annotated_loop(body),
        RawStmt::Seq(items) => items.iter().any(has_annotated_loop),
        RawStmt::If { then_s, else_s, .. } => {
            has_annotated_loop(then_s) || has_annotated_loop(else_s)
        }
        RawStmt::Kernel(b) => has_annotated_loop(b),
        _ => false,
    }
}

fn expand(
    s: &RawStmt,
    fns: &BTreeMap<Name, RawFn>,
    stack: &mut Vec<Name>,
    decls: &mut Vec<Decl>,
    gen: &mut NameGen,
) -> Result<RawStmt, SourceError> {
    match s {
        RawStmt::Call { name, args, line, col } => {
            let Some(f) = fns.get(name) else {
                return Err(SourceError::at(*line, *col, format!("call to unknown fn `{name}`")));
            };
            if stack.iter().any(|n| n == name) {
                return Err(SourceError::at(
                    *line,
                    *col,
                    format!("recursive call to fn `{name}`"),
                ));
            }
            if args.len() != f.formals.len() {
                return Err(SourceError::at(
                    *line,
                    *col,
                    format!(
                        "fn `{name}` takes {} argument(s), call passes {}",
                        f.formals.len(),
                        args.len()
                    ),
                ));
            }
            let mut map = Renaming::new();
            for (formal, actual) in f.formals.iter().zip(args) {
                map.insert(formal.clone(), actual.clone());
            }
            for local in &f.locals {
                let fresh = gen.fresh(&format!("{}_", local.name));
                decls.push(Decl { name: fresh.clone(), kind: local.kind.clone() });
                map.insert(local.name.clone(), fresh);
            }
            let spliced = f.body.rename(&map);
            stack.push(name.clone());
            let expanded = expand(&spliced, fns, stack, decls, gen)?;
            stack.pop();
            Ok(expanded)
        }
        RawStmt::Seq(items) => {
            let expanded: Result<Vec<_>, _> = items
                .iter()
                .map(|item| expand(item, fns, stack, decls, gen))
                .collect();
            Ok(RawStmt::Seq(expanded?))
        }
        RawStmt::If { cond, then_s, else_s } => Ok(RawStmt::If {
            cond: cond.clone(),
            then_s: Box::new(expand(then_s, fns, stack, decls, gen)?),
            else_s: Box::new(expand(else_s, fns, stack, decls, gen)?),
        }),
        RawStmt::For { var, init, bound, step, body, annot } => Ok(RawStmt::For {
            var: var.clone(),
            init: init.clone(),
            bound: bound.clone(),
            step: step.clone(),
            body: Box::new(expand(body, fns, stack, decls, gen)?),
            annot: annot.clone(),
        }),
        RawStmt::Kernel(b) => Ok(RawStmt::Kernel(Box::new(expand(b, fns, stack, decls, gen)?))),
        leaf => Ok(leaf.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::lex;
    use crate::frontend::parser::parse;

    fn run(src: &str) -> Result<RawProgram, SourceError> {
        let prog = parse(&lex(src).unwrap()).unwrap();
        let mut gen = NameGen::new(prog.decls.iter().map(|d| d.name.clone()));
        inline(prog, &mut gen)
    }

    #[test]
    fn splices_body_with_renamed_formals_and_locals() {
        let p = run("int x, y, z;\nfn avg(a, b, c) { int t; t = a + b; c = t / 2; }\navg(x, y, z);\n")
            .unwrap();
        // The local `t` became a fresh program-level declaration.
        assert!(p.decls.iter().any(|d| d.name == "t_0"));
        let RawStmt::Seq(items) = &p.body else { panic!() };
        let RawStmt::Seq(spliced) = &items[0] else { panic!() };
        assert!(matches!(
            &spliced[0],
            RawStmt::Assign { dst, .. } if dst == "t_0"
        ));
        assert!(matches!(
            &spliced[1],
            RawStmt::Assign { dst, .. } if dst == "z"
        ));
    }

    #[test]
    fn two_calls_get_distinct_locals() {
        let p = run("int x, y;\nfn set(a) { int t; t = 1; a = t; }\nset(x);\nset(y);\n").unwrap();
        assert!(p.decls.iter().any(|d| d.name == "t_0"));
        assert!(p.decls.iter().any(|d| d.name == "t_1"));
    }

    #[test]
    fn formals_substitute_simultaneously() {
        // Swapping arguments must not chain: with args (b, a) the body
        // `x = a; y = b;` becomes `x = b; y = a;`, not `x = b; y = b;`.
        let p = run("int a, b, x, y;\nfn pick(p, q) { x = p; y = q; }\npick(b, a);\n").unwrap();
        let RawStmt::Seq(items) = &p.body else { panic!() };
        let RawStmt::Seq(spliced) = &items[0] else { panic!() };
        assert!(
            matches!(&spliced[0], RawStmt::Assign { expr: crate::frontend::raw::RawExpr::Var(v), .. } if v == "b")
        );
        assert!(
            matches!(&spliced[1], RawStmt::Assign { expr: crate::frontend::raw::RawExpr::Var(v), .. } if v == "a")
        );
    }

    #[test]
    fn rejects_recursion() {
        let err = run("fn f(a) { f(a); }\nint x;\nf(x);\n").unwrap_err();
        assert!(err.to_string().contains("recursive"));
    }

    #[test]
    fn rejects_mutual_recursion() {
        let err = run("fn f(a) { g(a); }\nfn g(a) { f(a); }\nint x;\nf(x);\n").unwrap_err();
        assert!(err.to_string().contains("recursive"));
    }

    #[test]
    fn rejects_unknown_fn_and_arity_mismatch() {
        assert!(run("int x;\nh(x);\n").is_err());
        assert!(run("fn f(a, b) {}\nint x;\nf(x);\n").is_err());
    }

    #[test]
    fn nested_calls_expand() {
        let p = run("int x;\nfn inner(a) { a = 1; }\nfn outer(a) { inner(a); }\nouter(x);\n")
            .unwrap();
        fn find_assign(s: &RawStmt) -> bool {
            match s {
                RawStmt::Assign { dst, .. } => dst == "x",
                RawStmt::Seq(items) => items.iter().any(find_assign),
                _ => false,
            }
        }
        assert!(find_assign(&p.body));
    }
}
