//! Lowering from the raw AST to the flat core language.
//!
//! Nested expressions are reduced to two-atom form by introducing `_t0`,
//! `_t1`, ... integer temporaries. The extended comparisons disappear here:
//! `a > b` becomes `b < a`, `a >= b` becomes `b <= a`, and `a != b` becomes
//! `(a == b) == 0`. Branch conditions and store operands are reduced to bare
//! variables.
//!
//! Temporaries hoisted out of a loop header are evaluated once at loop
//! entry, so a nested loop bound must not depend on variables the body
//! mutates; flat bounds (`x != N - 1`) are re-read every iteration.

use num_traits::Zero;

use crate::ast::{Atom, Decl, DeclKind, Expr, Int, Op, Stmt, Ty};
use crate::frontend::inline::NameGen;
use crate::frontend::raw::{RawExpr, RawOp, RawProgram, RawStmt};
use crate::frontend::SourceError;

/// Lowers an inlined raw program; new temporaries are appended to `decls`.
pub fn lower(prog: &RawProgram, gen: &mut NameGen) -> Result<(Vec<Decl>, Stmt), SourceError> {
    assert!(prog.fns.is_empty(), "lower runs after inlining");
    let mut cx = Lower { decls: prog.decls.clone(), gen };
    let body = cx.stmt(&prog.body)?;
    Ok((cx.decls, body.normalize()))
}

struct Lower<'a> {
    decls: Vec<Decl>,
    gen: &'a mut NameGen,
}

impl<'a> Lower<'a> {
    fn temp(&mut self) -> String {
        let name = self.gen.fresh("_t");
        self.decls.push(Decl { name: name.clone(), kind: DeclKind::Var(Ty::Int) });
        name
    }

    /// Lowers to an atom, emitting temporary assignments onto `out`.
    fn atom(&mut self, e: &RawExpr, out: &mut Vec<Stmt>) -> Result<Atom, SourceError> {
        match self.expr(e, out)? {
            Expr::Atom(a) => Ok(a),
            flat => {
                let t = self.temp();
                out.push(Stmt::Assign { dst: t.clone(), expr: flat });
                Ok(Atom::Var(t))
            }
        }
    }

    /// Lowers to a flat expression (at most one operator over two atoms).
    fn expr(&mut self, e: &RawExpr, out: &mut Vec<Stmt>) -> Result<Expr, SourceError> {
        match e {
            RawExpr::Num(n) => Ok(Expr::Atom(Atom::Const(n.clone()))),
            RawExpr::Var(x) => Ok(Expr::Atom(Atom::Var(x.clone()))),
            RawExpr::Neg(inner) => {
                let a = self.atom(inner, out)?;
                Ok(match a {
                    Atom::Const(n) => Expr::Atom(Atom::Const(-n)),
                    v @ Atom::Var(_) => Expr::Bin(Op::Sub, Atom::Const(Int::zero()), v),
                })
            }
            RawExpr::Bin(op, l, r) => {
                let la = self.atom(l, out)?;
                let ra = self.atom(r, out)?;
                Ok(match op {
                    RawOp::Add => Expr::Bin(Op::Add, la, ra),
                    RawOp::Sub => Expr::Bin(Op::Sub, la, ra),
                    RawOp::Mul => Expr::Bin(Op::Mul, la, ra),
                    RawOp::Div => Expr::Bin(Op::Div, la, ra),
                    RawOp::Rem => Expr::Bin(Op::Rem, la, ra),
                    RawOp::Lt => Expr::Bin(Op::Lt, la, ra),
                    RawOp::Le => Expr::Bin(Op::Le, la, ra),
                    RawOp::Eq => Expr::Bin(Op::Eq, la, ra),
                    RawOp::Gt => Expr::Bin(Op::Lt, ra, la),
                    RawOp::Ge => Expr::Bin(Op::Le, ra, la),
                    RawOp::Ne => {
                        let t = self.temp();
                        out.push(Stmt::Assign {
                            dst: t.clone(),
                            expr: Expr::Bin(Op::Eq, la, ra),
                        });
                        Expr::Bin(Op::Eq, Atom::Var(t), Atom::Const(Int::zero()))
                    }
                })
            }
        }
    }

    /// Lowers to a variable name (for store operands and branch conditions).
    fn var(&mut self, e: &RawExpr, out: &mut Vec<Stmt>) -> Result<String, SourceError> {
        match self.atom(e, out)? {
            Atom::Var(x) => Ok(x),
            c @ Atom::Const(_) => {
                let t = self.temp();
                out.push(Stmt::Assign { dst: t.clone(), expr: Expr::Atom(c) });
                Ok(t)
            }
        }
    }

    fn stmt(&mut self, s: &RawStmt) -> Result<Stmt, SourceError> {
        let mut out = Vec::new();
        match s {
            RawStmt::Assign { dst, expr } => {
                let e = self.expr(expr, &mut out)?;
                out.push(Stmt::Assign { dst: dst.clone(), expr: e });
            }
            RawStmt::ReadArr { dst, arr, idx } => {
                let idx = self.expr(idx, &mut out)?;
                out.push(Stmt::ReadArr { dst: dst.clone(), arr: arr.clone(), idx });
            }
            RawStmt::WriteArr { arr, idx, src } => {
                let idx = self.expr(idx, &mut out)?;
                let src = self.var(src, &mut out)?;
                out.push(Stmt::WriteArr { arr: arr.clone(), idx, src });
            }
            RawStmt::ReadStream { dst, stream } => {
                out.push(Stmt::ReadStream { dst: dst.clone(), stream: stream.clone() });
            }
            RawStmt::WriteStream { stream, arg } => {
                let src = self.var(arg, &mut out)?;
                out.push(Stmt::WriteStream { stream: stream.clone(), src });
            }
            RawStmt::Call { name, line, col, .. } => {
                return Err(SourceError::at(
                    *line,
                    *col,
                    format!("internal: call to `{name}` survived inlining"),
                ));
            }
            RawStmt::Seq(items) => {
                for item in items {
                    out.push(self.stmt(item)?);
                }
            }
            RawStmt::If { cond, then_s, else_s } => {
                let cond = self.var(cond, &mut out)?;
                let then_s = self.stmt(then_s)?;
                let else_s = self.stmt(else_s)?;
                out.push(Stmt::If {
                    cond,
                    then_s: Box::new(then_s),
                    else_s: Box::new(else_s),
                });
            }
            RawStmt::For { var, init, bound, step, body, annot } => {
                let init = self.expr(init, &mut out)?;
                let bound = self.expr(bound, &mut out)?;
                let body = self.stmt(body)?;
                out.push(Stmt::For {
                    var: var.clone(),
                    init,
                    bound,
                    step: step.clone(),
                    body: Box::new(body),
                    annot: annot.clone(),
                });
            }
            RawStmt::Kernel(b) => {
                let body = self.stmt(b)?;
                out.push(Stmt::Kernel(Box::new(body)));
            }
        }
        Ok(Stmt::seq(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::inline::inline;
    use crate::frontend::lexer::lex;
    use crate::frontend::parser::parse;

    fn lower_src(src: &str) -> (Vec<Decl>, Stmt) {
        let prog = parse(&lex(src).unwrap()).unwrap();
        let mut gen = NameGen::new(prog.decls.iter().map(|d| d.name.clone()));
        let prog = inline(prog, &mut gen).unwrap();
        lower(&prog, &mut gen).unwrap()
    }

    #[test]
    fn flat_expressions_pass_through() {
        let (decls, body) = lower_src("int x, y, z;\nz = x + y;\n");
        assert_eq!(decls.len(), 3);
        assert_eq!(
            body,
            Stmt::Assign {
                dst: "z".into(),
                expr: Expr::Bin(Op::Add, Atom::var("x"), Atom::var("y")),
            }
        );
    }

    #[test]
    fn nested_expressions_stage_through_temps() {
        let (decls, body) = lower_src("int a, b, c, z;\nz = (a + b) * c;\n");
        assert!(decls.iter().any(|d| d.name == "_t0"));
        assert_eq!(
            body,
            Stmt::seq(vec![
                Stmt::Assign {
                    dst: "_t0".into(),
                    expr: Expr::Bin(Op::Add, Atom::var("a"), Atom::var("b")),
                },
                Stmt::Assign {
                    dst: "z".into(),
                    expr: Expr::Bin(Op::Mul, Atom::var("_t0"), Atom::var("c")),
                },
            ])
        );
    }

    #[test]
    fn not_equal_lowers_through_equality() {
        let (_, body) = lower_src("int a, b, z;\nz = a != b;\n");
        assert_eq!(
            body,
            Stmt::seq(vec![
                Stmt::Assign {
                    dst: "_t0".into(),
                    expr: Expr::Bin(Op::Eq, Atom::var("a"), Atom::var("b")),
                },
                Stmt::Assign {
                    dst: "z".into(),
                    expr: Expr::Bin(Op::Eq, Atom::var("_t0"), Atom::int(0)),
                },
            ])
        );
    }

    #[test]
    fn greater_than_swaps_operands() {
        let (_, body) = lower_src("int a, b, z;\nz = a > b;\n");
        assert_eq!(
            body,
            Stmt::Assign {
                dst: "z".into(),
                expr: Expr::Bin(Op::Lt, Atom::var("b"), Atom::var("a")),
            }
        );
    }

    #[test]
    fn store_operand_becomes_variable() {
        let (_, body) = lower_src("warr a;\nint i;\na[i] = 7;\n");
        assert_eq!(
            body,
            Stmt::seq(vec![
                Stmt::Assign { dst: "_t0".into(), expr: Expr::int(7) },
                Stmt::WriteArr { arr: "a".into(), idx: Expr::var("i"), src: "_t0".into() },
            ])
        );
    }

    #[test]
    fn loop_header_temps_hoist_before_loop() {
        let (_, body) = lower_src("param N;\nint x, y;\nfor (x = 0; x != 2 * N - 1; x += 1) { y = x; }\n");
        let items = body.flatten();
        assert!(matches!(items[0], Stmt::Assign { dst, .. } if dst == "_t0"));
        let Stmt::For { bound, .. } = items[1] else { panic!() };
        assert_eq!(*bound, Expr::Bin(Op::Sub, Atom::var("_t0"), Atom::int(1)));
    }

    #[test]
    fn unary_minus_on_variables_subtracts_from_zero() {
        let (_, body) = lower_src("int a, z;\nz = -a;\n");
        assert_eq!(
            body,
            Stmt::Assign {
                dst: "z".into(),
                expr: Expr::Bin(Op::Sub, Atom::int(0), Atom::var("a")),
            }
        );
    }
}
