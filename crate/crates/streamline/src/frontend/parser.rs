//! Recursive-descent parser from tokens to the raw AST.

use num_traits::Zero;

use crate::ast::{Decl, DeclKind, Int, Name, Ty};
use crate::frontend::lexer::{Tok, Token};
use crate::frontend::raw::{RawExpr, RawFn, RawOp, RawProgram, RawStmt};
use crate::frontend::SourceError;

pub fn parse(tokens: &[Token]) -> Result<RawProgram, SourceError> {
    let mut p = Parser { toks: tokens, pos: 0 };
    p.program()
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos.min(self.toks.len() - 1)];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> SourceError {
        let (l, c) = self.here();
        SourceError::at(l, c, msg)
    }

    fn expect(&mut self, want: Tok) -> Result<(), SourceError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn ident(&mut self) -> Result<Name, SourceError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn program(&mut self) -> Result<RawProgram, SourceError> {
        let mut decls = Vec::new();
        let mut fns = Vec::new();
        let mut body = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::KwParam | Tok::KwInt | Tok::KwBuf | Tok::KwRarr | Tok::KwWarr => {
                    self.decl_line(&mut decls)?;
                }
                Tok::KwFn => fns.push(self.fn_def()?),
                _ => body.push(self.stmt()?),
            }
        }
        Ok(RawProgram { decls, fns, body: RawStmt::Seq(body) })
    }

    /// `param N >= 2;` or `int x, y;` (and likewise for buf/rarr/warr).
    fn decl_line(&mut self, out: &mut Vec<Decl>) -> Result<(), SourceError> {
        match self.bump() {
            Tok::KwParam => {
                let name = self.ident()?;
                let min = if *self.peek() == Tok::Ge {
                    self.bump();
                    self.int_literal()?
                } else {
                    Int::zero()
                };
                self.expect(Tok::Semi)?;
                out.push(Decl { name, kind: DeclKind::Param { min } });
            }
            kw => {
                let ty = match kw {
                    Tok::KwInt => Ty::Int,
                    Tok::KwBuf => Ty::Buf,
                    Tok::KwRarr => Ty::RArr,
                    Tok::KwWarr => Ty::WArr,
                    _ => unreachable!("decl_line called on a declaration keyword"),
                };
                loop {
                    let name = self.ident()?;
                    out.push(Decl { name, kind: DeclKind::Var(ty) });
                    match self.bump() {
                        Tok::Comma => continue,
                        Tok::Semi => break,
                        other => {
                            return Err(self.err(format!(
                                "expected `,` or `;` in declaration, found {}",
                                other.describe()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Integer literal with optional leading minus.
    fn int_literal(&mut self) -> Result<Int, SourceError> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Tok::Num(n) => Ok(if neg { -n } else { n }),
            other => Err(self.err(format!(
                "expected integer literal, found {}",
                other.describe()
            ))),
        }
    }

    fn fn_def(&mut self) -> Result<RawFn, SourceError> {
        let (line, col) = self.here();
        self.expect(Tok::KwFn)?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut formals = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                formals.push(self.ident()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::LBrace)?;
        let mut locals = Vec::new();
        while matches!(self.peek(), Tok::KwInt | Tok::KwBuf | Tok::KwRarr | Tok::KwWarr) {
            self.decl_line(&mut locals)?;
        }
        let mut body = Vec::new();
        while *self.peek() != Tok::RBrace {
            body.push(self.stmt()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(RawFn { name, formals, locals, body: RawStmt::Seq(body), line, col })
    }

    fn block(&mut self) -> Result<RawStmt, SourceError> {
        self.expect(Tok::LBrace)?;
        let mut items = Vec::new();
        while *self.peek() != Tok::RBrace {
            items.push(self.stmt()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(RawStmt::Seq(items))
    }

    fn stmt(&mut self) -> Result<RawStmt, SourceError> {
        match self.peek().clone() {
            Tok::Pragma(text) => {
                self.bump();
                let Some(formula) = text.strip_prefix("invariant") else {
                    return Err(self.err("unknown pragma; expected `//@ invariant <formula>`"));
                };
                let formula = formula.trim().to_string();
                if formula.is_empty() {
                    return Err(self.err("empty invariant pragma"));
                }
                if *self.peek() != Tok::KwFor {
                    return Err(self.err("an invariant pragma must precede a `for` loop"));
                }
                let RawStmt::For { var, init, bound, step, body, .. } = self.for_stmt()? else {
                    unreachable!("for_stmt returns a For node");
                };
                Ok(RawStmt::For { var, init, bound, step, body, annot: Some(formula) })
            }
            Tok::KwFor => self.for_stmt(),
            Tok::KwIf => self.if_stmt(),
            Tok::KwKernel => {
                self.bump();
                let body = self.block()?;
                Ok(RawStmt::Kernel(Box::new(body)))
            }
            Tok::LBrace => self.block(),
            Tok::Ident(name) => {
                self.bump();
                match self.peek().clone() {
                    // a[idx] = expr;
                    Tok::LBracket => {
                        self.bump();
                        let idx = self.expr()?;
                        self.expect(Tok::RBracket)?;
                        self.expect(Tok::Assign)?;
                        let src = self.expr()?;
                        self.expect(Tok::Semi)?;
                        Ok(RawStmt::WriteArr { arr: name, idx, src })
                    }
                    // a.write(expr);
                    Tok::Dot => {
                        self.bump();
                        let method = self.ident()?;
                        if method != "write" {
                            return Err(
                                self.err(format!("unknown statement method `.{method}()`"))
                            );
                        }
                        self.expect(Tok::LParen)?;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen)?;
                        self.expect(Tok::Semi)?;
                        Ok(RawStmt::WriteStream { stream: name, arg })
                    }
                    // f(x, y);
                    Tok::LParen => {
                        let (line, col) = self.here();
                        self.bump();
                        let mut args = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                args.push(self.ident()?);
                                if *self.peek() == Tok::Comma {
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen)?;
                        self.expect(Tok::Semi)?;
                        Ok(RawStmt::Call { name, args, line, col })
                    }
                    // x = ...;
                    Tok::Assign => {
                        self.bump();
                        let s = self.assign_rhs(name)?;
                        self.expect(Tok::Semi)?;
                        Ok(s)
                    }
                    other => Err(self.err(format!(
                        "expected `=`, `[`, `.` or `(` after identifier, found {}",
                        other.describe()
                    ))),
                }
            }
            other => Err(self.err(format!("expected a statement, found {}", other.describe()))),
        }
    }

    /// Right-hand side of `dst = ...`: a stream read, an array read, or an
    /// expression.
    fn assign_rhs(&mut self, dst: Name) -> Result<RawStmt, SourceError> {
        if let Tok::Ident(src) = self.peek().clone() {
            match self.peek_at(1) {
                Tok::Dot => {
                    self.bump();
                    self.bump();
                    let method = self.ident()?;
                    if method != "read" {
                        return Err(self.err(format!(
                            "unknown expression method `.{method}()`; only `.read()` may \
                             appear on the right of `=`"
                        )));
                    }
                    self.expect(Tok::LParen)?;
                    self.expect(Tok::RParen)?;
                    return Ok(RawStmt::ReadStream { dst, stream: src });
                }
                Tok::LBracket => {
                    self.bump();
                    self.bump();
                    let idx = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    return Ok(RawStmt::ReadArr { dst, arr: src, idx });
                }
                _ => {}
            }
        }
        let expr = self.expr()?;
        Ok(RawStmt::Assign { dst, expr })
    }

    fn for_stmt(&mut self) -> Result<RawStmt, SourceError> {
        self.expect(Tok::KwFor)?;
        self.expect(Tok::LParen)?;
        let var = self.ident()?;
        self.expect(Tok::Assign)?;
        let init = self.expr()?;
        self.expect(Tok::Semi)?;
        let var2 = self.ident()?;
        if var2 != var {
            return Err(self.err(format!(
                "loop condition must test the loop variable `{var}`, found `{var2}`"
            )));
        }
        self.expect(Tok::Ne)?;
        let bound = self.expr()?;
        self.expect(Tok::Semi)?;
        let var3 = self.ident()?;
        if var3 != var {
            return Err(self.err(format!(
                "loop update must step the loop variable `{var}`, found `{var3}`"
            )));
        }
        self.expect(Tok::PlusEq)?;
        let step = self.int_literal()?;
        if step.is_zero() {
            return Err(self.err("loop step must be nonzero"));
        }
        self.expect(Tok::RParen)?;
        let body = self.block()?;
        Ok(RawStmt::For {
            var,
            init,
            bound,
            step,
            body: Box::new(body),
            annot: None,
        })
    }

    fn if_stmt(&mut self) -> Result<RawStmt, SourceError> {
        self.expect(Tok::KwIf)?;
        self.expect(Tok::LParen)?;
        let cond = self.expr()?;
        self.expect(Tok::RParen)?;
        let then_s = self.block()?;
        let else_s = if *self.peek() == Tok::KwElse {
            self.bump();
            if *self.peek() == Tok::KwIf {
                self.if_stmt()?
            } else {
                self.block()?
            }
        } else {
            RawStmt::Seq(vec![])
        };
        Ok(RawStmt::If {
            cond,
            then_s: Box::new(then_s),
            else_s: Box::new(else_s),
        })
    }

    /// Expression grammar, loosest first: comparisons, additive, then
    /// multiplicative, then unary minus and primaries.
    fn expr(&mut self) -> Result<RawExpr, SourceError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Lt => RawOp::Lt,
            Tok::Le => RawOp::Le,
            Tok::Gt => RawOp::Gt,
            Tok::Ge => RawOp::Ge,
            Tok::EqEq => RawOp::Eq,
            Tok::Ne => RawOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(RawExpr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<RawExpr, SourceError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => RawOp::Add,
                Tok::Minus => RawOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = RawExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<RawExpr, SourceError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => RawOp::Mul,
                Tok::Slash => RawOp::Div,
                Tok::Percent => RawOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = RawExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<RawExpr, SourceError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let e = self.unary()?;
            return Ok(match e {
                RawExpr::Num(n) => RawExpr::Num(-n),
                other => RawExpr::Neg(Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<RawExpr, SourceError> {
        match self.bump() {
            Tok::Num(n) => Ok(RawExpr::Num(n)),
            Tok::Ident(x) => Ok(RawExpr::Var(x)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => Err(self.err(format!(
                "expected an expression, found {}",
                other.describe()
            ))),
        }
    }
}
