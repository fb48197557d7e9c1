//! Surface-level AST as parsed, before inlining and lowering.
//!
//! This form still has nested expressions, extended comparison operators,
//! function definitions and call statements. The `inline` and `normalize`
//! passes reduce it to the flat core in [`crate::ast`].

use crate::ast::{Decl, Int, Name};
use std::collections::BTreeMap;

/// Simultaneous variable renaming.
pub type Renaming = BTreeMap<Name, Name>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawExpr {
    Num(Int),
    Var(Name),
    Neg(Box<RawExpr>),
    Bin(RawOp, Box<RawExpr>, Box<RawExpr>),
}

impl RawExpr {
    pub fn rename(&self, map: &Renaming) -> RawExpr {
        match self {
            RawExpr::Num(n) => RawExpr::Num(n.clone()),
            RawExpr::Var(x) => RawExpr::Var(map.get(x).unwrap_or(x).clone()),
            RawExpr::Neg(e) => RawExpr::Neg(Box::new(e.rename(map))),
            RawExpr::Bin(op, l, r) => {
                RawExpr::Bin(*op, Box::new(l.rename(map)), Box::new(r.rename(map)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawStmt {
    Assign {
        dst: Name,
        expr: RawExpr,
    },
    ReadArr {
        dst: Name,
        arr: Name,
        idx: RawExpr,
    },
    WriteArr {
        arr: Name,
        idx: RawExpr,
        src: RawExpr,
    },
    ReadStream {
        dst: Name,
        stream: Name,
    },
    WriteStream {
        stream: Name,
        arg: RawExpr,
    },
    Call {
        name: Name,
        args: Vec<Name>,
        line: usize,
        col: usize,
    },
    Seq(Vec<RawStmt>),
    If {
        cond: RawExpr,
        then_s: Box<RawStmt>,
        else_s: Box<RawStmt>,
    },
    For {
        var: Name,
        init: RawExpr,
        bound: RawExpr,
        step: Int,
        body: Box<RawStmt>,
        annot: Option<String>,
    },
    Kernel(Box<RawStmt>),
}

impl RawStmt {
    /// Renames variable and array names simultaneously, in both value and
    /// address positions. Used by function inlining, so a single pass must
    /// not chain renamings through each other.
    pub fn rename(&self, map: &Renaming) -> RawStmt {
        let n = |x: &Name| -> Name { map.get(x).unwrap_or(x).clone() };
        match self {
            RawStmt::Assign { dst, expr } => RawStmt::Assign {
                dst: n(dst),
                expr: expr.rename(map),
            },
            RawStmt::ReadArr { dst, arr, idx } => RawStmt::ReadArr {
                dst: n(dst),
                arr: n(arr),
                idx: idx.rename(map),
            },
            RawStmt::WriteArr { arr, idx, src } => RawStmt::WriteArr {
                arr: n(arr),
                idx: idx.rename(map),
                src: src.rename(map),
            },
            RawStmt::ReadStream { dst, stream } => RawStmt::ReadStream {
                dst: n(dst),
                stream: n(stream),
            },
            RawStmt::WriteStream { stream, arg } => RawStmt::WriteStream {
                stream: n(stream),
                arg: arg.rename(map),
            },
            RawStmt::Call { name, args, line, col } => RawStmt::Call {
                name: name.clone(),
                args: args.iter().map(|a| n(a)).collect(),
                line: *line,
                col: *col,
            },
            RawStmt::Seq(items) => RawStmt::Seq(items.iter().map(|s| s.rename(map)).collect()),
            RawStmt::If { cond, then_s, else_s } => RawStmt::If {
                cond: cond.rename(map),
                then_s: Box::new(then_s.rename(map)),
                else_s: Box::new(else_s.rename(map)),
            },
            RawStmt::For { var, init, bound, step, body, annot } => RawStmt::For {
                var: n(var),
                init: init.rename(map),
                bound: bound.rename(map),
                step: step.clone(),
                body: Box::new(body.rename(map)),
                annot: annot.clone(),
            },
            RawStmt::Kernel(b) => RawStmt::Kernel(Box::new(b.rename(map))),
        }
    }
}

/// A function definition. Formals are untyped names bound at each call site;
/// `locals` are declarations scoped to the body and freshly renamed on every
/// inline expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFn {
    pub name: Name,
    pub formals: Vec<Name>,
    pub locals: Vec<Decl>,
    pub body: RawStmt,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawProgram {
    pub decls: Vec<Decl>,
    pub fns: Vec<RawFn>,
    pub body: RawStmt,
}
