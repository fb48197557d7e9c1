//! Abstract syntax for the kernel language.
//!
//! Statements operate on integer registers, arrays and streams. Expressions
//! are flat two-operand combinations of atoms (a variable or an integer
//! literal); the frontend introduces temporaries to reduce nested source
//! expressions to this form. All integer arithmetic is arbitrary precision.

use num_bigint::BigInt;
use std::fmt;

/// Arbitrary-precision integer used throughout the interpreter and solver.
pub type Int = BigInt;

/// Variable, array and parameter names.
pub type Name = String;

/// Two-operand integer operators. Comparisons evaluate to 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Eq,
    Le,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Rem => "%",
            Op::Lt => "<",
            Op::Eq => "==",
            Op::Le => "<=",
        }
    }
}

/// An atomic operand: a constant or a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Const(Int),
    Var(Name),
}

impl Atom {
    pub fn var(n: &str) -> Atom {
        Atom::Var(n.to_string())
    }

    pub fn int(n: i64) -> Atom {
        Atom::Const(Int::from(n))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Const(n) => write!(f, "{n}"),
            Atom::Var(x) => write!(f, "{x}"),
        }
    }
}

/// Expressions are atoms or a single operator applied to two atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Atom(Atom),
    Bin(Op, Atom, Atom),
}

impl Expr {
    pub fn var(n: &str) -> Expr {
        Expr::Atom(Atom::var(n))
    }

    pub fn int(n: i64) -> Expr {
        Expr::Atom(Atom::int(n))
    }

    pub fn bin(op: Op, l: Atom, r: Atom) -> Expr {
        Expr::Bin(op, l, r)
    }

    /// All variable names mentioned by the expression.
    pub fn vars(&self) -> Vec<&Name> {
        fn of_atom(a: &Atom) -> Option<&Name> {
            match a {
                Atom::Var(x) => Some(x),
                Atom::Const(_) => None,
            }
        }
        match self {
            Expr::Atom(a) => of_atom(a).into_iter().collect(),
            Expr::Bin(_, l, r) => of_atom(l).into_iter().chain(of_atom(r)).collect(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Atom(a) => write!(f, "{a}"),
            Expr::Bin(op, l, r) => write!(f, "{l} {} {r}", op.symbol()),
        }
    }
}

/// Statements. `Seq` is binary with `Skip` as its unit; parsers and passes
/// keep sequences right-associated (see [`Stmt::normalize`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stmt {
    Skip,
    /// `x = e;`
    Assign { dst: Name, expr: Expr },
    /// `x = a[e];`
    ReadArr { dst: Name, arr: Name, idx: Expr },
    /// `a[e] = x;`
    WriteArr { arr: Name, idx: Expr, src: Name },
    /// `x = a.read();`
    ReadStream { dst: Name, stream: Name },
    /// `a.write(x);`
    WriteStream { stream: Name, src: Name },
    Seq(Box<Stmt>, Box<Stmt>),
    /// `if (x) { .. } else { .. }` — takes the first branch when x != 0.
    If { cond: Name, then_s: Box<Stmt>, else_s: Box<Stmt> },
    /// `for (x = init; x != bound; x += step) { .. }`
    ///
    /// The loop exits exactly when the counter equals the bound. `annot`
    /// carries a user-supplied loop invariant in the compact assertion
    /// syntax, if one was attached to the loop.
    For {
        var: Name,
        init: Expr,
        bound: Expr,
        step: Int,
        body: Box<Stmt>,
        annot: Option<String>,
    },
    /// `kernel { .. }` — the accelerated region. Never nested.
    Kernel(Box<Stmt>),
}

impl Stmt {
    /// Right-associated sequence of `stmts`, with `Skip` for the empty list.
    pub fn seq(stmts: Vec<Stmt>) -> Stmt {
        let mut it = stmts.into_iter().rev();
        let Some(last) = it.next() else {
            return Stmt::Skip;
        };
        it.fold(last, |acc, s| Stmt::Seq(Box::new(s), Box::new(acc)))
    }

    /// Flattens a (possibly nested) sequence into a statement list, dropping
    /// `Skip` units.
    pub fn flatten(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        fn go<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::Skip => {}
                Stmt::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    /// Canonical form: sequences right-associated and `Skip`-free (except a
    /// fully empty statement, which stays `Skip`). Recurses into branches,
    /// loop bodies and kernel regions.
    pub fn normalize(&self) -> Stmt {
        let items: Vec<Stmt> = self
            .flatten()
            .into_iter()
            .map(|s| match s {
                Stmt::If { cond, then_s, else_s } => Stmt::If {
                    cond: cond.clone(),
                    then_s: Box::new(then_s.normalize()),
                    else_s: Box::new(else_s.normalize()),
                },
                Stmt::For { var, init, bound, step, body, annot } => Stmt::For {
                    var: var.clone(),
                    init: init.clone(),
                    bound: bound.clone(),
                    step: step.clone(),
                    body: Box::new(body.normalize()),
                    annot: annot.clone(),
                },
                Stmt::Kernel(b) => Stmt::Kernel(Box::new(b.normalize())),
                other => other.clone(),
            })
            .collect();
        Stmt::seq(items)
    }

    /// True if the statement (recursively) contains any stream operation.
    pub fn uses_streams(&self) -> bool {
        match self {
            Stmt::ReadStream { .. } | Stmt::WriteStream { .. } => true,
            Stmt::Seq(a, b) => a.uses_streams() || b.uses_streams(),
            Stmt::If { then_s, else_s, .. } => then_s.uses_streams() || else_s.uses_streams(),
            Stmt::For { body, .. } => body.uses_streams(),
            Stmt::Kernel(b) => b.uses_streams(),
            _ => false,
        }
    }

    /// True if the statement (recursively) contains a kernel region.
    pub fn has_kernel(&self) -> bool {
        match self {
            Stmt::Kernel(_) => true,
            Stmt::Seq(a, b) => a.has_kernel() || b.has_kernel(),
            Stmt::If { then_s, else_s, .. } => then_s.has_kernel() || else_s.has_kernel(),
            Stmt::For { body, .. } => body.has_kernel(),
            _ => false,
        }
    }
}

/// Variable types. Array orientations (`RArr` read-only / `WArr` write-only)
/// are declared from the kernel's point of view and flip at the kernel
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ty {
    Int,
    Buf,
    RArr,
    WArr,
}

impl Ty {
    /// Swaps array orientations; identity on `Int` and `Buf`.
    pub fn flip(self) -> Ty {
        match self {
            Ty::RArr => Ty::WArr,
            Ty::WArr => Ty::RArr,
            other => other,
        }
    }

    pub fn is_array(self) -> bool {
        matches!(self, Ty::RArr | Ty::WArr)
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ty::Int => "int",
            Ty::Buf => "buf",
            Ty::RArr => "rarr",
            Ty::WArr => "warr",
        };
        write!(f, "{s}")
    }
}

/// One declaration in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub name: Name,
    pub kind: DeclKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeclKind {
    /// Symbolic integer constant with a lower bound (default 0).
    Param { min: Int },
    Var(Ty),
}

/// Typing context: variable types plus the parameter set with lower bounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeEnv {
    vars: std::collections::BTreeMap<Name, Ty>,
    params: std::collections::BTreeMap<Name, Int>,
}

impl TypeEnv {
    pub fn new() -> TypeEnv {
        TypeEnv::default()
    }

    pub fn from_decls(decls: &[Decl]) -> TypeEnv {
        let mut env = TypeEnv::new();
        for d in decls {
            match &d.kind {
                DeclKind::Param { min } => {
                    env.params.insert(d.name.clone(), min.clone());
                }
                DeclKind::Var(ty) => {
                    env.vars.insert(d.name.clone(), *ty);
                }
            }
        }
        env
    }

    pub fn bind(&mut self, name: &str, ty: Ty) {
        self.vars.insert(name.to_string(), ty);
    }

    pub fn lookup(&self, name: &str) -> Option<Ty> {
        self.vars.get(name).copied()
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param_min(&self, name: &str) -> Option<&Int> {
        self.params.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&Name, &Int)> {
        self.params.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = (&Name, Ty)> {
        self.vars.iter().map(|(n, t)| (n, *t))
    }

    /// Holds for integer-valued symbols: INT variables and parameters.
    pub fn is_int_like(&self, name: &str) -> bool {
        self.is_param(name) || self.lookup(name) == Some(Ty::Int)
    }

    /// Swaps every array orientation. An involution: `flip(flip(e)) == e`.
    pub fn flip(&self) -> TypeEnv {
        TypeEnv {
            vars: self.vars.iter().map(|(n, t)| (n.clone(), t.flip())).collect(),
            params: self.params.clone(),
        }
    }

    /// Picks `count` variable names starting from `stem0`, `stem1`, ...
    /// that collide with nothing already bound.
    pub fn fresh_names(&self, stem: &str, count: usize) -> Vec<Name> {
        let mut out = Vec::new();
        let mut i = 0usize;
        while out.len() < count {
            let cand = format!("{stem}{i}");
            if !self.vars.contains_key(&cand) && !self.params.contains_key(&cand) {
                out.push(cand);
            }
            i += 1;
        }
        out
    }
}

/// A complete program: declarations in source order plus the (inlined,
/// normalized) statement body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: Stmt,
}

impl Program {
    pub fn env(&self) -> TypeEnv {
        TypeEnv::from_decls(&self.decls)
    }

    /// Adds a declaration, keeping source order.
    pub fn declare(&mut self, name: &str, kind: DeclKind) {
        self.decls.push(Decl { name: name.to_string(), kind });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_of_empty_is_skip() {
        assert_eq!(Stmt::seq(vec![]), Stmt::Skip);
    }

    #[test]
    fn seq_right_associates() {
        let a = Stmt::Assign { dst: "a".into(), expr: Expr::int(1) };
        let b = Stmt::Assign { dst: "b".into(), expr: Expr::int(2) };
        let c = Stmt::Assign { dst: "c".into(), expr: Expr::int(3) };
        let s = Stmt::seq(vec![a.clone(), b.clone(), c.clone()]);
        assert_eq!(s, Stmt::Seq(Box::new(a), Box::new(Stmt::Seq(Box::new(b), Box::new(c)))));
    }

    #[test]
    fn normalize_drops_skip_and_reassociates() {
        let a = Stmt::Assign { dst: "a".into(), expr: Expr::int(1) };
        let b = Stmt::Assign { dst: "b".into(), expr: Expr::int(2) };
        let left_nested = Stmt::Seq(
            Box::new(Stmt::Seq(Box::new(a.clone()), Box::new(Stmt::Skip))),
            Box::new(b.clone()),
        );
        assert_eq!(left_nested.normalize(), Stmt::seq(vec![a, b]));
    }

    #[test]
    fn flip_is_involutive() {
        let mut env = TypeEnv::new();
        env.bind("a", Ty::RArr);
        env.bind("b", Ty::WArr);
        env.bind("x", Ty::Int);
        env.bind("t", Ty::Buf);
        assert_eq!(env.flip().flip(), env);
        assert_eq!(env.flip().lookup("a"), Some(Ty::WArr));
        assert_eq!(env.flip().lookup("x"), Some(Ty::Int));
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let mut env = TypeEnv::new();
        env.bind("b0", Ty::Int);
        let names = env.fresh_names("b", 2);
        assert_eq!(names, vec!["b1".to_string(), "b2".to_string()]);
    }
}
