//! Linear integer expressions: a constant plus integer-coefficient terms.
//!
//! Stream index ranges keep their bounds in this form so substituting a
//! linear term for a variable stays exact, and so the template solver can
//! manipulate bounds symbolically.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;

use crate::ast::{Atom, Expr, Int, Name, Op};

/// `k + c1*x1 + c2*x2 + ...` with nonzero coefficients only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinExpr {
    k: Int,
    coeffs: BTreeMap<Name, Int>,
}

impl LinExpr {
    pub fn constant(k: impl Into<Int>) -> LinExpr {
        LinExpr { k: k.into(), coeffs: BTreeMap::new() }
    }

    pub fn var(x: &str) -> LinExpr {
        LinExpr::with_coeff(x, 1)
    }

    pub fn with_coeff(x: &str, c: impl Into<Int>) -> LinExpr {
        let c = c.into();
        let mut coeffs = BTreeMap::new();
        if !c.is_zero() {
            coeffs.insert(x.to_string(), c);
        }
        LinExpr { k: Int::zero(), coeffs }
    }

    pub fn is_const(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_const(&self) -> Option<&Int> {
        self.is_const().then_some(&self.k)
    }

    pub fn constant_part(&self) -> &Int {
        &self.k
    }

    pub fn coeff(&self, x: &str) -> Int {
        self.coeffs.get(x).cloned().unwrap_or_else(Int::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Name, &Int)> {
        self.coeffs.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = &Name> {
        self.coeffs.keys()
    }

    pub fn mentions(&self, x: &str) -> bool {
        self.coeffs.contains_key(x)
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.k += &other.k;
        for (x, c) in &other.coeffs {
            let e = out.coeffs.entry(x.clone()).or_insert_with(Int::zero);
            *e += c;
            if e.is_zero() {
                out.coeffs.remove(x);
            }
        }
        out
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add(&other.scale(&Int::from(-1)))
    }

    pub fn scale(&self, c: &Int) -> LinExpr {
        if c.is_zero() {
            return LinExpr::constant(0);
        }
        LinExpr {
            k: &self.k * c,
            coeffs: self.coeffs.iter().map(|(x, v)| (x.clone(), v * c)).collect(),
        }
    }

    pub fn add_const(&self, c: impl Into<Int>) -> LinExpr {
        let mut out = self.clone();
        out.k += c.into();
        out
    }

    /// Replaces `x` by a linear expression. Exact: no approximation.
    pub fn subst(&self, x: &str, by: &LinExpr) -> LinExpr {
        let Some(c) = self.coeffs.get(x) else {
            return self.clone();
        };
        let c = c.clone();
        let mut rest = self.clone();
        rest.coeffs.remove(x);
        rest.add(&by.scale(&c))
    }

    pub fn eval(&self, ints: &BTreeMap<Name, Int>) -> Option<Int> {
        let mut acc = self.k.clone();
        for (x, c) in &self.coeffs {
            acc += c * ints.get(x)?;
        }
        Some(acc)
    }

    /// Linearizes a flat program expression; `None` for division, remainder
    /// or comparison operators and for variable products.
    pub fn from_expr(e: &Expr) -> Option<LinExpr> {
        let atom = |a: &Atom| -> LinExpr {
            match a {
                Atom::Const(n) => LinExpr::constant(n.clone()),
                Atom::Var(x) => LinExpr::var(x),
            }
        };
        match e {
            Expr::Atom(a) => Some(atom(a)),
            Expr::Bin(Op::Add, l, r) => Some(atom(l).add(&atom(r))),
            Expr::Bin(Op::Sub, l, r) => Some(atom(l).sub(&atom(r))),
            Expr::Bin(Op::Mul, Atom::Const(c), r) => Some(atom(r).scale(c)),
            Expr::Bin(Op::Mul, l, Atom::Const(c)) => Some(atom(l).scale(c)),
            _ => None,
        }
    }
}

impl fmt::Display for LinExpr {
    /// `x + 1`, `N - 1`, `2*x - N + 3`, `0`. Variable terms in name order,
    /// constant last (leading if there are no variables).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (x, c) in &self.coeffs {
            let mag = c.magnitude();
            let neg = c < &Int::zero();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if mag == &1u8.into() {
                write!(f, "{x}")?;
            } else {
                write!(f, "{mag}*{x}")?;
            }
        }
        if first {
            write!(f, "{}", self.k)?;
        } else if !self.k.is_zero() {
            if self.k < Int::zero() {
                write!(f, " - {}", self.k.magnitude())?;
            } else {
                write!(f, " + {}", self.k)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_merges_and_cancels_terms() {
        let a = LinExpr::var("x").add(&LinExpr::constant(1));
        let b = LinExpr::with_coeff("x", -1).add(&LinExpr::var("y"));
        let sum = a.add(&b);
        assert!(!sum.mentions("x"));
        assert_eq!(sum.coeff("y"), 1.into());
        assert_eq!(sum.constant_part(), &1.into());
    }

    #[test]
    fn subst_is_exact() {
        // (2x + 3) [x := y - 1]  ==  2y + 1
        let e = LinExpr::with_coeff("x", 2).add_const(3);
        let by = LinExpr::var("y").add_const(-1);
        let out = e.subst("x", &by);
        assert_eq!(out.coeff("y"), 2.into());
        assert_eq!(out.constant_part(), &1.into());
    }

    #[test]
    fn from_expr_handles_linear_shapes_only() {
        let lin = Expr::Bin(Op::Mul, Atom::int(2), Atom::var("x"));
        assert_eq!(LinExpr::from_expr(&lin), Some(LinExpr::with_coeff("x", 2)));
        let nonlin = Expr::Bin(Op::Mul, Atom::var("x"), Atom::var("y"));
        assert_eq!(LinExpr::from_expr(&nonlin), None);
        let div = Expr::Bin(Op::Div, Atom::var("x"), Atom::int(2));
        assert_eq!(LinExpr::from_expr(&div), None);
    }

    #[test]
    fn display_orders_terms_and_signs() {
        let e = LinExpr::with_coeff("x", 2).add(&LinExpr::with_coeff("N", -1)).add_const(3);
        assert_eq!(e.to_string(), "-N + 2*x + 3");
        assert_eq!(LinExpr::constant(0).to_string(), "0");
        assert_eq!(LinExpr::var("x").add_const(-1).to_string(), "x - 1");
        assert_eq!(LinExpr::with_coeff("x", -1).to_string(), "-x");
    }

    #[test]
    fn eval_requires_all_variables() {
        let e = LinExpr::var("x").add_const(1);
        let mut ints = BTreeMap::new();
        assert_eq!(e.eval(&ints), None);
        ints.insert("x".to_string(), 4.into());
        assert_eq!(e.eval(&ints), Some(5.into()));
    }
}
