//! Assertion evaluation against concrete valuations.
//!
//! Terms evaluate partially: a missing variable, an out-of-domain array
//! read, the head or tail of an empty sequence, a zero step, or division by
//! zero all yield `None`. Formulas are total: an atom over an undefined
//! term is false, and negation flips that to true, so `not(hd(idx(a)) = 0)`
//! holds when the sequence is empty.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::assertions::{ArrayTerm, Formula, IntTerm, SeqTerm};
use crate::ast::{Int, Name, Op};

/// Values for every sort: integer registers (buffers included), array
/// contents as partial maps, and index sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Valuation {
    pub ints: BTreeMap<Name, Int>,
    pub arrays: BTreeMap<Name, BTreeMap<Int, Int>>,
    pub seqs: BTreeMap<Name, Vec<Int>>,
}

impl Valuation {
    pub fn set_int(&mut self, x: &str, v: impl Into<Int>) {
        self.ints.insert(x.to_string(), v.into());
    }

    pub fn set_seq(&mut self, x: &str, v: Vec<Int>) {
        self.seqs.insert(x.to_string(), v);
    }

    pub fn set_cell(&mut self, a: &str, i: impl Into<Int>, v: impl Into<Int>) {
        self.arrays
            .entry(a.to_string())
            .or_default()
            .insert(i.into(), v.into());
    }
}

/// Integer operators; comparisons yield 0/1, division truncates toward
/// zero, and division or remainder by zero is undefined.
pub fn apply_op(op: Op, a: &Int, b: &Int) -> Option<Int> {
    let flag = |c: bool| Some(Int::from(if c { 1 } else { 0 }));
    match op {
        Op::Add => Some(a + b),
        Op::Sub => Some(a - b),
        Op::Mul => Some(a * b),
        Op::Div => (!b.is_zero()).then(|| a / b),
        Op::Rem => (!b.is_zero()).then(|| a % b),
        Op::Lt => flag(a < b),
        Op::Eq => flag(a == b),
        Op::Le => flag(a <= b),
    }
}

pub fn eval_int(t: &IntTerm, v: &Valuation) -> Option<Int> {
    match t {
        IntTerm::Const(n) => Some(n.clone()),
        IntTerm::Var(x) | IntTerm::Buf(x) => v.ints.get(x).cloned(),
        IntTerm::Select(arr, idx) => {
            let a = eval_array(arr, v)?;
            let i = eval_int(idx, v)?;
            a.get(&i).cloned()
        }
        IntTerm::Bin(op, l, r) => {
            let a = eval_int(l, v)?;
            let b = eval_int(r, v)?;
            apply_op(*op, &a, &b)
        }
        IntTerm::Head(s) => eval_seq(s, v)?.first().cloned(),
    }
}

pub fn eval_array(a: &ArrayTerm, v: &Valuation) -> Option<BTreeMap<Int, Int>> {
    match a {
        ArrayTerm::Var(x) => v.arrays.get(x).cloned(),
        ArrayTerm::Update(base, idx, val) => {
            let mut m = eval_array(base, v)?;
            let i = eval_int(idx, v)?;
            let x = eval_int(val, v)?;
            m.insert(i, x);
            Some(m)
        }
    }
}

pub fn eval_seq(s: &SeqTerm, v: &Valuation) -> Option<Vec<Int>> {
    match s {
        SeqTerm::Var(x) => v.seqs.get(x).cloned(),
        SeqTerm::Nil => Some(Vec::new()),
        SeqTerm::Cons(t, rest) => {
            let hd = eval_int(t, v)?;
            let mut out = vec![hd];
            out.extend(eval_seq(rest, v)?);
            Some(out)
        }
        SeqTerm::Snoc(rest, t) => {
            let mut out = eval_seq(rest, v)?;
            out.push(eval_int(t, v)?);
            Some(out)
        }
        SeqTerm::Tail(rest) => {
            let inner = eval_seq(rest, v)?;
            if inner.is_empty() {
                None
            } else {
                Some(inner[1..].to_vec())
            }
        }
        SeqTerm::Range(r) => r.denote(&v.ints),
    }
}

pub fn eval_formula(f: &Formula, v: &Valuation) -> bool {
    match f {
        Formula::True => true,
        Formula::Eq(l, r) => match (eval_int(l, v), eval_int(r, v)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        Formula::Le(l, r) => match (eval_int(l, v), eval_int(r, v)) {
            (Some(a), Some(b)) => a <= b,
            _ => false,
        },
        Formula::Mem(t, s) => match (eval_int(t, v), eval_seq(s, v)) {
            (Some(a), Some(items)) => items.contains(&a),
            _ => false,
        },
        Formula::SeqEq(l, r) => match (eval_seq(l, v), eval_seq(r, v)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        Formula::And(fs) => fs.iter().all(|f| eval_formula(f, v)),
        Formula::Not(inner) => !eval_formula(inner, v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::{IndexRange, LinExpr};

    fn val() -> Valuation {
        let mut v = Valuation::default();
        v.set_int("x", 3);
        v.set_int("N", 8);
        v.set_cell("a", 0, 10);
        v.set_cell("a", 1, 11);
        v.set_seq("ia", vec![1.into(), 2.into(), 3.into()]);
        v
    }

    #[test]
    fn division_truncates_toward_zero() {
        assert_eq!(apply_op(Op::Div, &7.into(), &2.into()), Some(3.into()));
        assert_eq!(apply_op(Op::Div, &(-7).into(), &2.into()), Some((-3).into()));
        assert_eq!(apply_op(Op::Rem, &(-7).into(), &2.into()), Some((-1).into()));
        assert_eq!(apply_op(Op::Div, &7.into(), &0.into()), None);
    }

    #[test]
    fn out_of_domain_reads_are_undefined() {
        let v = val();
        let in_dom = IntTerm::select("a", IntTerm::int(1));
        assert_eq!(eval_int(&in_dom, &v), Some(11.into()));
        let out_dom = IntTerm::select("a", IntTerm::int(5));
        assert_eq!(eval_int(&out_dom, &v), None);
        // An atom over the undefined read is false; negation is true.
        assert!(!eval_formula(&Formula::eq(out_dom.clone(), IntTerm::int(0)), &v));
        assert!(eval_formula(
            &Formula::not(Formula::eq(out_dom, IntTerm::int(0))),
            &v
        ));
    }

    #[test]
    fn update_extends_the_domain() {
        let v = val();
        let upd = ArrayTerm::update(ArrayTerm::var("a"), IntTerm::int(5), IntTerm::int(50));
        let read = IntTerm::Select(upd, Box::new(IntTerm::int(5)));
        assert_eq!(eval_int(&read, &v), Some(50.into()));
    }

    #[test]
    fn sequence_operations_evaluate() {
        let v = val();
        let ia = SeqTerm::idx("ia");
        assert_eq!(
            eval_int(&IntTerm::Head(Box::new(ia.clone())), &v),
            Some(1.into())
        );
        assert_eq!(
            eval_seq(&SeqTerm::tail(ia.clone()), &v),
            Some(vec![2.into(), 3.into()])
        );
        assert_eq!(
            eval_seq(&SeqTerm::snoc(ia.clone(), IntTerm::int(9)), &v),
            Some(vec![1.into(), 2.into(), 3.into(), 9.into()])
        );
        assert_eq!(eval_seq(&SeqTerm::tail(SeqTerm::Nil), &v), None);
        assert_eq!(eval_int(&IntTerm::Head(Box::new(SeqTerm::Nil)), &v), None);
    }

    #[test]
    fn ranges_follow_the_valuation() {
        let v = val();
        // [x + 1, N - 1; 2] with x=3, N=8 is 4, 6.
        let r = SeqTerm::Range(IndexRange::new(
            LinExpr::var("x").add_const(1),
            LinExpr::var("N").add_const(-1),
            LinExpr::constant(2),
        ));
        assert_eq!(eval_seq(&r, &v), Some(vec![4.into(), 6.into()]));
        let f = Formula::Mem(IntTerm::int(6), r.clone());
        assert!(eval_formula(&f, &v));
        assert!(!eval_formula(&Formula::Mem(IntTerm::int(5), r), &v));
    }

    #[test]
    fn zero_step_is_undefined() {
        let v = val();
        let r = SeqTerm::Range(IndexRange::new(
            LinExpr::constant(0),
            LinExpr::constant(3),
            LinExpr::constant(0),
        ));
        assert_eq!(eval_seq(&r, &v), None);
        assert!(!eval_formula(&Formula::SeqEq(r.clone(), r), &v));
    }

    #[test]
    fn normalization_preserves_evaluation() {
        let v = val();
        let cases = vec![
            Formula::Mem(
                IntTerm::var("x"),
                SeqTerm::tail(SeqTerm::Range(IndexRange::new(
                    LinExpr::constant(1),
                    LinExpr::constant(5),
                    LinExpr::constant(1),
                ))),
            ),
            Formula::eq(
                IntTerm::Select(
                    ArrayTerm::update(ArrayTerm::var("a"), IntTerm::var("x"), IntTerm::int(9)),
                    Box::new(IntTerm::var("x")),
                ),
                IntTerm::int(9),
            ),
            Formula::SeqEq(
                SeqTerm::snoc(
                    SeqTerm::Range(IndexRange::new(
                        LinExpr::constant(0),
                        LinExpr::constant(2),
                        LinExpr::constant(1),
                    )),
                    IntTerm::int(3),
                ),
                SeqTerm::Range(IndexRange::new(
                    LinExpr::constant(0),
                    LinExpr::constant(3),
                    LinExpr::constant(1),
                )),
            ),
        ];
        for f in cases {
            assert_eq!(
                eval_formula(&f, &v),
                eval_formula(&f.normalize(), &v),
                "normalization changed the value of {f:?}"
            );
        }
    }
}
