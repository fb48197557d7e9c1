//! Capture-free substitution for the three sorts.
//!
//! The assertion language has no binders, so substitution is plain
//! replacement — with one wrinkle: range bounds are linear expressions, so
//! substituting into a range that mentions the variable requires the
//! replacement term to linearize. Substituting a non-linear term into a
//! range position is an error, surfaced so callers can treat the statement
//! as unconvertible rather than produce a wrong formula.

use thiserror::Error;

use crate::assertions::{ArrayTerm, Formula, IntTerm, SeqTerm};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SubstError {
    #[error("cannot substitute non-linear term `{term}` for `{var}` inside an index range")]
    NonLinearRange { var: String, term: String },
}

/// `[t/x]f`: replaces the integer (or buffer) variable `x` by `t`.
pub fn subst_int(f: &Formula, x: &str, t: &IntTerm) -> Result<Formula, SubstError> {
    Ok(match f {
        Formula::True => Formula::True,
        Formula::Eq(l, r) => Formula::Eq(int(l, x, t)?, int(r, x, t)?),
        Formula::Le(l, r) => Formula::Le(int(l, x, t)?, int(r, x, t)?),
        Formula::Mem(i, s) => Formula::Mem(int(i, x, t)?, seq(s, x, t)?),
        Formula::SeqEq(l, r) => Formula::SeqEq(seq(l, x, t)?, seq(r, x, t)?),
        Formula::And(fs) => Formula::And(
            fs.iter().map(|f| subst_int(f, x, t)).collect::<Result<_, _>>()?,
        ),
        Formula::Not(inner) => Formula::not(subst_int(inner, x, t)?),
    })
}

fn int(term: &IntTerm, x: &str, t: &IntTerm) -> Result<IntTerm, SubstError> {
    Ok(match term {
        IntTerm::Const(_) => term.clone(),
        IntTerm::Var(y) | IntTerm::Buf(y) if y == x => t.clone(),
        IntTerm::Var(_) | IntTerm::Buf(_) => term.clone(),
        IntTerm::Select(a, i) => IntTerm::Select(arr(a, x, t)?, Box::new(int(i, x, t)?)),
        IntTerm::Bin(op, l, r) => {
            IntTerm::Bin(*op, Box::new(int(l, x, t)?), Box::new(int(r, x, t)?))
        }
        IntTerm::Head(s) => IntTerm::Head(Box::new(seq(s, x, t)?)),
    })
}

fn arr(a: &ArrayTerm, x: &str, t: &IntTerm) -> Result<ArrayTerm, SubstError> {
    Ok(match a {
        ArrayTerm::Var(_) => a.clone(),
        ArrayTerm::Update(b, i, v) => ArrayTerm::Update(
            Box::new(arr(b, x, t)?),
            Box::new(int(i, x, t)?),
            Box::new(int(v, x, t)?),
        ),
    })
}

fn seq(s: &SeqTerm, x: &str, t: &IntTerm) -> Result<SeqTerm, SubstError> {
    Ok(match s {
        SeqTerm::Var(_) | SeqTerm::Nil => s.clone(),
        SeqTerm::Cons(h, rest) => {
            SeqTerm::Cons(Box::new(int(h, x, t)?), Box::new(seq(rest, x, t)?))
        }
        SeqTerm::Snoc(rest, e) => {
            SeqTerm::Snoc(Box::new(seq(rest, x, t)?), Box::new(int(e, x, t)?))
        }
        SeqTerm::Tail(rest) => SeqTerm::Tail(Box::new(seq(rest, x, t)?)),
        SeqTerm::Range(r) => {
            if !r.mentions(x) {
                return Ok(s.clone());
            }
            let Some(lin) = t.linearize() else {
                return Err(SubstError::NonLinearRange {
                    var: x.to_string(),
                    term: t.to_string(),
                });
            };
            SeqTerm::Range(r.subst(x, &lin))
        }
    })
}

/// `[S/idx(a)]f`: replaces the index sequence of `a` by `s`.
pub fn subst_seq(f: &Formula, name: &str, s: &SeqTerm) -> Formula {
    let on_seq = |inner: &SeqTerm| seq_by_seq(inner, name, s);
    match f {
        Formula::True => Formula::True,
        Formula::Eq(l, r) => Formula::Eq(int_by_seq(l, name, s), int_by_seq(r, name, s)),
        Formula::Le(l, r) => Formula::Le(int_by_seq(l, name, s), int_by_seq(r, name, s)),
        Formula::Mem(i, sq) => Formula::Mem(int_by_seq(i, name, s), on_seq(sq)),
        Formula::SeqEq(l, r) => Formula::SeqEq(on_seq(l), on_seq(r)),
        Formula::And(fs) => Formula::And(fs.iter().map(|f| subst_seq(f, name, s)).collect()),
        Formula::Not(inner) => Formula::not(subst_seq(inner, name, s)),
    }
}

fn int_by_seq(term: &IntTerm, name: &str, s: &SeqTerm) -> IntTerm {
    match term {
        IntTerm::Const(_) | IntTerm::Var(_) | IntTerm::Buf(_) => term.clone(),
        IntTerm::Select(a, i) => {
            IntTerm::Select(arr_by_seq(a, name, s), Box::new(int_by_seq(i, name, s)))
        }
        IntTerm::Bin(op, l, r) => IntTerm::Bin(
            *op,
            Box::new(int_by_seq(l, name, s)),
            Box::new(int_by_seq(r, name, s)),
        ),
        IntTerm::Head(inner) => IntTerm::Head(Box::new(seq_by_seq(inner, name, s))),
    }
}

fn arr_by_seq(a: &ArrayTerm, name: &str, s: &SeqTerm) -> ArrayTerm {
    match a {
        ArrayTerm::Var(_) => a.clone(),
        ArrayTerm::Update(b, i, v) => ArrayTerm::Update(
            Box::new(arr_by_seq(b, name, s)),
            Box::new(int_by_seq(i, name, s)),
            Box::new(int_by_seq(v, name, s)),
        ),
    }
}

fn seq_by_seq(inner: &SeqTerm, name: &str, s: &SeqTerm) -> SeqTerm {
    match inner {
        SeqTerm::Var(x) if x == name => s.clone(),
        SeqTerm::Var(_) | SeqTerm::Nil | SeqTerm::Range(_) => inner.clone(),
        SeqTerm::Cons(h, rest) => SeqTerm::Cons(
            Box::new(int_by_seq(h, name, s)),
            Box::new(seq_by_seq(rest, name, s)),
        ),
        SeqTerm::Snoc(rest, e) => SeqTerm::Snoc(
            Box::new(seq_by_seq(rest, name, s)),
            Box::new(int_by_seq(e, name, s)),
        ),
        SeqTerm::Tail(rest) => SeqTerm::Tail(Box::new(seq_by_seq(rest, name, s))),
    }
}

/// `[A/a]f`: replaces the array variable `a` by the array term `A`.
pub fn subst_array(f: &Formula, name: &str, a: &ArrayTerm) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::Eq(l, r) => Formula::Eq(int_by_arr(l, name, a), int_by_arr(r, name, a)),
        Formula::Le(l, r) => Formula::Le(int_by_arr(l, name, a), int_by_arr(r, name, a)),
        Formula::Mem(i, s) => Formula::Mem(int_by_arr(i, name, a), seq_by_arr(s, name, a)),
        Formula::SeqEq(l, r) => {
            Formula::SeqEq(seq_by_arr(l, name, a), seq_by_arr(r, name, a))
        }
        Formula::And(fs) => Formula::And(fs.iter().map(|f| subst_array(f, name, a)).collect()),
        Formula::Not(inner) => Formula::not(subst_array(inner, name, a)),
    }
}

fn int_by_arr(term: &IntTerm, name: &str, a: &ArrayTerm) -> IntTerm {
    match term {
        IntTerm::Const(_) | IntTerm::Var(_) | IntTerm::Buf(_) => term.clone(),
        IntTerm::Select(b, i) => {
            IntTerm::Select(arr_by_arr(b, name, a), Box::new(int_by_arr(i, name, a)))
        }
        IntTerm::Bin(op, l, r) => IntTerm::Bin(
            *op,
            Box::new(int_by_arr(l, name, a)),
            Box::new(int_by_arr(r, name, a)),
        ),
        IntTerm::Head(s) => IntTerm::Head(Box::new(seq_by_arr(s, name, a))),
    }
}

fn arr_by_arr(b: &ArrayTerm, name: &str, a: &ArrayTerm) -> ArrayTerm {
    match b {
        ArrayTerm::Var(x) if x == name => a.clone(),
        ArrayTerm::Var(_) => b.clone(),
        ArrayTerm::Update(inner, i, v) => ArrayTerm::Update(
            Box::new(arr_by_arr(inner, name, a)),
            Box::new(int_by_arr(i, name, a)),
            Box::new(int_by_arr(v, name, a)),
        ),
    }
}

fn seq_by_arr(s: &SeqTerm, name: &str, a: &ArrayTerm) -> SeqTerm {
    match s {
        SeqTerm::Var(_) | SeqTerm::Nil | SeqTerm::Range(_) => s.clone(),
        SeqTerm::Cons(h, rest) => SeqTerm::Cons(
            Box::new(int_by_arr(h, name, a)),
            Box::new(seq_by_arr(rest, name, a)),
        ),
        SeqTerm::Snoc(rest, e) => SeqTerm::Snoc(
            Box::new(seq_by_arr(rest, name, a)),
            Box::new(int_by_arr(e, name, a)),
        ),
        SeqTerm::Tail(rest) => SeqTerm::Tail(Box::new(seq_by_arr(rest, name, a))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::{IndexRange, LinExpr};

    #[test]
    fn int_subst_reaches_range_bounds() {
        // [x + 1, N - 1; 1] under [x := x + 1] becomes [x + 2, N - 1; 1].
        let f = Formula::SeqEq(
            SeqTerm::idx("in"),
            SeqTerm::Range(IndexRange::unit(
                LinExpr::var("x").add_const(1),
                LinExpr::var("N").add_const(-1),
            )),
        );
        let stepped = subst_int(
            &f,
            "x",
            &IntTerm::bin(crate::ast::Op::Add, IntTerm::var("x"), IntTerm::int(1)),
        )
        .unwrap();
        let expect = Formula::SeqEq(
            SeqTerm::idx("in"),
            SeqTerm::Range(IndexRange::unit(
                LinExpr::var("x").add_const(2),
                LinExpr::var("N").add_const(-1),
            )),
        );
        assert_eq!(stepped, expect);
    }

    #[test]
    fn nonlinear_subst_into_range_errors() {
        let f = Formula::SeqEq(
            SeqTerm::idx("in"),
            SeqTerm::Range(IndexRange::unit(LinExpr::var("x"), LinExpr::var("N"))),
        );
        let err = subst_int(&f, "x", &IntTerm::select("a", IntTerm::int(0)));
        assert!(err.is_err());
        // Ranges not mentioning the variable are untouched.
        let ok = subst_int(&f, "y", &IntTerm::select("a", IntTerm::int(0)));
        assert!(ok.is_ok());
    }

    #[test]
    fn buffer_variables_substitute_by_name() {
        let cell = IntTerm::select("in", IntTerm::var("x"));
        let f = Formula::eq(IntTerm::Buf("b0".into()), cell.clone());
        let replaced = subst_int(&f, "b0", &cell).unwrap();
        // `in[x] = in[x]` does not collapse to `true`: when the cell is
        // unset both sides are undefined and the atom is false.
        assert_eq!(replaced, Formula::eq(cell.clone(), cell));
    }

    #[test]
    fn seq_subst_replaces_only_the_named_sequence() {
        let f = Formula::And(vec![
            Formula::SeqEq(SeqTerm::idx("in"), SeqTerm::Nil),
            Formula::SeqEq(SeqTerm::idx("out"), SeqTerm::Nil),
        ]);
        let g = subst_seq(&f, "in", &SeqTerm::tail(SeqTerm::idx("in")));
        assert_eq!(
            g,
            Formula::And(vec![
                Formula::SeqEq(SeqTerm::tail(SeqTerm::idx("in")), SeqTerm::Nil),
                Formula::SeqEq(SeqTerm::idx("out"), SeqTerm::Nil),
            ])
        );
    }

    #[test]
    fn array_subst_substitutes_under_selects() {
        let f = Formula::eq(IntTerm::select("a", IntTerm::var("i")), IntTerm::int(5));
        let upd = ArrayTerm::update(ArrayTerm::var("a"), IntTerm::var("i"), IntTerm::int(5));
        let g = subst_array(&f, "a", &upd);
        assert_eq!(g.normalize(), Formula::True);
    }
}
