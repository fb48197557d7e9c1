//! Seeded random generators for assertion terms, formulas and valuations.
//!
//! These drive the randomized checks that substitution commutes with
//! evaluation and that printing round-trips, both in unit tests and in the
//! acceptance suite. Generated conjunctions are always flat, matching the
//! canonical shape the printer produces.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::assertions::eval::Valuation;
use crate::assertions::{ArrayTerm, Formula, IndexRange, IntTerm, LinExpr, SeqTerm};
use crate::ast::{Int, Op};

pub const INT_POOL: &[&str] = &["x", "y", "z", "N", "b0", "b1"];
pub const ARR_POOL: &[&str] = &["a", "b"];
pub const SEQ_POOL: &[&str] = &["ia", "ib"];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("pool is nonempty")
}

pub fn linexpr<R: Rng>(rng: &mut R) -> LinExpr {
    let mut e = LinExpr::constant(rng.gen_range(-3i64..=5));
    for _ in 0..rng.gen_range(0..=2) {
        let x = pick(rng, INT_POOL);
        e = e.add(&LinExpr::with_coeff(x, rng.gen_range(-2i64..=2)));
    }
    e
}

pub fn int_term<R: Rng>(rng: &mut R, depth: usize) -> IntTerm {
    let leaf = depth == 0;
    match rng.gen_range(0..if leaf { 3 } else { 10 }) {
        0 => IntTerm::Const(Int::from(rng.gen_range(-5i64..=10))),
        1 | 2 => {
            let x = pick(rng, INT_POOL);
            if x.starts_with('b') && rng.gen_bool(0.5) {
                IntTerm::Buf(x.to_string())
            } else {
                IntTerm::Var(x.to_string())
            }
        }
        3 | 4 => IntTerm::Select(
            array_term(rng, depth - 1),
            Box::new(int_term(rng, depth - 1)),
        ),
        5 => IntTerm::Head(Box::new(seq_term(rng, depth - 1))),
        _ => {
            let op = *[Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Rem, Op::Lt, Op::Eq, Op::Le]
                .choose(rng)
                .expect("ops");
            IntTerm::bin(op, int_term(rng, depth - 1), int_term(rng, depth - 1))
        }
    }
}

pub fn array_term<R: Rng>(rng: &mut R, depth: usize) -> ArrayTerm {
    if depth == 0 || rng.gen_bool(0.5) {
        ArrayTerm::Var(pick(rng, ARR_POOL).to_string())
    } else {
        ArrayTerm::update(
            array_term(rng, depth - 1),
            int_term(rng, depth - 1),
            int_term(rng, depth - 1),
        )
    }
}

pub fn seq_term<R: Rng>(rng: &mut R, depth: usize) -> SeqTerm {
    let leaf = depth == 0;
    match rng.gen_range(0..if leaf { 3 } else { 8 }) {
        0 => SeqTerm::Nil,
        1 | 2 => SeqTerm::Var(pick(rng, SEQ_POOL).to_string()),
        3 => {
            // Mostly constant steps; occasionally zero or a variable to
            // exercise undefinedness.
            let step = match rng.gen_range(0..10) {
                0 => LinExpr::constant(0),
                1 => LinExpr::var(pick(rng, INT_POOL)),
                n => LinExpr::constant(if n % 2 == 0 { 1 } else { -1 }).scale(
                    &Int::from(rng.gen_range(1i64..=2)),
                ),
            };
            SeqTerm::Range(IndexRange::new(linexpr(rng), linexpr(rng), step))
        }
        4 => SeqTerm::cons(int_term(rng, depth - 1), seq_term(rng, depth - 1)),
        5 => SeqTerm::snoc(seq_term(rng, depth - 1), int_term(rng, depth - 1)),
        _ => SeqTerm::tail(seq_term(rng, depth - 1)),
    }
}

pub fn formula<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    if depth > 0 && rng.gen_bool(0.4) {
        let n = rng.gen_range(2..=3);
        let parts = (0..n).map(|_| non_and(rng, depth - 1)).collect();
        return Formula::And(parts);
    }
    non_and(rng, depth)
}

fn non_and<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    if depth > 0 && rng.gen_bool(0.25) {
        return Formula::not(formula(rng, depth - 1));
    }
    let d = depth.saturating_sub(1);
    match rng.gen_range(0..5) {
        0 => Formula::True,
        1 => Formula::Eq(int_term(rng, d), int_term(rng, d)),
        2 => Formula::Le(int_term(rng, d), int_term(rng, d)),
        3 => Formula::Mem(int_term(rng, d), seq_term(rng, d)),
        _ => Formula::SeqEq(seq_term(rng, d), seq_term(rng, d)),
    }
}

/// A total valuation over the generator pools: every integer variable,
/// array and sequence name is bound, with small array domains so selects
/// go out of bounds often enough to exercise partiality.
pub fn valuation<R: Rng>(rng: &mut R) -> Valuation {
    let mut v = Valuation::default();
    for x in INT_POOL {
        v.set_int(x, rng.gen_range(-5i64..=10));
    }
    for a in ARR_POOL {
        v.arrays.insert(a.to_string(), Default::default());
        for i in 0..rng.gen_range(0i64..=4) {
            v.set_cell(a, i, rng.gen_range(-20i64..=20));
        }
    }
    for s in SEQ_POOL {
        let len = rng.gen_range(0usize..=4);
        v.set_seq(
            s,
            (0..len).map(|_| Int::from(rng.gen_range(-5i64..=10))).collect(),
        );
    }
    v
}
