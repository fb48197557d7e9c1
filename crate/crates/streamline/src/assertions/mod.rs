//! The restricted assertion language used for loop invariants, derivation
//! pre/postconditions and verification conditions.
//!
//! Assertions talk about integer registers, buffer registers, arrays (with
//! pointwise update), and index sequences. Sequences support head, tail,
//! cons, snoc and — the workhorse — arithmetic index ranges `[low, high;
//! step]` with linear bounds. Atomic formulas are partial: an atom whose
//! subterm is undefined (head of an empty sequence, division by zero, array
//! read outside the written domain) evaluates to false, and negation flips
//! it to true.

pub mod eval;
pub mod gen;
pub mod linexpr;
pub mod subst;
pub mod text;

pub use linexpr::LinExpr;

use num_traits::Zero;
use std::collections::BTreeSet;
use std::fmt;

use crate::ast::{Atom, Expr, Int, Name, Op, Ty, TypeEnv};

/// Integer-valued terms. Comparison operators are 0/1-valued, matching the
/// expression language.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IntTerm {
    Const(Int),
    Var(Name),
    /// A buffer register. Evaluates like `Var`; prints as `buf(b)`.
    Buf(Name),
    Select(ArrayTerm, Box<IntTerm>),
    Bin(Op, Box<IntTerm>, Box<IntTerm>),
    Head(Box<SeqTerm>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArrayTerm {
    Var(Name),
    /// `upd(a, i, v)`: `a` with cell `i` set to `v`.
    Update(Box<ArrayTerm>, Box<IntTerm>, Box<IntTerm>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeqTerm {
    /// The index sequence associated with array `a`; prints as `idx(a)`.
    Var(Name),
    Nil,
    Cons(Box<IntTerm>, Box<SeqTerm>),
    Snoc(Box<SeqTerm>, Box<IntTerm>),
    Tail(Box<SeqTerm>),
    Range(IndexRange),
}

/// `[low, high; step]`: the indices `low, low+step, ...` up to (down to,
/// for negative steps) `high`. A zero step is undefined.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexRange {
    pub low: LinExpr,
    pub high: LinExpr,
    pub step: LinExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    Eq(IntTerm, IntTerm),
    Le(IntTerm, IntTerm),
    /// `t in S`.
    Mem(IntTerm, SeqTerm),
    /// Sequence equality, e.g. `idx(a) = [0, x - 1; 1]`.
    SeqEq(SeqTerm, SeqTerm),
    And(Vec<Formula>),
    Not(Box<Formula>),
}

impl IntTerm {
    pub fn int(n: i64) -> IntTerm {
        IntTerm::Const(Int::from(n))
    }

    pub fn var(x: &str) -> IntTerm {
        IntTerm::Var(x.to_string())
    }

    /// `a[i]` over a plain array variable.
    pub fn select(arr: &str, idx: IntTerm) -> IntTerm {
        IntTerm::Select(ArrayTerm::Var(arr.to_string()), Box::new(idx))
    }

    pub fn bin(op: Op, l: IntTerm, r: IntTerm) -> IntTerm {
        IntTerm::Bin(op, Box::new(l), Box::new(r))
    }

    /// Converts a program expression, marking buffer registers per `env`.
    pub fn from_expr(e: &Expr, env: &TypeEnv) -> IntTerm {
        let atom = |a: &Atom| -> IntTerm {
            match a {
                Atom::Const(n) => IntTerm::Const(n.clone()),
                Atom::Var(x) if env.lookup(x) == Some(Ty::Buf) => IntTerm::Buf(x.clone()),
                Atom::Var(x) => IntTerm::Var(x.clone()),
            }
        };
        match e {
            Expr::Atom(a) => atom(a),
            Expr::Bin(op, l, r) => IntTerm::bin(*op, atom(l), atom(r)),
        }
    }

    /// Linearizes the term if it is built from constants, variables, `+`,
    /// `-` and constant multiplication.
    pub fn linearize(&self) -> Option<LinExpr> {
        match self {
            IntTerm::Const(n) => Some(LinExpr::constant(n.clone())),
            IntTerm::Var(x) | IntTerm::Buf(x) => Some(LinExpr::var(x)),
            IntTerm::Bin(Op::Add, l, r) => Some(l.linearize()?.add(&r.linearize()?)),
            IntTerm::Bin(Op::Sub, l, r) => Some(l.linearize()?.sub(&r.linearize()?)),
            IntTerm::Bin(Op::Mul, l, r) => {
                let ll = l.linearize()?;
                let rl = r.linearize()?;
                if let Some(c) = ll.as_const() {
                    Some(rl.scale(c))
                } else {
                    rl.as_const().map(|c| ll.scale(c))
                }
            }
            _ => None,
        }
    }

    /// True when evaluation can never be undefined (given values for all
    /// variables): no selects, no heads, no division by a non-constant.
    pub fn is_total(&self) -> bool {
        match self {
            IntTerm::Const(_) | IntTerm::Var(_) | IntTerm::Buf(_) => true,
            IntTerm::Select(..) | IntTerm::Head(_) => false,
            IntTerm::Bin(op, l, r) => {
                let div = matches!(op, Op::Div | Op::Rem);
                let safe_rhs = !div || matches!(&**r, IntTerm::Const(n) if !n.is_zero());
                safe_rhs && l.is_total() && r.is_total()
            }
        }
    }

    fn norm(&self) -> IntTerm {
        match self {
            IntTerm::Select(arr, idx) => {
                let arr = arr.norm();
                let idx = idx.norm();
                // upd(a, i, v)[i] is v; a distinct constant index skips the
                // update. Only for indices that cannot be undefined, since
                // an undefined index makes the whole select undefined.
                if let ArrayTerm::Update(inner, i, v) = &arr {
                    if **i == idx && idx.is_total() {
                        return (**v).clone();
                    }
                    if let (IntTerm::Const(ci), IntTerm::Const(cj)) = (&**i, &idx) {
                        if ci != cj {
                            return IntTerm::Select((**inner).clone(), Box::new(idx)).norm();
                        }
                    }
                }
                IntTerm::Select(arr, Box::new(idx))
            }
            IntTerm::Bin(op, l, r) => {
                let l = l.norm();
                let r = r.norm();
                if let (IntTerm::Const(a), IntTerm::Const(b)) = (&l, &r) {
                    if let Some(v) = eval::apply_op(*op, a, b) {
                        return IntTerm::Const(v);
                    }
                }
                IntTerm::Bin(op.clone(), Box::new(l), Box::new(r))
            }
            IntTerm::Head(s) => {
                let s = s.norm();
                if let Some(h) = s.head_term() {
                    return h;
                }
                IntTerm::Head(Box::new(s))
            }
            leaf => leaf.clone(),
        }
    }
}

impl ArrayTerm {
    pub fn var(a: &str) -> ArrayTerm {
        ArrayTerm::Var(a.to_string())
    }

    pub fn update(base: ArrayTerm, idx: IntTerm, val: IntTerm) -> ArrayTerm {
        ArrayTerm::Update(Box::new(base), Box::new(idx), Box::new(val))
    }

    fn norm(&self) -> ArrayTerm {
        match self {
            ArrayTerm::Var(a) => ArrayTerm::Var(a.clone()),
            ArrayTerm::Update(b, i, v) => {
                ArrayTerm::Update(Box::new(b.norm()), Box::new(i.norm()), Box::new(v.norm()))
            }
        }
    }
}

impl IndexRange {
    pub fn new(low: LinExpr, high: LinExpr, step: LinExpr) -> IndexRange {
        IndexRange { low, high, step }
    }

    /// `[l, h; 1]` over linear bounds.
    pub fn unit(low: LinExpr, high: LinExpr) -> IndexRange {
        IndexRange::new(low, high, LinExpr::constant(1))
    }

    pub fn subst(&self, x: &str, by: &LinExpr) -> IndexRange {
        IndexRange {
            low: self.low.subst(x, by),
            high: self.high.subst(x, by),
            step: self.step.subst(x, by),
        }
    }

    pub fn mentions(&self, x: &str) -> bool {
        self.low.mentions(x) || self.high.mentions(x) || self.step.mentions(x)
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        self.low
            .vars()
            .chain(self.high.vars())
            .chain(self.step.vars())
            .cloned()
            .collect()
    }

    /// The denotation under an integer valuation; `None` when a bound
    /// mentions an unbound variable or the step is zero.
    pub fn denote(
        &self,
        ints: &std::collections::BTreeMap<Name, Int>,
    ) -> Option<Vec<Int>> {
        let l = self.low.eval(ints)?;
        let h = self.high.eval(ints)?;
        let s = self.step.eval(ints)?;
        if s.is_zero() {
            return None;
        }
        let mut out = Vec::new();
        let mut cur = l;
        let ascending = s > Int::zero();
        while (ascending && cur <= h) || (!ascending && cur >= h) {
            out.push(cur.clone());
            cur += &s;
        }
        Some(out)
    }
}

impl SeqTerm {
    pub fn idx(a: &str) -> SeqTerm {
        SeqTerm::Var(a.to_string())
    }

    pub fn range(r: IndexRange) -> SeqTerm {
        SeqTerm::Range(r)
    }

    pub fn tail(s: SeqTerm) -> SeqTerm {
        SeqTerm::Tail(Box::new(s))
    }

    pub fn snoc(s: SeqTerm, t: IntTerm) -> SeqTerm {
        SeqTerm::Snoc(Box::new(s), Box::new(t))
    }

    pub fn cons(t: IntTerm, s: SeqTerm) -> SeqTerm {
        SeqTerm::Cons(Box::new(t), Box::new(s))
    }

    /// True when evaluation can never be undefined given a full valuation.
    pub fn is_total(&self) -> bool {
        match self {
            SeqTerm::Var(_) | SeqTerm::Nil => true,
            SeqTerm::Cons(t, s) => t.is_total() && s.is_total(),
            SeqTerm::Snoc(s, t) => t.is_total() && s.is_total(),
            SeqTerm::Tail(_) => false,
            SeqTerm::Range(r) => matches!(r.step.as_const(), Some(s) if !s.is_zero()),
        }
    }

    /// The head as a term, when it is syntactically evident.
    fn head_term(&self) -> Option<IntTerm> {
        match self {
            SeqTerm::Cons(t, _) => Some((**t).clone()),
            // A range starting and ending at the same bound is a singleton
            // for any nonzero constant step.
            SeqTerm::Range(r) => {
                if !matches!(r.step.as_const(), Some(s) if !s.is_zero()) {
                    return None;
                }
                if r.low == r.high {
                    return Some(linexpr_term(&r.low));
                }
                // Constant ranges expose their first element directly.
                let d = r.denote(&Default::default())?;
                d.first().map(|n| IntTerm::Const(n.clone()))
            }
            _ => None,
        }
    }

    fn norm(&self) -> SeqTerm {
        match self {
            SeqTerm::Var(_) | SeqTerm::Nil => self.clone(),
            SeqTerm::Cons(t, s) => {
                let t = t.norm();
                let s = s.norm();
                // Constant element extending a constant range downward.
                if let (IntTerm::Const(c), SeqTerm::Range(r)) = (&t, &s) {
                    if let Some(d) = r.denote(&Default::default()) {
                        let step = r.step.as_const().cloned().unwrap_or_else(Int::zero);
                        if !d.is_empty() && !step.is_zero() && *c == &d[0] - &step {
                            return SeqTerm::Range(IndexRange::new(
                                LinExpr::constant(c.clone()),
                                r.high.clone(),
                                r.step.clone(),
                            ))
                            .norm();
                        }
                    }
                }
                SeqTerm::Cons(Box::new(t), Box::new(s))
            }
            SeqTerm::Snoc(s, t) => {
                let s = s.norm();
                let t = t.norm();
                match (&s, &t) {
                    (SeqTerm::Nil, _) => SeqTerm::Cons(Box::new(t), Box::new(SeqTerm::Nil)),
                    (SeqTerm::Range(r), IntTerm::Const(c)) => {
                        if let Some(d) = r.denote(&Default::default()) {
                            let step = r.step.as_const().cloned().unwrap_or_else(Int::zero);
                            if !d.is_empty()
                                && !step.is_zero()
                                && *c == d.last().expect("nonempty") + &step
                            {
                                return SeqTerm::Range(IndexRange::new(
                                    r.low.clone(),
                                    LinExpr::constant(c.clone()),
                                    r.step.clone(),
                                ))
                                .norm();
                            }
                        }
                        SeqTerm::Snoc(Box::new(s), Box::new(t))
                    }
                    _ => SeqTerm::Snoc(Box::new(s), Box::new(t)),
                }
            }
            SeqTerm::Tail(s) => {
                let s = s.norm();
                match &s {
                    SeqTerm::Cons(_, rest) => (**rest).clone(),
                    SeqTerm::Range(r) => {
                        let step_ok =
                            matches!(r.step.as_const(), Some(c) if !c.is_zero());
                        if step_ok && r.low == r.high {
                            return SeqTerm::Nil;
                        }
                        if let Some(d) = r.denote(&Default::default()) {
                            if !d.is_empty() {
                                return SeqTerm::Range(IndexRange::new(
                                    r.low.add(&r.step),
                                    r.high.clone(),
                                    r.step.clone(),
                                ))
                                .norm();
                            }
                        }
                        SeqTerm::Tail(Box::new(s))
                    }
                    _ => SeqTerm::Tail(Box::new(s)),
                }
            }
            SeqTerm::Range(r) => {
                // Constant ranges: empty becomes nil, otherwise the high
                // bound is clamped to the last element actually reached.
                if let Some(d) = r.denote(&Default::default()) {
                    return match d.as_slice() {
                        [] => SeqTerm::Nil,
                        [one] => SeqTerm::Cons(
                            Box::new(IntTerm::Const(one.clone())),
                            Box::new(SeqTerm::Nil),
                        ),
                        many => SeqTerm::Range(IndexRange::new(
                            r.low.clone(),
                            LinExpr::constant(many.last().expect("nonempty").clone()),
                            r.step.clone(),
                        )),
                    };
                }
                self.clone()
            }
        }
    }
}

/// Canonical term form of a linear expression.
pub fn linexpr_term(e: &LinExpr) -> IntTerm {
    let mut acc: Option<IntTerm> = None;
    for (x, c) in e.terms() {
        let var = IntTerm::var(x);
        let mag = Int::from(c.magnitude().clone());
        let prod = if mag == 1.into() {
            var
        } else {
            IntTerm::bin(Op::Mul, IntTerm::Const(mag), var)
        };
        acc = Some(match acc {
            None if c < &Int::zero() => {
                IntTerm::bin(Op::Sub, IntTerm::int(0), prod)
            }
            None => prod,
            Some(a) if c < &Int::zero() => IntTerm::bin(Op::Sub, a, prod),
            Some(a) => IntTerm::bin(Op::Add, a, prod),
        });
    }
    let k = e.constant_part();
    match acc {
        None => IntTerm::Const(k.clone()),
        Some(a) if k.is_zero() => a,
        Some(a) if k < &Int::zero() => {
            IntTerm::bin(Op::Sub, a, IntTerm::Const(Int::from(k.magnitude().clone())))
        }
        Some(a) => IntTerm::bin(Op::Add, a, IntTerm::Const(k.clone())),
    }
}

impl Formula {
    /// Conjunction, flattening trivial cases.
    pub fn and(mut parts: Vec<Formula>) -> Formula {
        parts.retain(|f| *f != Formula::True);
        match parts.len() {
            0 => Formula::True,
            1 => parts.pop().expect("one element"),
            _ => Formula::And(parts),
        }
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    /// `false` as the negation of `true`.
    pub fn falsum() -> Formula {
        Formula::not(Formula::True)
    }

    pub fn eq(l: IntTerm, r: IntTerm) -> Formula {
        Formula::Eq(l, r)
    }

    pub fn le(l: IntTerm, r: IntTerm) -> Formula {
        Formula::Le(l, r)
    }

    pub fn neq(l: IntTerm, r: IntTerm) -> Formula {
        Formula::not(Formula::Eq(l, r))
    }

    /// Conjuncts of the formula viewed as a conjunction.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(fs) => fs.iter().flat_map(|f| f.conjuncts()).collect(),
            Formula::True => vec![],
            other => vec![other],
        }
    }

    /// Canonical form: conjunctions flattened, sorted and deduplicated,
    /// double negations removed, terms simplified by the denotation-exact
    /// rewrites. Two formulas with equal normal forms are equivalent.
    pub fn normalize(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Eq(l, r) => {
                let l = l.norm();
                let r = r.norm();
                if let (IntTerm::Const(a), IntTerm::Const(b)) = (&l, &r) {
                    return if a == b { Formula::True } else { Formula::falsum() };
                }
                if l == r && l.is_total() {
                    return Formula::True;
                }
                // Order sides canonically so `x = y` and `y = x` agree.
                if r < l {
                    Formula::Eq(r, l)
                } else {
                    Formula::Eq(l, r)
                }
            }
            Formula::Le(l, r) => {
                let l = l.norm();
                let r = r.norm();
                if let (IntTerm::Const(a), IntTerm::Const(b)) = (&l, &r) {
                    return if a <= b { Formula::True } else { Formula::falsum() };
                }
                if l == r && l.is_total() {
                    return Formula::True;
                }
                Formula::Le(l, r)
            }
            Formula::Mem(t, s) => {
                let t = t.norm();
                let s = s.norm();
                if s == SeqTerm::Nil {
                    return Formula::falsum();
                }
                if let (IntTerm::Const(c), SeqTerm::Range(r)) = (&t, &s) {
                    if let Some(d) = r.denote(&Default::default()) {
                        return if d.contains(c) { Formula::True } else { Formula::falsum() };
                    }
                }
                Formula::Mem(t, s)
            }
            Formula::SeqEq(l, r) => {
                let l = l.norm();
                let r = r.norm();
                if l == r && l.is_total() {
                    return Formula::True;
                }
                if r < l {
                    Formula::SeqEq(r, l)
                } else {
                    Formula::SeqEq(l, r)
                }
            }
            Formula::And(_) => {
                let mut parts: Vec<Formula> = self
                    .conjuncts()
                    .into_iter()
                    .map(|f| f.normalize())
                    .flat_map(|f| match f {
                        Formula::And(inner) => inner,
                        Formula::True => vec![],
                        other => vec![other],
                    })
                    .collect();
                parts.sort();
                parts.dedup();
                Formula::and(parts)
            }
            Formula::Not(inner) => match inner.normalize() {
                Formula::Not(f) => *f,
                f => Formula::not(f),
            },
        }
    }
}

/// Free variables of each sort.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreeVars {
    pub ints: BTreeSet<Name>,
    pub arrays: BTreeSet<Name>,
    pub seqs: BTreeSet<Name>,
}

pub fn free_vars(f: &Formula) -> FreeVars {
    let mut out = FreeVars::default();
    collect_formula(f, &mut out);
    out
}

fn collect_formula(f: &Formula, out: &mut FreeVars) {
    match f {
        Formula::True => {}
        Formula::Eq(l, r) | Formula::Le(l, r) => {
            collect_int(l, out);
            collect_int(r, out);
        }
        Formula::Mem(t, s) => {
            collect_int(t, out);
            collect_seq(s, out);
        }
        Formula::SeqEq(l, r) => {
            collect_seq(l, out);
            collect_seq(r, out);
        }
        Formula::And(fs) => fs.iter().for_each(|f| collect_formula(f, out)),
        Formula::Not(inner) => collect_formula(inner, out),
    }
}

fn collect_int(t: &IntTerm, out: &mut FreeVars) {
    match t {
        IntTerm::Const(_) => {}
        IntTerm::Var(x) | IntTerm::Buf(x) => {
            out.ints.insert(x.clone());
        }
        IntTerm::Select(a, i) => {
            collect_arr(a, out);
            collect_int(i, out);
        }
        IntTerm::Bin(_, l, r) => {
            collect_int(l, out);
            collect_int(r, out);
        }
        IntTerm::Head(s) => collect_seq(s, out),
    }
}

fn collect_arr(a: &ArrayTerm, out: &mut FreeVars) {
    match a {
        ArrayTerm::Var(x) => {
            out.arrays.insert(x.clone());
        }
        ArrayTerm::Update(b, i, v) => {
            collect_arr(b, out);
            collect_int(i, out);
            collect_int(v, out);
        }
    }
}

fn collect_seq(s: &SeqTerm, out: &mut FreeVars) {
    match s {
        SeqTerm::Var(x) => {
            out.seqs.insert(x.clone());
        }
        SeqTerm::Nil => {}
        SeqTerm::Cons(t, rest) => {
            collect_int(t, out);
            collect_seq(rest, out);
        }
        SeqTerm::Snoc(rest, t) => {
            collect_seq(rest, out);
            collect_int(t, out);
        }
        SeqTerm::Tail(rest) => collect_seq(rest, out),
        SeqTerm::Range(r) => {
            out.ints.extend(r.vars());
        }
    }
}

/// Membership in a range as an arithmetic formula: bounds plus a stride
/// divisibility test. Requires a nonzero constant step.
pub fn range_membership(t: &IntTerm, r: &IndexRange) -> Option<Formula> {
    let step = r.step.as_const()?.clone();
    if step.is_zero() {
        return None;
    }
    let low = linexpr_term(&r.low);
    let high = linexpr_term(&r.high);
    let stride = Formula::Eq(
        IntTerm::bin(
            Op::Rem,
            IntTerm::bin(Op::Sub, t.clone(), low.clone()),
            IntTerm::Const(step.clone()),
        ),
        IntTerm::int(0),
    );
    let bounds = if step > Int::zero() {
        vec![Formula::Le(low, t.clone()), Formula::Le(t.clone(), high)]
    } else {
        vec![Formula::Le(high, t.clone()), Formula::Le(t.clone(), low)]
    };
    Some(Formula::and(bounds.into_iter().chain([stride]).collect()))
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", text::print_formula(self))
    }
}

impl fmt::Display for IntTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", text::print_int(self))
    }
}

impl fmt::Display for SeqTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", text::print_seq(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(n: i64) -> LinExpr {
        LinExpr::constant(n)
    }

    #[test]
    fn constant_range_denotations() {
        let r = IndexRange::new(num(0), num(5), num(2));
        assert_eq!(
            r.denote(&Default::default()),
            Some(vec![0.into(), 2.into(), 4.into()])
        );
        let down = IndexRange::new(num(5), num(1), num(-2));
        assert_eq!(
            down.denote(&Default::default()),
            Some(vec![5.into(), 3.into(), 1.into()])
        );
        let empty = IndexRange::new(num(3), num(2), num(1));
        assert_eq!(empty.denote(&Default::default()), Some(vec![]));
    }

    #[test]
    fn normalization_flattens_and_sorts_conjunctions() {
        let a = Formula::le(IntTerm::var("x"), IntTerm::var("y"));
        let b = Formula::eq(IntTerm::var("i"), IntTerm::var("j"));
        let f = Formula::And(vec![
            Formula::True,
            Formula::And(vec![a.clone(), Formula::True]),
            b.clone(),
            a.clone(),
        ]);
        let n = f.normalize();
        assert_eq!(n, Formula::And(vec![b.normalize(), a.normalize()]).normalize());
        assert_eq!(n.conjuncts().len(), 2);
    }

    #[test]
    fn double_negation_cancels() {
        let a = Formula::le(IntTerm::var("x"), IntTerm::var("y"));
        assert_eq!(Formula::not(Formula::not(a.clone())).normalize(), a.normalize());
    }

    #[test]
    fn select_of_update_simplifies() {
        let upd = ArrayTerm::update(ArrayTerm::var("a"), IntTerm::var("i"), IntTerm::int(7));
        let same = IntTerm::Select(upd.clone(), Box::new(IntTerm::var("i")));
        assert_eq!(same.norm(), IntTerm::int(7));
        let other = IntTerm::Select(
            ArrayTerm::update(ArrayTerm::var("a"), IntTerm::int(1), IntTerm::int(7)),
            Box::new(IntTerm::int(2)),
        );
        assert_eq!(other.norm(), IntTerm::select("a", IntTerm::int(2)));
    }

    #[test]
    fn select_of_update_keeps_partial_indices() {
        // hd(nil) is undefined, so upd(a, hd(nil), v)[hd(nil)] must not
        // simplify to v: the original is undefined (hence atomically
        // false), the rewrite would be defined.
        let bad_idx = IntTerm::Head(Box::new(SeqTerm::Nil));
        let t = IntTerm::Select(
            ArrayTerm::update(ArrayTerm::var("a"), bad_idx.clone(), IntTerm::int(7)),
            Box::new(bad_idx),
        );
        assert!(matches!(t.norm(), IntTerm::Select(..)));
    }

    #[test]
    fn empty_constant_ranges_become_nil() {
        let r = SeqTerm::Range(IndexRange::new(num(0), num(-1), num(1)));
        assert_eq!(r.norm(), SeqTerm::Nil);
        let also = SeqTerm::Range(IndexRange::new(num(5), num(9), num(-1)));
        assert_eq!(also.norm(), SeqTerm::Nil);
    }

    #[test]
    fn tail_and_snoc_fold_over_constant_ranges() {
        let r = SeqTerm::Range(IndexRange::new(num(0), num(4), num(2)));
        assert_eq!(
            SeqTerm::tail(r.clone()).norm(),
            SeqTerm::Range(IndexRange::new(num(2), num(4), num(2)))
        );
        assert_eq!(
            SeqTerm::snoc(r.clone(), IntTerm::int(6)).norm(),
            SeqTerm::Range(IndexRange::new(num(0), num(6), num(2)))
        );
        // Non-extending snoc stays symbolic.
        assert!(matches!(
            SeqTerm::snoc(r, IntTerm::int(7)).norm(),
            SeqTerm::Snoc(..)
        ));
    }

    #[test]
    fn tail_of_syntactic_singleton_is_nil() {
        let r = SeqTerm::Range(IndexRange::new(
            LinExpr::var("x"),
            LinExpr::var("x"),
            num(1),
        ));
        assert_eq!(SeqTerm::tail(r).norm(), SeqTerm::Nil);
    }

    #[test]
    fn range_membership_encodes_bounds_and_stride() {
        let r = IndexRange::new(num(0), LinExpr::var("N").add_const(-1), num(2));
        let f = range_membership(&IntTerm::var("t"), &r).unwrap();
        let fv = free_vars(&f);
        assert!(fv.ints.contains("t"));
        assert!(fv.ints.contains("N"));
        assert!(range_membership(
            &IntTerm::var("t"),
            &IndexRange::new(num(0), num(3), LinExpr::var("s"))
        )
        .is_none());
    }

    #[test]
    fn head_of_singleton_range_is_its_bound() {
        let r = SeqTerm::Range(IndexRange::new(
            LinExpr::var("x").add_const(1),
            LinExpr::var("x").add_const(1),
            num(1),
        ));
        let h = IntTerm::Head(Box::new(r)).norm();
        assert_eq!(h, linexpr_term(&LinExpr::var("x").add_const(1)));
    }
}
