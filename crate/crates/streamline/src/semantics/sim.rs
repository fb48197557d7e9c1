//! The coupling relation between a plain state and its streamed
//! counterpart.
//!
//! Mid-execution, a converted program is related to the original through
//! the per-array sequence of indices still to be consumed, written `I(a)`
//! here. Four clauses make up the relation:
//!
//! 1. the designated integer registers agree;
//! 2. every index in `I(a)` lies in the heap's domain for `a`;
//! 3. the stream for `a` holds exactly the heap values at `I(a)`, in
//!    order — same length, pointwise equal;
//! 4. the invariant formula holds when integer variables and buffers read
//!    from the streamed state, arrays from the plain heap, and `idx(a)`
//!    denotes `I(a)`.
//!
//! [`check_sim`] reports each violated clause; an empty report means the
//! relation holds. Arrays left unconverted are not part of the relation —
//! harnesses compare their heap contents directly.

use std::collections::BTreeMap;

use crate::assertions::eval::{eval_formula, Valuation};
use crate::assertions::Formula;
use crate::ast::{Int, Name};

use super::State;

/// Checks the four clauses, returning one message per violation.
pub fn check_sim(
    plain: &State,
    streamed: &State,
    int_regs: &[Name],
    indices: &BTreeMap<Name, Vec<Int>>,
    invariant: &Formula,
) -> Vec<String> {
    let mut violations = Vec::new();
    for x in int_regs {
        let l = plain.regs.get(x);
        let r = streamed.regs.get(x);
        if l != r {
            violations.push(format!(
                "registers disagree on `{x}`: {} vs {}",
                fmt_opt(l),
                fmt_opt(r)
            ));
        }
    }
    for (a, idx) in indices {
        let cells = plain.heap.get(a);
        for i in idx {
            if cells.is_none_or(|m| !m.contains_key(i)) {
                violations.push(format!("index {i} of `{a}` is outside the heap domain"));
            }
        }
        let stream: Vec<&Int> = streamed.stream(a).collect();
        if stream.len() != idx.len() {
            violations.push(format!(
                "stream `{a}` holds {} values but {} indices remain",
                stream.len(),
                idx.len()
            ));
            continue;
        }
        for (k, (i, s)) in idx.iter().zip(&stream).enumerate() {
            let h = cells.and_then(|m| m.get(i));
            if h != Some(s) {
                violations.push(format!(
                    "stream `{a}` position {k} carries {s} but the heap holds {} at index {i}",
                    fmt_opt(h)
                ));
            }
        }
    }
    let valuation = Valuation {
        ints: streamed.regs.clone(),
        arrays: plain.heap.clone(),
        seqs: indices.clone(),
    };
    if !eval_formula(invariant, &valuation) {
        violations.push(format!("invariant does not hold: `{invariant}`"));
    }
    violations
}

/// True when all four clauses hold.
pub fn sim_holds(
    plain: &State,
    streamed: &State,
    int_regs: &[Name],
    indices: &BTreeMap<Name, Vec<Int>>,
    invariant: &Formula,
) -> bool {
    check_sim(plain, streamed, int_regs, indices, invariant).is_empty()
}

fn fmt_opt(v: Option<&Int>) -> String {
    match v {
        Some(n) => n.to_string(),
        None => "unset".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::text::parse_formula;

    fn int(n: i64) -> Int {
        Int::from(n)
    }

    /// A mid-loop snapshot of the moving-average pair at N = 4, x = 1:
    /// the plain side has staged `in[i] = i`; the streamed side has
    /// consumed indices 0 and 1 and buffered `in[1]`.
    fn snapshot() -> (State, State, BTreeMap<Name, Vec<Int>>) {
        let mut plain = State::default();
        for i in 0..4 {
            plain.heap.entry("in".into()).or_default().insert(int(i), int(i));
        }
        plain.regs.insert("N".into(), int(4));
        plain.regs.insert("x".into(), int(1));

        let mut streamed = State::default();
        streamed.regs.insert("N".into(), int(4));
        streamed.regs.insert("x".into(), int(1));
        streamed.regs.insert("b0".into(), int(1));
        streamed.streams.insert("in".into(), [int(2), int(3)].into());

        let mut indices = BTreeMap::new();
        indices.insert("in".to_string(), vec![int(2), int(3)]);
        (plain, streamed, indices)
    }

    #[test]
    fn the_snapshot_is_related() {
        let (plain, streamed, indices) = snapshot();
        let phi =
            parse_formula("idx(in) = [x + 1, N - 1; 1] && buf(b0) = in[x]").unwrap();
        let regs = vec!["x".to_string(), "N".to_string()];
        assert_eq!(check_sim(&plain, &streamed, &regs, &indices, &phi), Vec::<String>::new());
    }

    #[test]
    fn each_clause_reports_its_own_violation() {
        let phi = parse_formula("buf(b0) = in[x]").unwrap();
        let regs = vec!["x".to_string()];

        // Clause 1: register mismatch.
        let (plain, mut streamed, indices) = snapshot();
        streamed.regs.insert("x".into(), int(2));
        let vs = check_sim(&plain, &streamed, &regs, &indices, &phi);
        assert!(vs.iter().any(|m| m.contains("registers disagree on `x`")));

        // Clause 2: an index outside the heap domain.
        let (plain, streamed, mut indices) = snapshot();
        indices.get_mut("in").unwrap().push(int(9));
        let vs = check_sim(&plain, &streamed, &regs, &indices, &phi);
        assert!(vs.iter().any(|m| m.contains("outside the heap domain")));

        // Clause 3: stream shorter than the index sequence.
        let (plain, mut streamed, indices) = snapshot();
        streamed.streams.get_mut("in").unwrap().pop_front();
        let vs = check_sim(&plain, &streamed, &regs, &indices, &phi);
        assert!(vs.iter().any(|m| m.contains("holds 1 values but 2 indices remain")));

        // Clause 3 again: value mismatch.
        let (plain, mut streamed, indices) = snapshot();
        streamed.streams.get_mut("in").unwrap()[0] = int(99);
        let vs = check_sim(&plain, &streamed, &regs, &indices, &phi);
        assert!(vs.iter().any(|m| m.contains("position 0 carries 99")));

        // Clause 4: invariant failure.
        let (plain, mut streamed, indices) = snapshot();
        streamed.regs.insert("b0".into(), int(42));
        let vs = check_sim(&plain, &streamed, &regs, &indices, &phi);
        assert!(vs.iter().any(|m| m.contains("invariant does not hold")));
    }

    #[test]
    fn buffers_read_from_the_streamed_side_and_arrays_from_the_plain_side() {
        let (plain, streamed, indices) = snapshot();
        // `in` as an array resolves in the plain heap even though the
        // streamed side has no heap entry for it.
        let phi = parse_formula("in[0] = 0 && buf(b0) = 1").unwrap();
        assert!(sim_holds(&plain, &streamed, &[], &indices, &phi));
    }
}
