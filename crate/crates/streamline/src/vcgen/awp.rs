//! Weakest preconditions of paired steps over the relational assertion
//! language.
//!
//! Each [`TStep`] has an exact precondition transformer. Kept accesses and
//! plain assignments are ordinary substitution; stream operations follow
//! the buffer-insertion proof rules: a refill couples the freshly popped
//! slot to the head of the pending index sequence and advances the
//! sequence, a direct write demands its index be new and appends it, and a
//! slot read couples the slot's value to the source-side memory cell it
//! stands for.
//!
//! Substitutions that the rules state simultaneously — value and index
//! sequence at once — are realized sequentially, sequence first, so the
//! value term introduced afterwards still refers to the pre-step sequence.
//! Staging buffers (`via`) don't change any precondition; routing a value
//! through a fresh buffer is invisible to the relation, so the equations
//! ignore them.

use crate::assertions::subst::{subst_array, subst_int, subst_seq, SubstError};
use crate::assertions::{ArrayTerm, Formula, IntTerm, SeqTerm};

use super::pair::TStep;

/// Precondition of one paired step for postcondition `post`.
pub fn awp_step(step: &TStep, post: &Formula) -> Result<Formula, SubstError> {
    Ok(match step {
        TStep::Assign { dst, rhs, .. } => subst_int(post, dst, rhs)?,
        TStep::ReadKept { dst, arr, idx, .. } => {
            subst_int(post, dst, &IntTerm::select(arr, idx.clone()))?
        }
        TStep::WriteKept { arr, idx, src, .. } => subst_array(
            post,
            arr,
            &ArrayTerm::update(ArrayTerm::var(arr), idx.clone(), IntTerm::var(src)),
        ),
        TStep::SlotRead { dst, slot, arr, idx } => Formula::and(vec![
            Formula::eq(IntTerm::Buf(slot.clone()), IntTerm::select(arr, idx.clone())),
            subst_int(post, dst, &IntTerm::Buf(slot.clone()))?,
        ]),
        TStep::Refill { slot, arr } => {
            let shifted = subst_seq(post, arr, &SeqTerm::tail(SeqTerm::idx(arr)));
            subst_int(&shifted, slot, &popped_value(arr))?
        }
        TStep::Shift { dst, src } => subst_int(post, dst, &IntTerm::Buf(src.clone()))?,
        TStep::ReadDirect { dst, arr, idx, .. } => {
            let shifted = subst_seq(post, arr, &SeqTerm::tail(SeqTerm::idx(arr)));
            Formula::and(vec![
                Formula::eq(popped_value(arr), IntTerm::select(arr, idx.clone())),
                subst_int(&shifted, dst, &popped_value(arr))?,
            ])
        }
        TStep::WriteDirect { arr, idx, src, .. } => {
            let appended =
                subst_seq(post, arr, &SeqTerm::snoc(SeqTerm::idx(arr), idx.clone()));
            Formula::and(vec![
                Formula::not(Formula::Mem(idx.clone(), SeqTerm::idx(arr))),
                subst_array(
                    &appended,
                    arr,
                    &ArrayTerm::update(ArrayTerm::var(arr), idx.clone(), IntTerm::var(src)),
                ),
            ])
        }
        TStep::If { cond, then_s, else_s } => {
            let c = IntTerm::var(cond);
            let taken = Formula::neq(c.clone(), IntTerm::int(0));
            let skipped = Formula::eq(c, IntTerm::int(0));
            Formula::and(vec![
                implies(taken, awp_steps(then_s, post)?),
                implies(skipped, awp_steps(else_s, post)?),
            ])
        }
    })
}

/// Precondition of a straight-line run of steps.
pub fn awp_steps(steps: &[TStep], post: &Formula) -> Result<Formula, SubstError> {
    let mut f = post.clone();
    for step in steps.iter().rev() {
        f = awp_step(step, &f)?;
    }
    Ok(f)
}

/// The value a stream pop of `arr` observes: the source-side cell at the
/// head of the pending index sequence.
fn popped_value(arr: &str) -> IntTerm {
    IntTerm::Select(
        ArrayTerm::var(arr),
        Box::new(IntTerm::Head(Box::new(SeqTerm::idx(arr)))),
    )
}

/// `a → b` in the and/not fragment.
pub fn implies(hyp: Formula, concl: Formula) -> Formula {
    if hyp == Formula::True {
        return concl;
    }
    Formula::not(Formula::and(vec![hyp, Formula::not(concl)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::eval::{eval_formula, Valuation};
    use crate::assertions::text::{parse_formula, print_formula};
    use crate::ast::{Expr, Op};

    fn fml(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn show(f: &Formula) -> String {
        print_formula(&f.normalize())
    }

    #[test]
    fn assignment_substitutes_the_right_hand_side() {
        let step = TStep::Assign {
            dst: "x".into(),
            expr: Expr::var("y"),
            rhs: IntTerm::bin(Op::Add, IntTerm::var("y"), IntTerm::int(1)),
        };
        let pre = awp_step(&step, &fml("x <= N")).unwrap();
        assert_eq!(show(&pre), "y + 1 <= N");
    }

    #[test]
    fn kept_accesses_use_plain_select_and_update() {
        let read = TStep::ReadKept {
            dst: "y".into(),
            arr: "a".into(),
            idx_expr: Expr::var("i"),
            idx: IntTerm::var("i"),
        };
        let pre = awp_step(&read, &fml("y = 3")).unwrap();
        assert_eq!(show(&pre), "3 = a[i]");

        let write = TStep::WriteKept {
            arr: "a".into(),
            idx_expr: Expr::var("i"),
            idx: IntTerm::var("i"),
            src: "v".into(),
        };
        let pre = awp_step(&write, &fml("a[i] = 3")).unwrap();
        assert_eq!(print_formula(&pre), "upd(a, i, v)[i] = 3");
        // The update collapses once the indices are known equal.
        assert_eq!(show(&pre), "3 = v");
    }

    #[test]
    fn slot_reads_couple_the_slot_to_its_cell() {
        let step = TStep::SlotRead {
            dst: "y0".into(),
            slot: "b0".into(),
            arr: "in".into(),
            idx: IntTerm::var("x"),
        };
        let pre = awp_step(&step, &fml("y0 = in[x]")).unwrap();
        assert_eq!(show(&pre), "buf(b0) = in[x]");
    }

    #[test]
    fn refills_pop_the_head_and_advance_the_sequence() {
        // post: b0 = in[x] && idx(in) = [x, N; 1]
        let post = fml("buf(b0) = in[x] && idx(in) = [x, N; 1]");
        let step = TStep::Refill { slot: "b0".into(), arr: "in".into() };
        let pre = awp_step(&step, &post).unwrap();
        // The popped value refers to the pre-pop head; the range shifts.
        assert_eq!(show(&pre), "in[x] = in[hd(idx(in))] && tail(idx(in)) = [x, N; 1]");
    }

    #[test]
    fn direct_writes_require_a_fresh_index_and_append_it() {
        let post = fml("idx(out) = [0, k; 1]");
        let step = TStep::WriteDirect {
            arr: "out".into(),
            idx: IntTerm::var("k"),
            src: "z".into(),
            via: None,
        };
        let pre = awp_step(&step, &post).unwrap();
        assert_eq!(show(&pre), "snoc(idx(out), k) = [0, k; 1] && k notin idx(out)");
    }

    #[test]
    fn direct_reads_couple_head_cell_to_the_source_index() {
        let post = fml("y = a[0] && idx(a) = nil");
        let step = TStep::ReadDirect {
            dst: "y".into(),
            arr: "a".into(),
            idx: IntTerm::int(0),
            via: None,
        };
        let pre = awp_step(&step, &post).unwrap();
        assert_eq!(show(&pre), "a[0] = a[hd(idx(a))] && nil = tail(idx(a))");
    }

    #[test]
    fn staging_buffers_leave_the_precondition_unchanged() {
        let post = fml("idx(out) = [0, k; 1]");
        let direct = TStep::WriteDirect {
            arr: "out".into(),
            idx: IntTerm::var("k"),
            src: "z".into(),
            via: None,
        };
        let staged = TStep::WriteDirect {
            arr: "out".into(),
            idx: IntTerm::var("k"),
            src: "z".into(),
            via: Some("b1".into()),
        };
        assert_eq!(
            awp_step(&direct, &post).unwrap(),
            awp_step(&staged, &post).unwrap()
        );
    }

    #[test]
    fn branches_split_on_the_condition_variable() {
        let step = TStep::If {
            cond: "c".into(),
            then_s: vec![TStep::Assign {
                dst: "y".into(),
                expr: Expr::int(1),
                rhs: IntTerm::int(1),
            }],
            else_s: vec![TStep::Assign {
                dst: "y".into(),
                expr: Expr::int(2),
                rhs: IntTerm::int(2),
            }],
        };
        let pre = awp_step(&step, &fml("y = 1")).unwrap();
        // Taken branch is fine, untaken branch must be impossible: c != 0.
        let mut val = Valuation::default();
        val.set_int("c", 1);
        assert!(eval_formula(&pre, &val));
        val.set_int("c", 0);
        assert!(!eval_formula(&pre, &val));
    }

    #[test]
    fn sequences_compose_right_to_left() {
        let steps = vec![
            TStep::Assign { dst: "x".into(), expr: Expr::var("y"), rhs: IntTerm::var("y") },
            TStep::Assign {
                dst: "z".into(),
                expr: Expr::var("x"),
                rhs: IntTerm::var("x"),
            },
        ];
        let pre = awp_steps(&steps, &fml("z = 7")).unwrap();
        assert_eq!(show(&pre), "7 = y");
    }

    #[test]
    fn refill_precondition_agrees_with_execution() {
        // Concrete check of the refill equation: streams modeled as the
        // array contents at the pending indices. Pre-state: a = {5: 40,
        // 6: 41}, idx(a) = [5, 6], slot b0 = 39. After the pop: b0 = 40,
        // idx(a) = [6].
        let post = fml("buf(b0) = 40 && idx(a) = [6, 6; 1]");
        let step = TStep::Refill { slot: "b0".into(), arr: "a".into() };
        let pre = awp_step(&step, &post).unwrap();
        let mut val = Valuation::default();
        val.set_cell("a", 5, 40);
        val.set_cell("a", 6, 41);
        val.set_seq("a", vec![5.into(), 6.into()]);
        val.set_int("b0", 39);
        assert!(eval_formula(&pre, &val));
        // A mismatched pending head falsifies the precondition.
        val.set_seq("a", vec![6.into(), 5.into()]);
        assert!(!eval_formula(&pre, &val));
    }
}
