//! Linear index-range templates and their candidate enumerations.
//!
//! Each (loop, converted array) pair the user has not annotated gets a
//! template `ι_a = [c·1 + c·x, c·1 + c·x; c]`: six small integer
//! coefficients describing the pending index sequence as an arithmetic
//! range over the loop variable. Candidates range over small constants
//! plus the distinguished values appearing in the loop's own init and
//! bound expressions (shifted by one each way), so bounds like `N - 1`
//! are reachable without widening the whole search.
//!
//! Enumeration order is the tie-break: candidates are produced
//! lexicographically over (low constant, low slope, high constant, high
//! slope, step), each component running through its domain in the order
//! built here. The first candidate surviving all conditions wins.

use num_traits::Zero;

use crate::assertions::{Formula, IndexRange, LinExpr, SeqTerm};
use crate::ast::{Int, Name};

use super::LoopMeta;

/// The candidate domains for one (loop, array) pair.
#[derive(Debug, Clone)]
pub struct TemplateGroup {
    pub loop_idx: usize,
    pub array: Name,
    pub var: Name,
    /// First display row: coefficients render as `c{base+row}{col}`.
    pub base: usize,
    pub consts: Vec<LinExpr>,
    pub slopes: Vec<Int>,
    pub steps: Vec<Int>,
}

/// One concrete range: `[low.0 + low.1·x, high.0 + high.1·x; step]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub low: (LinExpr, Int),
    pub high: (LinExpr, Int),
    pub step: Int,
}

impl Candidate {
    fn row(part: &(LinExpr, Int), var: &str) -> LinExpr {
        part.0.add(&LinExpr::var(var).scale(&part.1))
    }

    pub fn range(&self, var: &str) -> IndexRange {
        IndexRange::new(
            Self::row(&self.low, var),
            Self::row(&self.high, var),
            LinExpr::constant(self.step.clone()),
        )
    }

    /// The invariant conjunct this candidate stands for.
    pub fn atom(&self, array: &str, var: &str) -> Formula {
        Formula::SeqEq(SeqTerm::idx(array), SeqTerm::range(self.range(var)))
    }

    /// Display rows `(name, value)` under the group's numbering: the
    /// constant column then the slope column for low, high, step.
    pub fn display(&self, base: usize) -> Vec<(String, LinExpr)> {
        let rows = [
            (self.low.0.clone(), self.low.1.clone()),
            (self.high.0.clone(), self.high.1.clone()),
            (LinExpr::constant(self.step.clone()), Int::from(0)),
        ];
        rows.iter()
            .enumerate()
            .flat_map(|(i, (c, s))| {
                [
                    (format!("c{}{}", base + i, 0), c.clone()),
                    (format!("c{}{}", base + i, 1), LinExpr::constant(s.clone())),
                ]
            })
            .collect()
    }
}

impl TemplateGroup {
    /// Lexicographic candidate stream; the order defines the tie-break.
    pub fn candidates(&self) -> impl Iterator<Item = Candidate> + '_ {
        self.consts.iter().flat_map(move |lc| {
            self.slopes.iter().flat_map(move |ls| {
                self.consts.iter().flat_map(move |hc| {
                    self.slopes.iter().flat_map(move |hs| {
                        self.steps.iter().map(move |st| Candidate {
                            low: (lc.clone(), ls.clone()),
                            high: (hc.clone(), hs.clone()),
                            step: st.clone(),
                        })
                    })
                })
            })
        })
    }

    pub fn candidate_count(&self) -> usize {
        self.consts.len() * self.slopes.len() * self.consts.len() * self.slopes.len()
            * self.steps.len()
    }

    /// The template as displayed text, unknowns and all.
    pub fn render(&self) -> String {
        let b = self.base;
        let x = &self.var;
        format!(
            "idx({}) = [c{}0 + c{}1*{x}, c{}0 + c{}1*{x}; c{}0 + c{}1*{x}]",
            self.array,
            b,
            b,
            b + 1,
            b + 1,
            b + 2,
            b + 2
        )
    }
}

/// Builds one group per templated (loop, array) pair, in loop order then
/// array-name order. `coeff_range` widens the plain-constant domains; the
/// default of 2 gives constants and slopes in {0, ±1, ±2}.
pub fn make_templates(loops: &[LoopMeta], coeff_range: i64) -> Vec<TemplateGroup> {
    let mut out = Vec::new();
    for meta in loops {
        let consts = const_domain(meta, coeff_range);
        let slopes = signed_domain(coeff_range.max(1));
        let steps: Vec<Int> = signed_domain(coeff_range.max(3))
            .into_iter()
            .filter(|s| !s.is_zero())
            .collect();
        for (ordinal, array) in meta.templated_arrays().into_iter().enumerate() {
            out.push(TemplateGroup {
                loop_idx: meta.plan_idx,
                array,
                var: meta.var.clone(),
                base: 3 * ordinal,
                consts: consts.clone(),
                slopes: slopes.clone(),
                steps: steps.clone(),
            });
        }
    }
    out
}

/// `0, 1, −1, 2, −2, …` out to `±range`.
fn signed_domain(range: i64) -> Vec<Int> {
    let mut out = vec![Int::from(0)];
    for k in 1..=range {
        out.push(Int::from(k));
        out.push(Int::from(-k));
    }
    out
}

/// Small constants, then the loop's own init and bound values shifted by
/// at most one — the distinguished constants index invariants tend to
/// need, like `N - 1` under a bound of `N`.
fn const_domain(meta: &LoopMeta, range: i64) -> Vec<LinExpr> {
    let mut out: Vec<LinExpr> =
        signed_domain(range).into_iter().map(LinExpr::constant).collect();
    for e in [meta.init_lin(), meta.bound_lin()].into_iter().flatten() {
        for d in [0i64, 1, -1] {
            let v = e.add(&LinExpr::constant(d));
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::text::parse_formula;
    use crate::ast::{Atom, Expr, Op};
    use std::collections::BTreeSet;

    fn n_minus_1() -> Expr {
        Expr::bin(Op::Sub, Atom::var("N"), Atom::int(1))
    }

    fn meta(
        plan_idx: usize,
        var: &str,
        bound: Expr,
        touched: &[&str],
        annot: Option<&str>,
    ) -> LoopMeta {
        LoopMeta {
            plan_idx,
            var: var.into(),
            init: Expr::int(0),
            bound,
            step: Int::from(1),
            in_kernel: true,
            annot: annot.map(|s| parse_formula(s).unwrap()),
            touched: touched.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        }
    }

    #[test]
    fn groups_follow_loop_then_array_order() {
        let loops = vec![
            meta(0, "x", Expr::var("N"), &["in"], None),
            meta(1, "x", n_minus_1(), &["out", "in"], None),
        ];
        let groups = make_templates(&loops, 2);
        let order: Vec<(usize, &str, usize)> =
            groups.iter().map(|g| (g.loop_idx, g.array.as_str(), g.base)).collect();
        assert_eq!(order, vec![(0, "in", 0), (1, "in", 0), (1, "out", 3)]);
    }

    #[test]
    fn bound_neighborhood_joins_the_constant_domain() {
        let loops = vec![meta(0, "x", n_minus_1(), &["in"], None)];
        let g = &make_templates(&loops, 2)[0];
        let n = LinExpr::var("N");
        for needed in [
            LinExpr::constant(0),
            LinExpr::constant(-2),
            n.add(&LinExpr::constant(-1)),
            n.clone(),
            n.add(&LinExpr::constant(-2)),
        ] {
            assert!(g.consts.contains(&needed), "missing {needed:?}");
        }
        // Plain constants come first so constant solutions win ties.
        assert_eq!(g.consts[0], LinExpr::constant(0));
        assert_eq!(g.consts[1], LinExpr::constant(1));
    }

    #[test]
    fn annotated_arrays_are_suppressed() {
        let loops = vec![meta(
            0,
            "k",
            Expr::var("N"),
            &["in1", "in2", "out"],
            Some("idx(in1) = [i, N - 1; 1] && idx(out) = [0, k - 1; 1]"),
        )];
        let groups = make_templates(&loops, 2);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].array, "in2");
        assert_eq!(groups[0].base, 0);
    }

    #[test]
    fn enumeration_starts_at_the_all_zero_unit_range() {
        let loops = vec![meta(0, "x", Expr::var("N"), &["in"], None)];
        let g = &make_templates(&loops, 2)[0];
        let first = g.candidates().next().unwrap();
        assert_eq!(first.range("x"), IndexRange::unit(LinExpr::constant(0), LinExpr::constant(0)));
        assert_eq!(g.candidates().count(), g.candidate_count());
    }

    #[test]
    fn the_shifted_window_solution_is_reachable() {
        let loops = vec![meta(1, "x", n_minus_1(), &["in", "out"], None)];
        let groups = make_templates(&loops, 2);
        let wanted_in = Candidate {
            low: (LinExpr::constant(1), Int::from(1)),
            high: (LinExpr::var("N").add(&LinExpr::constant(-1)), Int::from(0)),
            step: Int::from(1),
        };
        let wanted_out = Candidate {
            low: (LinExpr::constant(0), Int::from(0)),
            high: (LinExpr::constant(-1), Int::from(1)),
            step: Int::from(1),
        };
        assert!(groups[0].candidates().any(|c| c == wanted_in));
        assert!(groups[1].candidates().any(|c| c == wanted_out));
        // Display names match the documented layout.
        let names: Vec<String> =
            wanted_out.display(groups[1].base).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["c30", "c31", "c40", "c41", "c50", "c51"]);
    }

    #[test]
    fn candidate_atom_is_a_range_equation() {
        let c = Candidate {
            low: (LinExpr::constant(1), Int::from(1)),
            high: (LinExpr::var("N").add(&LinExpr::constant(-1)), Int::from(0)),
            step: Int::from(1),
        };
        let shown = crate::assertions::text::print_formula(&c.atom("in", "x"));
        assert_eq!(shown, "idx(in) = [x + 1, N - 1; 1]");
    }
}
