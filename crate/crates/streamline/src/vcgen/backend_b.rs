//! The internal validity backend: bounded exhaustive instantiation.
//!
//! A condition's universals split into three kinds. Parameters sweep a
//! small integer interval. Loop variables sweep the range their loop
//! induces (initial value to bound by the step). Everything left —
//! buffer registers and scratch integers — is pinned where the
//! hypothesis forces a value (a *derive* pass over its equations, run to
//! fixpoint) and enumerated over a narrowed interval otherwise. Array
//! contents are filled with an injective pattern so distinct cells never
//! collide by accident; sequence variables must be forced by the
//! hypothesis, or the check answers `Unknown` rather than guess.
//!
//! This is a finite model check, not a proof: a condition that holds at
//! every instantiation is reported as holding *up to the sweep bounds*.
//! Reports carry that caveat, and the differential tests (plus the
//! external solver backend, when configured) provide the independent
//! assurance.
//!
//! The solver stages template groups in program order. Within a group it
//! tries candidates lexicographically — the first survivor is the
//! published solution, which keeps output reproducible — rejecting most
//! of them on their own loop's conditions at the smallest parameter
//! values before paying for the full sweep. A group with no surviving
//! candidate names its array, and the caller may retry with that array
//! left unconverted.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::ToPrimitive;

use crate::assertions::eval::{eval_formula, eval_int, eval_seq, Valuation};
use crate::assertions::{free_vars, Formula, IntTerm, LinExpr, SeqTerm};
use crate::ast::{Int, Name, TypeEnv};

use super::chain::{chain, chain_before, chain_loop, ChainScope, VarRange, Vc};
use super::templates::make_templates;
use super::{Analysis, Assignment, VcError};

/// Knobs for the internal backend.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Half-width of the template coefficient domain (the distinguished
    /// constants from loop bounds always join it).
    pub coeff_range: i64,
    /// Largest parameter value instantiated.
    pub param_max: i64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { coeff_range: 2, param_max: 12 }
    }
}

/// Outcome of checking one condition.
#[derive(Debug, Clone)]
pub enum Verdict {
    /// True at every instantiation within bounds.
    Holds,
    /// A concrete refuting valuation.
    Fails(Box<Valuation>),
    /// The bounded check could not be carried out.
    Unknown(String),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

/// Per-instantiation work cap; beyond it the check answers `Unknown`.
const POINT_BUDGET: usize = 200_000;
/// Most values a single loop variable may sweep.
const RANGE_CAP: usize = 200;
/// Most registers left unpinned after the derive pass.
const RESIDUAL_CAP: usize = 3;

/// Checks one condition over the full parameter sweep.
pub fn check_vc(vc: &Vc, env: &TypeEnv, cfg: &SolveConfig) -> Verdict {
    check_vc_at(vc, env, cfg, false)
}

/// As [`check_vc`]; `minimal` restricts parameters to their smallest
/// admissible value (the solver's cheap rejection stage).
pub fn check_vc_at(vc: &Vc, env: &TypeEnv, cfg: &SolveConfig, minimal: bool) -> Verdict {
    let mut axes: Vec<(Name, Vec<Int>)> = Vec::new();
    for (name, min) in env.params() {
        let lo = min.clone().max(Int::from(1));
        let values = if minimal || lo > Int::from(cfg.param_max) {
            vec![lo]
        } else {
            let mut vs = Vec::new();
            let mut v = lo;
            while v <= Int::from(cfg.param_max) {
                vs.push(v.clone());
                v += Int::from(1);
            }
            vs
        };
        axes.push((name.clone(), values));
    }
    let mut combo: Vec<(Name, Int)> = Vec::new();
    sweep_params(vc, &axes, &mut combo, cfg)
}

fn sweep_params(
    vc: &Vc,
    axes: &[(Name, Vec<Int>)],
    combo: &mut Vec<(Name, Int)>,
    cfg: &SolveConfig,
) -> Verdict {
    match axes.split_first() {
        None => {
            let mut val = Valuation::default();
            for (n, v) in combo.iter() {
                val.set_int(n, v.clone());
            }
            let maxv = combo
                .iter()
                .map(|(_, v)| v.clone())
                .max()
                .unwrap_or_else(|| Int::from(1));
            populate_heap(vc, &mut val, &maxv);
            let mut pending: Vec<(&Name, &VarRange)> = vc.ranges.iter().collect();
            let mut budget = POINT_BUDGET;
            sweep_ranges(vc, &mut pending, val, &maxv, &mut budget)
        }
        Some(((name, values), rest)) => {
            for v in values {
                combo.push((name.clone(), v.clone()));
                let out = sweep_params(vc, rest, combo, cfg);
                combo.pop();
                if !out.holds() {
                    return out;
                }
            }
            Verdict::Holds
        }
    }
}

/// Enumerates loop variables in dependency order: any range whose bounds
/// are already closed under the current pins goes next.
fn sweep_ranges(
    vc: &Vc,
    pending: &mut Vec<(&Name, &VarRange)>,
    val: Valuation,
    maxv: &Int,
    budget: &mut usize,
) -> Verdict {
    let Some(pos) = pending.iter().position(|(_, r)| {
        r.init.eval(&val.ints).is_some() && r.bound.eval(&val.ints).is_some()
    }) else {
        if let Some((name, _)) = pending.first() {
            return Verdict::Unknown(format!(
                "range of loop variable `{name}` depends on unset symbols"
            ));
        }
        return check_point(vc, val, maxv, budget);
    };
    let (name, range) = pending.remove(pos);
    let lo = range.init.eval(&val.ints).expect("checked above");
    let hi = range.bound.eval(&val.ints).expect("checked above");
    let step = range.step.clone();
    let diff = &hi - &lo;
    let toward = (step > Int::from(0) && diff >= Int::from(0))
        || (step < Int::from(0) && diff <= Int::from(0));
    let verdict = if !toward || !(&diff % &step == Int::from(0)) {
        Verdict::Unknown(format!(
            "loop `{name}` from {lo} by {step} never lands on {hi}"
        ))
    } else {
        let count = (&diff / &step)
            .to_usize()
            .filter(|c| *c <= RANGE_CAP);
        match count {
            None => Verdict::Unknown(format!("loop `{name}` sweeps too many values")),
            Some(count) => {
                let mut verdict = Verdict::Holds;
                let mut v = lo;
                for _ in 0..=count {
                    let mut val2 = val.clone();
                    val2.set_int(name, v.clone());
                    let out = sweep_ranges(vc, pending, val2, maxv, budget);
                    if !out.holds() {
                        verdict = out;
                        break;
                    }
                    v += &step;
                }
                verdict
            }
        }
    };
    pending.insert(pos, (name, range));
    verdict
}

/// Fills every mentioned array with an injective pattern over a window
/// wide enough for all swept indices.
fn populate_heap(vc: &Vc, val: &mut Valuation, maxv: &Int) {
    let mut arrays = free_vars(&vc.hypothesis).arrays;
    arrays.extend(free_vars(&vc.conclusion).arrays);
    let hi = Int::from(2) * maxv + Int::from(2);
    for (aid, a) in arrays.iter().enumerate() {
        let stamp = Int::from(1_000_003) * Int::from(aid as i64 + 1);
        let mut i = Int::from(-2);
        while i <= hi {
            val.set_cell(a, i.clone(), &stamp + Int::from(31) * &i);
            i += Int::from(1);
        }
    }
}

/// Pins registers and sequences the hypothesis equations force, to
/// fixpoint.
fn derive(hyp: &Formula, val: &mut Valuation) {
    loop {
        let mut changed = false;
        for c in hyp.conjuncts() {
            match c {
                Formula::Eq(l, r) => {
                    changed |= try_pin_int(l, r, val);
                    changed |= try_pin_int(r, l, val);
                }
                Formula::SeqEq(l, r) => {
                    changed |= try_pin_seq(l, r, val);
                    changed |= try_pin_seq(r, l, val);
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
}

fn try_pin_int(target: &IntTerm, src: &IntTerm, val: &mut Valuation) -> bool {
    let (IntTerm::Var(x) | IntTerm::Buf(x)) = target else {
        return false;
    };
    if val.ints.contains_key(x) {
        return false;
    }
    let Some(v) = eval_int(src, val) else {
        return false;
    };
    val.set_int(x, v);
    true
}

fn try_pin_seq(target: &SeqTerm, src: &SeqTerm, val: &mut Valuation) -> bool {
    let SeqTerm::Var(a) = target else {
        return false;
    };
    if val.seqs.contains_key(a) {
        return false;
    }
    let Some(v) = eval_seq(src, val) else {
        return false;
    };
    val.set_seq(a, v);
    true
}

/// Checks the implication at one (parameter, loop-variable) point,
/// enumerating whatever registers the hypothesis leaves free.
fn check_point(
    vc: &Vc,
    mut val: Valuation,
    maxv: &Int,
    budget: &mut usize,
) -> Verdict {
    derive(&vc.hypothesis, &mut val);

    let mut seqs = free_vars(&vc.hypothesis).seqs;
    seqs.extend(free_vars(&vc.conclusion).seqs);
    for a in &seqs {
        if !val.seqs.contains_key(a) {
            return Verdict::Unknown(format!(
                "stream prefix of `{a}` is unconstrained by the hypothesis"
            ));
        }
    }

    let residual: Vec<&Name> = vc
        .universals
        .iter()
        .filter(|x| !val.ints.contains_key(*x))
        .collect();
    if residual.len() > RESIDUAL_CAP {
        let names: Vec<&str> = residual.iter().map(|s| s.as_str()).collect();
        return Verdict::Unknown(format!(
            "too many unconstrained registers: {}",
            names.join(", ")
        ));
    }
    enum_residuals(vc, val, maxv, budget)
}

fn enum_residuals(
    vc: &Vc,
    mut val: Valuation,
    maxv: &Int,
    budget: &mut usize,
) -> Verdict {
    derive(&vc.hypothesis, &mut val);
    let Some(pick) = narrowest_residual(vc, &val, maxv) else {
        if *budget == 0 {
            return Verdict::Unknown("instantiation budget exceeded".into());
        }
        *budget -= 1;
        if eval_formula(&vc.hypothesis, &val) && !eval_formula(&vc.conclusion, &val) {
            return Verdict::Fails(Box::new(val));
        }
        return Verdict::Holds;
    };
    let (name, lo, hi) = pick;
    let mut v = lo;
    while v <= hi {
        let mut val2 = val.clone();
        val2.set_int(&name, v.clone());
        let out = enum_residuals(vc, val2, maxv, budget);
        if !out.holds() {
            return out;
        }
        v += Int::from(1);
    }
    Verdict::Holds
}

/// Picks the unpinned register with the tightest interval, narrowing the
/// default box by hypothesis bounds of the shape `x <= t` / `t <= x`.
fn narrowest_residual(
    vc: &Vc,
    val: &Valuation,
    maxv: &Int,
) -> Option<(Name, Int, Int)> {
    let mut best: Option<(Name, Int, Int)> = None;
    for x in &vc.universals {
        if val.ints.contains_key(x) {
            continue;
        }
        let mut lo = Int::from(-1);
        let mut hi = Int::from(2) * maxv + Int::from(1);
        for c in vc.hypothesis.conjuncts() {
            let Formula::Le(l, r) = c else { continue };
            match (l, r) {
                (IntTerm::Var(y) | IntTerm::Buf(y), t) if y == x => {
                    if let Some(b) = eval_int(t, val) {
                        hi = hi.min(b);
                    }
                }
                (t, IntTerm::Var(y) | IntTerm::Buf(y)) if y == x => {
                    if let Some(b) = eval_int(t, val) {
                        lo = lo.max(b);
                    }
                }
                _ => {}
            }
        }
        let width = &hi - &lo;
        let better = match &best {
            None => true,
            Some((_, blo, bhi)) => width < bhi - blo,
        };
        if better {
            best = Some((x.clone(), lo, hi));
        }
    }
    best
}

/// One solved template group, with its published coefficient names.
#[derive(Debug, Clone)]
pub struct GroupCoeffs {
    pub loop_idx: usize,
    pub array: Name,
    pub coeffs: Vec<(String, LinExpr)>,
}

/// A complete solve: the accepted assignment, the invariants it induces,
/// and the fully rebuilt (undropped) conditions.
#[derive(Debug, Clone)]
pub struct Solution {
    pub assignment: Assignment,
    pub coeffs: Vec<GroupCoeffs>,
    pub invariants: Vec<(usize, Formula)>,
    pub vcs: Vec<Vc>,
    pub precondition: Formula,
    pub final_anchor: Formula,
    pub final_indices: BTreeMap<Name, SeqTerm>,
    pub candidates_tried: usize,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Solved(Box<Solution>),
    /// No candidate survived for this template group; the named array
    /// should keep its array semantics.
    GiveUp {
        loop_idx: usize,
        array: Name,
        candidates_tried: usize,
    },
}

/// Solves every template group in program order and validates the full
/// condition set under the winning assignment.
pub fn solve(analysis: &Analysis, cfg: &SolveConfig) -> Result<SolveOutcome, VcError> {
    let groups = make_templates(&analysis.loops, cfg.coeff_range);
    let mut assignment = Assignment::default();
    let mut covered: BTreeSet<(usize, Name)> = BTreeSet::new();
    let mut tried = 0usize;
    for g in &groups {
        let mut in_scope = covered.clone();
        in_scope.insert((g.loop_idx, g.array.clone()));
        let scope = ChainScope { upto: g.loop_idx, covered: in_scope };
        // For a top-level loop the walk up to it is candidate-independent:
        // compute it once and replay only the loop per candidate.
        let checkpoint = chain_before(analysis, &assignment, &scope)?;
        let mut found = false;
        for cand in g.candidates() {
            tried += 1;
            assignment.set(g.loop_idx, &g.array, cand.clone());
            let ok = match &checkpoint {
                Some((anchor, chunk, prior)) => {
                    let own = chain_loop(
                        analysis,
                        &assignment,
                        &scope,
                        anchor.clone(),
                        chunk,
                    )?;
                    staged_ok(&own, prior, g.loop_idx, &analysis.env, cfg)
                }
                None => {
                    let out = chain(analysis, &assignment, Some(&scope))?;
                    let (own, prior): (Vec<Vc>, Vec<Vc>) = out
                        .vcs
                        .into_iter()
                        .partition(|vc| vc.loop_idx == Some(g.loop_idx));
                    staged_ok(&own, &prior, g.loop_idx, &analysis.env, cfg)
                }
            };
            if ok {
                found = true;
                break;
            }
        }
        if !found {
            assignment.0.remove(&(g.loop_idx, g.array.clone()));
            return Ok(SolveOutcome::GiveUp {
                loop_idx: g.loop_idx,
                array: g.array.clone(),
                candidates_tried: tried,
            });
        }
        covered.insert((g.loop_idx, g.array.clone()));
    }

    // Full pass: every condition, no scope, no dropped conjuncts.
    let out = chain(analysis, &assignment, None)?;
    for vc in &out.vcs {
        if !check_vc(vc, &analysis.env, cfg).holds() {
            let owners = free_vars(&vc.conclusion).seqs;
            let array = owners
                .iter()
                .find(|a| analysis.plan.convert.contains(*a))
                .or_else(|| analysis.plan.convert.iter().next())
                .cloned()
                .unwrap_or_default();
            return Ok(SolveOutcome::GiveUp {
                loop_idx: vc.loop_idx.unwrap_or(0),
                array,
                candidates_tried: tried,
            });
        }
    }

    let coeffs = groups
        .iter()
        .map(|g| {
            let cand = assignment
                .get(g.loop_idx, &g.array)
                .expect("every group was solved");
            GroupCoeffs {
                loop_idx: g.loop_idx,
                array: g.array.clone(),
                coeffs: cand.display(g.base),
            }
        })
        .collect();
    Ok(SolveOutcome::Solved(Box::new(Solution {
        assignment,
        coeffs,
        invariants: out.invariants,
        vcs: out.vcs,
        precondition: out.precondition,
        final_anchor: out.final_anchor,
        final_indices: out.final_indices,
        candidates_tried: tried,
    })))
}

/// Acceptance test for one candidate: its own loop's conditions at the
/// smallest parameters first (cheap rejection), then every condition in
/// scope over the full sweep.
fn staged_ok(own: &[Vc], prior: &[Vc], idx: usize, env: &TypeEnv, cfg: &SolveConfig) -> bool {
    for family in ["initiation", "inductiveness", "exit"] {
        let label = format!("loop{idx}.{family}");
        match own.iter().find(|v| v.label == label) {
            Some(vc) => {
                if !check_vc_at(vc, env, cfg, true).holds() {
                    return false;
                }
            }
            None => return false,
        }
    }
    own.iter()
        .chain(prior)
        .all(|vc| check_vc(vc, env, cfg).holds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bufferpass::kernel_arrays;
    use crate::frontend::parse_program;
    use crate::vcgen::analyze;

    fn solve_source(src: &str) -> SolveOutcome {
        let p = parse_program(src).unwrap();
        let analysis = analyze(&p, &kernel_arrays(&p), true).unwrap();
        solve(&analysis, &SolveConfig::default()).unwrap()
    }

    const FILTER: &str = "param N >= 2;\nrarr in;\nwarr out;\nint x, y0, y1, z0, z1;\n\
        for (x = 0; x != N; x += 1) { in[x] = x; }\n\
        kernel {\n  for (x = 0; x != N - 1; x += 1) {\n    y0 = in[x];\n    y1 = in[x + 1];\n    z0 = y0 + y1;\n    z1 = z0 / 2;\n    out[x] = z1;\n  }\n}\n";

    fn coeff_strings(g: &GroupCoeffs) -> Vec<(String, String)> {
        g.coeffs
            .iter()
            .map(|(n, v)| (n.clone(), v.to_string()))
            .collect()
    }

    #[test]
    fn the_moving_window_assignment_is_found_for_the_kernel() {
        let SolveOutcome::Solved(sol) = solve_source(FILTER) else {
            panic!("expected a solution");
        };
        let kernel_in = sol
            .coeffs
            .iter()
            .find(|g| g.loop_idx == 1 && g.array == "in")
            .unwrap();
        assert_eq!(
            coeff_strings(kernel_in),
            [
                ("c00", "1"),
                ("c01", "1"),
                ("c10", "N - 1"),
                ("c11", "0"),
                ("c20", "1"),
                ("c21", "0"),
            ]
            .map(|(a, b)| (a.to_string(), b.to_string()))
        );
        let kernel_out = sol
            .coeffs
            .iter()
            .find(|g| g.loop_idx == 1 && g.array == "out")
            .unwrap();
        assert_eq!(
            coeff_strings(kernel_out),
            [
                ("c30", "0"),
                ("c31", "0"),
                ("c40", "-1"),
                ("c41", "1"),
                ("c50", "1"),
                ("c51", "0"),
            ]
            .map(|(a, b)| (a.to_string(), b.to_string()))
        );
    }

    #[test]
    fn the_host_fill_solves_to_the_written_prefix() {
        let SolveOutcome::Solved(sol) = solve_source(FILTER) else {
            panic!("expected a solution");
        };
        let host = sol
            .coeffs
            .iter()
            .find(|g| g.loop_idx == 0 && g.array == "in")
            .unwrap();
        assert_eq!(
            coeff_strings(host),
            [
                ("c00", "0"),
                ("c01", "0"),
                ("c10", "-1"),
                ("c11", "1"),
                ("c20", "1"),
                ("c21", "0"),
            ]
            .map(|(a, b)| (a.to_string(), b.to_string()))
        );
    }

    #[test]
    fn solved_invariants_hold_along_an_independent_simulation() {
        let SolveOutcome::Solved(sol) = solve_source(FILTER) else {
            panic!("expected a solution");
        };
        let kernel_inv = &sol
            .invariants
            .iter()
            .find(|(idx, _)| *idx == 1)
            .unwrap()
            .1;
        // Simulate the buffered filter by hand for N = 5 and check the
        // invariant at every loop head.
        let n = 5i64;
        let cells: Vec<i64> = (0..n).collect(); // in[i] after the host fill
        let mut in_idx: Vec<i64> = (0..n).collect(); // unread index suffix
        let mut out_idx: Vec<i64> = Vec::new(); // indices written so far
        let mut b0 = cells[in_idx.remove(0) as usize]; // warm-up read
        for x in 0..n {
            let mut val = Valuation::default();
            val.set_int("N", n);
            val.set_int("x", x);
            val.set_int("b0", b0);
            for (i, c) in cells.iter().enumerate() {
                val.set_cell("in", i as i64, *c);
            }
            val.set_seq("in", in_idx.iter().map(|&v| Int::from(v)).collect());
            val.set_seq("out", out_idx.iter().map(|&v| Int::from(v)).collect());
            assert!(
                eval_formula(kernel_inv, &val),
                "invariant refuted at x = {x}"
            );
            if x == n - 1 {
                break; // loop exit
            }
            let y0 = b0;
            let y1 = cells[in_idx.remove(0) as usize];
            out_idx.push(x);
            let _ = (y0 + y1) / 2;
            b0 = y1;
        }
    }

    #[test]
    fn a_perturbed_coefficient_is_refuted() {
        let p = parse_program(FILTER).unwrap();
        let analysis = analyze(&p, &kernel_arrays(&p), true).unwrap();
        let SolveOutcome::Solved(sol) =
            solve(&analysis, &SolveConfig::default()).unwrap()
        else {
            panic!("expected a solution");
        };
        let mut wrong = sol.assignment.clone();
        let mut cand = wrong.get(1, "out").unwrap().clone();
        cand.high.0 = LinExpr::constant(0); // claims out[x] exists before the write
        wrong.set(1, "out", cand);
        let out = chain(&analysis, &wrong, None).unwrap();
        let cfg = SolveConfig::default();
        let refuted = out
            .vcs
            .iter()
            .any(|vc| matches!(check_vc(vc, &analysis.env, &cfg), Verdict::Fails(_)));
        assert!(refuted, "the perturbed assignment should fail some condition");
    }

    #[test]
    fn programs_without_arrays_solve_with_an_empty_assignment() {
        let out = solve_source(
            "param N >= 1;\nint x, y;\nkernel {\n  for (x = 0; x != N; x += 1) { y = x + y; }\n}\n",
        );
        let SolveOutcome::Solved(sol) = out else {
            panic!("expected a (vacuous) solution");
        };
        assert!(sol.assignment.0.is_empty());
        assert!(sol.coeffs.is_empty());
        assert_eq!(sol.vcs.len(), 3);
    }

    #[test]
    fn a_doubly_indexed_read_defeats_every_candidate() {
        let out = solve_source(
            "param N >= 1;\nrarr a;\nrarr b;\nwarr out;\nint i, t, y;\n\
             for (i = 0; i != N; i += 1) { a[i] = i; }\n\
             for (i = 0; i != N; i += 1) { b[i] = 0; }\n\
             kernel {\n  for (i = 0; i != N; i += 1) {\n    t = b[i];\n    y = a[t];\n    out[i] = y;\n  }\n}\n",
        );
        let SolveOutcome::GiveUp { loop_idx, array, .. } = out else {
            panic!("expected the solver to give up");
        };
        assert_eq!((loop_idx, array.as_str()), (2, "a"));
    }
}
