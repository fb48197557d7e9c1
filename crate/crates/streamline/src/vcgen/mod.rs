//! Verification-condition generation and discharge for buffer plans.
//!
//! Given a program and an access plan, [`pair_program`] aligns every source
//! statement with its translated counterpart. From that pairing this module
//! computes weakest preconditions over the relational assertion language
//! ([`awp`]), chains loop invariants into per-loop initiation /
//! inductiveness / exit conditions ([`chain`]), proposes index-range
//! invariants by template enumeration ([`templates`]), and discharges the
//! resulting conditions with a bounded finite-model search
//! ([`backend_b`]) or an external SMT process ([`smt`]).

pub mod awp;
pub mod backend_b;
pub mod chain;
pub mod pair;
pub mod smt;
pub mod templates;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::assertions::subst::SubstError;
use crate::assertions::text::{parse_formula, TextError};
use crate::assertions::{free_vars, Formula, LinExpr};
use crate::ast::{Expr, Int, Name, Program, Ty, TypeEnv};
use crate::bufferpass::{plan_program, AccessPlan};

pub use backend_b::{check_vc, solve, GroupCoeffs, Solution, SolveConfig, SolveOutcome, Verdict};
pub use chain::{chain, ChainOutput, ChainScope, VarRange, Vc};
pub use pair::{lower_items, pair_program, Item, LoopItem, TStep};
pub use smt::{lower_query, SmtBackend};
pub use templates::{make_templates, Candidate, TemplateGroup};

#[derive(Debug, Error)]
pub enum VcError {
    #[error("loop invariant on `{var}`: {err}")]
    BadAnnotation { var: Name, err: TextError },
    #[error(transparent)]
    Subst(#[from] SubstError),
}

/// Identity, bounds and stream usage of one loop, in plan preorder.
#[derive(Debug, Clone)]
pub struct LoopMeta {
    pub plan_idx: usize,
    pub var: Name,
    pub init: Expr,
    pub bound: Expr,
    pub step: Int,
    pub in_kernel: bool,
    /// The parsed `//@ invariant` annotation, if any.
    pub annot: Option<Formula>,
    /// Converted arrays stream-accessed anywhere in the loop's subtree.
    pub touched: BTreeSet<Name>,
}

impl LoopMeta {
    pub fn init_lin(&self) -> Option<LinExpr> {
        LinExpr::from_expr(&self.init)
    }

    pub fn bound_lin(&self) -> Option<LinExpr> {
        LinExpr::from_expr(&self.bound)
    }

    /// Arrays whose index sequence the annotation already describes; their
    /// templates are suppressed so user knowledge wins over enumeration.
    pub fn annotated_seqs(&self) -> BTreeSet<Name> {
        self.annot
            .as_ref()
            .map(|f| free_vars(f).seqs)
            .unwrap_or_default()
    }

    /// Template pairs this loop contributes: touched arrays the user did
    /// not describe, in name order.
    pub fn templated_arrays(&self) -> Vec<Name> {
        let annotated = self.annotated_seqs();
        self.touched
            .iter()
            .filter(|a| !annotated.contains(*a))
            .cloned()
            .collect()
    }
}

/// Everything the solver and the condition builder need about one
/// (program, conversion set) pairing.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub program: Program,
    pub plan: AccessPlan,
    pub simplify: bool,
    pub items: Vec<Item>,
    /// Source typing extended with the window slots as buffer registers.
    pub env: TypeEnv,
    /// One entry per loop, indexed by plan preorder position.
    pub loops: Vec<LoopMeta>,
}

/// Pairs the program with its planned translation and collects per-loop
/// metadata. `convert` is the candidate conversion set; the plan decides
/// window shapes for it.
pub fn analyze(
    p: &Program,
    convert: &BTreeSet<Name>,
    simplify: bool,
) -> Result<Analysis, VcError> {
    let plan = plan_program(p, convert);
    let items = pair_program(p, &plan, simplify);
    let mut env = p.env();
    for slot in &plan.slot_decls {
        env.bind(slot, Ty::Buf);
    }
    let mut loops = Vec::new();
    collect_loops(&items, false, &plan, &mut loops)?;
    loops.sort_by_key(|m| m.plan_idx);
    Ok(Analysis { program: p.clone(), plan, simplify, items, env, loops })
}

fn collect_loops(
    items: &[Item],
    in_kernel: bool,
    plan: &AccessPlan,
    out: &mut Vec<LoopMeta>,
) -> Result<(), VcError> {
    for item in items {
        match item {
            Item::Steps(_) => {}
            Item::Kernel(inner) => collect_loops(inner, true, plan, out)?,
            Item::Loop(lp) => {
                let annot = lp
                    .annot
                    .as_deref()
                    .map(|text| {
                        parse_formula(text).map_err(|err| VcError::BadAnnotation {
                            var: lp.var.clone(),
                            err,
                        })
                    })
                    .transpose()?;
                let mut touched = BTreeSet::new();
                touched_arrays(&lp.body, &mut touched);
                out.push(LoopMeta {
                    plan_idx: lp.plan_idx,
                    var: lp.var.clone(),
                    init: lp.init.clone(),
                    bound: lp.bound.clone(),
                    step: lp.step.clone(),
                    in_kernel,
                    annot,
                    touched,
                });
                collect_loops(&lp.body, in_kernel, plan, out)?;
            }
        }
    }
    Ok(())
}

fn touched_arrays(items: &[Item], out: &mut BTreeSet<Name>) {
    for item in items {
        match item {
            Item::Kernel(inner) => touched_arrays(inner, out),
            Item::Loop(lp) => touched_arrays(&lp.body, out),
            Item::Steps(steps) => steps.iter().for_each(|s| touched_in_step(s, out)),
        }
    }
}

fn touched_in_step(step: &TStep, out: &mut BTreeSet<Name>) {
    match step {
        TStep::SlotRead { arr, .. }
        | TStep::Refill { arr, .. }
        | TStep::ReadDirect { arr, .. }
        | TStep::WriteDirect { arr, .. } => {
            out.insert(arr.clone());
        }
        TStep::If { then_s, else_s, .. } => {
            then_s.iter().for_each(|s| touched_in_step(s, out));
            else_s.iter().for_each(|s| touched_in_step(s, out));
        }
        _ => {}
    }
}

/// Concrete index ranges chosen for the templated (loop, array) pairs.
#[derive(Debug, Clone, Default)]
pub struct Assignment(pub BTreeMap<(usize, Name), Candidate>);

impl Assignment {
    pub fn get(&self, loop_idx: usize, array: &str) -> Option<&Candidate> {
        self.0.get(&(loop_idx, array.to_string()))
    }

    pub fn set(&mut self, loop_idx: usize, array: &str, c: Candidate) {
        self.0.insert((loop_idx, array.to_string()), c);
    }
}
