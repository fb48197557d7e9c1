//! Chains per-loop invariants into checkable conditions.
//!
//! The program is a sequence of straight-line chunks and loops (kernel
//! markers are transparent here: entering one flips array orientations
//! but leaves every formula unchanged). The walk keeps an *anchor* — a
//! formula known to hold at the last loop boundary — and turns each loop
//! into three conditions:
//!
//! * initiation: the anchor implies the invariant at the initial counter,
//!   pulled back through the straight-line chunk in between;
//! * inductiveness: invariant plus continuation implies the invariant at
//!   the stepped counter, pulled back through the body;
//! * exit: invariant plus the exit equality implies the invariant with
//!   the counter replaced by the bound.
//!
//! After a loop the anchor becomes that exit form conjoined with whatever
//! earlier facts the loop and its preceding chunk cannot disturb (judged
//! by free variables against the modified sets). Nested loops run the
//! same walk inside their parent's body, so their conditions surface in
//! the same flat list.
//!
//! Invariants are assembled from the template assignment, window-slot
//! facts, the user's annotation, automatic counter facts, and the carried
//! frame conjuncts. A *scope* restricts the walk for staged solving: only
//! loops up to a given index are processed, template atoms outside the
//! covered set are omitted, and conclusion conjuncts owned by arrays with
//! uncovered templates are dropped (their conditions are checked when
//! their own group is solved, and once more in the final full pass).

use std::collections::{BTreeMap, BTreeSet};

use crate::assertions::{
    free_vars, linexpr_term, Formula, IntTerm, LinExpr, SeqTerm,
};
use crate::ast::{Int, Name};
use crate::bufferpass::PlannedArray;

use super::awp::awp_steps;
use super::pair::{Item, LoopItem, TStep};
use super::{Analysis, Assignment, LoopMeta, VcError};

/// The induced enumeration range of one loop variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarRange {
    pub init: LinExpr,
    pub bound: LinExpr,
    pub step: Int,
}

/// One verification condition: `hypothesis ⟹ conclusion`, universally
/// quantified over the free integer symbols.
#[derive(Debug, Clone)]
pub struct Vc {
    /// `loop{i}.initiation` / `.inductiveness` / `.exit`, or `final`.
    pub label: String,
    pub loop_idx: Option<usize>,
    pub hypothesis: Formula,
    pub conclusion: Formula,
    /// Free integer symbols of both sides (parameters included).
    pub universals: BTreeSet<Name>,
    /// Enumeration ranges for the loop variables in scope.
    pub ranges: BTreeMap<Name, VarRange>,
}

impl Vc {
    pub(crate) fn new(
        label: String,
        loop_idx: Option<usize>,
        hypothesis: Formula,
        conclusion: Formula,
        ranges: &[(Name, VarRange)],
    ) -> Vc {
        let mut universals = free_vars(&hypothesis).ints;
        universals.extend(free_vars(&conclusion).ints);
        Vc {
            label,
            loop_idx,
            hypothesis,
            conclusion,
            universals,
            ranges: ranges.iter().cloned().collect(),
        }
    }
}

/// Restriction for staged solving.
#[derive(Debug, Clone)]
pub struct ChainScope {
    /// Process loops with plan index up to here (inclusive).
    pub upto: usize,
    /// Template pairs whose atoms may be used (solved plus the candidate
    /// under test).
    pub covered: BTreeSet<(usize, Name)>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub vcs: Vec<Vc>,
    /// The instantiated invariant of each processed loop.
    pub invariants: Vec<(usize, Formula)>,
    /// `ι_a = ε` for every converted array: the program precondition.
    pub precondition: Formula,
    /// What holds after the whole program.
    pub final_anchor: Formula,
    /// Final symbolic index sequences per converted array, where the walk
    /// could track them.
    pub final_indices: BTreeMap<Name, SeqTerm>,
}

fn make_chainer<'a>(
    analysis: &'a Analysis,
    assignment: &'a Assignment,
    scope: Option<&'a ChainScope>,
) -> Chainer<'a> {
    let mut slot_owner = BTreeMap::new();
    for lp in &analysis.plan.loops {
        for (arr, pa) in &lp.arrays {
            if let PlannedArray::Window { slots, .. } = pa {
                for s in slots {
                    slot_owner.insert(s.clone(), arr.clone());
                }
            }
        }
    }
    let unsolved: BTreeSet<Name> = match scope {
        None => BTreeSet::new(),
        Some(sc) => analysis
            .loops
            .iter()
            .filter(|m| m.plan_idx <= sc.upto)
            .flat_map(|m| {
                m.templated_arrays()
                    .into_iter()
                    .filter(|a| !sc.covered.contains(&(m.plan_idx, a.clone())))
            })
            .collect(),
    };
    let param_facts = Formula::and(
        analysis
            .env
            .params()
            .map(|(n, min)| {
                Formula::le(IntTerm::Const(min.clone()), IntTerm::var(n))
            })
            .collect(),
    );
    Chainer {
        analysis,
        assignment,
        scope,
        slot_owner,
        unsolved,
        param_facts,
        vcs: Vec::new(),
        invariants: Vec::new(),
    }
}

fn program_precondition(analysis: &Analysis) -> Formula {
    Formula::and(
        analysis
            .plan
            .convert
            .iter()
            .map(|a| Formula::SeqEq(SeqTerm::idx(a), SeqTerm::Nil))
            .collect(),
    )
}

/// Builds the condition list for the paired program under the given
/// template assignment.
pub fn chain(
    analysis: &Analysis,
    assignment: &Assignment,
    scope: Option<&ChainScope>,
) -> Result<ChainOutput, VcError> {
    let precondition = program_precondition(analysis);
    let mut chainer = make_chainer(analysis, assignment, scope);
    let (anchor, trailing) =
        chainer.region(&analysis.items, precondition.clone(), &[], false)?;

    let mut final_anchor = anchor.clone();
    let mut final_indices = BTreeMap::new();
    if scope.is_none() {
        if !trailing.is_empty() {
            let post = forward_post(&anchor, &trailing);
            let concl = awp_steps(&trailing, &post)?;
            chainer.vcs.push(Vc::new(
                "final".into(),
                None,
                Formula::and(vec![chainer.param_facts.clone(), anchor]),
                concl,
                &[],
            ));
            final_anchor = post;
        }
        for c in final_anchor.conjuncts() {
            if let Formula::SeqEq(l, r) = c {
                match (l, r) {
                    (SeqTerm::Var(a), t) | (t, SeqTerm::Var(a)) => {
                        final_indices.insert(a.clone(), t.clone());
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(ChainOutput {
        vcs: chainer.vcs,
        invariants: chainer.invariants,
        precondition,
        final_anchor,
        final_indices,
    })
}

/// Walks the program up to — but not including — the scope's target loop.
/// Returns the anchor, the approach chunk, and the conditions of the loops
/// already passed, or `None` when the target loop is not at top level
/// (nested targets need the full [`chain`] walk). Everything returned is
/// independent of the target loop's own template candidate, so a solver
/// may compute it once per group and replay only the target loop.
pub fn chain_before(
    analysis: &Analysis,
    assignment: &Assignment,
    scope: &ChainScope,
) -> Result<Option<(Formula, Vec<TStep>, Vec<Vc>)>, VcError> {
    let mut chainer = make_chainer(analysis, assignment, Some(scope));
    let mut flat = Vec::new();
    flatten(&analysis.items, &mut flat);
    let mut anchor = program_precondition(analysis);
    let mut chunk: Vec<TStep> = Vec::new();
    for item in flat {
        match item {
            Flat::Steps(steps) => chunk.extend_from_slice(steps),
            Flat::Loop(lp) if lp.plan_idx == scope.upto => {
                return Ok(Some((anchor, chunk, chainer.vcs)));
            }
            Flat::Loop(lp) => {
                anchor = chainer.do_loop(lp, anchor, &chunk, &[])?;
                chunk.clear();
            }
        }
    }
    Ok(None)
}

/// Replays just the scope's target loop from a [`chain_before`]
/// checkpoint, returning its three conditions.
pub fn chain_loop(
    analysis: &Analysis,
    assignment: &Assignment,
    scope: &ChainScope,
    anchor: Formula,
    chunk: &[TStep],
) -> Result<Vec<Vc>, VcError> {
    let mut flat = Vec::new();
    flatten(&analysis.items, &mut flat);
    let lp = flat
        .iter()
        .find_map(|item| match item {
            Flat::Loop(lp) if lp.plan_idx == scope.upto => Some(*lp),
            _ => None,
        })
        .expect("chain_loop target must be a top-level loop");
    let mut chainer = make_chainer(analysis, assignment, Some(scope));
    chainer.do_loop(lp, anchor, chunk, &[])?;
    Ok(chainer.vcs)
}

struct Chainer<'a> {
    analysis: &'a Analysis,
    assignment: &'a Assignment,
    scope: Option<&'a ChainScope>,
    slot_owner: BTreeMap<Name, Name>,
    unsolved: BTreeSet<Name>,
    param_facts: Formula,
    vcs: Vec<Vc>,
    invariants: Vec<(usize, Formula)>,
}

impl<'a> Chainer<'a> {
    /// Walks one region (the whole program or a loop body). Returns the
    /// anchor after the last processed loop and the trailing chunk.
    fn region(
        &mut self,
        items: &[Item],
        start: Formula,
        outer: &[(Name, VarRange)],
        forced: bool,
    ) -> Result<(Formula, Vec<TStep>), VcError> {
        let mut flat = Vec::new();
        flatten(items, &mut flat);
        let mut anchor = start;
        let mut chunk: Vec<TStep> = Vec::new();
        for item in flat {
            match item {
                Flat::Steps(steps) => chunk.extend_from_slice(steps),
                Flat::Loop(lp) => {
                    if let Some(sc) = self.scope {
                        if !forced && lp.plan_idx > sc.upto {
                            return Ok((anchor, chunk));
                        }
                    }
                    anchor = self.do_loop(lp, anchor, &chunk, outer)?;
                    chunk.clear();
                }
            }
        }
        Ok((anchor, chunk))
    }

    /// Emits the three conditions for one loop and returns the new anchor.
    fn do_loop(
        &mut self,
        lp: &LoopItem,
        anchor: Formula,
        chunk: &[TStep],
        outer: &[(Name, VarRange)],
    ) -> Result<Formula, VcError> {
        let meta = &self.analysis.loops[lp.plan_idx];
        let var = &meta.var;

        // Frame conjuncts: anchor facts neither the approach chunk nor the
        // loop subtree can disturb.
        let mut mods = Mods::default();
        mods_of_steps(chunk, &mut mods);
        mods_of_items(&lp.body, &mut mods);
        mods.ints.insert(var.clone());
        let carried: Vec<Formula> = anchor
            .conjuncts()
            .into_iter()
            .filter(|c| mods.disjoint(c))
            .cloned()
            .collect();

        let inv = self.invariant(meta, &carried);
        if self.scope.is_none() {
            self.invariants.push((lp.plan_idx, inv.clone()));
        }

        let init_term = IntTerm::from_expr(&lp.init, &self.analysis.env);
        let bound_term = IntTerm::from_expr(&lp.bound, &self.analysis.env);
        let self_range = match (meta.init_lin(), meta.bound_lin()) {
            (Some(init), Some(bound)) => {
                Some((var.clone(), VarRange { init, bound, step: meta.step.clone() }))
            }
            _ => None,
        };
        let inner: Vec<(Name, VarRange)> =
            outer.iter().cloned().chain(self_range).collect();

        // Initiation: anchor, pulled through the approach chunk, reaches
        // the invariant at the initial counter value.
        let at_init = crate::assertions::subst::subst_int(&inv, var, &init_term)?;
        self.push_vc(
            format!("loop{}.initiation", lp.plan_idx),
            lp.plan_idx,
            Formula::and(vec![self.param_facts.clone(), anchor.clone()]),
            awp_steps(chunk, &at_init)?,
            outer,
        );

        // Inductiveness: walk the body as its own region; nested loops
        // contribute their own triples and leave their exit as the body
        // anchor.
        let continuing = Formula::and(vec![
            inv.clone(),
            Formula::neq(IntTerm::var(var), bound_term.clone()),
        ]);
        let (body_anchor, trailing) =
            self.region(&lp.body, continuing, &inner, true)?;
        let stepped = linexpr_term(
            &LinExpr::var(var).add_const(meta.step.clone()),
        );
        let at_next = crate::assertions::subst::subst_int(&inv, var, &stepped)?;
        self.push_vc(
            format!("loop{}.inductiveness", lp.plan_idx),
            lp.plan_idx,
            Formula::and(vec![self.param_facts.clone(), body_anchor]),
            awp_steps(&trailing, &at_next)?,
            &inner,
        );

        // Exit: the counter has hit the bound exactly.
        let at_exit = match meta.bound_lin() {
            Some(b) => {
                crate::assertions::subst::subst_int(&inv, var, &linexpr_term(&b))?
            }
            None => Formula::True,
        };
        self.push_vc(
            format!("loop{}.exit", lp.plan_idx),
            lp.plan_idx,
            Formula::and(vec![
                self.param_facts.clone(),
                inv,
                Formula::eq(IntTerm::var(var), bound_term),
            ]),
            at_exit.clone(),
            &inner,
        );

        Ok(Formula::and(
            std::iter::once(at_exit).chain(carried).collect(),
        ))
    }

    /// The loop invariant under the current assignment and scope.
    fn invariant(&self, meta: &LoopMeta, carried: &[Formula]) -> Formula {
        let mut parts = Vec::new();
        for a in meta.templated_arrays() {
            let covered = match self.scope {
                None => true,
                Some(sc) => sc.covered.contains(&(meta.plan_idx, a.clone())),
            };
            if !covered {
                continue;
            }
            if let Some(c) = self.assignment.get(meta.plan_idx, &a) {
                parts.push(c.atom(&a, &meta.var));
            }
        }
        for (arr, pa) in &self.analysis.plan.loops[meta.plan_idx].arrays {
            if !self.unsolved.contains(arr) {
                parts.extend(pa.head_facts(arr));
            }
        }
        if let Some(f) = &meta.annot {
            parts.push(f.clone());
        }
        let v = IntTerm::var(&meta.var);
        if let Some(init) = meta.init_lin() {
            let init_term = linexpr_term(&init);
            if meta.step > Int::from(0) {
                parts.push(Formula::le(init_term, v.clone()));
            } else {
                parts.push(Formula::le(v.clone(), init_term));
            }
        }
        if let Some(bound) = meta.bound_lin() {
            let bound_term = linexpr_term(&bound);
            if meta.step == Int::from(1) {
                parts.push(Formula::le(v, bound_term));
            } else if meta.step == Int::from(-1) {
                parts.push(Formula::le(bound_term, v));
            }
        }
        parts.extend(carried.iter().cloned());
        Formula::and(parts)
    }

    fn push_vc(
        &mut self,
        label: String,
        loop_idx: usize,
        hypothesis: Formula,
        conclusion: Formula,
        ranges: &[(Name, VarRange)],
    ) {
        let conclusion = if self.unsolved.is_empty() {
            conclusion
        } else {
            self.drop_unsolved(conclusion)
        };
        self.vcs.push(Vc::new(label, Some(loop_idx), hypothesis, conclusion, ranges));
    }

    /// Strips conclusion conjuncts owned *entirely* by arrays whose
    /// templates are not yet covered; their obligations return when those
    /// groups solve. A conjunct that couples an unsolved array to a
    /// covered one stays: it is part of the covered array's obligation,
    /// and dropping it would let bad candidates through on the covered
    /// side.
    fn drop_unsolved(&self, f: Formula) -> Formula {
        let kept: Vec<Formula> = f
            .conjuncts()
            .into_iter()
            .filter(|c| {
                let fv = free_vars(c);
                let mut owners: BTreeSet<&Name> =
                    fv.seqs.iter().chain(fv.arrays.iter()).collect();
                owners.extend(
                    fv.ints.iter().filter_map(|b| self.slot_owner.get(b)),
                );
                owners.is_empty()
                    || !owners.iter().all(|o| self.unsolved.contains(*o))
            })
            .cloned()
            .collect();
        Formula::and(kept)
    }
}

enum Flat<'a> {
    Steps(&'a [TStep]),
    Loop(&'a LoopItem),
}

/// Dissolves kernel markers: orientation flips leave formulas unchanged.
fn flatten<'a>(items: &'a [Item], out: &mut Vec<Flat<'a>>) {
    for item in items {
        match item {
            Item::Steps(s) => out.push(Flat::Steps(s)),
            Item::Loop(lp) => out.push(Flat::Loop(lp)),
            Item::Kernel(inner) => flatten(inner, out),
        }
    }
}

/// What a piece of target code can change, by sort. Sequences move on
/// stream operations; array contents change on writes (the source-side
/// heap is the shared reference).
#[derive(Debug, Default)]
struct Mods {
    ints: BTreeSet<Name>,
    arrays: BTreeSet<Name>,
    seqs: BTreeSet<Name>,
}

impl Mods {
    fn disjoint(&self, f: &Formula) -> bool {
        let fv = free_vars(f);
        fv.ints.is_disjoint(&self.ints)
            && fv.arrays.is_disjoint(&self.arrays)
            && fv.seqs.is_disjoint(&self.seqs)
    }
}

fn mods_of_items(items: &[Item], out: &mut Mods) {
    for item in items {
        match item {
            Item::Steps(steps) => mods_of_steps(steps, out),
            Item::Kernel(inner) => mods_of_items(inner, out),
            Item::Loop(lp) => {
                out.ints.insert(lp.var.clone());
                mods_of_items(&lp.body, out);
            }
        }
    }
}

fn mods_of_steps(steps: &[TStep], out: &mut Mods) {
    for step in steps {
        match step {
            TStep::Assign { dst, .. }
            | TStep::ReadKept { dst, .. }
            | TStep::Shift { dst, .. } => {
                out.ints.insert(dst.clone());
            }
            TStep::SlotRead { dst, .. } => {
                out.ints.insert(dst.clone());
            }
            TStep::WriteKept { arr, .. } => {
                out.arrays.insert(arr.clone());
            }
            TStep::Refill { slot, arr } => {
                out.ints.insert(slot.clone());
                out.seqs.insert(arr.clone());
            }
            TStep::ReadDirect { dst, arr, via, .. } => {
                out.ints.insert(dst.clone());
                out.ints.extend(via.clone());
                out.seqs.insert(arr.clone());
            }
            TStep::WriteDirect { arr, via, .. } => {
                out.ints.extend(via.clone());
                out.arrays.insert(arr.clone());
                out.seqs.insert(arr.clone());
            }
            TStep::If { then_s, else_s, .. } => {
                mods_of_steps(then_s, out);
                mods_of_steps(else_s, out);
            }
        }
    }
}

/// Symbolically advances the anchor's sequence equations through a
/// straight-line chunk, for the program's final state description. Facts
/// the chunk disturbs in ways this cannot track are dropped.
fn forward_post(anchor: &Formula, chunk: &[TStep]) -> Formula {
    let mut mods = Mods::default();
    mods_of_steps(chunk, &mut mods);
    let mut parts: Vec<Formula> = anchor
        .conjuncts()
        .into_iter()
        .filter(|c| mods.disjoint(c))
        .cloned()
        .collect();
    for c in anchor.conjuncts() {
        let Formula::SeqEq(l, r) = c else { continue };
        let (a, t) = match (l, r) {
            (SeqTerm::Var(a), t) | (t, SeqTerm::Var(a)) => (a, t),
            _ => continue,
        };
        if mods.disjoint(c) {
            continue; // already carried verbatim
        }
        let mut term = Some(t.clone());
        for step in chunk {
            term = advance(term, a, step);
        }
        if let Some(t) = term {
            parts.push(Formula::SeqEq(SeqTerm::idx(a), t));
        }
    }
    Formula::and(parts)
}

fn advance(term: Option<SeqTerm>, array: &str, step: &TStep) -> Option<SeqTerm> {
    let t = term?;
    match step {
        TStep::Refill { arr, .. } | TStep::ReadDirect { arr, .. } if arr == array => {
            Some(SeqTerm::tail(t))
        }
        TStep::WriteDirect { arr, idx, .. } if arr == array => {
            Some(SeqTerm::snoc(t, idx.clone()))
        }
        TStep::If { then_s, else_s, .. } => {
            let a = then_s.iter().try_fold(t.clone(), |acc, s| {
                advance(Some(acc), array, s)
            })?;
            let b = else_s
                .iter()
                .try_fold(t, |acc, s| advance(Some(acc), array, s))?;
            (a == b).then_some(a)
        }
        _ => Some(t),
    }
}
