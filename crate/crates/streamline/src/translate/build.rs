//! Backward construction of the derivation tree.
//!
//! The source/target pairing is walked right to left from the final
//! anchor. Each paired step becomes one node whose precondition is its
//! rule schema applied to the formula on its right; refills, rotation
//! moves, and staging operations become insertion judgments glued at
//! exactly the formulas they produce. Consequence nodes appear only
//! where two independently computed formulas must meet — loop heads and
//! exits, branch entries, and the program entry — and each carries the
//! entailment the solver's invariants make true.

use std::collections::BTreeMap;

use crate::assertions::subst::{subst_array, subst_int, subst_seq, SubstError};
use crate::assertions::{linexpr_term, ArrayTerm, Formula, IntTerm, LinExpr, SeqTerm};
use crate::ast::{Atom, Expr, Name, Stmt, TypeEnv};
use crate::vcgen::awp::implies;
use crate::vcgen::{Item, LoopItem, TStep, VarRange, Vc};

use super::{certificate, conj, Derivation, Entailment, Judgment, Rule};

pub(crate) struct BuildInput<'a> {
    pub items: &'a [Item],
    /// Declared typing of the two-step target (the kernel's view; the
    /// walk starts from its flip, host-side).
    pub env: TypeEnv,
    pub invariants: &'a [(usize, Formula)],
    pub precondition: Formula,
    pub final_anchor: Formula,
}

pub(crate) fn derive(input: BuildInput<'_>) -> Result<Derivation, String> {
    let invariants: BTreeMap<usize, Formula> =
        input.invariants.iter().cloned().collect();
    let mut b = Builder {
        env: input.env.flip(),
        invariants,
        ranges: Vec::new(),
    };
    let body = b.region(input.items, &input.final_anchor)?;
    if body.conclusion.pre == input.precondition {
        return Ok(body);
    }
    Ok(b.conseq_node("entry", input.precondition, body, input.final_anchor))
}

/// A built subtree: a statement judgment, or an insertion waiting to be
/// attached to one.
enum Piece {
    Node(Derivation),
    Ins(Derivation),
}

impl Piece {
    fn pre(&self) -> &Formula {
        match self {
            Piece::Node(d) | Piece::Ins(d) => &d.conclusion.pre,
        }
    }
}

enum Unit<'a> {
    Step(&'a TStep),
    Loop(&'a LoopItem),
    Kernel(&'a [Item]),
}

fn flatten_units(items: &[Item]) -> Vec<Unit<'_>> {
    let mut out = Vec::new();
    for item in items {
        match item {
            Item::Steps(steps) => out.extend(steps.iter().map(Unit::Step)),
            Item::Loop(lp) => out.push(Unit::Loop(lp)),
            Item::Kernel(inner) => out.push(Unit::Kernel(inner)),
        }
    }
    out
}

fn err(e: SubstError) -> String {
    e.to_string()
}

/// Reverses the index-term mapping for the shapes inlining leaves
/// behind: constants, variables, and one operator over two atoms.
fn expr_of_term(t: &IntTerm) -> Result<Expr, String> {
    fn atom(t: &IntTerm) -> Option<Atom> {
        match t {
            IntTerm::Const(n) => Some(Atom::Const(n.clone())),
            IntTerm::Var(x) => Some(Atom::Var(x.clone())),
            _ => None,
        }
    }
    match t {
        IntTerm::Bin(op, l, r) => {
            atom(l).zip(atom(r)).map(|(l, r)| Expr::Bin(*op, l, r))
        }
        other => atom(other).map(Expr::Atom),
    }
    .ok_or_else(|| format!("index term `{t}` is not a source-level expression"))
}

struct Builder {
    /// Typing of the current region (flips at kernel boundaries).
    env: TypeEnv,
    invariants: BTreeMap<usize, Formula>,
    /// Counter ranges of the enclosing loops, for entailment bounds.
    ranges: Vec<(Name, VarRange)>,
}

impl Builder {
    fn judge(
        &self,
        pre: Formula,
        source: Option<Stmt>,
        target: Stmt,
        post: Formula,
    ) -> Judgment {
        Judgment { env: self.env.clone(), pre, source, target, post }
    }

    fn leaf(
        &self,
        rule: Rule,
        pre: Formula,
        source: Option<Stmt>,
        target: Stmt,
        post: Formula,
    ) -> Derivation {
        Derivation {
            rule,
            conclusion: self.judge(pre, source, target, post),
            premises: Vec::new(),
            side: Vec::new(),
        }
    }

    fn entail(&self, label: &str, hyp: Formula, concl: Formula) -> Entailment {
        let vc = Vc::new(label.to_string(), None, hyp, concl, &self.ranges);
        let certificate = certificate(&vc, &self.env);
        Entailment { vc, certificate }
    }

    /// Consequence node: weakens the premise's ends to `pre`/`post`,
    /// recording both entailments (one is usually the identity).
    fn conseq_node(
        &self,
        label: &str,
        pre: Formula,
        inner: Derivation,
        post: Formula,
    ) -> Derivation {
        let rule = if inner.conclusion.source.is_some() {
            Rule::Conseq
        } else {
            Rule::InsConseq
        };
        let side = vec![
            self.entail(
                &format!("{label}.pre"),
                pre.clone(),
                inner.conclusion.pre.clone(),
            ),
            self.entail(
                &format!("{label}.post"),
                inner.conclusion.post.clone(),
                post.clone(),
            ),
        ];
        let conclusion = Judgment {
            env: inner.conclusion.env.clone(),
            pre,
            source: inner.conclusion.source.clone(),
            target: inner.conclusion.target.clone(),
            post,
        };
        Derivation { rule, conclusion, premises: vec![inner], side }
    }

    fn skip_node(&self, phi: Formula) -> Derivation {
        self.leaf(Rule::Skip, phi.clone(), Some(Stmt::Skip), Stmt::Skip, phi)
    }

    fn region(&mut self, items: &[Item], post: &Formula) -> Result<Derivation, String> {
        let units = flatten_units(items);
        self.units_region(&units, post)
    }

    fn steps_region(
        &mut self,
        steps: &[TStep],
        post: &Formula,
    ) -> Result<Derivation, String> {
        let units: Vec<Unit<'_>> = steps.iter().map(Unit::Step).collect();
        self.units_region(&units, post)
    }

    fn units_region(
        &mut self,
        units: &[Unit<'_>],
        post: &Formula,
    ) -> Result<Derivation, String> {
        if units.is_empty() {
            return Ok(self.skip_node(post.clone()));
        }
        let mut rev: Vec<Piece> = Vec::with_capacity(units.len());
        let mut phi = post.clone();
        for u in units.iter().rev() {
            let piece = self.unit(u, &phi)?;
            phi = piece.pre().clone();
            rev.push(piece);
        }
        rev.reverse();
        self.stitch(rev)
    }

    fn unit(&mut self, u: &Unit<'_>, post: &Formula) -> Result<Piece, String> {
        match u {
            Unit::Step(s) => self.step(s, post),
            Unit::Loop(lp) => self.loop_unit(lp, post).map(Piece::Node),
            Unit::Kernel(inner) => self.kernel_unit(inner, post).map(Piece::Node),
        }
    }

    fn step(&mut self, s: &TStep, post: &Formula) -> Result<Piece, String> {
        Ok(match s {
            TStep::Assign { dst, expr, rhs } => {
                let pre = subst_int(post, dst, rhs).map_err(err)?;
                let stmt = Stmt::Assign { dst: dst.clone(), expr: expr.clone() };
                Piece::Node(self.leaf(
                    Rule::Assign,
                    pre,
                    Some(stmt.clone()),
                    stmt,
                    post.clone(),
                ))
            }
            TStep::ReadKept { dst, arr, idx_expr, idx } => {
                let sel =
                    IntTerm::Select(ArrayTerm::var(arr), Box::new(idx.clone()));
                let pre = subst_int(post, dst, &sel).map_err(err)?;
                let stmt = Stmt::ReadArr {
                    dst: dst.clone(),
                    arr: arr.clone(),
                    idx: idx_expr.clone(),
                };
                Piece::Node(self.leaf(
                    Rule::Id,
                    pre,
                    Some(stmt.clone()),
                    stmt,
                    post.clone(),
                ))
            }
            TStep::WriteKept { arr, idx_expr, idx, src } => {
                let upd = ArrayTerm::update(
                    ArrayTerm::var(arr),
                    idx.clone(),
                    IntTerm::var(src),
                );
                let pre = subst_array(post, arr, &upd);
                let stmt = Stmt::WriteArr {
                    arr: arr.clone(),
                    idx: idx_expr.clone(),
                    src: src.clone(),
                };
                Piece::Node(self.leaf(
                    Rule::Id,
                    pre,
                    Some(stmt.clone()),
                    stmt,
                    post.clone(),
                ))
            }
            TStep::SlotRead { dst, slot, arr, idx } => {
                let node = self.window_read(dst, slot, arr, idx, post)?;
                Piece::Node(node)
            }
            TStep::Refill { slot, arr } => {
                Piece::Ins(self.refill_node(slot, arr, post)?)
            }
            TStep::Shift { dst, src } => {
                let pre =
                    subst_int(post, dst, &IntTerm::Buf(src.clone())).map_err(err)?;
                Piece::Ins(self.leaf(
                    Rule::InsMove,
                    pre,
                    None,
                    Stmt::Assign { dst: dst.clone(), expr: Expr::var(src) },
                    post.clone(),
                ))
            }
            TStep::ReadDirect { dst, arr, idx, via } => {
                let Some(b) = via else {
                    return Err(format!(
                        "direct read of `{arr}` lacks a staging buffer in the \
                         two-step pairing"
                    ));
                };
                let read = self.window_read(dst, b, arr, idx, post)?;
                let refill = self.refill_node(b, arr, &read.conclusion.pre.clone())?;
                Piece::Node(self.insert_left(refill, read))
            }
            TStep::WriteDirect { arr, idx, src, via } => {
                let Some(b) = via else {
                    return Err(format!(
                        "direct write of `{arr}` lacks a staging buffer in the \
                         two-step pairing"
                    ));
                };
                let sel =
                    IntTerm::Select(ArrayTerm::var(arr), Box::new(idx.clone()));
                let pending = Formula::not(Formula::Mem(
                    idx.clone(),
                    SeqTerm::idx(arr),
                ));
                // Insertion: push the staged value onto the stream.
                let mid = conj(vec![
                    pending.clone(),
                    Formula::eq(sel, IntTerm::Buf(b.clone())),
                    subst_seq(
                        post,
                        arr,
                        &SeqTerm::snoc(SeqTerm::idx(arr), idx.clone()),
                    ),
                ]);
                let push = self.leaf(
                    Rule::InsWBuf,
                    mid.clone(),
                    None,
                    Stmt::WriteStream { stream: arr.clone(), src: b.clone() },
                    post.clone(),
                );
                // The memory write itself becomes a staging move.
                let staged = subst_int(&mid, b, &IntTerm::var(src)).map_err(err)?;
                let upd = ArrayTerm::update(
                    ArrayTerm::var(arr),
                    idx.clone(),
                    IntTerm::var(src),
                );
                let pre = conj(vec![pending, subst_array(&staged, arr, &upd)]);
                let source = Stmt::WriteArr {
                    arr: arr.clone(),
                    idx: expr_of_term(idx)?,
                    src: src.clone(),
                };
                let write = self.leaf(
                    Rule::WriteMem,
                    pre,
                    Some(source),
                    Stmt::Assign { dst: b.clone(), expr: Expr::var(src) },
                    mid,
                );
                Piece::Node(self.insert_right(write, push))
            }
            TStep::If { cond, then_s, else_s } => {
                Piece::Node(self.if_unit(cond, then_s, else_s, post)?)
            }
        })
    }

    /// `dst = slot` serving `dst = arr[idx]`: the slot pins the cell's
    /// value, and the read becomes a register move.
    fn window_read(
        &self,
        dst: &str,
        slot: &str,
        arr: &str,
        idx: &IntTerm,
        post: &Formula,
    ) -> Result<Derivation, String> {
        let sel = IntTerm::Select(ArrayTerm::var(arr), Box::new(idx.clone()));
        let pre = conj(vec![
            Formula::eq(IntTerm::Buf(slot.to_string()), sel),
            subst_int(post, dst, &IntTerm::Buf(slot.to_string())).map_err(err)?,
        ]);
        let source = Stmt::ReadArr {
            dst: dst.to_string(),
            arr: arr.to_string(),
            idx: expr_of_term(idx)?,
        };
        let target = Stmt::Assign { dst: dst.to_string(), expr: Expr::var(slot) };
        Ok(self.leaf(Rule::ReadMem, pre, Some(source), target, post.clone()))
    }

    /// `slot = arr.read()` as an insertion: afterwards the slot holds the
    /// cell at the head of the pending sequence, which loses that head.
    fn refill_node(
        &self,
        slot: &str,
        arr: &str,
        post: &Formula,
    ) -> Result<Derivation, String> {
        let tailed = subst_seq(post, arr, &SeqTerm::tail(SeqTerm::idx(arr)));
        let popped = IntTerm::Select(
            ArrayTerm::var(arr),
            Box::new(IntTerm::Head(Box::new(SeqTerm::idx(arr)))),
        );
        let pre = subst_int(&tailed, slot, &popped).map_err(err)?;
        Ok(self.leaf(
            Rule::InsRBuf,
            pre,
            None,
            Stmt::ReadStream { dst: slot.to_string(), stream: arr.to_string() },
            post.clone(),
        ))
    }

    fn if_unit(
        &mut self,
        cond: &Name,
        then_s: &[TStep],
        else_s: &[TStep],
        post: &Formula,
    ) -> Result<Derivation, String> {
        let then_node = self.steps_region(then_s, post)?;
        let else_node = self.steps_region(else_s, post)?;
        let taken = Formula::neq(IntTerm::var(cond), IntTerm::int(0));
        let skipped = Formula::eq(IntTerm::var(cond), IntTerm::int(0));
        let phi = conj(vec![
            implies(taken.clone(), then_node.conclusion.pre.clone()),
            implies(skipped.clone(), else_node.conclusion.pre.clone()),
        ]);
        let then_arm = self.conseq_node(
            "branch.then",
            conj(vec![phi.clone(), taken]),
            then_node,
            post.clone(),
        );
        let else_arm = self.conseq_node(
            "branch.else",
            conj(vec![phi.clone(), skipped]),
            else_node,
            post.clone(),
        );
        let source = Stmt::If {
            cond: cond.clone(),
            then_s: Box::new(
                then_arm.conclusion.source.clone().expect("statement judgment"),
            ),
            else_s: Box::new(
                else_arm.conclusion.source.clone().expect("statement judgment"),
            ),
        };
        let target = Stmt::If {
            cond: cond.clone(),
            then_s: Box::new(then_arm.conclusion.target.clone()),
            else_s: Box::new(else_arm.conclusion.target.clone()),
        };
        Ok(Derivation {
            rule: Rule::If,
            conclusion: self.judge(phi, Some(source), target, post.clone()),
            premises: vec![then_arm, else_arm],
            side: Vec::new(),
        })
    }

    fn loop_unit(
        &mut self,
        lp: &LoopItem,
        post: &Formula,
    ) -> Result<Derivation, String> {
        let inv = self
            .invariants
            .get(&lp.plan_idx)
            .cloned()
            .ok_or_else(|| format!("loop {} has no solved invariant", lp.plan_idx))?;
        let var = &lp.var;
        let init_term = IntTerm::from_expr(&lp.init, &self.env);
        let bound_term = IntTerm::from_expr(&lp.bound, &self.env);

        let own_range = match (lp.init_lin(), lp.bound_lin()) {
            (Some(init), Some(bound)) => {
                Some((var.clone(), VarRange { init, bound, step: lp.step.clone() }))
            }
            _ => None,
        };
        let pushed = own_range.is_some();
        if let Some(r) = own_range {
            self.ranges.push(r);
        }
        let result = (|| {
            let stepped =
                linexpr_term(&LinExpr::var(var).add_const(lp.step.clone()));
            let body_post = subst_int(&inv, var, &stepped).map_err(err)?;
            let body = self.region(&lp.body, &body_post)?;
            let continuing = conj(vec![
                inv.clone(),
                Formula::neq(IntTerm::var(var), bound_term.clone()),
            ]);
            let arm = self.conseq_node(
                &format!("loop{}.body", lp.plan_idx),
                continuing,
                body,
                body_post,
            );

            let head_pre = subst_int(&inv, var, &init_term).map_err(err)?;
            let exit_post = conj(vec![
                inv.clone(),
                Formula::eq(IntTerm::var(var), bound_term.clone()),
            ]);
            let src_body =
                arm.conclusion.source.clone().expect("statement judgment");
            let tgt_body = arm.conclusion.target.clone();
            let header = |body: Stmt| Stmt::For {
                var: var.clone(),
                init: lp.init.clone(),
                bound: lp.bound.clone(),
                step: lp.step.clone(),
                body: Box::new(body),
                annot: lp.annot.clone(),
            };
            let for_node = Derivation {
                rule: Rule::For,
                conclusion: self.judge(
                    head_pre,
                    Some(header(src_body)),
                    header(tgt_body),
                    exit_post.clone(),
                ),
                premises: vec![arm],
                side: Vec::new(),
            };
            // Join the literal exit fact to whatever the suffix needs.
            if exit_post.normalize() == post.normalize() {
                Ok(for_node)
            } else {
                let pre = for_node.conclusion.pre.clone();
                Ok(self.conseq_node(
                    &format!("loop{}.exit", lp.plan_idx),
                    pre,
                    for_node,
                    post.clone(),
                ))
            }
        })();
        if pushed {
            self.ranges.pop();
        }
        result
    }

    fn kernel_unit(
        &mut self,
        inner: &[Item],
        post: &Formula,
    ) -> Result<Derivation, String> {
        let outer = self.env.clone();
        self.env = outer.flip();
        let body = self.region(inner, post);
        self.env = outer;
        let body = body?;
        let src = Stmt::Kernel(Box::new(
            body.conclusion
                .source
                .clone()
                .ok_or("an accelerated region reduced to a bare insertion")?,
        ));
        let tgt = Stmt::Kernel(Box::new(body.conclusion.target.clone()));
        Ok(Derivation {
            rule: Rule::Kernel,
            conclusion: self.judge(
                body.conclusion.pre.clone(),
                Some(src),
                tgt,
                post.clone(),
            ),
            premises: vec![body],
            side: Vec::new(),
        })
    }

    /// Attaches pending insertions and folds the region into a
    /// right-nested sequence.
    fn stitch(&self, pieces: Vec<Piece>) -> Result<Derivation, String> {
        let mut nodes: Vec<Derivation> = Vec::new();
        let mut pending: Vec<Derivation> = Vec::new();
        for piece in pieces {
            match piece {
                Piece::Ins(ins) => pending.push(ins),
                Piece::Node(node) => {
                    let mut node = node;
                    for ins in pending.drain(..).rev() {
                        node = self.insert_left(ins, node);
                    }
                    nodes.push(node);
                }
            }
        }
        if !pending.is_empty() {
            let Some(mut last) = nodes.pop() else {
                return Err(
                    "a region reduced to insertions with no statement to carry \
                     them"
                        .into(),
                );
            };
            for ins in pending.drain(..) {
                last = self.insert_right(last, ins);
            }
            nodes.push(last);
        }
        nodes
            .into_iter()
            .rev()
            .reduce(|acc, left| self.seq_node(left, acc))
            .ok_or_else(|| "empty region".to_string())
    }

    fn insert_left(&self, ins: Derivation, node: Derivation) -> Derivation {
        let conclusion = Judgment {
            env: node.conclusion.env.clone(),
            pre: ins.conclusion.pre.clone(),
            source: node.conclusion.source.clone(),
            target: Stmt::Seq(
                Box::new(ins.conclusion.target.clone()),
                Box::new(node.conclusion.target.clone()),
            ),
            post: node.conclusion.post.clone(),
        };
        Derivation {
            rule: Rule::InsertL,
            conclusion,
            premises: vec![ins, node],
            side: Vec::new(),
        }
    }

    fn insert_right(&self, node: Derivation, ins: Derivation) -> Derivation {
        let conclusion = Judgment {
            env: node.conclusion.env.clone(),
            pre: node.conclusion.pre.clone(),
            source: node.conclusion.source.clone(),
            target: Stmt::Seq(
                Box::new(node.conclusion.target.clone()),
                Box::new(ins.conclusion.target.clone()),
            ),
            post: ins.conclusion.post.clone(),
        };
        Derivation {
            rule: Rule::InsertR,
            conclusion,
            premises: vec![node, ins],
            side: Vec::new(),
        }
    }

    fn seq_node(&self, left: Derivation, right: Derivation) -> Derivation {
        let src = match (&left.conclusion.source, &right.conclusion.source) {
            (Some(l), Some(r)) => {
                Stmt::Seq(Box::new(l.clone()), Box::new(r.clone()))
            }
            _ => panic!("insertions are attached before sequencing"),
        };
        let conclusion = Judgment {
            env: left.conclusion.env.clone(),
            pre: left.conclusion.pre.clone(),
            source: Some(src),
            target: Stmt::Seq(
                Box::new(left.conclusion.target.clone()),
                Box::new(right.conclusion.target.clone()),
            ),
            post: right.conclusion.post.clone(),
        };
        Derivation {
            rule: Rule::Seq,
            conclusion,
            premises: vec![left, right],
            side: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::filter;
    use super::*;
    use crate::translate::Rule;

    #[test]
    fn insertions_chain_without_consequence_joints() {
        let (_, deriv, _) = filter();
        deriv.walk(&mut |path, node| match node.rule {
            Rule::InsertL => {
                let ins = &node.premises[0].conclusion;
                let stmt = &node.premises[1].conclusion;
                assert_eq!(
                    ins.post, stmt.pre,
                    "left insertion at {path:?} does not meet its statement"
                );
            }
            Rule::InsertR => {
                let stmt = &node.premises[0].conclusion;
                let ins = &node.premises[1].conclusion;
                assert_eq!(
                    stmt.post, ins.pre,
                    "right insertion at {path:?} does not meet its statement"
                );
            }
            Rule::Seq => {
                let l = &node.premises[0].conclusion;
                let r = &node.premises[1].conclusion;
                assert_eq!(l.post, r.pre, "sequence at {path:?} has a gap");
            }
            _ => {}
        });
    }

    #[test]
    fn consequences_appear_only_at_the_expected_joints() {
        let (_, deriv, _) = filter();
        let mut labels = Vec::new();
        deriv.walk(&mut |_, node| {
            if matches!(node.rule, Rule::Conseq | Rule::InsConseq) {
                for e in &node.side {
                    labels.push(e.vc.label.clone());
                }
            }
        });
        for l in &labels {
            assert!(
                l.starts_with("entry.")
                    || l.starts_with("loop")
                    || l.starts_with("branch."),
                "unexpected joint `{l}`"
            );
        }
        assert!(labels.iter().any(|l| l == "entry.pre"));
        assert!(labels.iter().any(|l| l.contains(".body.")));
    }

    #[test]
    fn the_kernel_node_flips_the_typing() {
        let (_, deriv, _) = filter();
        let mut seen = false;
        deriv.walk(&mut |_, node| {
            if node.rule == Rule::Kernel {
                seen = true;
                let outer = &node.conclusion.env;
                let inner = &node.premises[0].conclusion.env;
                assert_eq!(&outer.flip(), inner);
                // Host view writes `in`; the kernel reads it.
                assert_eq!(outer.lookup("in"), Some(crate::ast::Ty::WArr));
                assert_eq!(inner.lookup("in"), Some(crate::ast::Ty::RArr));
            }
        });
        assert!(seen, "no kernel node in the filter derivation");
    }

    #[test]
    fn index_terms_reverse_into_expressions() {
        let t = IntTerm::bin(
            crate::ast::Op::Add,
            IntTerm::var("x"),
            IntTerm::int(1),
        );
        assert_eq!(
            expr_of_term(&t).unwrap(),
            Expr::Bin(crate::ast::Op::Add, Atom::var("x"), Atom::int(1))
        );
        let bad = IntTerm::select("a", IntTerm::var("x"));
        assert!(expr_of_term(&bad).is_err());
    }
}
