//! Applies an [`AccessPlan`] to a program.
//!
//! [`insert_buffers`] rewrites the accelerated regions only, producing the
//! candidate skeleton: window arrays gain warm-up reads before the loop, a
//! refill just before the newest slot's first use, and a shift of every
//! slot at the end of the body; direct arrays become stream operations in
//! place. Host-side code keeps its memory accesses so the skeleton stays
//! runnable against a plain heap — [`convert_host_accesses`] switches those
//! over once the conversion set is settled.

use std::collections::{BTreeMap, BTreeSet};

use crate::assertions::LinExpr;
use crate::ast::{DeclKind, Expr, Name, Program, Stmt, Ty};
use crate::frontend::NameGen;

use super::{AccessPlan, LoopPlan, PlannedArray};

/// Rewrites kernel-side accesses of the planned arrays into stream
/// operations, returning the skeleton program. With `simplify` off, every
/// direct access routes through a fresh buffer variable; window reads
/// always do.
pub fn insert_buffers(p: &Program, plan: &AccessPlan, simplify: bool) -> Program {
    let mut rw = Rewriter::new(p, plan, simplify);
    let mut no_windows = BTreeMap::new();
    let body = rw.stmt(&p.body, false, None, &mut no_windows);
    rw.finish(p, body, true)
}

/// Rewrites host-side accesses of the converted arrays into stream
/// operations. Applied after the kernel skeleton is confirmed; kernels are
/// left untouched.
pub fn convert_host_accesses(p: &Program, convert: &BTreeSet<Name>, simplify: bool) -> Program {
    let plan = AccessPlan { loops: Vec::new(), convert: convert.clone(), slot_decls: Vec::new() };
    let mut rw = Rewriter::new(p, &plan, simplify);
    let body = rw.host_stmt(&p.body);
    rw.finish(p, body, false)
}

struct Rewriter<'a> {
    plan: &'a AccessPlan,
    simplify: bool,
    cursor: usize,
    gen: NameGen,
    temps: Vec<Name>,
}

impl<'a> Rewriter<'a> {
    fn new(p: &Program, plan: &'a AccessPlan, simplify: bool) -> Rewriter<'a> {
        let names = p
            .decls
            .iter()
            .map(|d| d.name.clone())
            .chain(plan.slot_decls.iter().cloned());
        Rewriter { plan, simplify, cursor: 0, gen: NameGen::new(names), temps: Vec::new() }
    }

    fn finish(self, p: &Program, body: Stmt, declare_slots: bool) -> Program {
        let mut out = Program { decls: p.decls.clone(), body: body.normalize() };
        let slots = if declare_slots { &self.plan.slot_decls[..] } else { &[][..] };
        for name in slots.iter().chain(self.temps.iter()) {
            out.declare(name, DeclKind::Var(Ty::Buf));
        }
        out
    }

    fn temp(&mut self) -> Name {
        let b = self.gen.fresh("b");
        self.temps.push(b.clone());
        b
    }

    /// A direct read: one stream pop, optionally staged through a buffer.
    fn direct_read(&mut self, dst: &Name, arr: &Name) -> Stmt {
        if self.simplify {
            return Stmt::ReadStream { dst: dst.clone(), stream: arr.clone() };
        }
        let b = self.temp();
        Stmt::seq(vec![
            Stmt::ReadStream { dst: b.clone(), stream: arr.clone() },
            Stmt::Assign { dst: dst.clone(), expr: Expr::var(&b) },
        ])
    }

    /// A direct write: one stream push, optionally staged through a buffer.
    fn direct_write(&mut self, arr: &Name, src: &Name) -> Stmt {
        if self.simplify {
            return Stmt::WriteStream { stream: arr.clone(), src: src.clone() };
        }
        let b = self.temp();
        Stmt::seq(vec![
            Stmt::Assign { dst: b.clone(), expr: Expr::var(src) },
            Stmt::WriteStream { stream: arr.clone(), src: b },
        ])
    }

    /// Kernel-side rewrite. `lp` is the innermost enclosing loop's plan and
    /// `popped` tracks which windows have refilled their newest slot in the
    /// current body; window accesses only occur unguarded at body level, so
    /// branches get a throwaway flag set.
    fn stmt(
        &mut self,
        s: &Stmt,
        in_kernel: bool,
        lp: Option<&LoopPlan>,
        popped: &mut BTreeMap<Name, bool>,
    ) -> Stmt {
        match s {
            Stmt::Seq(a, b) => {
                let first = self.stmt(a, in_kernel, lp, popped);
                let second = self.stmt(b, in_kernel, lp, popped);
                Stmt::Seq(Box::new(first), Box::new(second))
            }
            Stmt::If { cond, then_s, else_s } => {
                let mut t_flags = BTreeMap::new();
                let mut e_flags = BTreeMap::new();
                Stmt::If {
                    cond: cond.clone(),
                    then_s: Box::new(self.stmt(then_s, in_kernel, lp, &mut t_flags)),
                    else_s: Box::new(self.stmt(else_s, in_kernel, lp, &mut e_flags)),
                }
            }
            Stmt::For { var, init, bound, step, body, annot } => {
                let inner = self.plan.loops[self.cursor].clone();
                self.cursor += 1;
                let mut flags: BTreeMap<Name, bool> = inner
                    .arrays
                    .iter()
                    .filter(|(_, pa)| matches!(pa, PlannedArray::Window { .. }))
                    .map(|(a, _)| (a.clone(), false))
                    .collect();
                let new_body = self.stmt(body, in_kernel, Some(&inner), &mut flags);
                debug_assert!(
                    flags.values().all(|&done| done),
                    "every window refills its newest slot in the body"
                );
                let rebuilt = Stmt::For {
                    var: var.clone(),
                    init: init.clone(),
                    bound: bound.clone(),
                    step: step.clone(),
                    body: Box::new(Stmt::seq(
                        std::iter::once(new_body).chain(rotations(&inner)).collect(),
                    )),
                    annot: annot.clone(),
                };
                let mut stmts = warmup(&inner);
                stmts.push(rebuilt);
                Stmt::seq(stmts)
            }
            Stmt::Kernel(body) => {
                let mut flags = BTreeMap::new();
                Stmt::Kernel(Box::new(self.stmt(body, true, None, &mut flags)))
            }
            Stmt::ReadArr { dst, arr, idx } if in_kernel && self.plan.convert.contains(arr) => {
                match lp.and_then(|lp| lp.arrays.get(arr)) {
                    Some(PlannedArray::Window { shape, slots }) => {
                        let lin = LinExpr::from_expr(idx)
                            .expect("window indices are linear by construction");
                        let pos = shape
                            .position_of(&lin)
                            .expect("window covers every planned index");
                        // In-place windows serve both positions from their
                        // single slot; the refill overwrites it in between.
                        let get = Stmt::Assign {
                            dst: dst.clone(),
                            expr: Expr::var(&slots[pos.min(slots.len() - 1)]),
                        };
                        let flag = popped.get_mut(arr).expect("window arrays are tracked");
                        if pos + 1 == shape.window && !std::mem::replace(flag, true) {
                            Stmt::seq(vec![
                                Stmt::ReadStream {
                                    dst: slots.last().expect("windows have slots").clone(),
                                    stream: arr.clone(),
                                },
                                get,
                            ])
                        } else {
                            get
                        }
                    }
                    _ => self.direct_read(dst, arr),
                }
            }
            Stmt::WriteArr { arr, src, .. } if in_kernel && self.plan.convert.contains(arr) => {
                self.direct_write(arr, src)
            }
            other => other.clone(),
        }
    }

    /// Host-side rewrite: every access of a converted array becomes a
    /// direct stream operation; kernels are untouched.
    fn host_stmt(&mut self, s: &Stmt) -> Stmt {
        match s {
            Stmt::Seq(a, b) => {
                Stmt::Seq(Box::new(self.host_stmt(a)), Box::new(self.host_stmt(b)))
            }
            Stmt::If { cond, then_s, else_s } => Stmt::If {
                cond: cond.clone(),
                then_s: Box::new(self.host_stmt(then_s)),
                else_s: Box::new(self.host_stmt(else_s)),
            },
            Stmt::For { var, init, bound, step, body, annot } => Stmt::For {
                var: var.clone(),
                init: init.clone(),
                bound: bound.clone(),
                step: step.clone(),
                body: Box::new(self.host_stmt(body)),
                annot: annot.clone(),
            },
            Stmt::Kernel(body) => Stmt::Kernel(body.clone()),
            Stmt::ReadArr { dst, arr, .. } if self.plan.convert.contains(arr) => {
                self.direct_read(dst, arr)
            }
            Stmt::WriteArr { arr, src, .. } if self.plan.convert.contains(arr) => {
                self.direct_write(arr, src)
            }
            other => other.clone(),
        }
    }
}

/// Warm-up reads filling every persistent slot, in slot order.
fn warmup(lp: &LoopPlan) -> Vec<Stmt> {
    let mut out = Vec::new();
    for (arr, pa) in &lp.arrays {
        if let PlannedArray::Window { shape, slots } = pa {
            for slot in &slots[..shape.window - 1] {
                out.push(Stmt::ReadStream { dst: slot.clone(), stream: arr.clone() });
            }
        }
    }
    out
}

/// End-of-body shifts: every slot takes its successor's value. In-place
/// windows have nothing to shift.
fn rotations(lp: &LoopPlan) -> Vec<Stmt> {
    let mut out = Vec::new();
    for pa in lp.arrays.values() {
        if let PlannedArray::Window { shape, slots } = pa {
            for j in 0..shape.slot_count() - 1 {
                out.push(Stmt::Assign {
                    dst: slots[j].clone(),
                    expr: Expr::var(&slots[j + 1]),
                });
            }
        }
    }
    out
}
