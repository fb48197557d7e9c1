//! Predicts the stream traffic a plan produces.
//!
//! [`planned_order`] runs the *source* program concretely and emits, per
//! converted array, the sequence of indices whose values the rewritten
//! kernel will pop (and the indices it will push), in stream order. Window
//! arrays contribute their warm-up indices at loop entry and one refill
//! index per iteration; direct accesses contribute their own index each
//! time they execute. Pre-loading each input stream with the source values
//! at these indices makes the skeleton runnable, which is how buffer
//! insertion gets checked in isolation before any verification runs.
//!
//! Returns `None` when the source run gets stuck or runs out of fuel —
//! there is no meaningful traffic to predict for such inputs.

use std::collections::BTreeMap;

use crate::assertions::eval::apply_op;
use crate::ast::{Atom, Expr, Int, Name, Program, Stmt};
use crate::semantics::{initial_state, Input, State, DEFAULT_FUEL};

use super::{AccessPlan, LoopPlan, PlannedArray};

/// Per-array stream traffic, in pop/push order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlannedOrder {
    pub reads: BTreeMap<Name, Vec<Int>>,
    pub writes: BTreeMap<Name, Vec<Int>>,
}

/// Computes the stream traffic of `plan` applied to `p` on `input`. `p` is
/// the source program; the walk mirrors its memory semantics exactly.
pub fn planned_order(p: &Program, plan: &AccessPlan, input: &Input) -> Option<PlannedOrder> {
    let state = initial_state(p, input).ok()?;
    let mut loop_ids = BTreeMap::new();
    index_loops(&p.body, &mut loop_ids);
    let mut order = PlannedOrder::default();
    for arr in &plan.convert {
        order.reads.insert(arr.clone(), Vec::new());
        order.writes.insert(arr.clone(), Vec::new());
    }
    let mut rec =
        Recorder { state, fuel: DEFAULT_FUEL, plan, loop_ids, order };
    rec.exec(&p.body, false, None)?;
    Some(rec.order)
}

/// Assigns each `for` statement its preorder plan index, keyed by node
/// address (stable while the program is borrowed).
fn index_loops(s: &Stmt, ids: &mut BTreeMap<usize, usize>) {
    match s {
        Stmt::For { body, .. } => {
            ids.insert(s as *const Stmt as usize, ids.len());
            index_loops(body, ids);
        }
        Stmt::Seq(a, b) => {
            index_loops(a, ids);
            index_loops(b, ids);
        }
        Stmt::If { then_s, else_s, .. } => {
            index_loops(then_s, ids);
            index_loops(else_s, ids);
        }
        Stmt::Kernel(body) => index_loops(body, ids),
        _ => {}
    }
}

struct Recorder<'a> {
    state: State,
    fuel: u64,
    plan: &'a AccessPlan,
    loop_ids: BTreeMap<usize, usize>,
    order: PlannedOrder,
}

impl Recorder<'_> {
    fn charge(&mut self) -> Option<()> {
        self.fuel = self.fuel.checked_sub(1)?;
        Some(())
    }

    fn reg(&self, x: &Name) -> Option<Int> {
        self.state.regs.get(x).cloned()
    }

    fn eval_atom(&self, a: &Atom) -> Option<Int> {
        match a {
            Atom::Const(n) => Some(n.clone()),
            Atom::Var(x) => self.reg(x),
        }
    }

    fn eval(&self, e: &Expr) -> Option<Int> {
        match e {
            Expr::Atom(a) => self.eval_atom(a),
            Expr::Bin(op, a, b) => apply_op(*op, &self.eval_atom(a)?, &self.eval_atom(b)?),
        }
    }

    /// The refill index a window contributes this iteration, under the
    /// current register file.
    fn window_refills(&mut self, lp: &LoopPlan, preamble: bool) -> Option<()> {
        for (arr, pa) in &lp.arrays {
            let PlannedArray::Window { shape, .. } = pa else { continue };
            let base = shape.anchor.eval(&self.state.regs)?;
            let ks = if preamble { 0..shape.window - 1 } else { shape.window - 1..shape.window };
            for k in ks {
                let idx = &base + &shape.delta * Int::from(k);
                self.order.reads.get_mut(arr).expect("planned arrays are initialized").push(idx);
            }
        }
        Some(())
    }

    fn exec(&mut self, s: &Stmt, in_kernel: bool, lp: Option<&LoopPlan>) -> Option<()> {
        self.charge()?;
        match s {
            Stmt::Skip => Some(()),
            Stmt::Assign { dst, expr } => {
                let v = self.eval(expr)?;
                self.state.regs.insert(dst.clone(), v);
                Some(())
            }
            Stmt::ReadArr { dst, arr, idx } => {
                let i = self.eval(idx)?;
                let windowed =
                    matches!(lp.and_then(|lp| lp.arrays.get(arr)), Some(PlannedArray::Window { .. }));
                if in_kernel && self.plan.convert.contains(arr) && !windowed {
                    self.order.reads.get_mut(arr)?.push(i.clone());
                }
                let v = self.state.cell(arr, i)?.clone();
                self.state.regs.insert(dst.clone(), v);
                Some(())
            }
            Stmt::WriteArr { arr, idx, src } => {
                let i = self.eval(idx)?;
                let v = self.reg(src)?;
                if in_kernel && self.plan.convert.contains(arr) {
                    self.order.writes.get_mut(arr)?.push(i.clone());
                }
                self.state.heap.entry(arr.clone()).or_default().insert(i, v);
                Some(())
            }
            // The walk runs source programs only.
            Stmt::ReadStream { .. } | Stmt::WriteStream { .. } => None,
            Stmt::Seq(a, b) => {
                self.exec(a, in_kernel, lp)?;
                self.exec(b, in_kernel, lp)
            }
            Stmt::If { cond, then_s, else_s } => {
                use num_traits::Zero;
                let c = self.reg(cond)?;
                let branch = if c.is_zero() { else_s } else { then_s };
                self.exec(branch, in_kernel, lp)
            }
            Stmt::For { var, init, bound, step, body, .. } => {
                let k = self.loop_ids[&(s as *const Stmt as usize)];
                let me = self.plan.loops[k].clone();
                let v0 = self.eval(init)?;
                self.state.regs.insert(var.clone(), v0);
                if in_kernel {
                    self.window_refills(&me, true)?;
                }
                loop {
                    self.charge()?;
                    let cur = self.reg(var)?;
                    let m = self.eval(bound)?;
                    if cur == m {
                        return Some(());
                    }
                    if in_kernel {
                        self.window_refills(&me, false)?;
                    }
                    self.exec(body, in_kernel, Some(&me))?;
                    let next = self.reg(var)? + step;
                    self.state.regs.insert(var.clone(), next);
                }
            }
            Stmt::Kernel(body) => self.exec(body, true, None),
        }
    }
}
