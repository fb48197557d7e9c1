//! Pairs each source statement with the target statement it becomes.
//!
//! Verification reasons about the final translated program, so this walk
//! mirrors the buffer-insertion rewrite step for step — same plan cursor
//! order, same refill placement, same staging-temp names — but keeps the
//! result as a list of [`TStep`]s that record both sides of every pair:
//! the target operation plus the source index it stands for. Loops and
//! accelerated regions stay structured as [`Item`]s so condition
//! generation can chain through them.
//!
//! [`lower_items`] rebuilds the plain target statement from the pairing;
//! agreement with the rewrite passes is pinned by tests here and keeps the
//! two walks honest.

use std::collections::BTreeMap;

use crate::assertions::{IntTerm, LinExpr};
use crate::ast::{Expr, Int, Name, Program, Stmt, TypeEnv};
use crate::bufferpass::{AccessPlan, LoopPlan, PlannedArray};
use crate::frontend::NameGen;

/// One paired step: a target-level operation annotated with the source
/// access it translates (when there is one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TStep {
    /// `dst = expr`, kept verbatim from the source.
    Assign { dst: Name, expr: Expr, rhs: IntTerm },
    /// `dst = arr[idx]` on an unconverted array, kept verbatim.
    ReadKept { dst: Name, arr: Name, idx_expr: Expr, idx: IntTerm },
    /// `arr[idx] = src` on an unconverted array, kept verbatim.
    WriteKept { arr: Name, idx_expr: Expr, idx: IntTerm, src: Name },
    /// `dst = slot` serving the source read `dst = arr[idx]` from a window.
    SlotRead { dst: Name, slot: Name, arr: Name, idx: IntTerm },
    /// `slot = arr.read()`: a warm-up or in-body window refill (insertion).
    Refill { slot: Name, arr: Name },
    /// `dst = src` between buffer slots: the end-of-body shift (insertion).
    Shift { dst: Name, src: Name },
    /// `dst = arr.read()` serving the source read `dst = arr[idx]`;
    /// `via` is the staging buffer when simplification is off.
    ReadDirect { dst: Name, arr: Name, idx: IntTerm, via: Option<Name> },
    /// `arr.write(src)` serving the source write `arr[idx] = src`.
    WriteDirect { arr: Name, idx: IntTerm, src: Name, via: Option<Name> },
    /// A branch; both sides translate under the same loop context.
    If { cond: Name, then_s: Vec<TStep>, else_s: Vec<TStep> },
}

/// A region element: straight-line steps, a loop, or an accelerated block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Steps(Vec<TStep>),
    Loop(LoopItem),
    Kernel(Vec<Item>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopItem {
    /// Index into the plan's preorder loop list.
    pub plan_idx: usize,
    pub var: Name,
    pub init: Expr,
    pub bound: Expr,
    pub step: Int,
    pub annot: Option<String>,
    pub body: Vec<Item>,
}

impl LoopItem {
    pub fn init_lin(&self) -> Option<LinExpr> {
        LinExpr::from_expr(&self.init)
    }

    pub fn bound_lin(&self) -> Option<LinExpr> {
        LinExpr::from_expr(&self.bound)
    }
}

/// Pairs the whole program against its translation under `plan`: the
/// kernel-side rewrite first, then host-side conversion of the planned
/// arrays, allocating staging temps in the same order as the rewrite
/// passes.
pub fn pair_program(p: &Program, plan: &AccessPlan, simplify: bool) -> Vec<Item> {
    let env = p.env();
    let names = p
        .decls
        .iter()
        .map(|d| d.name.clone())
        .chain(plan.slot_decls.iter().cloned());
    let mut pairer = Pairer {
        plan,
        simplify,
        env: &env,
        cursor: 0,
        gen: NameGen::new(names),
    };
    let mut items = Vec::new();
    pairer.stmt(&p.body, false, None, &mut BTreeMap::new(), &mut items);
    let mut host = HostPass { plan, simplify, gen: pairer.gen };
    host.items(&mut items, false);
    items
}

struct Pairer<'a> {
    plan: &'a AccessPlan,
    simplify: bool,
    env: &'a TypeEnv,
    cursor: usize,
    gen: NameGen,
}

impl<'a> Pairer<'a> {
    fn term(&self, e: &Expr) -> IntTerm {
        IntTerm::from_expr(e, self.env)
    }

    fn push_step(items: &mut Vec<Item>, step: TStep) {
        if let Some(Item::Steps(steps)) = items.last_mut() {
            steps.push(step);
        } else {
            items.push(Item::Steps(vec![step]));
        }
    }

    /// Mirror of the rewriter's kernel walk: same cursor order, same
    /// refill-once flags, same staging temps.
    fn stmt(
        &mut self,
        s: &Stmt,
        in_kernel: bool,
        lp: Option<&LoopPlan>,
        popped: &mut BTreeMap<Name, bool>,
        items: &mut Vec<Item>,
    ) {
        match s {
            Stmt::Skip => {}
            Stmt::Seq(a, b) => {
                self.stmt(a, in_kernel, lp, popped, items);
                self.stmt(b, in_kernel, lp, popped, items);
            }
            Stmt::If { cond, then_s, else_s } => {
                let mut t_items = Vec::new();
                let mut e_items = Vec::new();
                self.stmt(then_s, in_kernel, lp, &mut BTreeMap::new(), &mut t_items);
                self.stmt(else_s, in_kernel, lp, &mut BTreeMap::new(), &mut e_items);
                Self::push_step(
                    items,
                    TStep::If {
                        cond: cond.clone(),
                        then_s: flatten_steps(t_items),
                        else_s: flatten_steps(e_items),
                    },
                );
            }
            Stmt::For { var, init, bound, step, body, annot } => {
                let plan_idx = self.cursor;
                let inner = self.plan.loops[plan_idx].clone();
                self.cursor += 1;
                let mut flags: BTreeMap<Name, bool> = inner
                    .arrays
                    .iter()
                    .filter(|(_, pa)| matches!(pa, PlannedArray::Window { .. }))
                    .map(|(a, _)| (a.clone(), false))
                    .collect();
                let mut body_items = Vec::new();
                self.stmt(body, in_kernel, Some(&inner), &mut flags, &mut body_items);
                for (arr, pa) in &inner.arrays {
                    if let PlannedArray::Window { shape, slots } = pa {
                        for j in 0..shape.slot_count() - 1 {
                            Self::push_step(
                                &mut body_items,
                                TStep::Shift { dst: slots[j].clone(), src: slots[j + 1].clone() },
                            );
                        }
                        for slot in &slots[..shape.window - 1] {
                            Self::push_step(
                                items,
                                TStep::Refill { slot: slot.clone(), arr: arr.clone() },
                            );
                        }
                    }
                }
                items.push(Item::Loop(LoopItem {
                    plan_idx,
                    var: var.clone(),
                    init: init.clone(),
                    bound: bound.clone(),
                    step: step.clone(),
                    annot: annot.clone(),
                    body: body_items,
                }));
            }
            Stmt::Kernel(body) => {
                let mut inner = Vec::new();
                self.stmt(body, true, None, &mut BTreeMap::new(), &mut inner);
                items.push(Item::Kernel(inner));
            }
            Stmt::Assign { dst, expr } => Self::push_step(
                items,
                TStep::Assign { dst: dst.clone(), expr: expr.clone(), rhs: self.term(expr) },
            ),
            Stmt::ReadArr { dst, arr, idx } if in_kernel && self.plan.convert.contains(arr) => {
                let term = self.term(idx);
                match lp.and_then(|lp| lp.arrays.get(arr)) {
                    Some(PlannedArray::Window { shape, slots }) => {
                        let lin = LinExpr::from_expr(idx)
                            .expect("window indices are linear by construction");
                        let pos = shape
                            .position_of(&lin)
                            .expect("window covers every planned index");
                        let flag = popped.get_mut(arr).expect("window arrays are tracked");
                        if pos + 1 == shape.window && !std::mem::replace(flag, true) {
                            Self::push_step(
                                items,
                                TStep::Refill {
                                    slot: slots.last().expect("windows have slots").clone(),
                                    arr: arr.clone(),
                                },
                            );
                        }
                        Self::push_step(
                            items,
                            TStep::SlotRead {
                                dst: dst.clone(),
                                slot: slots[pos.min(slots.len() - 1)].clone(),
                                arr: arr.clone(),
                                idx: term,
                            },
                        );
                    }
                    _ => {
                        let via = (!self.simplify).then(|| self.gen.fresh("b"));
                        Self::push_step(
                            items,
                            TStep::ReadDirect { dst: dst.clone(), arr: arr.clone(), idx: term, via },
                        );
                    }
                }
            }
            Stmt::WriteArr { arr, idx, src } if in_kernel && self.plan.convert.contains(arr) => {
                let via = (!self.simplify).then(|| self.gen.fresh("b"));
                Self::push_step(
                    items,
                    TStep::WriteDirect {
                        arr: arr.clone(),
                        idx: self.term(idx),
                        src: src.clone(),
                        via,
                    },
                );
            }
            Stmt::ReadArr { dst, arr, idx } => Self::push_step(
                items,
                TStep::ReadKept {
                    dst: dst.clone(),
                    arr: arr.clone(),
                    idx_expr: idx.clone(),
                    idx: self.term(idx),
                },
            ),
            Stmt::WriteArr { arr, idx, src } => Self::push_step(
                items,
                TStep::WriteKept {
                    arr: arr.clone(),
                    idx_expr: idx.clone(),
                    idx: self.term(idx),
                    src: src.clone(),
                },
            ),
            Stmt::ReadStream { .. } | Stmt::WriteStream { .. } => {
                unreachable!("source programs contain no stream operations")
            }
        }
    }
}

/// Branch bodies are loop-free straight lines, so their items collapse.
fn flatten_steps(items: Vec<Item>) -> Vec<TStep> {
    let mut out = Vec::new();
    for item in items {
        match item {
            Item::Steps(steps) => out.extend(steps),
            Item::Loop(_) | Item::Kernel(_) => {
                unreachable!("loops under branches are rejected before pairing")
            }
        }
    }
    out
}

/// Second phase: host-side accesses of converted arrays become direct
/// stream operations, with staging temps continuing the kernel numbering —
/// exactly like running the host conversion pass after buffer insertion.
struct HostPass<'a> {
    plan: &'a AccessPlan,
    simplify: bool,
    gen: NameGen,
}

impl<'a> HostPass<'a> {
    fn items(&mut self, items: &mut [Item], in_kernel: bool) {
        for item in items {
            match item {
                Item::Steps(steps) => {
                    if !in_kernel {
                        for step in steps {
                            self.step(step);
                        }
                    }
                }
                Item::Loop(lp) => self.items(&mut lp.body, in_kernel),
                Item::Kernel(inner) => self.items(inner, true),
            }
        }
    }

    fn step(&mut self, step: &mut TStep) {
        match step {
            TStep::ReadKept { dst, arr, idx, .. } if self.plan.convert.contains(arr) => {
                let via = (!self.simplify).then(|| self.gen.fresh("b"));
                *step = TStep::ReadDirect {
                    dst: dst.clone(),
                    arr: arr.clone(),
                    idx: idx.clone(),
                    via,
                };
            }
            TStep::WriteKept { arr, idx, src, .. } if self.plan.convert.contains(arr) => {
                let via = (!self.simplify).then(|| self.gen.fresh("b"));
                *step = TStep::WriteDirect {
                    arr: arr.clone(),
                    idx: idx.clone(),
                    src: src.clone(),
                    via,
                };
            }
            TStep::If { then_s, else_s, .. } => {
                for s in then_s.iter_mut().chain(else_s.iter_mut()) {
                    self.step(s);
                }
            }
            _ => {}
        }
    }
}

/// Rebuilds the target statement a pairing stands for.
pub fn lower_items(items: &[Item]) -> Stmt {
    Stmt::seq(items.iter().map(lower_item).collect())
}

fn lower_item(item: &Item) -> Stmt {
    match item {
        Item::Steps(steps) => lower_steps(steps),
        Item::Kernel(inner) => Stmt::Kernel(Box::new(lower_items(inner))),
        Item::Loop(lp) => Stmt::For {
            var: lp.var.clone(),
            init: lp.init.clone(),
            bound: lp.bound.clone(),
            step: lp.step.clone(),
            body: Box::new(lower_items(&lp.body)),
            annot: lp.annot.clone(),
        },
    }
}

fn lower_steps(steps: &[TStep]) -> Stmt {
    Stmt::seq(steps.iter().map(lower_step).collect())
}

fn lower_step(step: &TStep) -> Stmt {
    match step {
        TStep::Assign { dst, expr, .. } => {
            Stmt::Assign { dst: dst.clone(), expr: expr.clone() }
        }
        TStep::ReadKept { dst, arr, idx_expr, .. } => Stmt::ReadArr {
            dst: dst.clone(),
            arr: arr.clone(),
            idx: idx_expr.clone(),
        },
        TStep::WriteKept { arr, idx_expr, src, .. } => Stmt::WriteArr {
            arr: arr.clone(),
            idx: idx_expr.clone(),
            src: src.clone(),
        },
        TStep::SlotRead { dst, slot, .. } => {
            Stmt::Assign { dst: dst.clone(), expr: Expr::var(slot) }
        }
        TStep::Refill { slot, arr } => {
            Stmt::ReadStream { dst: slot.clone(), stream: arr.clone() }
        }
        TStep::Shift { dst, src } => {
            Stmt::Assign { dst: dst.clone(), expr: Expr::var(src) }
        }
        TStep::ReadDirect { dst, arr, via: None, .. } => {
            Stmt::ReadStream { dst: dst.clone(), stream: arr.clone() }
        }
        TStep::ReadDirect { dst, arr, via: Some(b), .. } => Stmt::seq(vec![
            Stmt::ReadStream { dst: b.clone(), stream: arr.clone() },
            Stmt::Assign { dst: dst.clone(), expr: Expr::var(b) },
        ]),
        TStep::WriteDirect { arr, src, via: None, .. } => {
            Stmt::WriteStream { stream: arr.clone(), src: src.clone() }
        }
        TStep::WriteDirect { arr, src, via: Some(b), .. } => Stmt::seq(vec![
            Stmt::Assign { dst: b.clone(), expr: Expr::var(src) },
            Stmt::WriteStream { stream: arr.clone(), src: b.clone() },
        ]),
        TStep::If { cond, then_s, else_s } => Stmt::If {
            cond: cond.clone(),
            then_s: Box::new(lower_steps(then_s)),
            else_s: Box::new(lower_steps(else_s)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bufferpass::{convert_host_accesses, insert_buffers, kernel_arrays, plan_program};
    use crate::frontend::parse_program;

    fn full_target(p: &Program, simplify: bool) -> Stmt {
        let plan = plan_program(p, &kernel_arrays(p));
        let skeleton = insert_buffers(p, &plan, simplify);
        convert_host_accesses(&skeleton, &plan.convert, simplify).body
    }

    fn paired_target(p: &Program, simplify: bool) -> Stmt {
        let plan = plan_program(p, &kernel_arrays(p));
        lower_items(&pair_program(p, &plan, simplify)).normalize()
    }

    fn corpus() -> Vec<Program> {
        [
            // Overlapping window with a direct write.
            "param N >= 2;\nrarr in;\nwarr out;\nint x, y0, y1, z0, z1;\n\
             for (x = 0; x != N; x += 1) { in[x] = x; }\n\
             kernel {\n  for (x = 0; x != N - 1; x += 1) {\n    y0 = in[x];\n    y1 = in[x + 1];\n    z0 = y0 + y1;\n    z1 = z0 / 2;\n    out[x] = z1;\n  }\n}\n",
            // Three-position window with a transit slot.
            "param N >= 3;\nrarr a;\nwarr out;\nint x, u, v, w;\n\
             for (x = 0; x != N; x += 1) { a[x] = x; }\n\
             kernel {\n  for (x = 0; x != N - 2; x += 1) { u = a[x]; v = a[x + 2]; w = u + v; out[x] = w; }\n}\n",
            // Branch-guarded direct accesses.
            "param N >= 1;\nrarr a;\nwarr out;\nint x, c, y;\n\
             for (x = 0; x != N; x += 1) { a[x] = x; }\n\
             kernel {\n  for (x = 0; x != N; x += 1) { c = x % 2; if (c) { y = a[x]; } else { y = 0 - 1; } out[x] = y; }\n}\n",
            // Unconverted array alongside a converted one.
            "param N >= 1;\nrarr a;\nrarr b;\nwarr out;\nint x, i, y, z;\n\
             for (x = 0; x != N; x += 1) { a[x] = x; b[x] = x; }\n\
             kernel {\n  for (x = 0; x != N; x += 1) { i = b[x]; y = a[x]; z = y + i; out[x] = z; }\n}\n",
        ]
        .iter()
        .map(|src| parse_program(src).unwrap())
        .collect()
    }

    #[test]
    fn pairing_lowers_to_exactly_the_rewritten_target() {
        for p in corpus() {
            for simplify in [true, false] {
                assert_eq!(
                    paired_target(&p, simplify),
                    full_target(&p, simplify).normalize(),
                    "pairing diverged from the rewrite (simplify = {simplify})"
                );
            }
        }
    }

    #[test]
    fn kernel_reads_pair_with_their_source_indices() {
        let p = &corpus()[0];
        let plan = plan_program(p, &kernel_arrays(p));
        let items = pair_program(p, &plan, true);
        let Item::Kernel(kernel) = &items[1] else { panic!("kernel after host loop") };
        let Item::Loop(lp) = &kernel[1] else { panic!("loop after warm-up") };
        let Item::Steps(body) = &lp.body[0] else { panic!("straight-line body") };
        // y0 = in[x] reads the persistent slot; the refill precedes y1.
        assert!(matches!(
            &body[0],
            TStep::SlotRead { dst, slot, idx, .. }
                if dst == "y0" && slot == "b0" && idx.to_string() == "x"
        ));
        assert!(matches!(&body[1], TStep::Refill { slot, arr } if slot == "b0" && arr == "in"));
        assert!(matches!(
            &body[2],
            TStep::SlotRead { dst, slot, idx, .. }
                if dst == "y1" && slot == "b0" && idx.to_string() == "x + 1"
        ));
        // The write is direct and carries its source index.
        assert!(matches!(
            body.last().unwrap(),
            TStep::WriteDirect { arr, idx, src, via: None } if arr == "out" && idx.to_string() == "x" && src == "z1"
        ));
    }

    #[test]
    fn host_accesses_convert_in_the_second_phase() {
        let p = &corpus()[0];
        let plan = plan_program(p, &kernel_arrays(p));
        let items = pair_program(p, &plan, true);
        let Item::Loop(host) = &items[0] else { panic!("host loop first") };
        let Item::Steps(body) = &host.body[0] else { panic!("straight-line body") };
        assert!(matches!(
            body.last().unwrap(),
            TStep::WriteDirect { arr, idx, via: None, .. } if arr == "in" && idx.to_string() == "x"
        ));
    }

    #[test]
    fn unconverted_arrays_stay_kept_on_both_sides() {
        let p = parse_program(
            "param N >= 1;\nrarr a;\nrarr b;\nwarr out;\nint x, i, y, z;\n\
             for (x = 0; x != N; x += 1) { a[x] = x; b[x] = x; }\n\
             kernel {\n  for (x = 0; x != N; x += 1) { i = b[x]; y = a[x]; z = y + i; out[x] = z; }\n}\n",
        )
        .unwrap();
        let mut convert = kernel_arrays(&p);
        convert.remove("b");
        let plan = plan_program(&p, &convert);
        let items = pair_program(&p, &plan, true);
        let Item::Loop(host) = &items[0] else { panic!("host loop first") };
        let Item::Steps(host_body) = &host.body[0] else { panic!() };
        // b stays a memory write on the host, a converts.
        assert!(host_body.iter().any(|s| matches!(s, TStep::WriteKept { arr, .. } if arr == "b")));
        assert!(host_body.iter().any(
            |s| matches!(s, TStep::WriteDirect { arr, .. } if arr == "a")
        ));
        let Item::Kernel(kernel) = &items[1] else { panic!() };
        let Item::Loop(lp) = &kernel[0] else { panic!() };
        let Item::Steps(body) = &lp.body[0] else { panic!() };
        assert!(body.iter().any(|s| matches!(s, TStep::ReadKept { arr, .. } if arr == "b")));
    }

    #[test]
    fn staging_temps_continue_across_the_host_phase() {
        // With simplification off the kernel temps come first, then host
        // temps continue the numbering — matching the two rewrite passes.
        let p = &corpus()[0];
        let plan = plan_program(p, &kernel_arrays(p));
        let items = pair_program(p, &plan, false);
        let Item::Kernel(kernel) = &items[1] else { panic!() };
        let Item::Loop(lp) = &kernel[1] else { panic!() };
        let Item::Steps(body) = &lp.body[0] else { panic!() };
        let kernel_via = body.iter().find_map(|s| match s {
            TStep::WriteDirect { via: Some(b), .. } => Some(b.clone()),
            _ => None,
        });
        assert_eq!(kernel_via.as_deref(), Some("b1"));
        let Item::Loop(host) = &items[0] else { panic!() };
        let Item::Steps(host_body) = &host.body[0] else { panic!() };
        let host_via = host_body.iter().find_map(|s| match s {
            TStep::WriteDirect { via: Some(b), .. } => Some(b.clone()),
            _ => None,
        });
        assert_eq!(host_via.as_deref(), Some("b2"));
    }
}
