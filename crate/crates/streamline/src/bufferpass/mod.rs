//! Buffer planning: turning overlapping array reads into shift windows.
//!
//! For each loop, [`collect_access_indices`] gathers the index expressions
//! used per array, and [`plan_buffers`] decides a strategy per array:
//!
//! * **Window** — all reads are affine in the loop counter with the same
//!   rate, and their offsets span several positions one iteration-shift
//!   apart. The plan carries `w` buffer slots: at the loop head slot `k`
//!   holds `a[anchor + k·Δ]` for `k < w−1` (where `Δ` is the per-iteration
//!   index shift), the last slot is filled from the stream just before its
//!   first use, and every slot shifts down one place at the end of the
//!   body. Entering the loop takes `w−1` warm-up reads. Descending loops
//!   work the same way with `Δ < 0`, consuming indices downward.
//! * **Direct** — every access becomes a stream operation in place. This
//!   covers single-access arrays (buffering buys nothing), all writes, all
//!   host-side accesses, and every shape a window cannot describe:
//!   data-dependent indices, branch-guarded accesses, mixed rates, offsets
//!   in different stride classes. Those still convert — whether the
//!   conversion is justified is for verification to decide, and arrays
//!   that fail there revert to plain memory.
//!
//! [`insert_buffers`] applies a whole-program plan to the accelerated
//! regions, producing the candidate skeleton; host-side accesses are
//! converted separately ([`convert_host_accesses`]) once a conversion set
//! has been confirmed.

mod order;
mod rewrite;

pub use order::{planned_order, PlannedOrder};
pub use rewrite::{convert_host_accesses, insert_buffers};

use std::collections::{BTreeMap, BTreeSet};

use crate::assertions::{linexpr_term, Formula, IntTerm, LinExpr};
use crate::ast::{Expr, Int, Name, Program, Stmt, TypeEnv};
use crate::frontend::NameGen;

/// Every index expression a loop body applies to one array.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessSet {
    /// Distinct index expressions in first-occurrence order, from accesses
    /// at the body's own level (not inside nested loops).
    pub exprs: Vec<Expr>,
    /// Every read index in execution order, duplicates included.
    pub read_order: Vec<Expr>,
    /// Some access sits inside a branch.
    pub guarded: bool,
    /// Some access sits inside a nested loop.
    pub nested: bool,
    pub read: bool,
    pub written: bool,
}

/// Collects per-array access sets for one loop body.
pub fn collect_access_indices(body: &Stmt) -> BTreeMap<Name, AccessSet> {
    let mut out = BTreeMap::new();
    walk(body, false, false, &mut out);
    out
}

fn walk(s: &Stmt, guarded: bool, nested: bool, out: &mut BTreeMap<Name, AccessSet>) {
    let mut record = |arr: &Name, idx: &Expr, write: bool| {
        let set = out.entry(arr.clone()).or_default();
        set.guarded |= guarded;
        set.nested |= nested;
        set.read |= !write;
        set.written |= write;
        if !nested && !set.exprs.contains(idx) {
            set.exprs.push(idx.clone());
        }
        if !nested && !write {
            set.read_order.push(idx.clone());
        }
    };
    match s {
        Stmt::ReadArr { arr, idx, .. } => record(arr, idx, false),
        Stmt::WriteArr { arr, idx, .. } => record(arr, idx, true),
        Stmt::Seq(a, b) => {
            walk(a, guarded, nested, out);
            walk(b, guarded, nested, out);
        }
        Stmt::If { then_s, else_s, .. } => {
            walk(then_s, true, nested, out);
            walk(else_s, true, nested, out);
        }
        Stmt::For { body, .. } => walk(body, guarded, true, out),
        Stmt::Kernel(body) => walk(body, guarded, nested, out),
        Stmt::Skip
        | Stmt::Assign { .. }
        | Stmt::ReadStream { .. }
        | Stmt::WriteStream { .. } => {}
    }
}

/// The window geometry for one (loop, array) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowShape {
    /// Coefficient of the loop counter shared by every access.
    pub alpha: Int,
    /// Per-iteration index shift: `alpha * step`. Negative for loops that
    /// consume indices downward.
    pub delta: Int,
    /// Index held by slot 0 at the loop head; mentions the loop counter.
    pub anchor: LinExpr,
    /// Number of window positions, at least 2.
    pub window: usize,
    /// A two-position window whose older reads all come first can refill
    /// its single slot in place instead of rotating a second one.
    pub in_place: bool,
}

impl WindowShape {
    /// Index held by position `k` at the loop head.
    pub fn slot_index(&self, k: usize) -> LinExpr {
        self.anchor.add(&LinExpr::constant(self.delta.clone() * Int::from(k)))
    }

    /// Which position serves an access with this index, if any.
    pub fn position_of(&self, idx: &LinExpr) -> Option<usize> {
        let diff = idx.sub(&self.anchor);
        let d = diff.as_const()?;
        let (q, r) = num_integer::Integer::div_rem(d, &self.delta);
        if !num_traits::Zero::is_zero(&r) || q < Int::from(0) || q >= Int::from(self.window) {
            return None;
        }
        usize::try_from(&q).ok()
    }

    /// How many buffer variables the window occupies.
    pub fn slot_count(&self) -> usize {
        if self.in_place {
            self.window - 1
        } else {
            self.window
        }
    }
}

/// How one array in one loop converts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannedArray {
    /// Reads go through a shift window held in the named buffer slots;
    /// the last slot is the one refilled inside the body.
    Window { shape: WindowShape, slots: Vec<Name> },
    /// Accesses become stream operations in place. `note` records why a
    /// window was impossible; `None` means one was simply unnecessary.
    Direct { note: Option<String> },
}

impl PlannedArray {
    fn direct(note: &str) -> PlannedArray {
        PlannedArray::Direct { note: Some(note.to_string()) }
    }

    /// Buffer facts that hold at the loop head: slot `k` carries
    /// `a[anchor + k·Δ]` for every persistent slot.
    pub fn head_facts(&self, arr: &str) -> Vec<Formula> {
        match self {
            PlannedArray::Direct { .. } => Vec::new(),
            PlannedArray::Window { shape, slots } => (0..shape.window - 1)
                .map(|k| {
                    Formula::Eq(
                        IntTerm::Buf(slots[k].clone()),
                        IntTerm::Select(
                            crate::assertions::ArrayTerm::Var(arr.to_string()),
                            Box::new(linexpr_term(&shape.slot_index(k))),
                        ),
                    )
                })
                .collect(),
        }
    }
}

/// Conversion strategy for every candidate array one loop touches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopPlan {
    pub var: Name,
    pub step: Int,
    pub in_kernel: bool,
    pub arrays: BTreeMap<Name, PlannedArray>,
}

/// A whole-program plan: one entry per `for` statement in preorder, plus
/// the buffer variables the windows introduce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPlan {
    pub loops: Vec<LoopPlan>,
    pub convert: BTreeSet<Name>,
    pub slot_decls: Vec<Name>,
}

impl AccessPlan {
    /// The plan for the `k`-th loop in preorder.
    pub fn of_loop(&self, k: usize) -> &LoopPlan {
        &self.loops[k]
    }
}

/// Decides the strategy for one array in one loop. `params` are the names
/// safe to appear in window offsets (never reassigned).
pub fn decide(
    set: &AccessSet,
    var: &Name,
    step: &Int,
    params: &BTreeSet<Name>,
    in_kernel: bool,
) -> PlannedArray {
    if !in_kernel || set.written {
        // Host accesses and writes always stream directly.
        return PlannedArray::Direct { note: None };
    }
    if set.guarded || set.nested {
        return PlannedArray::direct("accessed under a branch or nested loop");
    }
    let mut lins = Vec::new();
    for e in &set.exprs {
        let Some(lin) = LinExpr::from_expr(e) else {
            return PlannedArray::direct("index is not linear");
        };
        if lin.vars().any(|v| v != var && !params.contains(v)) {
            return PlannedArray::direct("index depends on a mutable variable");
        }
        lins.push(lin);
    }
    let alpha = lins[0].coeff(var);
    if num_traits::Zero::is_zero(&alpha) {
        return PlannedArray::direct("index does not advance with the loop");
    }
    if lins.iter().any(|l| l.coeff(var) != alpha) {
        return PlannedArray::direct("indices advance at different rates");
    }
    let delta = alpha.clone() * step;
    let against = |l: &LinExpr| l.sub(&LinExpr::with_coeff(var, alpha.clone()));
    let base = against(&lins[0]);
    let mut raw = Vec::new();
    for l in &lins {
        let Some(d) = against(l).sub(&base).as_const().cloned() else {
            return PlannedArray::direct("offsets differ by a non-constant");
        };
        let (q, r) = num_integer::Integer::div_rem(&d, &delta);
        if !num_traits::Zero::is_zero(&r) {
            return PlannedArray::direct("indices fall in different stride classes");
        }
        raw.push(q);
    }
    let lowest = raw.iter().min().cloned().expect("at least one access");
    let span = raw.iter().max().cloned().expect("at least one access") - &lowest;
    let window = match usize::try_from(&span) {
        Ok(s) if s < 64 => s + 1,
        _ => return PlannedArray::direct("window is too wide"),
    };
    if window == 1 {
        // A single position reads the stream directly.
        return PlannedArray::Direct { note: None };
    }
    let anchor = base
        .add(&LinExpr::constant(lowest * &delta))
        .add(&LinExpr::with_coeff(var, alpha.clone()));
    let mut shape = WindowShape { alpha, delta, anchor, window, in_place: false };
    if window == 2 {
        // When every read of the older position comes before the first read
        // of the newer one, the refill can reuse the same slot.
        let positions: Vec<usize> = set
            .read_order
            .iter()
            .filter_map(|e| shape.position_of(&LinExpr::from_expr(e)?))
            .collect();
        shape.in_place = positions.windows(2).all(|w| w[0] <= w[1]);
    }
    PlannedArray::Window { shape, slots: Vec::new() }
}

/// Plans one loop: decides a strategy for each candidate array its body
/// accesses, allocating slot names for windows.
pub fn plan_buffers(
    body: &Stmt,
    var: &Name,
    step: &Int,
    in_kernel: bool,
    convert: &BTreeSet<Name>,
    params: &BTreeSet<Name>,
    gen: &mut NameGen,
) -> LoopPlan {
    let mut arrays = BTreeMap::new();
    for (arr, set) in collect_access_indices(body) {
        if !convert.contains(&arr) {
            continue;
        }
        let mut planned = decide(&set, var, step, params, in_kernel);
        if let PlannedArray::Window { shape, slots } = &mut planned {
            *slots = (0..shape.slot_count()).map(|_| gen.fresh("b")).collect();
        }
        arrays.insert(arr, planned);
    }
    LoopPlan { var: var.clone(), step: step.clone(), in_kernel, arrays }
}

/// Plans every loop in the program (preorder) for the given candidate set.
pub fn plan_program(p: &Program, convert: &BTreeSet<Name>) -> AccessPlan {
    let env = p.env();
    let params: BTreeSet<Name> = env.params().map(|(n, _)| n.clone()).collect();
    let mut gen = NameGen::new(p.decls.iter().map(|d| d.name.clone()));
    let mut loops = Vec::new();
    plan_walk(&p.body, false, convert, &params, &mut gen, &mut loops);
    let slot_decls = loops
        .iter()
        .flat_map(|lp| lp.arrays.values())
        .filter_map(|pa| match pa {
            PlannedArray::Window { slots, .. } => Some(slots.clone()),
            PlannedArray::Direct { .. } => None,
        })
        .flatten()
        .collect();
    AccessPlan { loops, convert: convert.clone(), slot_decls }
}

fn plan_walk(
    s: &Stmt,
    in_kernel: bool,
    convert: &BTreeSet<Name>,
    params: &BTreeSet<Name>,
    gen: &mut NameGen,
    loops: &mut Vec<LoopPlan>,
) {
    match s {
        Stmt::For { var, step, body, .. } => {
            loops.push(plan_buffers(body, var, step, in_kernel, convert, params, gen));
            plan_walk(body, in_kernel, convert, params, gen, loops);
        }
        Stmt::Seq(a, b) => {
            plan_walk(a, in_kernel, convert, params, gen, loops);
            plan_walk(b, in_kernel, convert, params, gen, loops);
        }
        Stmt::If { then_s, else_s, .. } => {
            plan_walk(then_s, in_kernel, convert, params, gen, loops);
            plan_walk(else_s, in_kernel, convert, params, gen, loops);
        }
        Stmt::Kernel(body) => plan_walk(body, true, convert, params, gen, loops),
        _ => {}
    }
}

/// The default candidate set: every array the accelerated regions touch.
pub fn kernel_arrays(p: &Program) -> BTreeSet<Name> {
    fn scan(s: &Stmt, in_kernel: bool, out: &mut BTreeSet<Name>) {
        match s {
            Stmt::ReadArr { arr, .. } | Stmt::WriteArr { arr, .. } if in_kernel => {
                out.insert(arr.clone());
            }
            Stmt::Seq(a, b) => {
                scan(a, in_kernel, out);
                scan(b, in_kernel, out);
            }
            Stmt::If { then_s, else_s, .. } => {
                scan(then_s, in_kernel, out);
                scan(else_s, in_kernel, out);
            }
            Stmt::For { body, .. } => scan(body, in_kernel, out),
            Stmt::Kernel(body) => scan(body, true, out),
            _ => {}
        }
    }
    let mut out = BTreeSet::new();
    scan(&p.body, false, &mut out);
    out
}

/// `TypeEnv` helper: the set of parameter names.
pub fn param_names(env: &TypeEnv) -> BTreeSet<Name> {
    env.params().map(|(n, _)| n.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn filter() -> Program {
        parse_program(
            "param N >= 2;\nrarr in;\nwarr out;\nint x, y0, y1, z0, z1;\n\
             for (x = 0; x != N; x += 1) { in[x] = x; }\n\
             kernel {\n  for (x = 0; x != N - 1; x += 1) {\n    y0 = in[x];\n    y1 = in[x + 1];\n    z0 = y0 + y1;\n    z1 = z0 / 2;\n    out[x] = z1;\n  }\n}\n",
        )
        .unwrap()
    }

    fn loop_bodies(p: &Program) -> Vec<&Stmt> {
        fn find<'a>(s: &'a Stmt, acc: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::For { body, .. } => {
                    acc.push(body);
                    find(body, acc);
                }
                Stmt::Seq(a, b) => {
                    find(a, acc);
                    find(b, acc);
                }
                Stmt::Kernel(b) => find(b, acc),
                _ => {}
            }
        }
        let mut acc = Vec::new();
        find(&p.body, &mut acc);
        acc
    }

    #[test]
    fn moving_average_reads_two_indices_and_writes_one() {
        let p = filter();
        let sets = collect_access_indices(loop_bodies(&p)[1]);
        let idx: Vec<String> =
            sets["in"].exprs.iter().map(|e| e.to_string()).collect();
        assert_eq!(idx, vec!["x", "x + 1"]);
        assert_eq!(sets["out"].exprs.len(), 1);
        assert!(sets["in"].read && !sets["in"].written);
        assert!(sets["out"].written);
    }

    #[test]
    fn guarded_and_nested_accesses_are_flagged() {
        let p = parse_program(
            "param N >= 1;\nrarr a;\nint x, y, c;\nkernel {\n\
             for (x = 0; x != N; x += 1) { c = x % 2; if (c) { y = a[x]; } for (y = 0; y != 2; y += 1) { c = a[y]; } }\n}\n",
        )
        .unwrap();
        let sets = collect_access_indices(loop_bodies(&p)[0]);
        let a = &sets["a"];
        assert!(a.guarded && a.nested);
        // Only the branch access contributes an expression at this level.
        assert_eq!(a.exprs.len(), 1);
    }

    #[test]
    fn overlapping_reads_share_one_window_slot_refilled_in_place() {
        let p = filter();
        let plan = plan_program(&p, &kernel_arrays(&p));
        assert_eq!(plan.loops.len(), 2);
        assert!(!plan.loops[0].in_kernel);
        let kernel = &plan.loops[1];
        let PlannedArray::Window { shape, slots } = &kernel.arrays["in"] else {
            panic!("expected a window for `in`");
        };
        assert_eq!(shape.window, 2);
        assert_eq!(shape.delta, Int::from(1));
        assert_eq!(shape.anchor.to_string(), "x");
        // Both reads go through one slot: a[x] is consumed before the
        // refill overwrites it with a[x+1].
        assert!(shape.in_place);
        assert_eq!(slots.len(), 1);
        assert_eq!(kernel.arrays["out"], PlannedArray::Direct { note: None });
        assert_eq!(plan.slot_decls.len(), 1);
    }

    #[test]
    fn reversed_read_order_forces_a_second_rotating_slot() {
        // a[x+1] is read first, so the older value must survive the refill.
        let p = parse_program(
            "param N >= 2;\nrarr a;\nint x, u, v;\nkernel {\n\
             for (x = 0; x != N - 1; x += 1) { v = a[x + 1]; u = a[x]; }\n}\n",
        )
        .unwrap();
        let plan = plan_program(&p, &kernel_arrays(&p));
        let PlannedArray::Window { shape, slots } = &plan.loops[0].arrays["a"] else {
            panic!("expected a window");
        };
        assert!(!shape.in_place);
        assert_eq!(slots.len(), 2);
    }

    #[test]
    fn window_facts_name_the_persistent_slots_only() {
        let p = filter();
        let plan = plan_program(&p, &kernel_arrays(&p));
        let facts = plan.loops[1].arrays["in"].head_facts("in");
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].to_string(), "buf(b0) = in[x]");
    }

    #[test]
    fn stretched_windows_keep_transit_slots() {
        // Reads at x and x+2 under step 1 need three slots: x+1 passes
        // through the window without being read.
        let p = parse_program(
            "param N >= 3;\nrarr a;\nint x, u, v;\nkernel {\n\
             for (x = 0; x != N - 2; x += 1) { u = a[x]; v = a[x + 2]; }\n}\n",
        )
        .unwrap();
        let plan = plan_program(&p, &kernel_arrays(&p));
        let PlannedArray::Window { shape, slots } = &plan.loops[0].arrays["a"] else {
            panic!("expected a window");
        };
        assert_eq!(shape.window, 3);
        assert_eq!(slots.len(), 3);
        // The middle (transit) slot is never read but still rotates.
        assert_eq!(shape.position_of(&LinExpr::var("x").add_const(1)), Some(1));
    }

    #[test]
    fn dilated_reads_share_a_stride_class_under_a_matching_step() {
        let p = parse_program(
            "param N >= 2;\nrarr a;\nint x, u, v;\nkernel {\n\
             for (x = 0; x != 2 * N; x += 2) { u = a[x]; v = a[x + 2]; }\n}\n",
        )
        .unwrap();
        let plan = plan_program(&p, &kernel_arrays(&p));
        let PlannedArray::Window { shape, .. } = &plan.loops[0].arrays["a"] else {
            panic!("expected a window");
        };
        assert_eq!(shape.window, 2);
        assert_eq!(shape.delta, Int::from(2));
    }

    #[test]
    fn descending_loops_anchor_at_the_highest_offset() {
        let p = parse_program(
            "param N >= 2;\nrarr a;\nint x, u, v;\nkernel {\n\
             for (x = N - 2; x != 0 - 1; x += -1) { u = a[x]; v = a[x + 1]; }\n}\n",
        )
        .unwrap();
        let plan = plan_program(&p, &kernel_arrays(&p));
        let PlannedArray::Window { shape, .. } = &plan.loops[0].arrays["a"] else {
            panic!("expected a window");
        };
        assert_eq!(shape.delta, Int::from(-1));
        // Slot 0 carries a[x+1]; the in-loop read brings in a[x].
        assert_eq!(shape.anchor.to_string(), "x + 1");
        assert_eq!(shape.slot_index(1).to_string(), "x");
    }

    #[test]
    fn shapes_a_window_cannot_describe_fall_back_to_direct() {
        let cases = [
            // Mixed rates.
            ("u = a[x]; v = a[2 * x];", 1, "different rates"),
            // Unit offset under a stride of two: x and x+1 never share a
            // residue class when the counter moves by 2.
            ("u = a[x]; v = a[x + 1];", 2, "stride classes"),
            // Data-dependent index.
            ("u = a[y]; v = a[y + 1];", 1, "mutable variable"),
            // Loop-invariant index.
            ("u = a[0]; v = a[1];", 1, "does not advance"),
        ];
        for (body, step, why) in cases {
            let p = parse_program(&format!(
                "param N >= 2;\nrarr a;\nint x, y, u, v;\nkernel {{\n\
                 for (x = 0; x != 2 * N; x += {step}) {{ y = 1; {body} }}\n}}\n",
            ))
            .unwrap();
            let plan = plan_program(&p, &kernel_arrays(&p));
            let PlannedArray::Direct { note: Some(note) } = &plan.loops[0].arrays["a"]
            else {
                panic!("expected a noted direct plan for `{body}`");
            };
            assert!(note.contains(why), "`{body}` gave note `{note}`");
        }
    }

    #[test]
    fn host_loops_and_writes_stream_directly_without_notes() {
        let p = filter();
        let plan = plan_program(&p, &kernel_arrays(&p));
        assert_eq!(plan.loops[0].arrays["in"], PlannedArray::Direct { note: None });
        assert_eq!(plan.loops[1].arrays["out"], PlannedArray::Direct { note: None });
    }

    #[test]
    fn candidate_set_is_exactly_the_kernel_footprint() {
        let p = filter();
        let arrays = kernel_arrays(&p);
        assert_eq!(
            arrays.iter().cloned().collect::<Vec<_>>(),
            vec!["in".to_string(), "out".to_string()]
        );
    }
}
