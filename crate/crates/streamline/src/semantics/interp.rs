//! The rule-counting interpreter behind [`super::exec_program`].
//!
//! Each syntactic form is one named rule; applying a rule costs one unit
//! of fuel and increments its counter. Rule names:
//!
//! | rule | applied when |
//! |---|---|
//! | `const`, `var` | an atom is evaluated |
//! | `op` | a binary operator is applied |
//! | `assign` | `x = e` commits |
//! | `read-array`, `write-array` | `x = a[e]`, `a[e] = x` |
//! | `stream-read`, `stream-write` | `x = a.read()`, `a.write(x)` |
//! | `seq` | a sequence splits |
//! | `if-true`, `if-false` | a branch is chosen |
//! | `for-loop` | a loop iteration starts |
//! | `for-exit` | the counter meets the bound |
//! | `kernel` | the accelerated region is entered |
//! | `skip` | the empty statement runs |
//!
//! Arithmetic is shared with assertion evaluation
//! ([`crate::assertions::eval::apply_op`]): comparisons yield 0/1,
//! division truncates toward zero, and division or remainder by zero gets
//! stuck. Loop bounds are re-evaluated on every iteration, so a body that
//! moves the bound variable changes when the loop exits.

use crate::assertions::eval::apply_op;
use crate::ast::{Atom, Expr, Int, Name, Stmt};
use num_traits::Zero;

use super::{AccessCounts, ExecReport, Outcome, State};

/// Runs `body` from `state` with the given fuel budget.
pub(super) fn execute(body: &Stmt, state: State, fuel: u64) -> ExecReport {
    let mut interp = Interp {
        state,
        fuel,
        steps: 0,
        rules: Default::default(),
        total: Default::default(),
        kernel: Default::default(),
        in_kernel: false,
    };
    let outcome = match interp.exec(body) {
        Ok(()) => Outcome::Normal,
        Err(Halt::Stuck(reason)) => Outcome::Stuck(reason),
        Err(Halt::OutOfFuel) => Outcome::OutOfFuel,
    };
    ExecReport {
        outcome,
        state: interp.state,
        steps: interp.steps,
        rules: interp.rules,
        total: interp.total,
        kernel: interp.kernel,
    }
}

enum Halt {
    Stuck(String),
    OutOfFuel,
}

fn stuck<T>(reason: impl Into<String>) -> Result<T, Halt> {
    Err(Halt::Stuck(reason.into()))
}

struct Interp {
    state: State,
    fuel: u64,
    steps: u64,
    rules: std::collections::BTreeMap<String, u64>,
    total: AccessCounts,
    kernel: AccessCounts,
    in_kernel: bool,
}

impl Interp {
    fn charge(&mut self, rule: &'static str) -> Result<(), Halt> {
        if self.fuel == 0 {
            return Err(Halt::OutOfFuel);
        }
        self.fuel -= 1;
        self.steps += 1;
        *self.rules.entry(rule.to_string()).or_insert(0) += 1;
        Ok(())
    }

    fn note(&mut self, pick: fn(&mut AccessCounts) -> &mut std::collections::BTreeMap<Name, u64>, name: &str) {
        AccessCounts::bump(pick(&mut self.total), name);
        if self.in_kernel {
            AccessCounts::bump(pick(&mut self.kernel), name);
        }
    }

    fn reg(&self, x: &Name) -> Result<Int, Halt> {
        match self.state.regs.get(x) {
            Some(v) => Ok(v.clone()),
            None => stuck(format!("read of unset variable `{x}`")),
        }
    }

    fn eval_atom(&mut self, a: &Atom) -> Result<Int, Halt> {
        match a {
            Atom::Const(n) => {
                self.charge("const")?;
                Ok(n.clone())
            }
            Atom::Var(x) => {
                self.charge("var")?;
                self.reg(x)
            }
        }
    }

    fn eval_expr(&mut self, e: &Expr) -> Result<Int, Halt> {
        match e {
            Expr::Atom(a) => self.eval_atom(a),
            Expr::Bin(op, l, r) => {
                let a = self.eval_atom(l)?;
                let b = self.eval_atom(r)?;
                self.charge("op")?;
                match apply_op(*op, &a, &b) {
                    Some(v) => Ok(v),
                    None => stuck(format!("division by zero evaluating `{e}`")),
                }
            }
        }
    }

    fn exec(&mut self, s: &Stmt) -> Result<(), Halt> {
        match s {
            Stmt::Skip => self.charge("skip"),
            Stmt::Assign { dst, expr } => {
                let v = self.eval_expr(expr)?;
                self.charge("assign")?;
                self.state.regs.insert(dst.clone(), v);
                Ok(())
            }
            Stmt::ReadArr { dst, arr, idx } => {
                let i = self.eval_expr(idx)?;
                self.charge("read-array")?;
                let Some(v) = self.state.heap.get(arr).and_then(|m| m.get(&i)).cloned()
                else {
                    return stuck(format!("read of unset cell `{arr}[{i}]`"));
                };
                self.note(|c| &mut c.heap_reads, arr);
                self.state.regs.insert(dst.clone(), v);
                Ok(())
            }
            Stmt::WriteArr { arr, idx, src } => {
                let i = self.eval_expr(idx)?;
                self.charge("var")?;
                let v = self.reg(src)?;
                self.charge("write-array")?;
                self.note(|c| &mut c.heap_writes, arr);
                self.state.heap.entry(arr.clone()).or_default().insert(i, v);
                Ok(())
            }
            Stmt::ReadStream { dst, stream } => {
                self.charge("stream-read")?;
                let Some(v) = self.state.streams.get_mut(stream).and_then(|q| q.pop_front())
                else {
                    return stuck(format!("read from empty stream `{stream}`"));
                };
                self.note(|c| &mut c.stream_reads, stream);
                self.state.regs.insert(dst.clone(), v);
                Ok(())
            }
            Stmt::WriteStream { stream, src } => {
                self.charge("var")?;
                let v = self.reg(src)?;
                self.charge("stream-write")?;
                self.note(|c| &mut c.stream_writes, stream);
                self.state.streams.entry(stream.clone()).or_default().push_back(v);
                Ok(())
            }
            Stmt::Seq(a, b) => {
                self.charge("seq")?;
                self.exec(a)?;
                self.exec(b)
            }
            Stmt::If { cond, then_s, else_s } => {
                self.charge("var")?;
                let c = self.reg(cond)?;
                if !c.is_zero() {
                    self.charge("if-true")?;
                    self.exec(then_s)
                } else {
                    self.charge("if-false")?;
                    self.exec(else_s)
                }
            }
            Stmt::For { var, init, bound, step, body, annot: _ } => {
                let start = self.eval_expr(init)?;
                self.state.regs.insert(var.clone(), start);
                loop {
                    let m = self.eval_expr(bound)?;
                    let cur = self.reg(var)?;
                    if cur == m {
                        // The counter keeps its final value on exit.
                        return self.charge("for-exit");
                    }
                    self.charge("for-loop")?;
                    self.exec(body)?;
                    let stepped = self.reg(var)? + step;
                    self.state.regs.insert(var.clone(), stepped);
                }
            }
            Stmt::Kernel(body) => {
                self.charge("kernel")?;
                self.in_kernel = true;
                let result = self.exec(body);
                self.in_kernel = false;
                result
            }
        }
    }
}
