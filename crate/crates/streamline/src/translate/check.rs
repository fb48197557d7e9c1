//! Independent validation of a derivation tree.
//!
//! Every node is re-examined against its rule's schema: shapes of the
//! source and target statements, typing side conditions, and the exact
//! precondition the schema computes from the node's own postcondition.
//! Consequence nodes additionally have their entailments re-discharged,
//! so a derivation that merely *looks* well-formed but asserts a false
//! implication is still rejected. Nothing here calls the construction
//! code; the two sides meet only at the shared formula primitives.

use std::fmt;

use crate::assertions::subst::{subst_array, subst_int, subst_seq};
use crate::assertions::{linexpr_term, ArrayTerm, Formula, IntTerm, LinExpr, SeqTerm};
use crate::ast::{Atom, Expr, Name, Stmt, Ty, TypeEnv};
use crate::vcgen::{check_vc, SolveConfig, Verdict};

use super::{certificate, conj, discharge_form, Derivation, Judgment, Rule};

/// The first node that fails validation, innermost rule named.
#[derive(Debug, Clone)]
pub struct CheckFailure {
    /// Premise indices from the root down to the offending node.
    pub path: Vec<usize>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "root ({}): {}", self.rule, self.message)
        } else {
            let path: Vec<String> = self.path.iter().map(usize::to_string).collect();
            write!(f, "node {} ({}): {}", path.join("."), self.rule, self.message)
        }
    }
}

impl std::error::Error for CheckFailure {}

/// Walks the tree, validating each node's schema and re-discharging
/// every recorded entailment. Returns the first failure, located by its
/// premise path.
pub fn check_derivation(d: &Derivation, cfg: &SolveConfig) -> Result<(), CheckFailure> {
    let mut path = Vec::new();
    check_node(d, cfg, &mut path)
}

fn check_node(
    d: &Derivation,
    cfg: &SolveConfig,
    path: &mut Vec<usize>,
) -> Result<(), CheckFailure> {
    node_schema(d, cfg).map_err(|message| CheckFailure {
        path: path.clone(),
        rule: d.rule,
        message,
    })?;
    for (i, p) in d.premises.iter().enumerate() {
        path.push(i);
        check_node(p, cfg, path)?;
        path.pop();
    }
    Ok(())
}

fn normeq(a: &Formula, b: &Formula) -> bool {
    a.normalize() == b.normalize()
}

/// The term a bare variable denotes: buffers print and substitute as
/// `buf(b)`, everything else as itself.
fn sym_term(env: &TypeEnv, name: &str) -> IntTerm {
    if env.lookup(name) == Some(Ty::Buf) {
        IntTerm::Buf(name.to_string())
    } else {
        IntTerm::var(name)
    }
}

fn var_atom(e: &Expr) -> Option<&Name> {
    match e {
        Expr::Atom(Atom::Var(x)) => Some(x),
        _ => None,
    }
}

fn want_register(env: &TypeEnv, x: &str) -> Result<(), String> {
    if env.lookup(x) == Some(Ty::Int) && !env.is_param(x) {
        Ok(())
    } else {
        Err(format!("`{x}` is not an assignable integer register"))
    }
}

fn want_ty(env: &TypeEnv, x: &str, ty: Ty) -> Result<(), String> {
    if env.lookup(x) == Some(ty) {
        Ok(())
    } else {
        Err(format!("`{x}` is not typed `{ty}` here"))
    }
}

fn premise_count(d: &Derivation, n: usize) -> Result<(), String> {
    if d.premises.len() == n {
        Ok(())
    } else {
        Err(format!("expected {n} premises, found {}", d.premises.len()))
    }
}

fn no_sides(d: &Derivation) -> Result<(), String> {
    if d.side.is_empty() {
        Ok(())
    } else {
        Err("only consequence nodes carry entailments".into())
    }
}

fn stmt_judgment(j: &Judgment) -> Result<&Stmt, String> {
    j.source.as_ref().ok_or_else(|| "expected a statement judgment".into())
}

fn node_schema(d: &Derivation, cfg: &SolveConfig) -> Result<(), String> {
    let c = &d.conclusion;
    let env = &c.env;

    if c.source.is_none() != d.rule.is_insertion() {
        return Err(if d.rule.is_insertion() {
            "an insertion judgment cannot carry a source statement".into()
        } else {
            "a statement judgment is missing its source".into()
        });
    }

    // Typing flows unchanged into premises, flipping only at kernels.
    let expected_env =
        if d.rule == Rule::Kernel { env.flip() } else { env.clone() };
    for (i, p) in d.premises.iter().enumerate() {
        if p.conclusion.env != expected_env {
            return Err(format!("premise {i} changes the typing context"));
        }
    }

    match d.rule {
        Rule::Skip => {
            premise_count(d, 0)?;
            no_sides(d)?;
            if c.source.as_deref() != Some(&Stmt::Skip) || c.target != Stmt::Skip {
                return Err("both sides must be `skip`".into());
            }
            if !normeq(&c.pre, &c.post) {
                return Err("skip must preserve the assertion".into());
            }
            Ok(())
        }
        Rule::Assign => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let src = stmt_judgment(c)?;
            if src != &c.target {
                return Err("an assignment translates to itself".into());
            }
            let Stmt::Assign { dst, expr } = src else {
                return Err("the statement is not an assignment".into());
            };
            want_register(env, dst)?;
            for v in expr.vars() {
                if !env.is_int_like(v) {
                    return Err(format!("`{v}` in the right-hand side is not an integer"));
                }
            }
            let rhs = IntTerm::from_expr(expr, env);
            let want = subst_int(&c.post, dst, &rhs).map_err(|e| e.to_string())?;
            if !normeq(&c.pre, &want) {
                return Err("the precondition is not the substituted postcondition".into());
            }
            Ok(())
        }
        Rule::Id => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let src = stmt_judgment(c)?;
            if src != &c.target {
                return Err("a kept access translates to itself".into());
            }
            let want = match src {
                Stmt::ReadArr { dst, arr, idx } => {
                    want_ty(env, arr, Ty::RArr)?;
                    want_register(env, dst)?;
                    let sel = IntTerm::Select(
                        ArrayTerm::var(arr),
                        Box::new(IntTerm::from_expr(idx, env)),
                    );
                    subst_int(&c.post, dst, &sel).map_err(|e| e.to_string())?
                }
                Stmt::WriteArr { arr, idx, src } => {
                    want_ty(env, arr, Ty::WArr)?;
                    let upd = ArrayTerm::update(
                        ArrayTerm::var(arr),
                        IntTerm::from_expr(idx, env),
                        sym_term(env, src),
                    );
                    subst_array(&c.post, arr, &upd)
                }
                _ => return Err("the rule applies to kept array accesses only".into()),
            };
            if !normeq(&c.pre, &want) {
                return Err("the precondition is not the substituted postcondition".into());
            }
            Ok(())
        }
        Rule::ReadMem => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let Stmt::ReadArr { dst, arr, idx } = stmt_judgment(c)? else {
                return Err("the source is not an array read".into());
            };
            let Stmt::Assign { dst: dst2, expr } = &c.target else {
                return Err("the target is not a register move".into());
            };
            let Some(b) = var_atom(expr) else {
                return Err("the target must copy a single buffer".into());
            };
            if dst2 != dst {
                return Err("the target writes a different register".into());
            }
            want_ty(env, arr, Ty::RArr)?;
            want_ty(env, b, Ty::Buf)?;
            want_register(env, dst)?;
            let sel = IntTerm::Select(
                ArrayTerm::var(arr),
                Box::new(IntTerm::from_expr(idx, env)),
            );
            let want = conj(vec![
                Formula::eq(IntTerm::Buf(b.clone()), sel),
                subst_int(&c.post, dst, &IntTerm::Buf(b.clone()))
                    .map_err(|e| e.to_string())?,
            ]);
            if !normeq(&c.pre, &want) {
                return Err("the precondition does not pin the buffer to the cell".into());
            }
            Ok(())
        }
        Rule::WriteMem => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let Stmt::WriteArr { arr, idx, src } = stmt_judgment(c)? else {
                return Err("the source is not an array write".into());
            };
            let Stmt::Assign { dst: b, expr } = &c.target else {
                return Err("the target is not a staging move".into());
            };
            if var_atom(expr) != Some(src) {
                return Err("the target must stage the written value".into());
            }
            want_ty(env, arr, Ty::WArr)?;
            want_ty(env, b, Ty::Buf)?;
            let e = IntTerm::from_expr(idx, env);
            let x = sym_term(env, src);
            let staged =
                subst_int(&c.post, b, &x).map_err(|er| er.to_string())?;
            let upd = ArrayTerm::update(ArrayTerm::var(arr), e.clone(), x);
            let want = conj(vec![
                Formula::not(Formula::Mem(e, SeqTerm::idx(arr))),
                subst_array(&staged, arr, &upd),
            ]);
            if !normeq(&c.pre, &want) {
                return Err("the precondition does not record the pending write".into());
            }
            Ok(())
        }
        Rule::InsRBuf => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let Stmt::ReadStream { dst: b, stream: a } = &c.target else {
                return Err("the insertion is not a stream read".into());
            };
            want_ty(env, a, Ty::RArr)?;
            want_ty(env, b, Ty::Buf)?;
            let tailed = subst_seq(&c.post, a, &SeqTerm::tail(SeqTerm::idx(a)));
            let popped = IntTerm::Select(
                ArrayTerm::var(a),
                Box::new(IntTerm::Head(Box::new(SeqTerm::idx(a)))),
            );
            let want = subst_int(&tailed, b, &popped).map_err(|e| e.to_string())?;
            if !normeq(&c.pre, &want) {
                return Err("the precondition does not pop the index sequence".into());
            }
            Ok(())
        }
        Rule::InsWBuf => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let Stmt::WriteStream { stream: a, src: b } = &c.target else {
                return Err("the insertion is not a stream write".into());
            };
            want_ty(env, a, Ty::WArr)?;
            want_ty(env, b, Ty::Buf)?;
            let n = c
                .pre
                .conjuncts()
                .into_iter()
                .find_map(|f| match f {
                    Formula::Not(inner) => match inner.as_ref() {
                        Formula::Mem(n, s) if *s == SeqTerm::idx(a) => Some(n.clone()),
                        _ => None,
                    },
                    _ => None,
                })
                .ok_or("the precondition does not exclude the new index")?;
            let want = conj(vec![
                Formula::not(Formula::Mem(n.clone(), SeqTerm::idx(a))),
                Formula::eq(
                    IntTerm::Select(ArrayTerm::var(a), Box::new(n.clone())),
                    IntTerm::Buf(b.clone()),
                ),
                subst_seq(&c.post, a, &SeqTerm::snoc(SeqTerm::idx(a), n)),
            ]);
            if !normeq(&c.pre, &want) {
                return Err("the precondition does not append the new index".into());
            }
            Ok(())
        }
        Rule::InsMove => {
            premise_count(d, 0)?;
            no_sides(d)?;
            let Stmt::Assign { dst, expr } = &c.target else {
                return Err("the insertion is not a register move".into());
            };
            let Some(y) = var_atom(expr) else {
                return Err("the moved value must be a single variable".into());
            };
            want_ty(env, dst, Ty::Buf)?;
            if !env.is_int_like(y) && env.lookup(y) != Some(Ty::Buf) {
                return Err(format!("`{y}` is neither an integer nor a buffer"));
            }
            let want = subst_int(&c.post, dst, &sym_term(env, y))
                .map_err(|e| e.to_string())?;
            if !normeq(&c.pre, &want) {
                return Err("the precondition is not the substituted postcondition".into());
            }
            Ok(())
        }
        Rule::Seq => {
            premise_count(d, 2)?;
            no_sides(d)?;
            let l = &d.premises[0].conclusion;
            let r = &d.premises[1].conclusion;
            let src = Stmt::Seq(
                Box::new(stmt_judgment(l)?.clone()),
                Box::new(stmt_judgment(r)?.clone()),
            );
            if c.source.as_ref() != Some(&src) {
                return Err("the source is not the premises in sequence".into());
            }
            let tgt = Stmt::Seq(
                Box::new(l.target.clone()),
                Box::new(r.target.clone()),
            );
            if c.target != tgt {
                return Err("the target is not the premises in sequence".into());
            }
            if !normeq(&c.pre, &l.pre) || !normeq(&r.post, &c.post) {
                return Err("the ends do not match the outer judgment".into());
            }
            if !normeq(&l.post, &r.pre) {
                return Err("the premises do not meet at a shared midpoint".into());
            }
            Ok(())
        }
        Rule::If => {
            premise_count(d, 2)?;
            no_sides(d)?;
            let t = &d.premises[0].conclusion;
            let e = &d.premises[1].conclusion;
            let Some(Stmt::If { cond, then_s, else_s }) = &c.source else {
                return Err("the source is not a branch".into());
            };
            if !env.is_int_like(cond) {
                return Err(format!("`{cond}` is not an integer condition"));
            }
            if then_s.as_ref() != stmt_judgment(t)? || else_s.as_ref() != stmt_judgment(e)? {
                return Err("the arms do not match the premises".into());
            }
            let Stmt::If { cond: c2, then_s: t2, else_s: e2 } = &c.target else {
                return Err("the target is not a branch".into());
            };
            if c2 != cond || t2.as_ref() != &t.target || e2.as_ref() != &e.target {
                return Err("the target arms do not match the premises".into());
            }
            let taken = Formula::neq(IntTerm::var(cond), IntTerm::int(0));
            let skipped = Formula::eq(IntTerm::var(cond), IntTerm::int(0));
            if !normeq(&t.pre, &conj(vec![c.pre.clone(), taken]))
                || !normeq(&e.pre, &conj(vec![c.pre.clone(), skipped]))
            {
                return Err("the arms do not assume the branch condition".into());
            }
            if !normeq(&t.post, &c.post) || !normeq(&e.post, &c.post) {
                return Err("the arms do not rejoin at the postcondition".into());
            }
            Ok(())
        }
        Rule::For => {
            premise_count(d, 1)?;
            no_sides(d)?;
            let p = &d.premises[0].conclusion;
            let Some(Stmt::For { var, init, bound, step, body, .. }) = &c.source else {
                return Err("the source is not a counted loop".into());
            };
            let Stmt::For {
                var: v2,
                init: i2,
                bound: b2,
                step: s2,
                body: body2,
                ..
            } = &c.target
            else {
                return Err("the target is not a counted loop".into());
            };
            if v2 != var || i2 != init || b2 != bound || s2 != step {
                return Err("the loop headers differ between source and target".into());
            }
            if body.as_ref() != stmt_judgment(p)? || body2.as_ref() != &p.target {
                return Err("the bodies do not match the premise".into());
            }
            want_register(env, var)?;
            let m = IntTerm::from_expr(bound, env);
            let exit = Formula::Eq(IntTerm::var(var), m.clone());
            let conjs = c.post.conjuncts();
            let at = conjs
                .iter()
                .rposition(|f| **f == exit)
                .ok_or("the postcondition lacks the exit equality")?;
            let inv = conj(
                conjs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != at)
                    .map(|(_, f)| (*f).clone())
                    .collect(),
            );
            let continuing =
                conj(vec![inv.clone(), Formula::neq(IntTerm::var(var), m)]);
            if !normeq(&p.pre, &continuing) {
                return Err("the body does not start from the invariant".into());
            }
            let stepped =
                linexpr_term(&LinExpr::var(var).add_const(step.clone()));
            let kept = subst_int(&inv, var, &stepped).map_err(|e| e.to_string())?;
            if !normeq(&p.post, &kept) {
                return Err("the body does not restore the invariant".into());
            }
            let entry = subst_int(&inv, var, &IntTerm::from_expr(init, env))
                .map_err(|e| e.to_string())?;
            if !normeq(&c.pre, &entry) {
                return Err("the precondition is not the initialized invariant".into());
            }
            Ok(())
        }
        Rule::Kernel => {
            premise_count(d, 1)?;
            no_sides(d)?;
            let p = &d.premises[0].conclusion;
            let src = Stmt::Kernel(Box::new(stmt_judgment(p)?.clone()));
            if c.source.as_ref() != Some(&src) {
                return Err("the source does not wrap the premise".into());
            }
            if c.target != Stmt::Kernel(Box::new(p.target.clone())) {
                return Err("the target does not wrap the premise".into());
            }
            if !normeq(&c.pre, &p.pre) || !normeq(&c.post, &p.post) {
                return Err("the assertion must pass through unchanged".into());
            }
            Ok(())
        }
        Rule::InsertL | Rule::InsertR => {
            premise_count(d, 2)?;
            no_sides(d)?;
            let (ins, stmt) = if d.rule == Rule::InsertL {
                (&d.premises[0].conclusion, &d.premises[1].conclusion)
            } else {
                (&d.premises[1].conclusion, &d.premises[0].conclusion)
            };
            if ins.source.is_some() {
                return Err("the inserted premise must be an insertion".into());
            }
            if c.source != stmt.source {
                return Err("insertion must not change the source".into());
            }
            let tgt = if d.rule == Rule::InsertL {
                Stmt::Seq(Box::new(ins.target.clone()), Box::new(stmt.target.clone()))
            } else {
                Stmt::Seq(Box::new(stmt.target.clone()), Box::new(ins.target.clone()))
            };
            if c.target != tgt {
                return Err("the target does not splice the insertion".into());
            }
            let (first, second) = if d.rule == Rule::InsertL {
                (ins, stmt)
            } else {
                (stmt, ins)
            };
            if !normeq(&c.pre, &first.pre) || !normeq(&second.post, &c.post) {
                return Err("the ends do not match the outer judgment".into());
            }
            if !normeq(&first.post, &second.pre) {
                return Err("the insertion does not meet the statement".into());
            }
            Ok(())
        }
        Rule::Conseq | Rule::InsConseq => {
            premise_count(d, 1)?;
            let p = &d.premises[0].conclusion;
            let want_stmt = d.rule == Rule::Conseq;
            if p.source.is_some() != want_stmt {
                return Err("the premise judgment kind does not match the rule".into());
            }
            if c.source != p.source || c.target != p.target {
                return Err("weakening must not change the statements".into());
            }
            if d.side.len() != 2 {
                return Err(format!(
                    "expected the two weakening entailments, found {}",
                    d.side.len()
                ));
            }
            let glue = [
                (&d.side[0], &c.pre, &p.pre),
                (&d.side[1], &p.post, &c.post),
            ];
            for (e, hyp, concl) in glue {
                if !normeq(&e.vc.hypothesis, hyp) || !normeq(&e.vc.conclusion, concl) {
                    return Err(format!(
                        "entailment `{}` does not connect the judgments",
                        e.vc.label
                    ));
                }
                if e.certificate != certificate(&e.vc, env) {
                    return Err(format!(
                        "entailment `{}` carries a stale certificate",
                        e.vc.label
                    ));
                }
                if normeq(&e.vc.hypothesis, &e.vc.conclusion) {
                    continue;
                }
                let q = discharge_form(&e.vc, env);
                match check_vc(&q, env, cfg) {
                    Verdict::Holds => {}
                    Verdict::Fails(v) => {
                        return Err(format!(
                            "entailment `{}` is refuted at {v:?}",
                            e.vc.label
                        ))
                    }
                    Verdict::Unknown(msg) => {
                        return Err(format!(
                            "entailment `{}` could not be settled: {msg}",
                            e.vc.label
                        ))
                    }
                }
            }
            Ok(())
        }
    }
}
