//! The external validity backend: SMT-LIB v2 over a child process.
//!
//! Conditions leave this module as one quantifier-free query each: the
//! negated implication with every universal declared as an integer
//! constant, `unsat` meaning the condition is valid. Sequence reasoning
//! is eliminated before emission — every sequence variable must be
//! pinned to an arithmetic range by the hypothesis, range equalities
//! become length-and-endpoint arithmetic, and membership becomes the
//! bounds-plus-stride test. Conditions that keep irreducible sequence
//! structure (or a non-literal stride) are answered `Unknown` rather
//! than encoded loosely.
//!
//! Two faithfulness caveats, both documented here because they are where
//! this backend's semantics and the evaluator's partial semantics part
//! ways: arrays are total integer functions on the solver side, so a
//! condition refuted only by an out-of-domain read is not refuted here;
//! and `div`/`rem` terms are not emitted at all (the evaluator truncates,
//! SMT-LIB is Euclidean), so conditions containing them are `Unknown`.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use num_traits::Zero;

use crate::assertions::subst::subst_seq;
use crate::assertions::{
    ArrayTerm, Formula, IndexRange, IntTerm, LinExpr, SeqTerm,
};
use crate::ast::{Int, Name, Op};

use super::backend_b::Verdict;
use super::chain::Vc;

/// Handle on a user-configured solver binary.
#[derive(Debug, Clone)]
pub struct SmtBackend {
    pub path: PathBuf,
    pub timeout_ms: u64,
}

impl SmtBackend {
    pub fn new(path: impl Into<PathBuf>, timeout_ms: u64) -> SmtBackend {
        SmtBackend { path: path.into(), timeout_ms }
    }

    /// Reads `STREAMLINE_SOLVER`; unset means no external backend.
    pub fn from_env() -> Option<SmtBackend> {
        let path = std::env::var_os("STREAMLINE_SOLVER")?;
        if path.is_empty() {
            return None;
        }
        Some(SmtBackend::new(PathBuf::from(path), 10_000))
    }

    /// Checks one condition: `unsat` on the negated implication means it
    /// holds.
    pub fn check_vc(&self, vc: &Vc) -> Verdict {
        let query = match lower_query(vc) {
            Ok(q) => q,
            Err(e) => return Verdict::Unknown(e.0),
        };
        self.run(&query)
    }

    fn run(&self, query: &str) -> Verdict {
        let mut child = match Command::new(&self.path)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => {
                return Verdict::Unknown(format!(
                    "could not start solver `{}`: {e}",
                    self.path.display()
                ))
            }
        };
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(query.as_bytes());
            // Dropping stdin closes the pipe so the solver sees EOF.
        }
        let (tx, rx) = mpsc::channel();
        let stdout = child.stdout.take();
        std::thread::spawn(move || {
            let text = stdout
                .map(|mut out| {
                    use std::io::Read as _;
                    let mut buf = String::new();
                    let _ = out.read_to_string(&mut buf);
                    buf
                })
                .unwrap_or_default();
            let _ = tx.send(text);
        });
        let text = match rx.recv_timeout(Duration::from_millis(self.timeout_ms)) {
            Ok(t) => t,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Verdict::Unknown(format!(
                    "solver timed out after {} ms",
                    self.timeout_ms
                ));
            }
        };
        let _ = child.wait();
        match text.split_whitespace().next() {
            Some("unsat") => Verdict::Holds,
            Some("sat") => Verdict::Fails(Box::default()),
            other => Verdict::Unknown(format!(
                "solver answered `{}`",
                other.unwrap_or("<nothing>")
            )),
        }
    }
}

/// Why a condition could not be encoded.
#[derive(Debug, Clone)]
pub struct LowerError(pub String);

/// Encodes one condition as a complete SMT-LIB v2 script.
pub fn lower_query(vc: &Vc) -> Result<String, LowerError> {
    // Pin every sequence variable to the range the hypothesis assigns it,
    // then substitute those ranges through both sides so only arithmetic
    // remains.
    let hyp = vc.hypothesis.normalize();
    let mut pinned: Vec<(Name, SeqTerm)> = Vec::new();
    for c in hyp.conjuncts() {
        if let Formula::SeqEq(l, r) = c {
            match (l, r) {
                (SeqTerm::Var(a), t @ (SeqTerm::Range(_) | SeqTerm::Nil))
                | (t @ (SeqTerm::Range(_) | SeqTerm::Nil), SeqTerm::Var(a)) => {
                    if !pinned.iter().any(|(n, _)| n == a) {
                        pinned.push((a.clone(), t.clone()));
                    }
                }
                _ => {}
            }
        }
    }
    let mut hyp = hyp;
    let mut concl = vc.conclusion.clone();
    for (a, t) in &pinned {
        hyp = subst_seq(&hyp, a, t);
        concl = subst_seq(&concl, a, t);
    }
    let hyp = hyp.normalize();
    let concl = concl.normalize();

    let mut ctx = Lowering::default();
    let mut body = Vec::new();
    let h = ctx.formula(&hyp)?;
    let c = ctx.formula(&concl)?;
    // Loop variables stay inside their induced arithmetic progression.
    for (x, r) in &vc.ranges {
        let range = SeqTerm::Range(IndexRange::new(
            r.init.clone(),
            r.bound.clone(),
            LinExpr::constant(r.step.clone()),
        ));
        let mut guards = Vec::new();
        let m = ctx.mem(&IntTerm::var(x), &range, &mut guards)?;
        body.push(conjoin(guards, m));
    }
    body.push(h);

    let mut out = String::new();
    out.push_str("(set-logic ALL)\n");
    for x in &vc.universals {
        out.push_str(&format!("(declare-const v_{x} Int)\n"));
    }
    for a in &ctx.arrays {
        out.push_str(&format!("(declare-fun a_{a} (Int) Int)\n"));
    }
    out.push_str(&format!(
        "(assert (and {}))\n(assert (not {}))\n(check-sat)\n(exit)\n",
        body.join(" "),
        c
    ));
    Ok(out)
}

#[derive(Default)]
struct Lowering {
    arrays: BTreeSet<Name>,
}

impl Lowering {
    fn formula(&mut self, f: &Formula) -> Result<String, LowerError> {
        Ok(match f {
            Formula::True => "true".into(),
            Formula::And(fs) => {
                if fs.is_empty() {
                    "true".into()
                } else {
                    let parts = fs
                        .iter()
                        .map(|g| self.formula(g))
                        .collect::<Result<Vec<_>, _>>()?;
                    format!("(and {})", parts.join(" "))
                }
            }
            Formula::Not(g) => format!("(not {})", self.formula(g)?),
            Formula::Eq(l, r) => self.atom("=", l, r)?,
            Formula::Le(l, r) => self.atom("<=", l, r)?,
            Formula::Mem(t, s) => {
                let mut guards = Vec::new();
                let m = self.mem(t, s, &mut guards)?;
                conjoin(guards, m)
            }
            Formula::SeqEq(l, r) => {
                let mut guards = Vec::new();
                let e = self.seq_eq(l, r, &mut guards)?;
                conjoin(guards, e)
            }
        })
    }

    /// `guards ∧ l op r`: an atom is false whenever a subterm is
    /// undefined, which the guards reproduce.
    fn atom(&mut self, op: &str, l: &IntTerm, r: &IntTerm) -> Result<String, LowerError> {
        let mut guards = Vec::new();
        let a = self.int(l, &mut guards)?;
        let b = self.int(r, &mut guards)?;
        let core = format!("({op} {a} {b})");
        Ok(conjoin(guards, core))
    }

    fn int(
        &mut self,
        t: &IntTerm,
        guards: &mut Vec<String>,
    ) -> Result<String, LowerError> {
        Ok(match t {
            IntTerm::Const(n) => literal(n),
            IntTerm::Var(x) | IntTerm::Buf(x) => format!("v_{x}"),
            IntTerm::Bin(op, l, r) => {
                let a = self.int(l, guards)?;
                let b = self.int(r, guards)?;
                let sym = match op {
                    Op::Add => "+",
                    Op::Sub => "-",
                    Op::Mul => "*",
                    Op::Div | Op::Rem => {
                        return Err(LowerError(
                            "truncated division has no faithful encoding here"
                                .into(),
                        ))
                    }
                    // Comparison operators yield 0/1 flags in the source
                    // language; conditions never contain them.
                    Op::Lt | Op::Eq | Op::Le => {
                        return Err(LowerError(
                            "comparison flag inside an arithmetic term".into(),
                        ))
                    }
                };
                format!("({sym} {a} {b})")
            }
            IntTerm::Select(a, i) => {
                let idx = self.int(i, guards)?;
                self.select(a, idx, guards)?
            }
            IntTerm::Head(s) => {
                let e = self.renc(s, guards)?;
                // Head of an empty sequence is undefined, which makes the
                // enclosing atom false; the guard reproduces that.
                guards.push(format!("(>= {} 1)", e.len));
                e.low
            }
        })
    }

    fn select(
        &mut self,
        a: &ArrayTerm,
        idx: String,
        guards: &mut Vec<String>,
    ) -> Result<String, LowerError> {
        Ok(match a {
            ArrayTerm::Var(name) => {
                self.arrays.insert(name.clone());
                format!("(a_{name} {idx})")
            }
            ArrayTerm::Update(base, i, v) => {
                let at = self.int(i, guards)?;
                let val = self.int(v, guards)?;
                let inner = self.select(base, idx.clone(), guards)?;
                format!("(ite (= {idx} {at}) {val} {inner})")
            }
        })
    }

    fn lin(&self, e: &LinExpr) -> String {
        let mut parts = vec![literal(e.constant_part())];
        for (x, c) in e.terms() {
            if c == &Int::from(1) {
                parts.push(format!("v_{x}"));
            } else {
                parts.push(format!("(* {} v_{x})", literal(c)));
            }
        }
        if parts.len() == 1 {
            parts.pop().expect("nonempty")
        } else {
            format!("(+ {})", parts.join(" "))
        }
    }

    /// `t ∈ s`, recursing through appended and prepended elements; the
    /// flat remainder is a bounds-plus-stride test whose `mod` operand is
    /// nonnegative whenever the bounds hold, so Euclidean and truncated
    /// remainders agree on every satisfying point.
    fn mem(
        &mut self,
        t: &IntTerm,
        s: &SeqTerm,
        guards: &mut Vec<String>,
    ) -> Result<String, LowerError> {
        match s {
            SeqTerm::Snoc(rest, u) | SeqTerm::Cons(u, rest) => {
                let tt = self.int(t, guards)?;
                let uu = self.int(u, guards)?;
                let inner = self.mem(t, rest, guards)?;
                Ok(format!("(or (= {tt} {uu}) {inner})"))
            }
            _ => {
                let tt = self.int(t, guards)?;
                let e = self.renc(s, guards)?;
                // An empty range has `last` on the wrong side of `low`,
                // which already falsifies the bounds pair.
                let (lo, hi, span) = if e.step > Int::zero() {
                    (e.low.clone(), e.last(), format!("(- {tt} {})", e.low))
                } else {
                    (e.last(), e.low.clone(), format!("(- {} {tt})", e.low))
                };
                Ok(format!(
                    "(and (<= {lo} {tt}) (<= {tt} {hi}) (= (mod {span} {}) 0))",
                    literal(&abs(&e.step))
                ))
            }
        }
    }

    /// Sequence equality. Structured constructors peel one element at a
    /// time — equal sequences have equal final (respectively leading)
    /// elements and equal remainders — and flat sides compare as
    /// low/length/stride triples.
    fn seq_eq(
        &mut self,
        l: &SeqTerm,
        r: &SeqTerm,
        guards: &mut Vec<String>,
    ) -> Result<String, LowerError> {
        match (l, r) {
            (SeqTerm::Snoc(s1, t1), SeqTerm::Snoc(s2, t2)) => {
                let a = self.int(t1, guards)?;
                let b = self.int(t2, guards)?;
                let rest = self.seq_eq(s1, s2, guards)?;
                Ok(format!("(and (= {a} {b}) {rest})"))
            }
            (SeqTerm::Cons(t1, s1), SeqTerm::Cons(t2, s2)) => {
                let a = self.int(t1, guards)?;
                let b = self.int(t2, guards)?;
                let rest = self.seq_eq(s1, s2, guards)?;
                Ok(format!("(and (= {a} {b}) {rest})"))
            }
            (SeqTerm::Snoc(..) | SeqTerm::Cons(..), flat) => {
                let e = self.renc(flat, guards)?;
                self.seq_eq_enc(l, &e, guards)
            }
            (flat, SeqTerm::Snoc(..) | SeqTerm::Cons(..)) => {
                let e = self.renc(flat, guards)?;
                self.seq_eq_enc(r, &e, guards)
            }
            _ => {
                let a = self.renc(l, guards)?;
                let b = self.renc(r, guards)?;
                Ok(ranges_eq(&a, &b))
            }
        }
    }

    /// One structured side against an encoded flat side.
    fn seq_eq_enc(
        &mut self,
        l: &SeqTerm,
        r: &REnc,
        guards: &mut Vec<String>,
    ) -> Result<String, LowerError> {
        match l {
            SeqTerm::Snoc(rest, t) => {
                let tt = self.int(t, guards)?;
                let inner = self.seq_eq_enc(rest, &r.shrink_high(), guards)?;
                Ok(format!(
                    "(and (>= {len} 1) (= {tt} {last}) {inner})",
                    len = r.len,
                    last = r.last(),
                ))
            }
            SeqTerm::Cons(t, rest) => {
                let tt = self.int(t, guards)?;
                let inner = self.seq_eq_enc(rest, &r.shrink_low(), guards)?;
                Ok(format!(
                    "(and (>= {len} 1) (= {tt} {low}) {inner})",
                    len = r.len,
                    low = r.low,
                ))
            }
            flat => {
                let e = self.renc(flat, guards)?;
                Ok(ranges_eq(&e, r))
            }
        }
    }

    /// Encodes a flat sequence term as a low/length/stride triple.
    fn renc(&mut self, s: &SeqTerm, guards: &mut Vec<String>) -> Result<REnc, LowerError> {
        match s {
            SeqTerm::Nil => Ok(REnc {
                low: "0".into(),
                len: "0".into(),
                step: Int::from(1),
            }),
            SeqTerm::Range(r) => {
                let step = r
                    .step
                    .as_const()
                    .filter(|s| !s.is_zero())
                    .cloned()
                    .ok_or_else(|| {
                        LowerError("range stride is symbolic or zero".into())
                    })?;
                let l = self.lin(&r.low);
                let h = self.lin(&r.high);
                // `div` here sees nonnegative operands on the branch where
                // it is reached, so Euclidean division is the floor needed.
                let len = if step > Int::zero() {
                    format!(
                        "(ite (<= {l} {h}) (+ (div (- {h} {l}) {}) 1) 0)",
                        literal(&step)
                    )
                } else {
                    format!(
                        "(ite (<= {h} {l}) (+ (div (- {l} {h}) {}) 1) 0)",
                        literal(&abs(&step))
                    )
                };
                Ok(REnc { low: l, len, step })
            }
            SeqTerm::Tail(inner) => {
                let e = self.renc(inner, guards)?;
                // Tail of an empty sequence is undefined: atom-falsifying
                // guard, as in evaluation.
                guards.push(format!("(>= {} 1)", e.len));
                Ok(e.shrink_low())
            }
            other => Err(LowerError(format!(
                "sequence term `{other:?}` kept structure the encoding cannot eliminate"
            ))),
        }
    }
}

/// A flat sequence as SMT terms: first element, element count, and the
/// literal stride between consecutive elements.
struct REnc {
    low: String,
    len: String,
    step: Int,
}

impl REnc {
    /// The final element; meaningful only under a `len >= 1` test.
    fn last(&self) -> String {
        format!(
            "(+ {} (* {} (- {} 1)))",
            self.low,
            literal(&self.step),
            self.len
        )
    }

    /// Everything but the last element.
    fn shrink_high(&self) -> REnc {
        REnc {
            low: self.low.clone(),
            len: format!("(- {} 1)", self.len),
            step: self.step.clone(),
        }
    }

    /// Everything but the first element.
    fn shrink_low(&self) -> REnc {
        REnc {
            low: format!("(+ {} {})", self.low, literal(&self.step)),
            len: format!("(- {} 1)", self.len),
            step: self.step.clone(),
        }
    }
}

/// Flat-flat equality: equal lengths, and when anything is in them, equal
/// first elements — strides must then agree unless there is only one
/// element.
fn ranges_eq(a: &REnc, b: &REnc) -> String {
    let step_ok = if a.step == b.step {
        "true".to_string()
    } else {
        format!("(<= {} 1)", a.len)
    };
    format!(
        "(and (= {la} {lb}) (or (= {la} 0) (and (= {xa} {xb}) {step_ok})))",
        la = a.len,
        lb = b.len,
        xa = a.low,
        xb = b.low,
    )
}

fn abs(n: &Int) -> Int {
    if n < &Int::zero() {
        -n.clone()
    } else {
        n.clone()
    }
}

fn literal(n: &Int) -> String {
    if n < &Int::zero() {
        format!("(- {})", -n.clone())
    } else {
        n.to_string()
    }
}

fn conjoin(guards: Vec<String>, core: String) -> String {
    if guards.is_empty() {
        core
    } else {
        format!("(and {} {core})", guards.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bufferpass::kernel_arrays;
    use crate::frontend::parse_program;
    use crate::vcgen::{analyze, chain, Assignment, Candidate, SolveConfig, SolveOutcome};

    fn filter_vcs() -> Vec<Vc> {
        let p = parse_program(
            "param N >= 2;\nrarr in;\nwarr out;\nint x, y0, y1, z0, z1;\n\
             for (x = 0; x != N; x += 1) { in[x] = x; }\n\
             kernel {\n  for (x = 0; x != N - 1; x += 1) {\n    y0 = in[x];\n    y1 = in[x + 1];\n    z0 = y0 + y1;\n    z1 = z0 / 2;\n    out[x] = z1;\n  }\n}\n",
        )
        .map(|p| {
            let analysis = analyze(&p, &kernel_arrays(&p), true).unwrap();
            let SolveOutcome::Solved(sol) =
                crate::vcgen::solve(&analysis, &SolveConfig::default()).unwrap()
            else {
                panic!("filter must solve");
            };
            sol.vcs
        })
        .unwrap();
        p
    }

    #[test]
    fn queries_are_selfcontained_scripts() {
        for vc in filter_vcs() {
            let q = lower_query(&vc).unwrap_or_else(|e| {
                panic!("lowering {} failed: {}", vc.label, e.0)
            });
            assert!(q.starts_with("(set-logic ALL)\n"), "{}", vc.label);
            assert!(q.contains("(assert (not"), "{}", vc.label);
            assert!(q.trim_end().ends_with("(exit)"), "{}", vc.label);
            assert!(!q.contains("idx("), "sequence leak in {}: {q}", vc.label);
        }
    }

    #[test]
    fn loop_ranges_are_conjoined_as_stride_tests() {
        let vcs = filter_vcs();
        let ind = vcs
            .iter()
            .find(|v| v.label == "loop1.inductiveness")
            .unwrap();
        let q = lower_query(ind).unwrap();
        assert!(q.contains("(mod"), "stride test missing: {q}");
        assert!(q.contains("(declare-const v_x Int)"));
        assert!(q.contains("(declare-fun a_in (Int) Int)"));
    }

    fn fake_solver(dir: &std::path::Path, body: &str) -> PathBuf {
        use std::os::unix::fs::PermissionsExt;
        let path = dir.join("fake-solver.sh");
        std::fs::write(&path, format!("#!/bin/sh\ncat > /dev/null\n{body}\n"))
            .unwrap();
        let mut perm = std::fs::metadata(&path).unwrap().permissions();
        perm.set_mode(0o755);
        std::fs::set_permissions(&path, perm).unwrap();
        path
    }

    #[test]
    fn the_pipe_protocol_reads_the_first_token() {
        let dir = std::env::temp_dir().join(format!(
            "streamline-smt-{}",
            std::process::id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        let vcs = filter_vcs();
        let vc = &vcs[0];

        let unsat = SmtBackend::new(fake_solver(&dir, "echo unsat"), 2_000);
        assert!(matches!(unsat.check_vc(vc), Verdict::Holds));

        let sat = SmtBackend::new(fake_solver(&dir, "echo sat"), 2_000);
        assert!(matches!(sat.check_vc(vc), Verdict::Fails(_)));

        let confused = SmtBackend::new(fake_solver(&dir, "echo maybe"), 2_000);
        assert!(matches!(confused.check_vc(vc), Verdict::Unknown(_)));

        let missing = SmtBackend::new(dir.join("no-such-binary"), 2_000);
        assert!(matches!(missing.check_vc(vc), Verdict::Unknown(_)));

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn slow_solvers_hit_the_deadline() {
        let dir = std::env::temp_dir().join(format!(
            "streamline-smt-slow-{}",
            std::process::id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        let vcs = filter_vcs();
        let slow = SmtBackend::new(fake_solver(&dir, "sleep 5\necho unsat"), 100);
        let out = slow.check_vc(&vcs[0]);
        assert!(
            matches!(&out, Verdict::Unknown(m) if m.contains("timed out")),
            "{out:?}"
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn an_unpinned_sequence_refuses_to_encode() {
        let p = parse_program(
            "param N >= 1;\nrarr a;\nint x, y;\n\
             kernel {\n  for (x = 0; x != N; x += 1) { y = a[x]; }\n}\n",
        )
        .unwrap();
        let analysis = analyze(&p, &kernel_arrays(&p), true).unwrap();
        // No template assignment at all: the kernel invariant never pins
        // idx(a), so the conditions mention it bare.
        let out = chain(&analysis, &Assignment::default(), None).unwrap();
        let bare = out
            .vcs
            .iter()
            .filter_map(|vc| lower_query(vc).err())
            .next();
        assert!(bare.is_some(), "expected at least one lowering refusal");
    }

    #[test]
    fn candidate_ranges_translate_into_the_template_shape() {
        // A one-variable smoke query built by hand stays readable; keep it
        // in sync with the display format tests in the templates module.
        let cand = Candidate {
            low: (LinExpr::constant(1), Int::from(1)),
            high: (LinExpr::var("N").add_const(-1), Int::from(0)),
            step: Int::from(1),
        };
        let atom = cand.atom("in", "x");
        let Formula::SeqEq(_, range @ SeqTerm::Range(_)) = &atom else {
            panic!("atom shape changed");
        };
        let mut ctx = Lowering::default();
        let mut guards = Vec::new();
        let member = ctx.mem(&IntTerm::var("q"), range, &mut guards).unwrap();
        assert!(guards.is_empty());
        assert!(member.contains("(<= (+ 1 v_x) v_q)"), "{member}");
    }
}
