//! End-to-end conversion: plan buffers, infer invariants, rewrite the
//! program, and record *why* the rewrite is sound as a derivation tree.
//!
//! [`translate`] drives the whole pipeline. It starts from every array
//! the accelerated region touches, asks the solver for window invariants,
//! and drops arrays whose conditions cannot be met (data-dependent
//! indices, typically) until a conversion set survives. The rewritten
//! program ships together with a [`Derivation`]: a tree of judgments
//! `{pre} source => target {post}`, one node per rewrite-rule application,
//! with every consequence step carrying its entailment obligation and a
//! fingerprint of the query that discharges it.
//!
//! The derivation always describes the two-step form of converted
//! accesses (`b = a.read(); x = b`) — the read/write shortcut, when
//! enabled, only reshapes the shipped program, not the argument. Checking
//! is a separate code path: [`check_derivation`] re-instantiates each
//! rule schema from scratch and re-discharges the entailments, so a
//! derivation file stands on its own.

mod build;
mod check;
mod json;

pub use check::{check_derivation, CheckFailure};
pub use json::{derivation_from_json, derivation_to_json, JsonError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assertions::{Formula, IntTerm};
use crate::ast::{Name, Program, Stmt, TypeEnv};
use crate::bufferpass::{convert_host_accesses, insert_buffers, kernel_arrays};
use crate::vcgen::backend_b::Verdict;
use crate::vcgen::{
    analyze, check_vc, lower_query, pair_program, solve, GroupCoeffs, SolveConfig,
    SolveOutcome, Vc, VcError,
};

/// The rewrite rules a derivation node may invoke.
///
/// The first fourteen are the core calculus: one rule per statement kind,
/// the two insertion-attachment rules, the three insertable operations,
/// the consequence rules, and the kernel-boundary rule. `Skip` and `Id`
/// extend the calculus for partially converted programs: `Id` carries an
/// access to an *unconverted* array through the rewrite unchanged, and
/// `Skip` closes empty branches. Both follow the same
/// weakest-precondition discipline as the core rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    ReadMem,
    WriteMem,
    Assign,
    Seq,
    If,
    For,
    InsertL,
    InsertR,
    InsRBuf,
    InsWBuf,
    InsMove,
    Conseq,
    InsConseq,
    Kernel,
    Skip,
    Id,
}

impl Rule {
    pub const ALL: [Rule; 16] = [
        Rule::ReadMem,
        Rule::WriteMem,
        Rule::Assign,
        Rule::Seq,
        Rule::If,
        Rule::For,
        Rule::InsertL,
        Rule::InsertR,
        Rule::InsRBuf,
        Rule::InsWBuf,
        Rule::InsMove,
        Rule::Conseq,
        Rule::InsConseq,
        Rule::Kernel,
        Rule::Skip,
        Rule::Id,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::ReadMem => "Tr-ReadMem",
            Rule::WriteMem => "Tr-WriteMem",
            Rule::Assign => "Tr-Assign",
            Rule::Seq => "Tr-Seq",
            Rule::If => "Tr-If",
            Rule::For => "Tr-For",
            Rule::InsertL => "Tr-InsertL",
            Rule::InsertR => "Tr-InsertR",
            Rule::InsRBuf => "Tr-InsRBuf",
            Rule::InsWBuf => "Tr-InsWBuf",
            Rule::InsMove => "Tr-InsMove",
            Rule::Conseq => "Tr-Conseq",
            Rule::InsConseq => "Tr-InsConseq",
            Rule::Kernel => "Tr-Kernel",
            Rule::Skip => "Tr-Skip",
            Rule::Id => "Tr-Id",
        }
    }

    pub fn parse(s: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.name() == s)
    }

    /// Whether conclusions of this rule are insertion judgments (no
    /// source statement; the target runs against an idle left side).
    pub fn is_insertion(self) -> bool {
        matches!(
            self,
            Rule::InsRBuf | Rule::InsWBuf | Rule::InsMove | Rule::InsConseq
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One relational judgment: started in `pre`-related states, running
/// `source` on the plain side and `target` on the buffered side lands in
/// `post`-related states. `source: None` marks an insertion judgment —
/// the target statement runs while the plain side stays put.
#[derive(Debug, Clone)]
pub struct Judgment {
    pub env: TypeEnv,
    pub pre: Formula,
    pub source: Option<Stmt>,
    pub target: Stmt,
    pub post: Formula,
}

/// An entailment obligation attached to a consequence node, plus the
/// fingerprint of the query that discharges it (see [`certificate`]).
#[derive(Debug, Clone)]
pub struct Entailment {
    pub vc: Vc,
    pub certificate: String,
}

/// One derivation node: a rule, the judgment it concludes, its premise
/// subtrees, and any side entailments the rule requires.
#[derive(Debug, Clone)]
pub struct Derivation {
    pub rule: Rule,
    pub conclusion: Judgment,
    pub premises: Vec<Derivation>,
    pub side: Vec<Entailment>,
}

impl Derivation {
    /// Preorder walk carrying the path of premise indices from the root.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&[usize], &'a Derivation)) {
        fn go<'a>(
            d: &'a Derivation,
            path: &mut Vec<usize>,
            f: &mut impl FnMut(&[usize], &'a Derivation),
        ) {
            f(path, d);
            for (i, p) in d.premises.iter().enumerate() {
                path.push(i);
                go(p, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _| n += 1);
        n
    }

    pub fn side_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, d| n += d.side.len());
        n
    }
}

/// What [`translate`] decided and how much checking backed it.
#[derive(Debug, Clone)]
pub struct Report {
    /// Arrays rewritten into streams.
    pub converted: BTreeSet<Name>,
    /// Arrays left in memory, with the reason.
    pub kept: Vec<(Name, String)>,
    /// Chosen invariant per loop (preorder position).
    pub invariants: Vec<(usize, Formula)>,
    /// Solved window coefficients per (loop, array) group.
    pub coeffs: Vec<GroupCoeffs>,
    /// Conditions validated when the invariant assignment was accepted.
    pub vc_count: usize,
    /// Entailments recorded in the derivation (all re-checked).
    pub side_count: usize,
    /// Window candidates examined across all solver rounds.
    pub candidates_tried: usize,
    /// The backend swept parameters up to this value; its verdicts are
    /// exhaustive only within that box.
    pub param_max: i64,
    pub wall: Duration,
    pub notes: Vec<String>,
}

/// Knobs for [`translate`].
#[derive(Debug, Clone)]
pub struct TranslateConfig {
    /// Collapse `b = a.read(); x = b` to `x = a.read()` (and the mirrored
    /// write form) in the shipped program.
    pub simplify: bool,
    /// Half-width of the invariant template coefficient domain.
    pub coeff_range: i64,
    /// Largest parameter value the bounded backend instantiates.
    pub param_max: i64,
    /// Loop invariants to attach before analysis, as (preorder loop
    /// position, formula text) pairs.
    pub annotations: Vec<(usize, String)>,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        TranslateConfig {
            simplify: true,
            coeff_range: 2,
            param_max: 12,
            annotations: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error(transparent)]
    Vc(#[from] VcError),
    #[error("annotation targets loop {0}, but the program has only {1} loops")]
    AnnotationIndex(usize, usize),
    #[error("building the derivation failed: {0}")]
    Build(String),
    #[error("side condition `{0}` failed its bounded check: {1}")]
    Side(String, String),
}

/// Conjunction with nested conjunctions spliced in. Stored formulas stay
/// flat this way, which keeps them stable across the text round trip
/// (printing flattens conjunctions).
pub(crate) fn conj(parts: Vec<Formula>) -> Formula {
    let mut flat = Vec::new();
    for p in parts {
        match p {
            Formula::And(_) | Formula::True => {
                flat.extend(p.conjuncts().into_iter().cloned());
            }
            other => flat.push(other),
        }
    }
    Formula::and(flat)
}

/// The standing hypothesis every entailment may assume: each declared
/// parameter sits at or above its minimum.
pub(crate) fn param_facts(env: &TypeEnv) -> Formula {
    Formula::and(
        env.params()
            .map(|(n, min)| Formula::le(IntTerm::Const(min.clone()), IntTerm::var(n)))
            .collect(),
    )
}

/// The condition actually submitted to a backend for one entailment: the
/// schema-level hypothesis strengthened with the parameter minima.
pub fn discharge_form(vc: &Vc, env: &TypeEnv) -> Vc {
    let ranges: Vec<_> = vc.ranges.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    Vc::new(
        vc.label.clone(),
        vc.loop_idx,
        conj(vec![param_facts(env), vc.hypothesis.clone()]),
        vc.conclusion.clone(),
        &ranges,
    )
}

/// Short fingerprint of an entailment's discharge query. Hashes the
/// solver script when the condition lowers to one, and the printed
/// implication otherwise, truncated to 16 hex digits.
pub fn certificate(vc: &Vc, env: &TypeEnv) -> String {
    let q = discharge_form(vc, env);
    let text = match lower_query(&q) {
        Ok(s) => s,
        Err(_) => {
            use crate::assertions::text::print_formula;
            let ranges: Vec<String> = q
                .ranges
                .iter()
                .map(|(x, r)| format!("{x} in {:?}..{:?} by {}", r.init, r.bound, r.step))
                .collect();
            format!(
                "{}\n{} => {}",
                ranges.join("; "),
                print_formula(&q.hypothesis),
                print_formula(&q.conclusion)
            )
        }
    };
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Rewrites `p` into its buffered, stream-fed form and justifies the
/// rewrite with a derivation.
///
/// Starts from every array the accelerated region touches and retreats
/// one array at a time when invariant inference fails, so the worst case
/// is an unconverted program with an honest report. All side entailments
/// in the returned derivation have been discharged by the bounded
/// backend; [`check_derivation`] re-checks them independently.
pub fn translate(
    p: &Program,
    cfg: &TranslateConfig,
) -> Result<(Program, Derivation, Report), TranslateError> {
    let start = Instant::now();
    let p = annotate_loops(p, &cfg.annotations)?;
    let solve_cfg = SolveConfig { coeff_range: cfg.coeff_range, param_max: cfg.param_max };

    let mut convert = kernel_arrays(&p);
    let mut kept: Vec<(Name, String)> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let mut earlier_tried = 0usize;
    let (analysis, sol) = loop {
        let analysis = analyze(&p, &convert, cfg.simplify)?;
        match solve(&analysis, &solve_cfg)? {
            SolveOutcome::Solved(sol) => break (analysis, sol),
            SolveOutcome::GiveUp { loop_idx, array, candidates_tried } => {
                earlier_tried += candidates_tried;
                kept.push((
                    array.clone(),
                    format!("no window shape satisfied the loop {loop_idx} conditions"),
                ));
                notes.push(format!("dropped `{array}` from the conversion set"));
                convert.remove(&array);
            }
        }
    };

    // The derivation argues the two-step form; the shortcut, when on,
    // reshapes the shipped program only.
    let two_step = convert_host_accesses(&insert_buffers(&p, &analysis.plan, false), &convert, false);
    let target = if cfg.simplify {
        convert_host_accesses(&insert_buffers(&p, &analysis.plan, true), &convert, true)
    } else {
        two_step.clone()
    };

    let items = pair_program(&p, &analysis.plan, false);
    let deriv = build::derive(build::BuildInput {
        items: &items,
        env: two_step.env(),
        invariants: &sol.invariants,
        precondition: sol.precondition.clone(),
        final_anchor: sol.final_anchor.clone(),
    })
    .map_err(TranslateError::Build)?;

    // The derivation must talk about exactly the programs we ship.
    if deriv.conclusion.target.normalize() != two_step.body.normalize() {
        return Err(TranslateError::Build(
            "the derivation's target does not match the rewritten program".into(),
        ));
    }
    let src = deriv.conclusion.source.as_ref().map(Stmt::normalize);
    if src != Some(p.body.normalize()) {
        return Err(TranslateError::Build(
            "the derivation's source does not match the input program".into(),
        ));
    }

    // Re-discharge every recorded entailment before shipping.
    let mut side_count = 0usize;
    let mut failure: Option<(String, String)> = None;
    deriv.walk(&mut |_, node| {
        for e in &node.side {
            side_count += 1;
            if failure.is_some()
                || e.vc.hypothesis.normalize() == e.vc.conclusion.normalize()
            {
                continue;
            }
            let q = discharge_form(&e.vc, &node.conclusion.env);
            match check_vc(&q, &node.conclusion.env, &solve_cfg) {
                Verdict::Holds => {}
                Verdict::Fails(v) => {
                    failure = Some((e.vc.label.clone(), format!("refuted at {v:?}")));
                }
                Verdict::Unknown(msg) => failure = Some((e.vc.label.clone(), msg)),
            }
        }
    });
    if let Some((label, msg)) = failure {
        return Err(TranslateError::Side(label, msg));
    }

    let report = Report {
        converted: convert,
        kept,
        invariants: sol.invariants.clone(),
        coeffs: sol.coeffs.clone(),
        vc_count: sol.vcs.len(),
        side_count,
        candidates_tried: sol.candidates_tried + earlier_tried,
        param_max: cfg.param_max,
        wall: start.elapsed(),
        notes,
    };
    Ok((target, deriv, report))
}

/// Attaches invariant texts to loops by preorder position.
fn annotate_loops(
    p: &Program,
    notes: &[(usize, String)],
) -> Result<Program, TranslateError> {
    if notes.is_empty() {
        return Ok(p.clone());
    }
    let map: BTreeMap<usize, String> =
        notes.iter().map(|(k, t)| (*k, t.clone())).collect();
    let mut patched = p.clone();
    let mut pos = 0usize;
    fn go(s: &mut Stmt, pos: &mut usize, map: &BTreeMap<usize, String>) {
        match s {
            Stmt::Seq(a, b) => {
                go(a, pos, map);
                go(b, pos, map);
            }
            Stmt::If { then_s, else_s, .. } => {
                go(then_s, pos, map);
                go(else_s, pos, map);
            }
            Stmt::Kernel(b) => go(b, pos, map),
            Stmt::For { body, annot, .. } => {
                if let Some(text) = map.get(pos) {
                    *annot = Some(text.clone());
                }
                *pos += 1;
                go(body, pos, map);
            }
            _ => {}
        }
    }
    go(&mut patched.body, &mut pos, &map);
    if let Some((&bad, _)) = map.iter().find(|(&k, _)| k >= pos) {
        return Err(TranslateError::AnnotationIndex(bad, pos));
    }
    Ok(patched)
}

#[cfg(test)]
pub(crate) mod testutil {
    use std::sync::OnceLock;

    use super::{translate, Derivation, Report, TranslateConfig};
    use crate::ast::Program;
    use crate::frontend::parse_program;

    pub(crate) const FILTER: &str = "param N >= 2;\nrarr in;\nwarr out;\nint x, y0, y1, z0, z1;\n\
        for (x = 0; x != N; x += 1) { in[x] = x; }\n\
        kernel {\n  for (x = 0; x != N - 1; x += 1) {\n    y0 = in[x];\n    y1 = in[x + 1];\n    z0 = y0 + y1;\n    z1 = z0 / 2;\n    out[x] = z1;\n  }\n}\n";

    /// Shared translation of the windowed-average program. Solving takes
    /// about a second in debug builds, so every test reads one cached run.
    pub(crate) fn filter() -> &'static (Program, Derivation, Report) {
        static CELL: OnceLock<(Program, Derivation, Report)> = OnceLock::new();
        CELL.get_or_init(|| {
            let p = parse_program(FILTER).unwrap();
            translate(&p, &TranslateConfig::default()).unwrap()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::{filter, FILTER};
    use super::*;
    use crate::frontend::parse_program;

    #[test]
    fn the_running_example_converts_both_arrays() {
        let (target, deriv, report) = filter();
        let names: Vec<_> = report.converted.iter().cloned().collect();
        assert_eq!(names, ["in", "out"]);
        assert!(report.kept.is_empty());
        assert!(target.body.uses_streams());
        // The root concludes from the empty-stream precondition.
        let pre = crate::assertions::text::print_formula(&deriv.conclusion.pre);
        assert!(pre.contains("idx(in) = nil"), "root pre: {pre}");
        assert!(pre.contains("idx(out) = nil"), "root pre: {pre}");
        assert!(report.side_count > 0);
        assert!(report.vc_count > 0);
    }

    #[test]
    fn the_simplify_switch_controls_staging_reads() {
        let p = parse_program(FILTER).unwrap();
        let (simplified, _, _) = filter();
        let cfg = TranslateConfig { simplify: false, ..TranslateConfig::default() };
        let (two_step, deriv, _) = translate(&p, &cfg).unwrap();
        // The two-step body and the derivation's target agree exactly.
        assert_eq!(
            two_step.body.normalize(),
            deriv.conclusion.target.normalize()
        );
        assert_ne!(simplified.body.normalize(), two_step.body.normalize());
    }

    #[test]
    fn data_dependent_indices_fall_back_to_memory() {
        let src = r#"
param N;
rarr a;
rarr b;
warr out;
int i;
int t;
int u;

kernel {
    for (i = 0; i != N; i += 1) {
        t = b[i];
        u = a[t];
        out[i] = u;
    }
}
"#;
        let p = parse_program(src).unwrap();
        let (target, _, report) = translate(&p, &TranslateConfig::default()).unwrap();
        assert!(report.kept.iter().any(|(a, _)| a == "a"), "kept: {:?}", report.kept);
        assert!(report.converted.contains("b"));
        assert!(report.converted.contains("out"));
        // The kept array is still read as memory inside the kernel.
        fn has_read_of(s: &Stmt, arr: &str) -> bool {
            match s {
                Stmt::ReadArr { arr: a, .. } => a == arr,
                Stmt::Seq(x, y) => has_read_of(x, arr) || has_read_of(y, arr),
                Stmt::If { then_s, else_s, .. } => {
                    has_read_of(then_s, arr) || has_read_of(else_s, arr)
                }
                Stmt::For { body, .. } => has_read_of(body, arr),
                Stmt::Kernel(b) => has_read_of(b, arr),
                _ => false,
            }
        }
        assert!(has_read_of(&target.body, "a"));
    }

    #[test]
    fn retranslating_a_converted_program_converts_nothing() {
        let (target, _, report) = filter();
        assert_eq!(report.converted.len(), 2);
        let (again, _, report2) = translate(target, &TranslateConfig::default()).unwrap();
        assert!(report2.converted.is_empty());
        assert_eq!(again.body.normalize(), target.body.normalize());
    }

    #[test]
    fn annotations_attach_by_preorder_position() {
        let p = parse_program(FILTER).unwrap();
        let patched = annotate_loops(
            &p,
            &[(0, "idx(out) = nil".to_string())],
        )
        .unwrap();
        fn first_annot(s: &Stmt) -> Option<&String> {
            match s {
                Stmt::For { annot, .. } => annot.as_ref(),
                Stmt::Seq(a, b) => first_annot(a).or_else(|| first_annot(b)),
                Stmt::Kernel(b) => first_annot(b),
                _ => None,
            }
        }
        assert_eq!(first_annot(&patched.body).unwrap(), "idx(out) = nil");
        let err = annotate_loops(&p, &[(7, "true".to_string())]);
        assert!(matches!(err, Err(TranslateError::AnnotationIndex(7, _))));
    }

    #[test]
    fn rule_names_round_trip() {
        for r in Rule::ALL {
            assert_eq!(Rule::parse(r.name()), Some(r));
        }
        assert_eq!(Rule::parse("Tr-Nonsense"), None);
    }
}
