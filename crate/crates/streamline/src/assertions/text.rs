//! Compact text syntax for assertions.
//!
//! This is the form used in `//@ invariant` pragmas, in derivation JSON
//! files, and in annotated program output:
//!
//! ```text
//! idx(in) = [x + 1, N - 1; 1] && buf(b0) = in[x] && x notin idx(out)
//! ```
//!
//! Sequence terms are `idx(a)`, `nil`, `[low, high; step]`, `cons(t, S)`,
//! `snoc(S, t)` and `tail(S)`; integer terms include `a[i]`, `upd(a, i,
//! v)[j]`, `hd(S)`, `buf(b)` and parenthesized 0/1-valued comparisons like
//! `(x < y)`. Atoms are `=`/`==`, `!=`, `<=`, `<`, `in`, `notin`, `true`,
//! and `not(...)`; conjunction is `&&`. The words `idx`, `nil`, `cons`,
//! `snoc`, `tail`, `hd`, `buf`, `upd`, `true` and `not` are reserved and
//! cannot name variables. `in` and `notin` only act as operators after a
//! complete integer term, so arrays named `in` still work: `idx(in)`,
//! `in[x]`.
//!
//! Printing is canonical and `parse(print(f)) == f` for any formula whose
//! conjunctions are flat (printing flattens them). `a < b` parses as
//! `a + 1 <= b`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::assertions::{ArrayTerm, Formula, IndexRange, IntTerm, LinExpr, SeqTerm};
use crate::ast::{Int, Op};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct TextError(pub String);

// `in` and `notin` are not reserved: they act as operators only after a
// complete integer term, so `in[x]` and `idx(in)` still parse when an
// array is named `in`.
const RESERVED: &[&str] =
    &["idx", "nil", "cons", "snoc", "tail", "hd", "buf", "upd", "true", "not"];

// ---------------------------------------------------------------- printing

pub fn print_formula(f: &Formula) -> String {
    match f {
        Formula::And(parts) if parts.is_empty() => "true".to_string(),
        Formula::And(parts) => {
            parts.iter().map(print_atom).collect::<Vec<_>>().join(" && ")
        }
        other => print_atom(other),
    }
}

fn print_atom(f: &Formula) -> String {
    match f {
        Formula::True => "true".to_string(),
        Formula::Eq(l, r) => format!("{} = {}", print_int(l), print_int(r)),
        Formula::Le(l, r) => format!("{} <= {}", print_int(l), print_int(r)),
        Formula::Mem(t, s) => format!("{} in {}", print_int(t), print_seq(s)),
        Formula::SeqEq(l, r) => format!("{} = {}", print_seq(l), print_seq(r)),
        Formula::Not(inner) => match &**inner {
            Formula::Eq(l, r) => format!("{} != {}", print_int(l), print_int(r)),
            Formula::SeqEq(l, r) => format!("{} != {}", print_seq(l), print_seq(r)),
            Formula::Mem(t, s) => format!("{} notin {}", print_int(t), print_seq(s)),
            other => format!("not({})", print_formula(other)),
        },
        Formula::And(_) => format!("({})", print_formula(f)),
    }
}

pub fn print_int(t: &IntTerm) -> String {
    let mut out = String::new();
    print_int_prec(t, 1, &mut out);
    out
}

/// Precedence levels: sums 1, products 2, atoms 3. Comparisons print
/// self-parenthesized and count as atoms.
fn level(t: &IntTerm) -> u8 {
    match t {
        IntTerm::Bin(Op::Add | Op::Sub, _, _) => 1,
        IntTerm::Bin(Op::Mul | Op::Div | Op::Rem, _, _) => 2,
        _ => 3,
    }
}

fn print_int_prec(t: &IntTerm, min: u8, out: &mut String) {
    if level(t) < min {
        out.push('(');
        print_int_prec(t, 1, out);
        out.push(')');
        return;
    }
    match t {
        IntTerm::Const(n) => {
            let _ = write!(out, "{n}");
        }
        IntTerm::Var(x) => out.push_str(x),
        IntTerm::Buf(b) => {
            let _ = write!(out, "buf({b})");
        }
        IntTerm::Select(a, i) => {
            print_array(a, out);
            out.push('[');
            print_int_prec(i, 1, out);
            out.push(']');
        }
        IntTerm::Head(s) => {
            let _ = write!(out, "hd({})", print_seq(s));
        }
        IntTerm::Bin(op @ (Op::Add | Op::Sub), l, r) => {
            // No sign folding on constant right operands: `x + -1` stays
            // distinct from `x - 1` so printing inverts parsing exactly.
            print_int_prec(l, 1, out);
            let _ = write!(out, " {} ", if *op == Op::Add { "+" } else { "-" });
            print_int_prec(r, 2, out);
        }
        IntTerm::Bin(op @ (Op::Mul | Op::Div | Op::Rem), l, r) => {
            print_int_prec(l, 2, out);
            let sym = match op {
                Op::Mul => "*",
                Op::Div => "/",
                _ => "%",
            };
            let _ = write!(out, " {sym} ");
            print_int_prec(r, 3, out);
        }
        IntTerm::Bin(op, l, r) => {
            // 0/1-valued comparison terms, always parenthesized.
            let sym = match op {
                Op::Lt => "<",
                Op::Le => "<=",
                Op::Eq => "==",
                _ => unreachable!("arithmetic handled above"),
            };
            out.push('(');
            print_int_prec(l, 1, out);
            let _ = write!(out, " {sym} ");
            print_int_prec(r, 1, out);
            out.push(')');
        }
    }
}

fn print_array(a: &ArrayTerm, out: &mut String) {
    match a {
        ArrayTerm::Var(x) => out.push_str(x),
        ArrayTerm::Update(b, i, v) => {
            out.push_str("upd(");
            print_array(b, out);
            out.push_str(", ");
            print_int_prec(i, 1, out);
            out.push_str(", ");
            print_int_prec(v, 1, out);
            out.push(')');
        }
    }
}

pub fn print_seq(s: &SeqTerm) -> String {
    match s {
        SeqTerm::Var(a) => format!("idx({a})"),
        SeqTerm::Nil => "nil".to_string(),
        SeqTerm::Cons(t, rest) => format!("cons({}, {})", print_int(t), print_seq(rest)),
        SeqTerm::Snoc(rest, t) => format!("snoc({}, {})", print_seq(rest), print_int(t)),
        SeqTerm::Tail(rest) => format!("tail({})", print_seq(rest)),
        SeqTerm::Range(r) => format!("[{}, {}; {}]", r.low, r.high, r.step),
    }
}

// ----------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq, Eq)]
enum T {
    Num(Int),
    Word(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    AndAnd,
    Assign,   // =
    EqEq,     // ==
    Ne,       // !=
    Le,       // <=
    Lt,       // <
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    End,
}

fn tokenize(src: &str) -> Result<Vec<T>, TextError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                toks.push(T::Num(text.parse().expect("digits")));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push(T::Word(chars[start..i].iter().collect()));
            }
            '&' if chars.get(i + 1) == Some(&'&') => {
                toks.push(T::AndAnd);
                i += 2;
            }
            '=' if chars.get(i + 1) == Some(&'=') => {
                toks.push(T::EqEq);
                i += 2;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                toks.push(T::Ne);
                i += 2;
            }
            '<' if chars.get(i + 1) == Some(&'=') => {
                toks.push(T::Le);
                i += 2;
            }
            _ => {
                let t = match c {
                    '(' => T::LParen,
                    ')' => T::RParen,
                    '[' => T::LBracket,
                    ']' => T::RBracket,
                    ',' => T::Comma,
                    ';' => T::Semi,
                    '=' => T::Assign,
                    '<' => T::Lt,
                    '+' => T::Plus,
                    '-' => T::Minus,
                    '*' => T::Star,
                    '/' => T::Slash,
                    '%' => T::Percent,
                    other => return Err(TextError(format!("unexpected character `{other}`"))),
                };
                toks.push(t);
                i += 1;
            }
        }
    }
    toks.push(T::End);
    Ok(toks)
}

pub fn parse_formula(src: &str) -> Result<Formula, TextError> {
    let toks = tokenize(src)?;
    let mut p = P { toks, pos: 0 };
    let f = p.formula()?;
    p.expect(T::End)?;
    Ok(f)
}

/// Parses a single integer term (used by tests and tools).
pub fn parse_int(src: &str) -> Result<IntTerm, TextError> {
    let toks = tokenize(src)?;
    let mut p = P { toks, pos: 0 };
    let t = p.sum()?;
    p.expect(T::End)?;
    Ok(t)
}

struct P {
    toks: Vec<T>,
    pos: usize,
}

impl P {
    fn peek(&self) -> &T {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> T {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: T) -> Result<(), TextError> {
        let got = self.bump();
        if got == want {
            Ok(())
        } else {
            Err(TextError(format!("expected {want:?}, found {got:?}")))
        }
    }

    fn word_is(&self, w: &str) -> bool {
        matches!(self.peek(), T::Word(s) if s == w)
    }

    fn ident(&mut self) -> Result<String, TextError> {
        match self.bump() {
            T::Word(w) if !RESERVED.contains(&w.as_str()) => Ok(w),
            T::Word(w) => Err(TextError(format!("`{w}` is a reserved word"))),
            other => Err(TextError(format!("expected identifier, found {other:?}"))),
        }
    }

    fn formula(&mut self) -> Result<Formula, TextError> {
        let mut parts = vec![self.atom()?];
        while *self.peek() == T::AndAnd {
            self.bump();
            parts.push(self.atom()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one element")
        } else {
            Formula::And(parts)
        })
    }

    fn atom(&mut self) -> Result<Formula, TextError> {
        if self.word_is("true") {
            self.bump();
            return Ok(Formula::True);
        }
        if self.word_is("not") {
            self.bump();
            self.expect(T::LParen)?;
            let inner = self.formula()?;
            self.expect(T::RParen)?;
            return Ok(Formula::not(inner));
        }
        if self.seq_ahead() {
            let l = self.seqterm()?;
            return match self.bump() {
                T::Assign | T::EqEq => Ok(Formula::SeqEq(l, self.seqterm()?)),
                T::Ne => Ok(Formula::not(Formula::SeqEq(l, self.seqterm()?))),
                other => Err(TextError(format!(
                    "expected `=` or `!=` after sequence term, found {other:?}"
                ))),
            };
        }
        let l = self.sum()?;
        match self.bump() {
            T::Assign | T::EqEq => Ok(Formula::Eq(l, self.sum()?)),
            T::Ne => Ok(Formula::neq(l, self.sum()?)),
            T::Le => Ok(Formula::Le(l, self.sum()?)),
            // `a < b` is sugar for `a + 1 <= b` over the integers.
            T::Lt => Ok(Formula::Le(
                IntTerm::bin(Op::Add, l, IntTerm::int(1)),
                self.sum()?,
            )),
            T::Word(w) if w == "in" => Ok(Formula::Mem(l, self.seqterm()?)),
            T::Word(w) if w == "notin" => Ok(Formula::not(Formula::Mem(l, self.seqterm()?))),
            other => Err(TextError(format!("expected a relation, found {other:?}"))),
        }
    }

    /// True when the next tokens begin a sequence term.
    fn seq_ahead(&self) -> bool {
        match self.peek() {
            T::LBracket => true,
            T::Word(w) => matches!(w.as_str(), "idx" | "nil" | "cons" | "snoc" | "tail"),
            _ => false,
        }
    }

    fn seqterm(&mut self) -> Result<SeqTerm, TextError> {
        match self.bump() {
            T::Word(w) if w == "idx" => {
                self.expect(T::LParen)?;
                let a = self.ident()?;
                self.expect(T::RParen)?;
                Ok(SeqTerm::Var(a))
            }
            T::Word(w) if w == "nil" => Ok(SeqTerm::Nil),
            T::Word(w) if w == "cons" => {
                self.expect(T::LParen)?;
                let t = self.sum()?;
                self.expect(T::Comma)?;
                let s = self.seqterm()?;
                self.expect(T::RParen)?;
                Ok(SeqTerm::cons(t, s))
            }
            T::Word(w) if w == "snoc" => {
                self.expect(T::LParen)?;
                let s = self.seqterm()?;
                self.expect(T::Comma)?;
                let t = self.sum()?;
                self.expect(T::RParen)?;
                Ok(SeqTerm::snoc(s, t))
            }
            T::Word(w) if w == "tail" => {
                self.expect(T::LParen)?;
                let s = self.seqterm()?;
                self.expect(T::RParen)?;
                Ok(SeqTerm::tail(s))
            }
            T::LBracket => {
                let low = self.linear()?;
                self.expect(T::Comma)?;
                let high = self.linear()?;
                self.expect(T::Semi)?;
                let step = self.linear()?;
                self.expect(T::RBracket)?;
                Ok(SeqTerm::Range(IndexRange::new(low, high, step)))
            }
            other => Err(TextError(format!("expected a sequence term, found {other:?}"))),
        }
    }

    fn linear(&mut self) -> Result<LinExpr, TextError> {
        let t = self.sum()?;
        t.linearize().ok_or_else(|| {
            TextError(format!("range bounds must be linear, got `{}`", print_int(&t)))
        })
    }

    fn sum(&mut self) -> Result<IntTerm, TextError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                T::Plus => Op::Add,
                T::Minus => Op::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = IntTerm::bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<IntTerm, TextError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                T::Star => Op::Mul,
                T::Slash => Op::Div,
                T::Percent => Op::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = IntTerm::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<IntTerm, TextError> {
        if *self.peek() == T::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                IntTerm::Const(n) => IntTerm::Const(-n),
                other => IntTerm::bin(Op::Sub, IntTerm::int(0), other),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<IntTerm, TextError> {
        match self.bump() {
            T::Num(n) => Ok(IntTerm::Const(n)),
            T::Word(w) if w == "hd" => {
                self.expect(T::LParen)?;
                let s = self.seqterm()?;
                self.expect(T::RParen)?;
                Ok(IntTerm::Head(Box::new(s)))
            }
            T::Word(w) if w == "buf" => {
                self.expect(T::LParen)?;
                let b = self.ident()?;
                self.expect(T::RParen)?;
                Ok(IntTerm::Buf(b))
            }
            T::Word(w) if w == "upd" => {
                let arr = self.update_tail()?;
                self.maybe_select(arr)
            }
            T::Word(w) if RESERVED.contains(&w.as_str()) => {
                Err(TextError(format!("`{w}` is a reserved word")))
            }
            T::Word(w) => self.maybe_select(ArrayTerm::Var(w)),
            T::LParen => {
                let l = self.sum()?;
                let cmp = match self.peek() {
                    T::Lt => Some(Op::Lt),
                    T::Le => Some(Op::Le),
                    T::EqEq | T::Assign => Some(Op::Eq),
                    _ => None,
                };
                if let Some(op) = cmp {
                    self.bump();
                    let r = self.sum()?;
                    self.expect(T::RParen)?;
                    return Ok(IntTerm::bin(op, l, r));
                }
                self.expect(T::RParen)?;
                Ok(l)
            }
            other => Err(TextError(format!("expected an integer term, found {other:?}"))),
        }
    }

    /// Body of `upd(a, i, v)` after the word `upd`, with nesting.
    fn update_tail(&mut self) -> Result<ArrayTerm, TextError> {
        self.expect(T::LParen)?;
        let base = if self.word_is("upd") {
            self.bump();
            self.update_tail()?
        } else {
            ArrayTerm::Var(self.ident()?)
        };
        self.expect(T::Comma)?;
        let i = self.sum()?;
        self.expect(T::Comma)?;
        let v = self.sum()?;
        self.expect(T::RParen)?;
        Ok(ArrayTerm::update(base, i, v))
    }

    /// A parsed array position becomes a select if `[i]` follows; a bare
    /// array variable name denotes the integer variable of that name.
    fn maybe_select(&mut self, arr: ArrayTerm) -> Result<IntTerm, TextError> {
        if *self.peek() == T::LBracket {
            self.bump();
            let i = self.sum()?;
            self.expect(T::RBracket)?;
            return Ok(IntTerm::Select(arr, Box::new(i)));
        }
        match arr {
            ArrayTerm::Var(x) => Ok(IntTerm::Var(x)),
            upd @ ArrayTerm::Update(..) => Err(TextError(format!(
                "array term `{}` needs a `[index]` to be an integer",
                {
                    let mut s = String::new();
                    print_array(&upd, &mut s);
                    s
                }
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn roundtrip(f: &Formula) {
        let printed = print_formula(f);
        let parsed = parse_formula(&printed)
            .unwrap_or_else(|e| panic!("parsing printed form `{printed}`: {e}"));
        assert_eq!(&parsed, f, "printed form was `{printed}`");
    }

    #[test]
    fn parses_the_loop_invariant_shape() {
        let f = parse_formula(
            "idx(in) = [x + 1, N - 1; 1] && buf(b0) = in[x] && x notin idx(out)",
        )
        .unwrap();
        let parts = f.conjuncts();
        assert_eq!(parts.len(), 3);
        assert!(matches!(parts[0], Formula::SeqEq(SeqTerm::Var(a), SeqTerm::Range(_)) if a == "in"));
        assert!(
            matches!(parts[1], Formula::Eq(IntTerm::Buf(b), IntTerm::Select(..)) if b == "b0")
        );
        roundtrip(&f);
    }

    #[test]
    fn strict_less_than_desugars() {
        let f = parse_formula("x < N").unwrap();
        assert_eq!(
            f,
            Formula::Le(
                IntTerm::bin(Op::Add, IntTerm::var("x"), IntTerm::int(1)),
                IntTerm::var("N")
            )
        );
    }

    #[test]
    fn negations_print_as_operators() {
        let ne = Formula::neq(IntTerm::var("x"), IntTerm::var("N"));
        assert_eq!(print_formula(&ne), "x != N");
        let notin = Formula::not(Formula::Mem(IntTerm::var("x"), SeqTerm::idx("out")));
        assert_eq!(print_formula(&notin), "x notin idx(out)");
        roundtrip(&ne);
        roundtrip(&notin);
    }

    #[test]
    fn nested_updates_and_selects_roundtrip() {
        let f = parse_formula("upd(upd(a, 0, 1), i + 1, v)[j] = 3").unwrap();
        roundtrip(&f);
        let g = parse_formula("hd(tail(idx(a))) = a[hd(idx(b))]").unwrap();
        roundtrip(&g);
    }

    #[test]
    fn comparison_valued_terms_roundtrip() {
        let f = parse_formula("(x < y) = 1 && (i == j) = flag").unwrap();
        roundtrip(&f);
    }

    #[test]
    fn multiplication_needs_parens_around_sums() {
        let t = IntTerm::bin(
            Op::Mul,
            IntTerm::int(2),
            IntTerm::bin(Op::Add, IntTerm::var("x"), IntTerm::int(1)),
        );
        assert_eq!(print_int(&t), "2 * (x + 1)");
        assert_eq!(parse_int("2 * (x + 1)").unwrap(), t);
    }

    #[test]
    fn negative_constants_print_structurally() {
        // `x + -1` and `x - 1` are different terms and stay distinguishable
        // in text, so parsing inverts printing on the nose.
        let plus_neg = IntTerm::bin(Op::Add, IntTerm::var("x"), IntTerm::int(-1));
        assert_eq!(print_int(&plus_neg), "x + -1");
        assert_eq!(parse_int("x + -1").unwrap(), plus_neg);
        let minus = IntTerm::bin(Op::Sub, IntTerm::var("x"), IntTerm::int(1));
        assert_eq!(print_int(&minus), "x - 1");
        assert_eq!(parse_int("x - 1").unwrap(), minus);
    }

    #[test]
    fn reserved_words_cannot_be_variables() {
        assert!(parse_formula("nil = 3").is_err());
        assert!(parse_formula("idx = 3").is_err());
    }

    #[test]
    fn nonlinear_range_bounds_are_rejected() {
        assert!(parse_formula("idx(a) = [x * x, N; 1]").is_err());
        assert!(parse_formula("idx(a) = [a[0], N; 1]").is_err());
    }

    #[test]
    fn random_formulas_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e3779b9);
        for _ in 0..500 {
            let f = crate::assertions::gen::formula(&mut rng, 3);
            roundtrip(&f);
        }
    }
}
