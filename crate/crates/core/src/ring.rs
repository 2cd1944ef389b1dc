//! Exact coefficient arithmetic: rationals, base polynomials in q1..qn,
//! truncation bookkeeping and the polynomial text syntax.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Scalar = BigRational;

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

pub fn factorial(n: u32) -> Scalar {
    (1..=n as i64).fold(int(1), |acc, k| acc * int(k))
}

/// Falling factorial e!/(e-m)! for exponent vectors, componentwise product.
pub fn falling(e: &[u32], m: &[u32]) -> Scalar {
    let mut out: i64 = 1;
    let mut big: Option<Scalar> = None;
    for (&ei, &mi) in e.iter().zip(m) {
        for j in 0..mi {
            let f = (ei - j) as i64;
            match out.checked_mul(f) {
                Some(v) => out = v,
                None => {
                    let b = big.take().unwrap_or_else(|| int(1)) * int(out);
                    big = Some(b);
                    out = f;
                }
            }
        }
    }
    match big {
        Some(b) => b * int(out),
        None => int(out),
    }
}

pub fn multi_factorial(m: &[u32]) -> Scalar {
    m.iter().fold(int(1), |acc, &k| acc * factorial(k))
}

/// Integer power of a scalar.
pub fn pow(x: &Scalar, k: u32) -> Scalar {
    let mut out = int(1);
    for _ in 0..k {
        out *= x;
    }
    out
}

/// Text form of a scalar: integers bare, fractions in parentheses.
pub fn scalar_text(c: &Scalar) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("({}/{})", c.numer(), c.denom())
    }
}

/// Parse `a` or `a/b` into a rational.
pub fn parse_scalar(s: &str) -> Result<Scalar> {
    let bad = || Error::Input(format!("not a rational number: {s:?}"));
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().map_err(|_| bad())?;
    let d: BigInt = den.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Scalar::new(n, d))
}

pub(crate) fn add_exps(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn total(e: &[u32]) -> u32 {
    e.iter().sum()
}

/// All exponent vectors of length `len` with total degree exactly `deg`.
pub fn exponents_of_degree(len: usize, deg: u32) -> Vec<Vec<u32>> {
    if len == 0 {
        return if deg == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=deg).rev() {
        for mut rest in exponents_of_degree(len - 1, deg - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// All exponent vectors of length `len` with total degree at most `deg`,
/// ordered by degree.
pub fn exponents_up_to(len: usize, deg: u32) -> Vec<Vec<u32>> {
    (0..=deg).flat_map(|d| exponents_of_degree(len, d)).collect()
}

/// Polynomial in the base coordinates q1..qn with rational coefficients.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct BasePoly {
    arity: usize,
    terms: BTreeMap<Vec<u32>, Scalar>,
}

impl BasePoly {
    pub fn zero(arity: usize) -> Self {
        BasePoly { arity, terms: BTreeMap::new() }
    }

    pub fn constant(arity: usize, c: Scalar) -> Self {
        let mut p = Self::zero(arity);
        p.add_term(vec![0; arity], c);
        p
    }

    pub fn one(arity: usize) -> Self {
        Self::constant(arity, int(1))
    }

    /// The coordinate function q^(i+1).
    pub fn var(arity: usize, i: usize) -> Self {
        let mut e = vec![0; arity];
        e[i] = 1;
        Self::monomial(e, int(1))
    }

    pub fn monomial(exps: Vec<u32>, c: Scalar) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Scalar)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The constant term, if the polynomial is a constant.
    pub fn as_constant(&self) -> Option<Scalar> {
        match self.terms.len() {
            0 => Some(int(0)),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&x| x == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| total(e)).max()
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: Scalar) {
        debug_assert_eq!(exps.len(), self.arity);
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add_assign_scaled(&mut self, other: &BasePoly, c: &Scalar) {
        if c.is_zero() {
            return;
        }
        for (e, v) in &other.terms {
            self.add_term(e.clone(), v * c);
        }
    }

    pub fn scale(&self, c: &Scalar) -> BasePoly {
        if c.is_zero() {
            return BasePoly::zero(self.arity);
        }
        BasePoly {
            arity: self.arity,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    fn check_arity(&self, other: &BasePoly) -> Result<()> {
        if self.arity != other.arity {
            return Err(Error::Arity { expected: self.arity, found: other.arity });
        }
        Ok(())
    }

    /// Exact product; errors on arity mismatch.
    pub fn try_mul(&self, other: &BasePoly) -> Result<BasePoly> {
        self.check_arity(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &BasePoly) -> BasePoly {
        let mut out = BasePoly::zero(self.arity);
        if self.arity == 0 {
            if let (Some(a), Some(b)) = (self.terms.get(&vec![]), other.terms.get(&vec![])) {
                out.add_term(vec![], a * b);
            }
            return out;
        }
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out.add_term(add_exps(ea, eb), ca * cb);
            }
        }
        out
    }

    /// Partial derivative along q^(i+1) (zero-based `i`).
    pub fn partial(&self, i: usize) -> Result<BasePoly> {
        if i >= self.arity {
            return Err(Error::Index { index: i + 1, bound: self.arity });
        }
        Ok(self.partial_unchecked(i))
    }

    pub(crate) fn partial_unchecked(&self, i: usize) -> BasePoly {
        let mut out = BasePoly::zero(self.arity);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                out.add_term(f, c * int(e[i] as i64));
            }
        }
        out
    }

    /// Substitute polynomials for every coordinate.
    pub fn substitute(&self, values: &[BasePoly], arity: usize) -> BasePoly {
        let mut out = BasePoly::zero(arity);
        for (e, c) in &self.terms {
            let mut t = BasePoly::constant(arity, c.clone());
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t = &t * &values[i];
                }
            }
            out = &out + &t;
        }
        out
    }
}

impl Add for &BasePoly {
    type Output = BasePoly;
    fn add(self, rhs: &BasePoly) -> BasePoly {
        assert_eq!(self.arity, rhs.arity, "base polynomial arity mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &BasePoly {
    type Output = BasePoly;
    fn sub(self, rhs: &BasePoly) -> BasePoly {
        assert_eq!(self.arity, rhs.arity, "base polynomial arity mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }
}

impl Mul for &BasePoly {
    type Output = BasePoly;
    fn mul(self, rhs: &BasePoly) -> BasePoly {
        assert_eq!(self.arity, rhs.arity, "base polynomial arity mismatch");
        self.mul_unchecked(rhs)
    }
}

impl Neg for &BasePoly {
    type Output = BasePoly;
    fn neg(self) -> BasePoly {
        self.scale(&int(-1))
    }
}

/// Writes `+ c x y - d z` style sums. Each term is a coefficient and the
/// list of already formatted factor groups (joined with a space).
pub(crate) fn write_sum<'a, I>(f: &mut fmt::Formatter<'_>, terms: I) -> fmt::Result
where
    I: IntoIterator<Item = (&'a Scalar, Vec<String>)>,
{
    let mut first = true;
    for (c, groups) in terms {
        let neg = c.is_negative();
        let mag = c.abs();
        let body = {
            let mut parts = Vec::new();
            if !mag.is_one() || groups.is_empty() {
                parts.push(scalar_text(&mag));
            }
            parts.extend(groups);
            parts.join(" ")
        };
        match (first, neg) {
            (true, false) => write!(f, "{body}")?,
            (true, true) => write!(f, "-{body}")?,
            (false, false) => write!(f, " + {body}")?,
            (false, true) => write!(f, " - {body}")?,
        }
        first = false;
    }
    if first {
        write!(f, "0")?;
    }
    Ok(())
}

/// `q1^2*q3` style monomial text; empty for the unit monomial.
pub(crate) fn monomial_text(prefix: &str, exps: &[u32]) -> Vec<String> {
    exps.iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| {
            if k == 1 {
                format!("{prefix}{}", i + 1)
            } else {
                format!("{prefix}{}^{k}", i + 1)
            }
        })
        .collect()
}

pub(crate) fn nu_text(k: u32) -> Option<String> {
    match k {
        0 => None,
        1 => Some("nu".to_string()),
        k => Some(format!("nu^{k}")),
    }
}

impl fmt::Display for BasePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_sum(
            f,
            self.terms.iter().rev().map(|(e, c)| {
                let m = monomial_text("q", e);
                (c, if m.is_empty() { vec![] } else { vec![m.join("*")] })
            }),
        )
    }
}

/// Truncation of formal series: ν-powers above `max_nu` (L) and total
/// degrees above `max_deg` (T) are dropped.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NuTruncation {
    pub max_nu: u32,
    pub max_deg: u32,
}

impl NuTruncation {
    pub fn new(max_nu: u32, max_deg: u32) -> Result<Self> {
        if max_deg < max_nu {
            return Err(Error::Input(format!(
                "total degree bound T={max_deg} is below the nu-order L={max_nu}"
            )));
        }
        Ok(NuTruncation { max_nu, max_deg })
    }

    /// Same bound on ν-power and total degree.
    pub fn uniform(l: u32) -> Self {
        NuTruncation { max_nu: l, max_deg: l }
    }

    pub fn keeps(&self, nu: u32, deg: u32) -> bool {
        nu <= self.max_nu && deg <= self.max_deg
    }

    /// One step wider in both bounds.
    pub fn widened(&self) -> Self {
        NuTruncation { max_nu: self.max_nu + 1, max_deg: self.max_deg + 1 }
    }
}

/// Objects carrying ν-graded terms that can be cut down to a truncation.
pub trait Truncate: Sized {
    fn truncate(&self, t: NuTruncation) -> Self;
}

/// Polynomial in q1..qn, p1..pN and nu, as produced by the parser.
/// Exponent vectors have length n + N + 1 with the ν-power last.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct RawPoly {
    pub terms: BTreeMap<Vec<u32>, Scalar>,
}

impl RawPoly {
    fn constant(len: usize, c: Scalar) -> RawPoly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(vec![0; len], c);
        }
        RawPoly { terms }
    }

    fn add(mut self, other: RawPoly, sign: i64) -> RawPoly {
        for (e, c) in other.terms {
            let v = self.terms.entry(e.clone()).or_insert_with(|| int(0));
            *v += c * int(sign);
            if v.is_zero() {
                self.terms.remove(&e);
            }
        }
        self
    }

    fn mul(&self, other: &RawPoly) -> RawPoly {
        let mut out = RawPoly::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out = out.add(
                    RawPoly { terms: [(add_exps(ea, eb), ca * cb)].into_iter().collect() },
                    1,
                );
            }
        }
        out
    }

    fn as_constant(&self) -> Option<Scalar> {
        match self.terms.len() {
            0 => Some(int(0)),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&x| x == 0).then(|| c.clone())
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Var(usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

/// Recursive-descent parser for the polynomial text syntax.
///
/// Accepts integer literals, `q<i>`, `p<a>`, `nu`, `+ - * / ^`, parentheses
/// and juxtaposition as multiplication (so printed output parses back).
/// Division is only allowed by a nonzero constant.
pub struct PolyParser {
    n: usize,
    rank: usize,
    allow_p: bool,
    allow_nu: bool,
}

impl PolyParser {
    pub fn new(n: usize, rank: usize) -> Self {
        PolyParser { n, rank, allow_p: true, allow_nu: true }
    }

    /// Parser restricted to base coordinates.
    pub fn base(n: usize) -> Self {
        PolyParser { n, rank: 0, allow_p: false, allow_nu: false }
    }

    fn width(&self) -> usize {
        self.n + self.rank + 1
    }

    pub fn parse(&self, text: &str) -> Result<RawPoly> {
        self.parse_at(text, 1, 1)
    }

    /// Parse with error positions offset to a location in a larger file.
    pub fn parse_at(&self, text: &str, line: usize, col0: usize) -> Result<RawPoly> {
        let toks = self.lex(text, line, col0)?;
        let mut st = ParseState { toks: &toks, pos: 0, line, end_col: col0 + text.len() };
        let v = self.expr(&mut st)?;
        if st.pos != toks.len() {
            return Err(st.err_here("unexpected token"));
        }
        Ok(v)
    }

    pub fn parse_base(&self, text: &str) -> Result<BasePoly> {
        let raw = self.parse(text)?;
        raw_to_base(&raw, self.n, self.rank)
    }

    fn lex(&self, text: &str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        let err = |i: usize, msg: String| Error::Parse { line, col: col0 + i, msg };
        while i < chars.len() {
            let ch = chars[i];
            let start = i;
            let tok = match ch {
                ' ' | '\t' => {
                    i += 1;
                    continue;
                }
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                c if c.is_ascii_digit() => {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let s: String = chars[start..i].iter().collect();
                    out.push((Tok::Num(s.parse().unwrap()), col0 + start));
                    continue;
                }
                c if c.is_ascii_alphabetic() => {
                    while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                        i += 1;
                    }
                    let s: String = chars[start..i].iter().collect();
                    let idx = self.variable(&s).map_err(|m| err(start, m))?;
                    out.push((Tok::Var(idx), col0 + start));
                    continue;
                }
                c => return Err(err(i, format!("unexpected character {c:?}"))),
            };
            out.push((tok, col0 + i));
            i += 1;
        }
        Ok(out)
    }

    fn variable(&self, s: &str) -> std::result::Result<usize, String> {
        if s == "nu" {
            return if self.allow_nu {
                Ok(self.n + self.rank)
            } else {
                Err("nu is not allowed here".into())
            };
        }
        let (kind, digits) = s.split_at(1);
        let idx: usize = digits.parse().map_err(|_| format!("unknown variable {s:?}"))?;
        match kind {
            "q" if (1..=self.n).contains(&idx) => Ok(idx - 1),
            "p" if self.allow_p && (1..=self.rank).contains(&idx) => Ok(self.n + idx - 1),
            "q" | "p" => Err(format!("variable {s} out of range")),
            _ => Err(format!("unknown variable {s:?}")),
        }
    }

    fn expr(&self, st: &mut ParseState) -> Result<RawPoly> {
        let mut acc = self.term(st)?;
        loop {
            match st.peek() {
                Some(Tok::Plus) => {
                    st.pos += 1;
                    acc = acc.add(self.term(st)?, 1);
                }
                Some(Tok::Minus) => {
                    st.pos += 1;
                    acc = acc.add(self.term(st)?, -1);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&self, st: &mut ParseState) -> Result<RawPoly> {
        let mut acc = self.unary(st)?;
        loop {
            match st.peek() {
                Some(Tok::Star) => {
                    st.pos += 1;
                    acc = acc.mul(&self.unary(st)?);
                }
                Some(Tok::Slash) => {
                    st.pos += 1;
                    let d = self.unary(st)?;
                    let c = d
                        .as_constant()
                        .filter(|c| !c.is_zero())
                        .ok_or_else(|| st.err_prev("division only by a nonzero constant"))?;
                    acc = acc.mul(&RawPoly::constant(self.width(), c.recip()));
                }
                Some(Tok::Num(_)) | Some(Tok::Var(_)) | Some(Tok::LParen) => {
                    acc = acc.mul(&self.power(st)?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&self, st: &mut ParseState) -> Result<RawPoly> {
        match st.peek() {
            Some(Tok::Minus) => {
                st.pos += 1;
                let v = self.unary(st)?;
                Ok(RawPoly::default().add(v, -1))
            }
            Some(Tok::Plus) => {
                st.pos += 1;
                self.unary(st)
            }
            _ => self.power(st),
        }
    }

    fn power(&self, st: &mut ParseState) -> Result<RawPoly> {
        let base = self.atom(st)?;
        if st.peek() == Some(&Tok::Caret) {
            st.pos += 1;
            let k = match st.next() {
                Some(Tok::Num(k)) => k.to_u32().ok_or_else(|| st.err_prev("exponent too large"))?,
                _ => return Err(st.err_prev("expected a non-negative integer exponent")),
            };
            let mut out = RawPoly::constant(self.width(), int(1));
            for _ in 0..k {
                out = out.mul(&base);
            }
            return Ok(out);
        }
        Ok(base)
    }

    fn atom(&self, st: &mut ParseState) -> Result<RawPoly> {
        match st.next() {
            Some(Tok::Num(v)) => Ok(RawPoly::constant(self.width(), Scalar::from_integer(v))),
            Some(Tok::Var(i)) => {
                let mut e = vec![0; self.width()];
                e[i] = 1;
                Ok(RawPoly { terms: [(e, int(1))].into_iter().collect() })
            }
            Some(Tok::LParen) => {
                let v = self.expr(st)?;
                match st.next() {
                    Some(Tok::RParen) => Ok(v),
                    _ => Err(st.err_prev("expected ')'")),
                }
            }
            Some(_) => Err(st.err_prev("unexpected token")),
            None => Err(st.err_here("unexpected end of input")),
        }
    }
}

struct ParseState<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl ParseState<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn err_here(&self, msg: &str) -> Error {
        let col = self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.end_col);
        Error::Parse { line: self.line, col, msg: msg.to_string() }
    }

    fn err_prev(&self, msg: &str) -> Error {
        let col = self
            .toks
            .get(self.pos.saturating_sub(1))
            .map(|(_, c)| *c)
            .unwrap_or(self.end_col);
        Error::Parse { line: self.line, col, msg: msg.to_string() }
    }
}

/// Restrict a parsed polynomial to the base coordinates.
pub fn raw_to_base(raw: &RawPoly, n: usize, rank: usize) -> Result<BasePoly> {
    let mut out = BasePoly::zero(n);
    for (e, c) in &raw.terms {
        if e[n..].iter().any(|&k| k > 0) {
            return Err(Error::Input(
                "expected a polynomial in the base coordinates q1..qn only".into(),
            ));
        }
        debug_assert_eq!(e.len(), n + rank + 1);
        out.add_term(e[..n].to_vec(), c.clone());
    }
    Ok(out)
}
