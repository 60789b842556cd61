//! Payoff expressions over `S1..SJ`: numbers, `+ - *`, parentheses,
//! `max(...)` and `min(...)`.
//!
//! Expressions that spell out one of the named payoffs are turned into that
//! payoff, so they keep its convexity and sub-modularity flags. Anything
//! else becomes a custom payoff with both flags unset.

use std::fmt;
use std::sync::Arc;

use rainbow_hedge::payoffs::{make_payoff, Payoff, PayoffKind, PayoffParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based asset index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(i) => z[*i],
            Expr::Neg(a) => -a.eval(z),
            Expr::Add(a, b) => a.eval(z) + b.eval(z),
            Expr::Sub(a, b) => a.eval(z) - b.eval(z),
            Expr::Mul(a, b) => a.eval(z) * b.eval(z),
            Expr::Max(xs) => xs.iter().map(|x| x.eval(z)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(xs) => xs.iter().map(|x| x.eval(z)).fold(f64::INFINITY, f64::min),
        }
    }

    /// `(w, c)` with `self = w . S + c`, if the expression is affine.
    fn affine(&self, j: usize) -> Option<(Vec<f64>, f64)> {
        Some(match self {
            Expr::Num(c) => (vec![0.0; j], *c),
            Expr::Var(i) => {
                let mut w = vec![0.0; j];
                w[*i] = 1.0;
                (w, 0.0)
            }
            Expr::Neg(a) => {
                let (w, c) = a.affine(j)?;
                (w.iter().map(|x| -x).collect(), -c)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let s = if matches!(self, Expr::Add(..)) { 1.0 } else { -1.0 };
                let (wa, ca) = a.affine(j)?;
                let (wb, cb) = b.affine(j)?;
                (wa.iter().zip(&wb).map(|(x, y)| x + s * y).collect(), ca + s * cb)
            }
            Expr::Mul(a, b) => {
                let (wa, ca) = a.affine(j)?;
                let (wb, cb) = b.affine(j)?;
                if wa.iter().all(|x| *x == 0.0) {
                    (wb.iter().map(|x| ca * x).collect(), ca * cb)
                } else if wb.iter().all(|x| *x == 0.0) {
                    (wa.iter().map(|x| cb * x).collect(), ca * cb)
                } else {
                    return None;
                }
            }
            Expr::Max(_) | Expr::Min(_) => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// One-based character column.
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    assets: usize,
}

impl Parser {
    fn err<T>(&self, at: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { column: at + 1, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => self.err(self.pos, format!("expected '{c}', found '{x}'")),
            None => self.err(self.pos, format!("expected '{c}', found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            lhs = Expr::Mul(lhs.into(), self.unary()?.into());
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(match self.unary()? {
                Expr::Num(c) => Expr::Num(-c),
                e => Expr::Neg(e.into()),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => self.err(self.pos, "unexpected end of input"),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                self.ident(&name, start)
            }
            Some(c) => self.err(self.pos, format!("unexpected '{c}'")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.chars.get(p.pos).is_some_and(|c| c.is_ascii_digit()) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.chars.get(self.pos) == Some(&'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.chars.get(self.pos), Some('e' | 'E')) {
            self.pos += 1;
            if matches!(self.chars.get(self.pos), Some('+' | '-')) {
                self.pos += 1;
            }
            digits(self);
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => self.err(start, format!("malformed number '{s}'")),
        }
    }

    fn ident(&mut self, name: &str, start: usize) -> Result<Expr, ParseError> {
        match name {
            "max" | "min" => {
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                Ok(if name == "max" { Expr::Max(args) } else { Expr::Min(args) })
            }
            _ => {
                let idx = name.strip_prefix('S').and_then(|k| k.parse::<usize>().ok());
                match idx {
                    Some(k) if (1..=self.assets).contains(&k) && !name[1..].starts_with('0') => Ok(Expr::Var(k - 1)),
                    _ => self.err(
                        start,
                        format!("unknown identifier '{name}' (variables are S1..S{})", self.assets),
                    ),
                }
            }
        }
    }
}

/// Parses an expression over `assets` variables.
pub fn parse(text: &str, assets: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0, assets };
    let e = p.expr()?;
    if let Some(c) = p.peek() {
        return p.err(p.pos, format!("unexpected '{c}' after the expression"));
    }
    Ok(e)
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(c) if *c == 0.0)
}

/// All variables exactly once, in any order.
fn all_vars(xs: &[&Expr], j: usize) -> bool {
    let mut seen = vec![false; j];
    for x in xs {
        match x {
            Expr::Var(i) if !seen[*i] => seen[*i] = true,
            _ => return false,
        }
    }
    seen.iter().all(|s| *s)
}

fn named(e: &Expr, j: usize) -> Option<(PayoffKind, PayoffParams)> {
    let Expr::Max(args) = e else { return None };
    let (nums, rest): (Vec<&Expr>, Vec<&Expr>) = args.iter().partition(|a| matches!(a, Expr::Num(_)));
    // max(S1, ..., SJ, K)
    if nums.len() <= 1 && all_vars(&rest, j) {
        let k = match nums.first() {
            Some(Expr::Num(k)) => *k,
            _ => 0.0,
        };
        return Some((PayoffKind::BestOf, PayoffParams { strike: Some(k), ..Default::default() }));
    }
    if nums.len() != 1 || !is_zero(nums[0]) || rest.is_empty() {
        return None;
    }
    // max(0, max(S1, ..., SJ) - K)
    if let [Expr::Sub(a, b)] = rest.as_slice() {
        if let (Expr::Max(inner), Expr::Num(k)) = (a.as_ref(), b.as_ref()) {
            let refs: Vec<&Expr> = inner.iter().collect();
            if all_vars(&refs, j) {
                return Some((PayoffKind::CallOnMax, PayoffParams { strike: Some(*k), ..Default::default() }));
            }
        }
    }
    let forms: Vec<(Vec<f64>, f64)> = rest.iter().map(|a| a.affine(j)).collect::<Option<_>>()?;
    let unit = |w: &[f64]| -> Option<usize> {
        let nz: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
        (nz.len() == 1 && w[nz[0]] == 1.0).then(|| nz[0])
    };
    // max(0, S1 - K1, ..., SJ - KJ); for one asset this is a call on the max.
    if forms.len() == j {
        let idx: Option<Vec<usize>> = forms.iter().map(|(w, _)| unit(w)).collect();
        if let Some(idx) = idx {
            let mut strikes = vec![f64::NAN; j];
            for (i, (_, c)) in idx.iter().zip(&forms) {
                strikes[*i] = -c;
            }
            if strikes.iter().all(|k| !k.is_nan()) {
                if j == 1 {
                    return Some((PayoffKind::CallOnMax, PayoffParams { strike: Some(strikes[0]), ..Default::default() }));
                }
                return Some((PayoffKind::MultiStrike, PayoffParams { strikes: Some(strikes), ..Default::default() }));
            }
        }
    }
    let [(w, c)] = forms.as_slice() else { return None };
    // max(0, S2 - S1 - K)
    if j == 2 && w == &[-1.0, 1.0] {
        return Some((PayoffKind::Spread, PayoffParams { strike: Some(-c), ..Default::default() }));
    }
    // max(0, n . S - K)
    Some((PayoffKind::Portfolio, PayoffParams { strike: Some(-c), weights: Some(w.clone()), ..Default::default() }))
}

/// Parses `text` and builds the payoff, recognising the named kinds.
pub fn parse_payoff_expression(text: &str, assets: usize) -> Result<Payoff, ParseError> {
    let e = parse(text, assets)?;
    if let Some((kind, params)) = named(&e, assets) {
        if let Ok(p) = make_payoff(kind, params) {
            return Ok(p);
        }
    }
    let e = Arc::new(e);
    Ok(Payoff::custom(move |z| e.eval(z)))
}
