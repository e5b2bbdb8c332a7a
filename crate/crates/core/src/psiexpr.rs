//! Warping-function expressions: parsing, printing and evaluation of
//! derivative towers up to order 4.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'r' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func    := exp | log | sinh | cosh | sin | cos | sqrt
//! ```
//!
//! Subtrees without the variable are folded to literals while parsing, so
//! the exponent of `^` is always a literal; anything else is rejected.
//!
//! Evaluation works on truncated Taylor series carried with a separate
//! exponential scale (`value = e^scale * mantissa`), which lets towers of
//! doubly exponential warping functions such as `r*exp(exp(r)-1)` be
//! evaluated far past the point where the plain value overflows.

use std::fmt;

use thiserror::Error;

use crate::error::{LefError, Result};

/// Highest derivative order carried by a tower.
pub const ORDER: usize = 4;
const LEN: usize = ORDER + 1;
const FACT: [f64; LEN] = [1.0, 1.0, 2.0, 6.0, 24.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sinh,
    Cosh,
    Sin,
    Cos,
    Sqrt,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "log" | "ln" => UnaryOp::Log,
            "sinh" => UnaryOp::Sinh,
            "cosh" => UnaryOp::Cosh,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.ln(),
            UnaryOp::Sinh => x.sinh(),
            UnaryOp::Cosh => x.cosh(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Literal(f64),
    Var,
    Unary(UnaryOp, Box<ExprAst>),
    Binary(BinaryOp, Box<ExprAst>, Box<ExprAst>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnknownIdentifier(String),
    VariableExponent,
    NonFiniteConstant,
    Empty,
    TrailingInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {kind:?}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

pub fn parse(text: &str) -> std::result::Result<ExprAst, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let ast = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.err(ParseErrorKind::TrailingInput));
    }
    Ok(ast)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { offset: self.pos, kind }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> std::result::Result<(), ParseError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => Err(self.err(ParseErrorKind::UnexpectedChar(x as char))),
            None => Err(self.err(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn expr(&mut self) -> std::result::Result<ExprAst, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = self.binary(op, lhs, rhs)?;
        }
    }

    fn term(&mut self) -> std::result::Result<ExprAst, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = self.binary(op, lhs, rhs)?;
        }
    }

    fn unary(&mut self) -> std::result::Result<ExprAst, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return self.unary_node(UnaryOp::Neg, inner);
        }
        self.power()
    }

    fn power(&mut self) -> std::result::Result<ExprAst, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let at = self.pos;
            let exponent = self.unary()?;
            if !matches!(exponent, ExprAst::Literal(_)) {
                return Err(ParseError {
                    offset: at,
                    kind: ParseErrorKind::VariableExponent,
                });
            }
            return self.binary(BinaryOp::Pow, base, exponent);
        }
        Ok(base)
    }

    fn primary(&mut self) -> std::result::Result<ExprAst, ParseError> {
        match self.peek() {
            None => Err(self.err(ParseErrorKind::UnexpectedEnd)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                match ident {
                    "r" => Ok(ExprAst::Var),
                    "pi" => Ok(ExprAst::Literal(std::f64::consts::PI)),
                    "e" => Ok(ExprAst::Literal(std::f64::consts::E)),
                    _ => match UnaryOp::from_name(ident) {
                        Some(op) => {
                            self.expect(b'(')?;
                            let arg = self.expr()?;
                            self.expect(b')')?;
                            self.unary_node(op, arg)
                        }
                        None => Err(ParseError {
                            offset: start,
                            kind: ParseErrorKind::UnknownIdentifier(ident.to_string()),
                        }),
                    },
                }
            }
            Some(c) => Err(self.err(ParseErrorKind::UnexpectedChar(c as char))),
        }
    }

    fn number(&mut self) -> std::result::Result<ExprAst, ParseError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        // exponent part only when followed by a digit (so `2e` stays an error
        // rather than swallowing the constant `e`)
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap_or_default();
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(ExprAst::Literal(v))
            }
            Err(_) => Err(ParseError {
                offset: start,
                kind: ParseErrorKind::UnexpectedChar(s[start] as char),
            }),
        }
    }

    fn unary_node(&self, op: UnaryOp, arg: ExprAst) -> std::result::Result<ExprAst, ParseError> {
        if let ExprAst::Literal(v) = arg {
            return self.literal(op.apply(v));
        }
        Ok(ExprAst::Unary(op, Box::new(arg)))
    }

    fn binary(&self, op: BinaryOp, a: ExprAst, b: ExprAst) -> std::result::Result<ExprAst, ParseError> {
        if let (ExprAst::Literal(x), ExprAst::Literal(y)) = (&a, &b) {
            return self.literal(op.apply(*x, *y));
        }
        Ok(ExprAst::Binary(op, Box::new(a), Box::new(b)))
    }

    fn literal(&self, v: f64) -> std::result::Result<ExprAst, ParseError> {
        if v.is_finite() {
            Ok(ExprAst::Literal(v))
        } else {
            Err(self.err(ParseErrorKind::NonFiniteConstant))
        }
    }
}

/// Fully parenthesized printer; `parse(&ast.to_string())` reproduces `ast`.
impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Literal(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            ExprAst::Literal(v) => write!(f, "{v:?}"),
            ExprAst::Var => f.write_str("r"),
            ExprAst::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            ExprAst::Unary(op, a) => write!(f, "{}({a})", op.name()),
            ExprAst::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
        }
    }
}

/// Value and derivatives `(f, f', f'', f''', f'''')` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivTower(pub [f64; LEN]);

impl DerivTower {
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn deriv(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// Truncated Taylor series in `h` about a point, times `e^scale`.
///
/// `coef[k]` is the k-th Taylor coefficient `f^(k)/k!` of the mantissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledTower {
    pub scale: f64,
    pub coef: [f64; LEN],
}

impl ScaledTower {
    pub fn constant(v: f64) -> Self {
        ScaledTower {
            scale: 0.0,
            coef: [v, 0.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn variable(r: f64) -> Self {
        ScaledTower {
            scale: 0.0,
            coef: [r, 1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Natural log of |value|; `-inf` when the value is zero.
    pub fn ln_abs(&self) -> f64 {
        self.scale + self.coef[0].abs().ln()
    }

    /// `f^(k)(r) / f(r)`; scale-free.
    pub fn ratio(&self, k: usize) -> f64 {
        FACT[k] * self.coef[k] / self.coef[0]
    }

    pub fn to_derivs(&self) -> DerivTower {
        let s = self.scale.exp();
        let mut d = [0.0; LEN];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = FACT[k] * self.coef[k] * s;
        }
        DerivTower(d)
    }

    fn normalized(mut self) -> Self {
        let m = self.coef.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        if m == 0.0 || !m.is_finite() {
            return self;
        }
        if !(1e-100..=1e100).contains(&m) {
            let l = m.ln();
            for c in &mut self.coef {
                *c /= m;
            }
            self.scale += l;
        }
        self
    }

    fn unscaled(&self) -> [f64; LEN] {
        if self.scale == 0.0 {
            return self.coef;
        }
        let s = self.scale.exp();
        self.coef.map(|c| c * s)
    }

    fn neg(self) -> Self {
        ScaledTower {
            scale: self.scale,
            coef: self.coef.map(|c| -c),
        }
    }

    fn add(self, other: Self) -> Self {
        let (big, small) = if self.scale >= other.scale {
            (self, other)
        } else {
            (other, self)
        };
        let f = (small.scale - big.scale).exp();
        let mut coef = big.coef;
        for (c, s) in coef.iter_mut().zip(small.coef) {
            *c += s * f;
        }
        ScaledTower { scale: big.scale, coef }.normalized()
    }

    fn mul(self, other: Self) -> Self {
        let mut coef = [0.0; LEN];
        for (k, ck) in coef.iter_mut().enumerate() {
            *ck = (0..=k).map(|j| self.coef[j] * other.coef[k - j]).sum();
        }
        ScaledTower {
            scale: self.scale + other.scale,
            coef,
        }
        .normalized()
    }

    fn recip(self) -> Option<Self> {
        let a = self.coef;
        if a[0] == 0.0 {
            return None;
        }
        let mut q = [0.0; LEN];
        q[0] = 1.0 / a[0];
        for k in 1..LEN {
            let s: f64 = (1..=k).map(|j| a[j] * q[k - j]).sum();
            q[k] = -s / a[0];
        }
        Some(
            ScaledTower {
                scale: -self.scale,
                coef: q,
            }
            .normalized(),
        )
    }

    /// exp of a tower whose value must be representable unscaled.
    fn exp(self) -> Option<Self> {
        let x = self.unscaled();
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut e = [0.0; LEN];
        e[0] = 1.0;
        for k in 1..LEN {
            e[k] = (1..=k).map(|j| j as f64 * x[j] * e[k - j]).sum::<f64>() / k as f64;
        }
        Some(ScaledTower { scale: x[0], coef: e }.normalized())
    }

    fn ln(self) -> Option<Self> {
        let a = self.coef;
        if a[0] <= 0.0 {
            return None;
        }
        let mut l = [0.0; LEN];
        l[0] = self.scale + a[0].ln();
        for k in 1..LEN {
            let s: f64 = (1..k).map(|j| j as f64 * l[j] * a[k - j]).sum();
            l[k] = (a[k] - s / k as f64) / a[0];
        }
        Some(ScaledTower { scale: 0.0, coef: l })
    }

    /// (sinh, cosh) or (sin, cos) by the coupled recurrences; `sign = 1`
    /// for the hyperbolic pair and `-1` for the circular pair.
    fn sin_cos_pair(x: [f64; LEN], s0: f64, c0: f64, sign: f64) -> ([f64; LEN], [f64; LEN]) {
        let mut s = [0.0; LEN];
        let mut c = [0.0; LEN];
        s[0] = s0;
        c[0] = c0;
        for k in 1..LEN {
            let kk = k as f64;
            s[k] = (1..=k).map(|j| j as f64 * x[j] * c[k - j]).sum::<f64>() / kk;
            c[k] = sign * (1..=k).map(|j| j as f64 * x[j] * s[k - j]).sum::<f64>() / kk;
        }
        (s, c)
    }

    fn sinh_cosh(self, want_sinh: bool) -> Option<Self> {
        let x = self.unscaled();
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        if x[0].abs() > 30.0 {
            // e^x/2 -/+ e^-x/2 with the small branch vanishing after alignment
            let ep = self.exp()?;
            let em = self.neg().exp()?;
            let half = ScaledTower::constant(0.5);
            let out = if want_sinh { ep.add(em.neg()) } else { ep.add(em) };
            return Some(out.mul(half));
        }
        let (s, c) = Self::sin_cos_pair(x, x[0].sinh(), x[0].cosh(), 1.0);
        Some(ScaledTower {
            scale: 0.0,
            coef: if want_sinh { s } else { c },
        })
    }

    fn sin_cos(self, want_sin: bool) -> Option<Self> {
        let x = self.unscaled();
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (s, c) = Self::sin_cos_pair(x, x[0].sin(), x[0].cos(), -1.0);
        Some(ScaledTower {
            scale: 0.0,
            coef: if want_sin { s } else { c },
        })
    }

    fn powi(self, k: u32) -> Self {
        let mut acc = ScaledTower::constant(1.0);
        let mut base = self;
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            k >>= 1;
        }
        acc
    }

    fn powf(self, a: f64) -> Option<Self> {
        if a.fract() == 0.0 && a.abs() <= 64.0 {
            let p = self.powi(a.abs() as u32);
            return if a < 0.0 { p.recip() } else { Some(p) };
        }
        let x = self.coef;
        if x[0] <= 0.0 {
            return None;
        }
        let mut y = [0.0; LEN];
        y[0] = x[0].powf(a);
        for k in 1..LEN {
            let s: f64 = (1..=k).map(|j| (a * j as f64 - (k - j) as f64) * x[j] * y[k - j]).sum();
            y[k] = s / (k as f64 * x[0]);
        }
        Some(
            ScaledTower {
                scale: a * self.scale,
                coef: y,
            }
            .normalized(),
        )
    }
}

/// Evaluate the scaled tower of `ast` at `r`.
pub fn eval_scaled(ast: &ExprAst, r: f64) -> Result<ScaledTower> {
    let domain = |node: &ExprAst, reason: &'static str| LefError::Domain {
        node: node.to_string(),
        r,
        reason,
    };
    let t = match ast {
        ExprAst::Literal(v) => ScaledTower::constant(*v),
        ExprAst::Var => ScaledTower::variable(r),
        ExprAst::Unary(op, a) => {
            let x = eval_scaled(a, r)?;
            match op {
                UnaryOp::Neg => Some(x.neg()),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Log => x.ln(),
                UnaryOp::Sinh => x.sinh_cosh(true),
                UnaryOp::Cosh => x.sinh_cosh(false),
                UnaryOp::Sin => x.sin_cos(true),
                UnaryOp::Cos => x.sin_cos(false),
                UnaryOp::Sqrt => x.powf(0.5),
            }
            .ok_or_else(|| {
                domain(
                    ast,
                    match op {
                        UnaryOp::Log => "logarithm of a non-positive value",
                        UnaryOp::Sqrt => "square root of a non-positive value",
                        _ => "argument overflow",
                    },
                )
            })?
        }
        ExprAst::Binary(op, a, b) => {
            let x = eval_scaled(a, r)?;
            match op {
                BinaryOp::Pow => {
                    let ExprAst::Literal(k) = **b else {
                        return Err(domain(ast, "variable exponent"));
                    };
                    x.powf(k)
                        .ok_or_else(|| domain(ast, "non-integer power of a non-positive value"))?
                }
                _ => {
                    let y = eval_scaled(b, r)?;
                    match op {
                        BinaryOp::Add => x.add(y),
                        BinaryOp::Sub => x.add(y.neg()),
                        BinaryOp::Mul => x.mul(y),
                        BinaryOp::Div => x.mul(y.recip().ok_or_else(|| domain(ast, "division by zero"))?),
                        BinaryOp::Pow => unreachable!(),
                    }
                }
            }
        }
    };
    if t.coef.iter().any(|c| !c.is_finite()) || t.scale.is_nan() {
        return Err(domain(ast, "non-finite derivative"));
    }
    Ok(t)
}

/// Value and first four derivatives of `ast` at `r`.
pub fn eval_tower(ast: &ExprAst, r: f64) -> Result<DerivTower> {
    Ok(eval_scaled(ast, r)?.to_derivs())
}
