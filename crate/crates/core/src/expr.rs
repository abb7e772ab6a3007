//! Expression language for smooth maps `R^p -> R^q`.
//!
//! ```text
//! map    := expr (';' expr)*
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' INTEGER)?
//! atom   := NUMBER | 'x' INTEGER | FUNC '(' expr ')' | '(' expr ')' | '-' atom
//! FUNC   := 'sin' | 'cos' | 'exp' | 'log' | 'sqrt' | 'tanh'
//! ```
//!
//! Positions in errors are byte offsets into the source.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::jet::{Coeff, JetError, Primitive, Scalar, ScalarJet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("lexical error at position {pos}: {msg}")]
    Lexical { pos: usize, msg: String },
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable x{index} at position {pos} is out of range for input dimension {in_dim}")]
    VariableOutOfRange {
        index: usize,
        pos: usize,
        in_dim: usize,
    },
    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },
}

impl ParseError {
    /// Byte offset of the error, when it has one.
    pub fn position(&self) -> Option<usize> {
        match self {
            ParseError::Lexical { pos, .. }
            | ParseError::Syntax { pos, .. }
            | ParseError::VariableOutOfRange { pos, .. } => Some(*pos),
            ParseError::ComponentCount { .. } => None,
        }
    }
}

/// A decimal literal, kept as written plus its exact and double values.
#[derive(Debug, Clone, PartialEq)]
pub struct Number {
    text: String,
    value: Coeff,
}

impl Number {
    pub fn from_text(text: &str) -> Option<Number> {
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part
            .chars()
            .chain(frac_part.chars())
            .all(|c| c.is_ascii_digit())
        {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let numer = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).ok()?;
        let denom = num_traits::pow(BigInt::from(10), frac_part.len());
        let exact = BigRational::new(numer, denom);
        let mut value = Coeff::new(exact);
        // the double should be the correctly rounded literal, not a rounded quotient
        if let Ok(v) = text.parse::<f64>() {
            value = Coeff::with_approx(value.exact().clone(), v);
        }
        Some(Number {
            text: text.to_string(),
            value,
        })
    }

    pub fn int(v: i64) -> Number {
        Number {
            text: v.to_string(),
            value: Coeff::int(v),
        }
    }

    pub fn value(&self) -> &Coeff {
        &self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Number),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Primitive, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn int(v: i64) -> Expr {
        Expr::Num(Number::int(v))
    }

    /// Parses a single component (no `;`).
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser::new(src)?;
        let e = p.expr()?;
        p.expect_end()?;
        Ok(e)
    }

    /// True for a literal whose exact value is zero.
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(n) if n.value.is_zero())
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Evaluates over scalar jets; `vars[i]` is the jet of `x_i`.
    pub fn eval<S: Scalar>(
        &self,
        vars: &[ScalarJet<S>],
        order: usize,
    ) -> Result<ScalarJet<S>, JetError> {
        match self {
            Expr::Num(n) => Ok(ScalarJet::constant(order, S::from_coeff(&n.value))),
            Expr::Var(i) => vars.get(*i).cloned().ok_or(JetError::DimMismatch {
                expected: i + 1,
                found: vars.len(),
            }),
            Expr::Neg(e) => Ok(e.eval(vars, order)?.neg()),
            Expr::Bin(op, a, b) => {
                let a = a.eval(vars, order)?;
                let b = b.eval(vars, order)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.mul(&b.primitive(Primitive::Recip)?),
                }
            }
            Expr::Pow(e, k) => {
                let base = e.eval(vars, order)?;
                pow(&base, *k)
            }
            Expr::Call(f, e) => e.eval(vars, order)?.primitive(*f),
        }
    }

    fn is_one_literal(&self) -> bool {
        matches!(self, Expr::Num(n) if n.value.exact() == &BigRational::from_integer(1.into()))
    }

    /// `a + b`, with literal zeros dropped.
    pub fn sum(a: Expr, b: Expr) -> Expr {
        match (a.is_zero_literal(), b.is_zero_literal()) {
            (true, _) => b,
            (_, true) => a,
            _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn difference(a: Expr, b: Expr) -> Expr {
        match (a.is_zero_literal(), b.is_zero_literal()) {
            (_, true) => a,
            (true, _) => Expr::negate(b),
            _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    /// `a·b`, with literal zeros and ones folded.
    pub fn product(a: Expr, b: Expr) -> Expr {
        if a.is_zero_literal() || b.is_zero_literal() {
            Expr::int(0)
        } else if a.is_one_literal() {
            b
        } else if b.is_one_literal() {
            a
        } else {
            Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
        }
    }

    fn quotient(a: Expr, b: Expr) -> Expr {
        if a.is_zero_literal() {
            Expr::int(0)
        } else if b.is_one_literal() {
            a
        } else {
            Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
        }
    }

    fn negate(e: Expr) -> Expr {
        match e {
            e if e.is_zero_literal() => e,
            Expr::Neg(inner) => *inner,
            e => Expr::Neg(Box::new(e)),
        }
    }

    fn call(f: Primitive, e: Expr) -> Expr {
        Expr::Call(f, Box::new(e))
    }

    /// Symbolic partial derivative with respect to `x_var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::int(0),
            Expr::Var(i) => Expr::int(i64::from(*i == var)),
            Expr::Neg(e) => Expr::negate(e.derivative(var)),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => Expr::sum(da, db),
                    BinOp::Sub => Expr::difference(da, db),
                    BinOp::Mul => Expr::sum(Expr::product(da, b), Expr::product(a, db)),
                    BinOp::Div => Expr::quotient(
                        Expr::difference(Expr::product(da, b.clone()), Expr::product(a, db)),
                        Expr::Pow(Box::new(b), 2),
                    ),
                }
            }
            Expr::Pow(e, k) => {
                let de = e.derivative(var);
                let inner = match k {
                    0 => return Expr::int(0),
                    1 => Expr::int(1),
                    2 => (**e).clone(),
                    _ => Expr::Pow(e.clone(), k - 1),
                };
                Expr::product(Expr::product(Expr::int(i64::from(*k)), inner), de)
            }
            Expr::Call(f, e) => {
                let de = e.derivative(var);
                if de.is_zero_literal() {
                    return de;
                }
                let u = (**e).clone();
                let outer = match f {
                    Primitive::Sin => Expr::call(Primitive::Cos, u),
                    Primitive::Cos => Expr::negate(Expr::call(Primitive::Sin, u)),
                    Primitive::Exp => Expr::call(Primitive::Exp, u),
                    Primitive::Log => Expr::quotient(Expr::int(1), u),
                    Primitive::Sqrt => Expr::quotient(
                        Expr::int(1),
                        Expr::product(Expr::int(2), Expr::call(Primitive::Sqrt, u)),
                    ),
                    Primitive::Tanh => Expr::difference(
                        Expr::int(1),
                        Expr::Pow(Box::new(Expr::call(Primitive::Tanh, u)), 2),
                    ),
                    Primitive::Recip => {
                        Expr::negate(Expr::quotient(Expr::int(1), Expr::Pow(Box::new(u), 2)))
                    }
                };
                Expr::product(outer, de)
            }
        }
    }

    /// Replaces every `x_i` by `args[i]`.
    pub fn substitute(&self, args: &[Expr]) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(i) => args[*i].clone(),
            Expr::Neg(e) => Expr::negate(e.substitute(args)),
            Expr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(a.substitute(args)),
                Box::new(b.substitute(args)),
            ),
            Expr::Pow(e, k) => Expr::Pow(Box::new(e.substitute(args)), *k),
            Expr::Call(f, e) => Expr::call(*f, e.substitute(args)),
        }
    }

    /// `Σ terms`, with literal zeros dropped.
    pub fn sum_of(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().fold(Expr::int(0), Expr::sum)
    }

    fn is_atom(&self) -> bool {
        matches!(
            self,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) | Expr::Neg(_)
        )
    }
}

fn pow<S: Scalar>(base: &ScalarJet<S>, k: u32) -> Result<ScalarJet<S>, JetError> {
    let mut acc = ScalarJet::unit(base.order());
    let mut sq = base.clone();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            acc = acc.mul(&sq)?;
        }
        k >>= 1;
        if k > 0 {
            sq = sq.mul(&sq)?;
        }
    }
    Ok(acc)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => f.write_str(&n.text),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(e) => {
                if e.is_atom() {
                    write!(f, "-{e}")
                } else {
                    write!(f, "-({e})")
                }
            }
            Expr::Pow(e, k) => {
                if e.is_atom() {
                    write!(f, "{e}^{k}")
                } else {
                    write!(f, "({e})^{k}")
                }
            }
            Expr::Call(p, e) => write!(f, "{}({e})", p.name()),
            Expr::Bin(op, a, b) => {
                let prec = op.precedence();
                let wrap_left = matches!(a.as_ref(), Expr::Bin(o, ..) if o.precedence() < prec);
                // left associative: an equal-precedence right operand needs parentheses
                let wrap_right = matches!(b.as_ref(), Expr::Bin(o, ..) if o.precedence() <= prec);
                if wrap_left {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if wrap_right {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Var(usize),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let text = &src[start..i];
            if Number::from_text(text).is_none() {
                return Err(ParseError::Lexical {
                    pos: start,
                    msg: format!("malformed number '{text}'"),
                });
            }
            out.push(Token {
                tok: Tok::Num(text.to_string()),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() {
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let word = &src[start..i];
            let tok = match word.strip_prefix('x') {
                Some(digits)
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) =>
                {
                    let index = digits.parse().map_err(|_| ParseError::Lexical {
                        pos: start,
                        msg: format!("variable index too large in '{word}'"),
                    })?;
                    Tok::Var(index)
                }
                _ => Tok::Ident(word.to_string()),
            };
            out.push(Token { tok, pos: start });
        } else if "+-*/^();".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                pos: start,
            });
            i += 1;
        } else {
            let ch = src[start..].chars().next().unwrap_or(c);
            return Err(ParseError::Lexical {
                pos: start,
                msg: format!("unexpected character '{ch}'"),
            });
        }
    }
    out.push(Token {
        tok: Tok::End,
        pos: src.len(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    var_positions: Vec<(usize, usize)>,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            tokens: lex(src)?,
            at: 0,
            var_positions: Vec::new(),
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let t = self.peek();
        let found = match &t.tok {
            Tok::End => "end of input".to_string(),
            Tok::Num(s) | Tok::Ident(s) => format!("'{s}'"),
            Tok::Var(i) => format!("'x{i}'"),
            Tok::Sym(c) => format!("'{c}'"),
        };
        Err(ParseError::Syntax {
            pos: t.pos,
            msg: format!("{}, found {found}", msg.into()),
        })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.peek().tok == Tok::End {
            Ok(())
        } else {
            self.error("expected end of input")
        }
    }

    fn map(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = vec![self.expr()?];
        while self.eat(';') {
            out.push(self.expr()?);
        }
        self.expect_end()?;
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        match self.peek().tok.clone() {
            Tok::Num(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let pos = self.peek().pos;
                let k: u32 = text.parse().map_err(|_| ParseError::Syntax {
                    pos,
                    msg: format!("exponent '{text}' too large"),
                })?;
                self.bump();
                Ok(Expr::Pow(Box::new(base), k))
            }
            _ => self.error("expected an integer exponent"),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(text) => {
                self.bump();
                let n = Number::from_text(&text).ok_or(ParseError::Lexical {
                    pos: t.pos,
                    msg: format!("malformed number '{text}'"),
                })?;
                Ok(Expr::Num(n))
            }
            Tok::Var(i) => {
                self.bump();
                self.var_positions.push((i, t.pos));
                Ok(Expr::Var(i))
            }
            Tok::Ident(name) => match Primitive::from_name(&name) {
                Some(f) => {
                    self.bump();
                    if !self.eat('(') {
                        return self.error(format!("expected '(' after {name}"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return self.error("expected ')'");
                    }
                    Ok(Expr::Call(f, Box::new(arg)))
                }
                None => Err(ParseError::Syntax {
                    pos: t.pos,
                    msg: format!("unknown function or identifier '{name}'"),
                }),
            },
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.error("expected ')'");
                }
                Ok(e)
            }
            Tok::Sym('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.atom()?)))
            }
            _ => self.error("expected a number, variable, function call or '('"),
        }
    }
}

/// Parses `source` as a map with `out_dim` components over `x0 .. x{in_dim-1}`.
pub fn parse_components(
    source: &str,
    in_dim: usize,
    out_dim: usize,
) -> Result<Vec<Expr>, ParseError> {
    let mut p = Parser::new(source)?;
    let body = p.map()?;
    if let Some(&(index, pos)) = p.var_positions.iter().find(|(i, _)| *i >= in_dim) {
        return Err(ParseError::VariableOutOfRange { index, pos, in_dim });
    }
    if body.len() != out_dim {
        return Err(ParseError::ComponentCount {
            expected: out_dim,
            found: body.len(),
        });
    }
    Ok(body)
}
