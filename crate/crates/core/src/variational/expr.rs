//! User-defined systems from a small `key = value` file of arithmetic
//! expressions.
//!
//! ```text
//! # comments start with '#'
//! name = pendulum
//! dim = 1
//! structure = constant-mass
//! f1 = -x1 - 0.1*x1^3
//! ```
//!
//! Keys:
//!
//! - `dim`: dimension, 1 to 9 (required).
//! - `structure`: `general` (default), `velocity-mass` or `constant-mass`.
//! - `name`: label used in reports.
//! - `mIJ`: mass-matrix entries. Without any, `M` is the identity. A missing
//!   `mIJ` falls back to `mJI`, then to zero.
//! - `fI`: force components, or alternatively `aIJ` and `gI` for
//!   `f = Aẋ + g`. The two forms cannot be mixed.
//! - `trange`, `xrange`, `vrange`: sampling intervals `lo hi`.
//! - `avoid`: a singular position to keep samples away from; may repeat.
//!
//! Expressions use numbers, `t`, `x1`…, `v1`…, the operators `+ - * / ^`
//! (`^` is right-associative and binds tighter than unary minus), parentheses
//! and the functions `sqrt` and `abs`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{Domain, SecondOrderSystem, Structure};
use crate::error::{GeodynError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed arithmetic expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Pos(usize),
    Vel(usize),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Time => t,
            Expr::Pos(i) => x[*i],
            Expr::Vel(i) => v[*i],
            Expr::Neg(e) => -e.eval(t, x, v),
            Expr::Call(f, e) => {
                let y = e.eval(t, x, v);
                match f {
                    Func::Sqrt => y.sqrt(),
                    Func::Abs => y.abs(),
                }
            }
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x, v), b.eval(t, x, v));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    Open,
    Close,
    End,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    /// Column of `chars[0]` in the source line.
    offset: usize,
}

impl Lexer {
    fn new(src: &str, line: usize, offset: usize) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line,
            offset,
        }
    }

    fn err(&self, at: usize, message: impl Into<String>) -> GeodynError {
        GeodynError::Parse {
            line: self.line,
            column: self.offset + at,
            message: message.into(),
        }
    }

    /// Next token and its 1-based column.
    fn next(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let col = self.offset + start;
        let Some(&c) = self.chars.get(start) else {
            return Ok((Tok::End, col));
        };
        if c.is_ascii_digit() || c == '.' {
            let mut end = start;
            while end < self.chars.len() && (self.chars[end].is_ascii_digit() || self.chars[end] == '.') {
                end += 1;
            }
            if end < self.chars.len() && matches!(self.chars[end], 'e' | 'E') {
                let mut k = end + 1;
                if k < self.chars.len() && matches!(self.chars[k], '+' | '-') {
                    k += 1;
                }
                if k < self.chars.len() && self.chars[k].is_ascii_digit() {
                    while k < self.chars.len() && self.chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text: String = self.chars[start..end].iter().collect();
            self.pos = end;
            return text
                .parse()
                .map(|n| (Tok::Num(n), col))
                .map_err(|_| self.err(start, format!("malformed number {text:?}")));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start;
            while end < self.chars.len() && (self.chars[end].is_ascii_alphanumeric() || self.chars[end] == '_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.chars[start..end].iter().collect()), col));
        }
        self.pos += 1;
        match c {
            '+' | '-' | '*' | '/' | '^' => Ok((Tok::Op(c), col)),
            '(' => Ok((Tok::Open, col)),
            ')' => Ok((Tok::Close, col)),
            _ => Err(self.err(start, format!("unexpected character {c:?}"))),
        }
    }
}

struct Parser {
    lex: Lexer,
    tok: Tok,
    col: usize,
    dim: usize,
}

impl Parser {
    fn new(src: &str, line: usize, offset: usize, dim: usize) -> Result<Self> {
        let mut lex = Lexer::new(src, line, offset);
        let (tok, col) = lex.next()?;
        Ok(Parser { lex, tok, col, dim })
    }

    fn err(&self, message: impl Into<String>) -> GeodynError {
        GeodynError::Parse {
            line: self.lex.line,
            column: self.col,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Result<()> {
        (self.tok, self.col) = self.lex.next()?;
        Ok(())
    }

    fn parse(mut self) -> Result<Expr> {
        let e = self.expr()?;
        if self.tok != Tok::End {
            return Err(self.err(format!("unexpected {}", describe(&self.tok))));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = self.tok {
            self.bump()?;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = self.tok {
            self.bump()?;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.tok {
            Tok::Op('-') => {
                self.bump()?;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn index(&self, name: &str, digits: &str) -> Result<usize> {
        match digits.parse::<usize>() {
            Ok(k) if k >= 1 && k <= self.dim => Ok(k - 1),
            _ => Err(self.err(format!(
                "variable {name:?} is out of range for dimension {}",
                self.dim
            ))),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.tok.clone() {
            Tok::Num(c) => {
                self.bump()?;
                Ok(Expr::Num(c))
            }
            Tok::Open => {
                self.bump()?;
                let e = self.expr()?;
                if self.tok != Tok::Close {
                    return Err(self.err(format!("expected ')', found {}", describe(&self.tok))));
                }
                self.bump()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let e = match name.as_str() {
                    "t" => Expr::Time,
                    "sqrt" | "abs" => {
                        let f = if name == "sqrt" { Func::Sqrt } else { Func::Abs };
                        self.bump()?;
                        if self.tok != Tok::Open {
                            return Err(self.err(format!("expected '(' after {name}")));
                        }
                        self.bump()?;
                        let arg = self.expr()?;
                        if self.tok != Tok::Close {
                            return Err(self.err(format!("expected ')', found {}", describe(&self.tok))));
                        }
                        self.bump()?;
                        return Ok(Expr::Call(f, Box::new(arg)));
                    }
                    _ if name.starts_with('x') && name.len() > 1 => {
                        Expr::Pos(self.index(&name, &name[1..])?)
                    }
                    _ if name.starts_with('v') && name.len() > 1 => {
                        Expr::Vel(self.index(&name, &name[1..])?)
                    }
                    _ => return Err(self.err(format!("unknown identifier {name:?}"))),
                };
                self.bump()?;
                Ok(e)
            }
            other => Err(self.err(format!("expected a value, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(c) => format!("number {c}"),
        Tok::Ident(s) => format!("{s:?}"),
        Tok::Op(c) => format!("'{c}'"),
        Tok::Open => "'('".into(),
        Tok::Close => "')'".into(),
        Tok::End => "end of expression".into(),
    }
}

/// Parses one expression over `t`, `x1..x{dim}`, `v1..v{dim}`.
pub fn parse_expr(src: &str, dim: usize) -> Result<Expr> {
    Parser::new(src, 1, 1, dim)?.parse()
}

/// A system read from an expression file.
#[derive(Debug, Clone)]
pub struct ExprSystem {
    name: String,
    dim: usize,
    structure: Structure,
    /// Row-major `dim × dim` entries; `None` means identity.
    mass: Option<Vec<Expr>>,
    force: Vec<Expr>,
    domain: Domain,
    avoid: Vec<DVector<f64>>,
}

struct Entry<'a> {
    value: &'a str,
    line: usize,
    /// Column of the first character of `value`.
    column: usize,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> GeodynError {
    GeodynError::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn numbers(e: &Entry, expected: Option<usize>) -> Result<Vec<f64>> {
    let out = e
        .value
        .split_whitespace()
        .map(|w| w.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| parse_err(e.line, e.column, format!("expected numbers, found {:?}", e.value)))?;
    if let Some(n) = expected {
        if out.len() != n {
            return Err(parse_err(
                e.line,
                e.column,
                format!("expected {n} numbers, found {}", out.len()),
            ));
        }
    }
    Ok(out)
}

fn range(e: &Entry) -> Result<[f64; 2]> {
    let v = numbers(e, Some(2))?;
    if !(v[0] < v[1]) {
        return Err(parse_err(e.line, e.column, "range needs lo < hi"));
    }
    Ok([v[0], v[1]])
}

/// `(i, j)` zero-based from a key suffix like `12`.
fn pair_index(suffix: &str, dim: usize) -> Option<(usize, usize)> {
    let b = suffix.as_bytes();
    if b.len() != 2 || !b.iter().all(u8::is_ascii_digit) {
        return None;
    }
    let (i, j) = ((b[0] - b'0') as usize, (b[1] - b'0') as usize);
    (i >= 1 && j >= 1 && i <= dim && j <= dim).then(|| (i - 1, j - 1))
}

fn single_index(suffix: &str, dim: usize) -> Option<usize> {
    let k: usize = suffix.parse().ok()?;
    (k >= 1 && k <= dim && suffix.bytes().all(|c| c.is_ascii_digit())).then(|| k - 1)
}

impl ExprSystem {
    pub fn parse(src: &str) -> Result<Self> {
        let mut entries: HashMap<String, Entry> = HashMap::new();
        let mut avoid_entries = Vec::new();
        let mut order = Vec::new();
        for (k, raw) in src.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let Some(eq) = content.find('=') else {
                let col = content.len() - content.trim_start().len() + 1;
                return Err(parse_err(line, col, "expected `key = value`"));
            };
            let key = content[..eq].trim();
            let key_col = content.len() - content.trim_start().len() + 1;
            if key.is_empty() {
                return Err(parse_err(line, key_col, "missing key before '='"));
            }
            let rest = &content[eq + 1..];
            let lead = rest.len() - rest.trim_start().len();
            let entry = Entry {
                value: rest.trim(),
                line,
                column: content[..eq + 1 + lead].chars().count() + 1,
            };
            if key == "avoid" {
                avoid_entries.push(entry);
                continue;
            }
            if entries.contains_key(key) {
                return Err(parse_err(line, key_col, format!("duplicate key {key:?}")));
            }
            order.push((key.to_string(), line, key_col));
            entries.insert(key.to_string(), entry);
        }

        let dim_entry = entries
            .get("dim")
            .ok_or_else(|| GeodynError::InvalidArgument("expression file has no `dim`".into()))?;
        let dim = match dim_entry.value.parse::<usize>() {
            Ok(d) if (1..=9).contains(&d) => d,
            _ => {
                return Err(parse_err(
                    dim_entry.line,
                    dim_entry.column,
                    format!("dim must be an integer from 1 to 9, found {:?}", dim_entry.value),
                ))
            }
        };
        let compile = |e: &Entry| -> Result<Expr> {
            if e.value.is_empty() {
                return Err(parse_err(e.line, e.column, "empty expression"));
            }
            Parser::new(e.value, e.line, e.column, dim)?.parse()
        };

        let mut name = "user".to_string();
        let mut structure = Structure::General;
        let mut domain = Domain::default();
        let mut m: HashMap<(usize, usize), Expr> = HashMap::new();
        let mut f: HashMap<usize, Expr> = HashMap::new();
        let mut a: HashMap<(usize, usize), Expr> = HashMap::new();
        let mut g: HashMap<usize, Expr> = HashMap::new();
        let mut first_f = None;
        let mut first_ag = None;
        for (key, line, col) in &order {
            let e = &entries[key];
            match key.as_str() {
                "dim" => {}
                "name" => name = e.value.to_string(),
                "structure" => {
                    structure = e
                        .value
                        .parse()
                        .map_err(|err: GeodynError| parse_err(e.line, e.column, err.to_string()))?
                }
                "trange" => domain.t = range(e)?,
                "xrange" => domain.x = range(e)?,
                "vrange" => domain.v = range(e)?,
                _ => {
                    let (head, suffix) = key.split_at(1);
                    let bad = || parse_err(*line, *col, format!("unknown key {key:?} for dimension {dim}"));
                    match head {
                        "m" => {
                            m.insert(pair_index(suffix, dim).ok_or_else(bad)?, compile(e)?);
                        }
                        "a" => {
                            a.insert(pair_index(suffix, dim).ok_or_else(bad)?, compile(e)?);
                            first_ag.get_or_insert((*line, *col));
                        }
                        "f" => {
                            f.insert(single_index(suffix, dim).ok_or_else(bad)?, compile(e)?);
                            first_f.get_or_insert((*line, *col));
                        }
                        "g" => {
                            g.insert(single_index(suffix, dim).ok_or_else(bad)?, compile(e)?);
                            first_ag.get_or_insert((*line, *col));
                        }
                        _ => return Err(bad()),
                    }
                }
            }
        }
        if let (Some(_), Some((line, col))) = (first_f, first_ag) {
            return Err(parse_err(line, col, "`fI` and `aIJ`/`gI` forms cannot be mixed"));
        }

        let force = if first_ag.is_some() {
            (0..dim)
                .map(|i| {
                    let mut acc = g.remove(&i).unwrap_or(Expr::Num(0.0));
                    for j in 0..dim {
                        if let Some(aij) = a.remove(&(i, j)) {
                            let term = Expr::Bin(BinOp::Mul, Box::new(aij), Box::new(Expr::Vel(j)));
                            acc = Expr::Bin(BinOp::Add, Box::new(acc), Box::new(term));
                        }
                    }
                    acc
                })
                .collect()
        } else {
            (0..dim)
                .map(|i| {
                    f.remove(&i).ok_or_else(|| {
                        GeodynError::InvalidArgument(format!("expression file has no `f{}`", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };

        let mass = if m.is_empty() {
            None
        } else {
            let mut out = Vec::with_capacity(dim * dim);
            for i in 0..dim {
                for j in 0..dim {
                    out.push(
                        m.get(&(i, j))
                            .or_else(|| m.get(&(j, i)))
                            .cloned()
                            .unwrap_or(Expr::Num(0.0)),
                    );
                }
            }
            Some(out)
        };

        let avoid = avoid_entries
            .iter()
            .map(|e| numbers(e, Some(dim)).map(DVector::from_vec))
            .collect::<Result<Vec<_>>>()?;

        Ok(ExprSystem {
            name,
            dim,
            structure,
            mass,
            force,
            domain,
            avoid,
        })
    }
}

impl SecondOrderSystem for ExprSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn structure(&self) -> Structure {
        self.structure
    }

    fn mass(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim;
        Ok(match &self.mass {
            None => DMatrix::identity(n, n),
            Some(m) => DMatrix::from_fn(n, n, |i, j| m[i * n + j].eval(t, x.as_slice(), v.as_slice())),
        })
    }

    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_iterator(
            self.dim,
            self.force.iter().map(|e| e.eval(t, x.as_slice(), v.as_slice())),
        ))
    }

    fn singular_points(&self) -> Vec<DVector<f64>> {
        self.avoid.clone()
    }

    fn domain(&self) -> Domain {
        self.domain
    }
}
