//! Piecewise complex potentials over simple planar regions.
//!
//! ```text
//! # Example 3 of the test set
//! support 1
//! piece sector(0;pi/2) & disk(0,0;1): 2
//! piece sector(pi/2;pi) & disk(0,0;1): -1
//! ```
//!
//! Regions: `disk(cx,cy;r)`, `annulus(r1;r2)` (centred at the origin),
//! `sector(t1;t2)`, `rect(x1,x2;y1,y2)`, combined with `&` (binds tighter)
//! and `|`, with parentheses. Region arguments are constant real
//! expressions. Values are complex expressions in `x`, `y`, `r`, `theta`
//! with `+ - * /`, integer powers `^`, the imaginary unit `i` (also as a
//! literal suffix, `2i`), `pi`, and `exp abs sqrt sin cos log`.
//! Pieces are tried in order; the first region containing the point wins
//! and the potential vanishes outside all of them. Regions are closed sets.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
    #[error("potential is not finite at ({x}, {y})")]
    Eval { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    R,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Abs,
    Sqrt,
    Sin,
    Cos,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Complex64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Disk { cx: f64, cy: f64, r: f64 },
    Annulus { r1: f64, r2: f64 },
    Sector { t1: f64, t2: f64 },
    Rect { x1: f64, x2: f64, y1: f64, y2: f64 },
    And(Box<Region>, Box<Region>),
    Or(Box<Region>, Box<Region>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub region: Region,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub support: f64,
    pub pieces: Vec<Piece>,
}

/// Point data shared by region tests and value evaluation.
#[derive(Debug, Clone, Copy)]
struct At {
    x: f64,
    y: f64,
    r: f64,
    theta: f64,
}

impl At {
    fn new(p: [f64; 2]) -> At {
        let [x, y] = p;
        At { x, y, r: x.hypot(y), theta: y.atan2(x).rem_euclid(TAU) }
    }
}

impl Expr {
    fn eval_at(&self, at: &At) -> Complex64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(v) => Complex64::new(
                match v {
                    Var::X => at.x,
                    Var::Y => at.y,
                    Var::R => at.r,
                    Var::Theta => at.theta,
                },
                0.0,
            ),
            Expr::Neg(e) => -e.eval_at(at),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_at(at), b.eval_at(at));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(e, k) => e.eval_at(at).powi(*k),
            Expr::Call(f, e) => {
                let v = e.eval_at(at);
                match f {
                    Func::Exp => v.exp(),
                    Func::Abs => Complex64::new(v.norm(), 0.0),
                    Func::Sqrt => v.sqrt(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Log => v.ln(),
                }
            }
        }
    }

    /// Evaluates at a point.
    pub fn eval(&self, p: [f64; 2]) -> Complex64 {
        self.eval_at(&At::new(p))
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

impl Region {
    fn contains_at(&self, at: &At) -> bool {
        match *self {
            Region::Disk { cx, cy, r } => (at.x - cx).powi(2) + (at.y - cy).powi(2) <= r * r,
            Region::Annulus { r1, r2 } => at.r >= r1 && at.r <= r2,
            Region::Sector { t1, t2 } => (at.theta - t1).rem_euclid(TAU) <= t2 - t1,
            Region::Rect { x1, x2, y1, y2 } => at.x >= x1 && at.x <= x2 && at.y >= y1 && at.y <= y2,
            Region::And(ref a, ref b) => a.contains_at(at) && b.contains_at(at),
            Region::Or(ref a, ref b) => a.contains_at(at) || b.contains_at(at),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.contains_at(&At::new(p))
    }

    /// Radius of an origin-centred disk containing the region, if bounded.
    pub fn bounding_radius(&self) -> Option<f64> {
        match *self {
            Region::Disk { cx, cy, r } => Some(cx.hypot(cy) + r),
            Region::Annulus { r2, .. } => Some(r2),
            Region::Sector { .. } => None,
            Region::Rect { x1, x2, y1, y2 } => Some(x1.abs().max(x2.abs()).hypot(y1.abs().max(y2.abs()))),
            Region::And(ref a, ref b) => match (a.bounding_radius(), b.bounding_radius()) {
                (Some(p), Some(q)) => Some(p.min(q)),
                (p, q) => p.or(q),
            },
            Region::Or(ref a, ref b) => Some(a.bounding_radius()?.max(b.bounding_radius()?)),
        }
    }
}

impl PotentialSpec {
    /// The value of the first piece whose region holds `p`, else 0.
    pub fn eval(&self, p: [f64; 2]) -> Result<Complex64, PotentialError> {
        let at = At::new(p);
        for piece in &self.pieces {
            if piece.region.contains_at(&at) {
                let v = piece.value.eval_at(&at);
                if !v.is_finite() {
                    return Err(PotentialError::Eval { x: p[0], y: p[1] });
                }
                return Ok(v);
            }
        }
        Ok(Complex64::new(0.0, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    /// `(r0, V0)` when the potential is a single constant on an
    /// origin-centred disk.
    pub fn as_constant_disk(&self) -> Option<(f64, Complex64)> {
        match self.pieces.as_slice() {
            [Piece { region: Region::Disk { cx, cy, r }, value }] if *cx == 0.0 && *cy == 0.0 && value.is_constant() => {
                Some((*r, value.eval([0.0, 0.0])))
            }
            _ => None,
        }
    }
}

pub fn parse_potential(text: &str) -> Result<PotentialSpec, PotentialError> {
    PotentialSpec::parse(text)
}

pub fn eval_potential(spec: &PotentialSpec, p: [f64; 2]) -> Result<Complex64, PotentialError> {
    spec.eval(p)
}

// ---------------------------------------------------------------------------
// printing

fn fmt_num(c: Complex64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match (c.re, c.im) {
        (re, im) if im == 0.0 => write!(f, "{re:?}"),
        (re, im) if re == 0.0 => write!(f, "{im:?}i"),
        (re, im) => write!(f, "({re:?} + {im:?}i)"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => fmt_num(*c, f),
            Expr::Var(v) => f.write_str(match v {
                Var::X => "x",
                Var::Y => "y",
                Var::R => "r",
                Var::Theta => "theta",
            }),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Pow(e, k) => write!(f, "({e})^{k}"),
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                    Func::Sqrt => "sqrt",
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Log => "log",
                };
                write!(f, "{name}({e})")
            }
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Disk { cx, cy, r } => write!(f, "disk({cx:?},{cy:?};{r:?})"),
            Region::Annulus { r1, r2 } => write!(f, "annulus({r1:?};{r2:?})"),
            Region::Sector { t1, t2 } => write!(f, "sector({t1:?};{t2:?})"),
            Region::Rect { x1, x2, y1, y2 } => write!(f, "rect({x1:?},{x2:?};{y1:?},{y2:?})"),
            Region::And(a, b) => write!(f, "({a} & {b})"),
            Region::Or(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "support {:?}", self.support)?;
        for p in &self.pieces {
            writeln!(f, "piece {}: {}", p.region, p.value)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Sym(char),
}

struct Lexed {
    toks: Vec<(Tok, usize)>,
    end: usize,
}

fn lex(src: &str, line: usize) -> Result<Lexed, PotentialError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| PotentialError::Syntax {
                line,
                col,
                msg: format!("malformed number `{text}`"),
            })?;
            let imag = i < chars.len() && chars[i] == 'i' && !chars.get(i + 1).is_some_and(|d| d.is_alphanumeric() || *d == '_');
            if imag {
                i += 1;
                toks.push((Tok::Imag(v), col));
            } else {
                toks.push((Tok::Num(v), col));
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^(),;:&|".contains(c) {
            toks.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(PotentialError::Syntax { line, col, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(Lexed { toks, end: chars.len() + 1 })
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end: usize,
}

impl Parser {
    fn new(lexed: Lexed, line: usize) -> Parser {
        Parser { toks: lexed.toks, pos: 0, line, end: lexed.end }
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, PotentialError> {
        Err(PotentialError::Syntax { line: self.line, col: self.col(), msg: msg.into() })
    }

    fn semantic<T>(&self, col: usize, msg: impl Into<String>) -> Result<T, PotentialError> {
        Err(PotentialError::Semantic { line: self.line, col, msg: msg.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), PotentialError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.syntax(format!("expected `{c}`"))
        }
    }

    fn done(&self) -> Result<(), PotentialError> {
        if self.pos < self.toks.len() {
            return self.syntax("unexpected trailing input");
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, PotentialError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, PotentialError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, PotentialError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            let neg = self.eat('-');
            if !neg {
                self.eat('+');
            }
            let k = match self.peek() {
                Some(&Tok::Num(v)) if v.fract() == 0.0 && v <= i32::MAX as f64 => v as i32,
                _ => return self.syntax("exponent must be an integer literal"),
            };
            self.pos += 1;
            return Ok(Expr::Pow(Box::new(base), if neg { -k } else { k }));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, PotentialError> {
        let col = self.col();
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.syntax("unexpected end of expression"),
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(Complex64::new(v, 0.0))),
            Tok::Imag(v) => Ok(Expr::Num(Complex64::new(0.0, v))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    "r" => return Ok(Expr::Var(Var::R)),
                    "theta" => return Ok(Expr::Var(Var::Theta)),
                    "i" => return Ok(Expr::Num(Complex64::new(0.0, 1.0))),
                    "pi" => return Ok(Expr::Num(Complex64::new(PI, 0.0))),
                    "exp" => Func::Exp,
                    "abs" => Func::Abs,
                    "sqrt" => Func::Sqrt,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "log" => Func::Log,
                    _ => return self.semantic(col, format!("unknown identifier `{name}`")),
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Tok::Sym(c) => {
                self.pos -= 1;
                self.syntax(format!("unexpected `{c}`"))
            }
        }
    }

    /// A constant real expression (region arguments, the support radius).
    fn real(&mut self) -> Result<f64, PotentialError> {
        let col = self.col();
        let e = self.expr()?;
        if !e.is_constant() {
            return self.semantic(col, "region arguments must be constants");
        }
        let v = e.eval([0.0, 0.0]);
        if v.im != 0.0 || !v.re.is_finite() {
            return self.semantic(col, "region arguments must be finite real numbers");
        }
        Ok(v.re)
    }

    fn region(&mut self) -> Result<Region, PotentialError> {
        let mut lhs = self.region_and()?;
        while self.eat('|') {
            let rhs = self.region_and()?;
            lhs = Region::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn region_and(&mut self) -> Result<Region, PotentialError> {
        let mut lhs = self.region_atom()?;
        while self.eat('&') {
            let rhs = self.region_atom()?;
            lhs = Region::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn region_atom(&mut self) -> Result<Region, PotentialError> {
        if self.eat('(') {
            let r = self.region()?;
            self.expect(')')?;
            return Ok(r);
        }
        let col = self.col();
        let name = match self.peek() {
            Some(Tok::Ident(n)) => n.clone(),
            _ => return self.syntax("expected a region"),
        };
        self.pos += 1;
        self.expect('(')?;
        let region = match name.as_str() {
            "disk" => {
                let cx = self.real()?;
                self.expect(',')?;
                let cy = self.real()?;
                self.expect(';')?;
                let r = self.real()?;
                if !(r > 0.0) {
                    return self.semantic(col, "disk radius must be positive");
                }
                Region::Disk { cx, cy, r }
            }
            "annulus" => {
                let r1 = self.real()?;
                self.expect(';')?;
                let r2 = self.real()?;
                if !(r1 >= 0.0 && r1 < r2) {
                    return self.semantic(col, "annulus needs 0 <= r1 < r2");
                }
                Region::Annulus { r1, r2 }
            }
            "sector" => {
                let t1 = self.real()?;
                self.expect(';')?;
                let t2 = self.real()?;
                if !(t1 < t2 && t2 - t1 <= TAU) {
                    return self.semantic(col, "sector needs t1 < t2 <= t1 + 2pi");
                }
                Region::Sector { t1, t2 }
            }
            "rect" => {
                let x1 = self.real()?;
                self.expect(',')?;
                let x2 = self.real()?;
                self.expect(';')?;
                let y1 = self.real()?;
                self.expect(',')?;
                let y2 = self.real()?;
                if !(x1 < x2 && y1 < y2) {
                    return self.semantic(col, "rect needs x1 < x2 and y1 < y2");
                }
                Region::Rect { x1, x2, y1, y2 }
            }
            _ => return self.semantic(col, format!("unknown region `{name}`")),
        };
        self.expect(')')?;
        Ok(region)
    }
}

impl PotentialSpec {
    pub fn parse(text: &str) -> Result<PotentialSpec, PotentialError> {
        let mut support: Option<f64> = None;
        let mut pieces = Vec::new();
        let mut last_line = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let lexed = lex(raw, line)?;
            if lexed.toks.is_empty() {
                continue;
            }
            let mut p = Parser::new(lexed, line);
            let keyword_col = p.col();
            match p.peek() {
                Some(Tok::Ident(k)) if k == "support" => {
                    p.pos += 1;
                    if support.is_some() {
                        return p.semantic(keyword_col, "duplicate support header");
                    }
                    let col = p.col();
                    let r = p.real()?;
                    p.done()?;
                    if !(r > 0.0) {
                        return p.semantic(col, "support radius must be positive");
                    }
                    support = Some(r);
                }
                Some(Tok::Ident(k)) if k == "piece" => {
                    p.pos += 1;
                    let Some(radius) = support else {
                        return p.semantic(keyword_col, "`support` header must precede the pieces");
                    };
                    let col = p.col();
                    let region = p.region()?;
                    match region.bounding_radius() {
                        None => return p.semantic(col, "region is unbounded"),
                        Some(b) if b > radius * (1.0 + 1e-12) => {
                            return p.semantic(col, format!("region reaches radius {b}, beyond support {radius}"));
                        }
                        _ => {}
                    }
                    p.expect(':')?;
                    let value = p.expr()?;
                    p.done()?;
                    pieces.push(Piece { region, value });
                }
                _ => return p.syntax("expected `support` or `piece`"),
            }
        }
        let Some(support) = support else {
            return Err(PotentialError::Semantic { line: last_line, col: 1, msg: "missing `support` header".into() });
        };
        Ok(PotentialSpec { support, pieces })
    }
}
