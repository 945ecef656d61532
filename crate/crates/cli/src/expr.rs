//! Expression tags for symbols, phases, and data.
//!
//! Grammar:
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' ['-'] integer | '^' '(' ['-'] integer ')')?
//! atom  := number | var | 'i' | 'pi' | func '(' expr ')' | 'ang(xi)' | '|xi|' | '(' expr ')'
//! ```
//! Variables are `x1..xn`, `xi1..xin` and `t`; for n = 1, `x` and `xi` mean `x1` and `xi1`.
//! A word such as `ix1` is read as `i*x1`.

use std::fmt;

use num_complex::Complex64 as C64;
use torus_pdo::fso::PhaseTable;
use torus_pdo::symbols::{SymbolOrder, SymbolTable};
use torus_pdo::{Error, FrequencyBox, GridFunction, LatticeFunction, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Var {
    X(usize),
    Xi(usize),
    T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Exp,
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(C64),
    Var(Var),
    /// ⟨ξ⟩ = (1 + |ξ|²)^{1/2}.
    Bracket,
    /// |ξ|.
    Norm,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

/// Parsed expression over (x, ξ, t).
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    src: String,
    n: usize,
    root: Node,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Word(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    i = j;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let v = src[start..i]
                .parse()
                .map_err(|_| Error::Parse { pos: start, msg: format!("bad number {:?}", &src[start..i]) })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Word(src[start..i].to_string())));
        } else if "+-*/^()|".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Parse { pos: i, msg: format!("unexpected character {c:?}") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    n: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos(), msg: msg.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let paren = self.eat('(');
        let neg = self.eat('-');
        let e = match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= 64.0 => *v as i32,
            _ => return self.err("exponent must be an integer literal"),
        };
        self.at += 1;
        if paren {
            self.expect(')')?;
        }
        Ok(Node::Pow(Box::new(base), if neg { -e } else { e }))
    }

    fn atom(&mut self) -> Result<Node> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Node::Const(C64::new(v, 0.0)))
            }
            Some(Tok::Sym('(')) => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Sym('|')) => {
                self.at += 1;
                match self.peek() {
                    Some(Tok::Word(w)) if w == "xi" => self.at += 1,
                    _ => return self.err("only |xi| is supported between bars"),
                }
                self.expect('|')?;
                Ok(Node::Norm)
            }
            Some(Tok::Word(w)) => {
                self.at += 1;
                self.word(&w, pos)
            }
            Some(Tok::Sym(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of expression"),
        }
    }

    fn word(&mut self, w: &str, pos: usize) -> Result<Node> {
        let func = match w {
            "exp" => Some(Func::Exp),
            "cos" => Some(Func::Cos),
            "sin" => Some(Func::Sin),
            _ => None,
        };
        if let Some(f) = func {
            self.expect('(')?;
            let arg = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Call(f, Box::new(arg)));
        }
        if w == "ang" {
            self.expect('(')?;
            match self.peek() {
                Some(Tok::Word(v)) if v == "xi" => self.at += 1,
                _ => return self.err("ang takes the argument xi"),
            }
            self.expect(')')?;
            return Ok(Node::Bracket);
        }
        if let Some(node) = self.constant_or_var(w, pos)? {
            return Ok(node);
        }
        if let Some(rest) = w.strip_prefix('i') {
            if let Some(v) = self.constant_or_var(rest, pos + 1)? {
                return Ok(Node::Mul(Box::new(Node::Const(C64::new(0.0, 1.0))), Box::new(v)));
            }
        }
        Err(Error::Parse { pos, msg: format!("unknown identifier {w:?} in {:?}", self.src) })
    }

    fn constant_or_var(&self, w: &str, pos: usize) -> Result<Option<Node>> {
        let var = |v: Var, j: usize| -> Result<Option<Node>> {
            if j == 0 || j > self.n {
                return Err(Error::Parse { pos, msg: format!("{w} is not a coordinate of T^{}", self.n) });
            }
            Ok(Some(Node::Var(v)))
        };
        let index = |s: &str| s.parse::<usize>().ok().filter(|_| !s.starts_with('0'));
        match w {
            "i" => Ok(Some(Node::Const(C64::new(0.0, 1.0)))),
            "pi" => Ok(Some(Node::Const(C64::new(std::f64::consts::PI, 0.0)))),
            "t" => Ok(Some(Node::Var(Var::T))),
            "x" | "xi" if self.n != 1 => {
                Err(Error::Parse { pos, msg: format!("{w} is ambiguous for n = {}; use {w}1..{w}{}", self.n, self.n) })
            }
            "x" => Ok(Some(Node::Var(Var::X(0)))),
            "xi" => Ok(Some(Node::Var(Var::Xi(0)))),
            _ => {
                if let Some(j) = w.strip_prefix("xi").and_then(index) {
                    var(Var::Xi(j - 1), j)
                } else if let Some(j) = w.strip_prefix('x').and_then(index) {
                    var(Var::X(j - 1), j)
                } else {
                    Ok(None)
                }
            }
        }
    }
}

impl Expr {
    /// Parses `src` for functions on T^n × Z^n.
    pub fn parse(src: &str, n: usize) -> Result<Expr> {
        let toks = lex(src)?;
        let mut p = Parser { toks, at: 0, end: src.len(), n, src };
        let root = p.expr()?;
        if p.at != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(Expr { src: src.to_string(), n, root })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: &[f64], xi: &[f64], t: f64) -> C64 {
        eval(&self.root, x, xi, t)
    }

    pub fn depends_on_x(&self) -> bool {
        uses(&self.root, &|v| matches!(v, Var::X(_)))
    }

    pub fn depends_on_xi(&self) -> bool {
        uses(&self.root, &|v| matches!(v, Var::Xi(_))) || uses_xi_vector(&self.root)
    }

    /// Symbol a(x, ξ) tabulated on the box and grid.
    pub fn symbol_table(&self, bx: FrequencyBox, grid: usize, order: SymbolOrder, t: f64) -> Result<SymbolTable> {
        self.check_dim(bx.n)?;
        SymbolTable::from_fn(bx, grid, order, |x, p| self.eval(x, &as_f64(p), t))
    }

    /// x-independent lattice function ξ ↦ a(ξ).
    pub fn lattice_function(&self, bx: FrequencyBox, t: f64) -> Result<LatticeFunction> {
        self.check_dim(bx.n)?;
        if self.depends_on_x() {
            return Err(Error::Configuration(format!("{:?} must not depend on x", self.src)));
        }
        let x = vec![0.0; bx.n];
        Ok(LatticeFunction::from_fn(bx, |p| self.eval(&x, &as_f64(p), t)))
    }

    /// Real phase φ(x, ξ); a non-real value anywhere on the table is an error.
    pub fn phase_table(&self, bx: FrequencyBox, grid: usize, t: f64) -> Result<PhaseTable> {
        self.check_dim(bx.n)?;
        let table = PhaseTable::from_fn(bx, grid, |x, p| self.eval(x, &as_f64(p), t).re)?;
        let pts: Vec<Vec<f64>> = bx.points().map(|p| as_f64(&p)).collect();
        for ix in 0..table.n_x() {
            let x = torus_pdo::harmonic::grid_point(ix, bx.n, grid);
            for p in &pts {
                let v = self.eval(&x, p, t);
                if v.im.abs() > 1e-12 * v.re.abs().max(1.0) {
                    return Err(Error::Phase(format!("{:?} is not real at x = {x:?}, xi = {p:?}", self.src)));
                }
            }
        }
        Ok(table)
    }

    /// Function of x sampled on the grid, carrying the given box.
    pub fn grid_function(&self, bx: FrequencyBox, grid: usize, t: f64) -> Result<GridFunction> {
        self.check_dim(bx.n)?;
        if self.depends_on_xi() {
            return Err(Error::Configuration(format!("{:?} must not depend on xi", self.src)));
        }
        let xi = vec![0.0; bx.n];
        GridFunction::from_fn(bx, grid, |x| self.eval(x, &xi, t))
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::Configuration(format!("{:?} was parsed for n = {}, box has n = {n}", self.src, self.n)));
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

fn as_f64(p: &[i64]) -> Vec<f64> {
    p.iter().map(|&v| v as f64).collect()
}

fn eval(node: &Node, x: &[f64], xi: &[f64], t: f64) -> C64 {
    let r = |v: f64| C64::new(v, 0.0);
    match node {
        Node::Const(c) => *c,
        Node::Var(Var::X(j)) => r(x[*j]),
        Node::Var(Var::Xi(j)) => r(xi[*j]),
        Node::Var(Var::T) => r(t),
        Node::Bracket => r((1.0 + xi.iter().map(|v| v * v).sum::<f64>()).sqrt()),
        Node::Norm => r(xi.iter().map(|v| v * v).sum::<f64>().sqrt()),
        Node::Neg(a) => -eval(a, x, xi, t),
        Node::Add(a, b) => eval(a, x, xi, t) + eval(b, x, xi, t),
        Node::Sub(a, b) => eval(a, x, xi, t) - eval(b, x, xi, t),
        Node::Mul(a, b) => eval(a, x, xi, t) * eval(b, x, xi, t),
        Node::Div(a, b) => eval(a, x, xi, t) / eval(b, x, xi, t),
        Node::Pow(a, e) => eval(a, x, xi, t).powi(*e),
        Node::Call(f, a) => {
            let v = eval(a, x, xi, t);
            match f {
                Func::Exp => v.exp(),
                Func::Cos => v.cos(),
                Func::Sin => v.sin(),
            }
        }
    }
}

fn uses(node: &Node, pred: &dyn Fn(Var) -> bool) -> bool {
    match node {
        Node::Var(v) => pred(*v),
        Node::Const(_) | Node::Bracket | Node::Norm => false,
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => uses(a, pred),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => uses(a, pred) || uses(b, pred),
    }
}

fn uses_xi_vector(node: &Node) -> bool {
    match node {
        Node::Bracket | Node::Norm => true,
        Node::Const(_) | Node::Var(_) => false,
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => uses_xi_vector(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            uses_xi_vector(a) || uses_xi_vector(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, n: usize, x: &[f64], xi: &[f64]) -> C64 {
        Expr::parse(s, n).unwrap().eval(x, xi, 0.0)
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(ev("xi1", 1, &[0.3], &[5.0]), C64::new(5.0, 0.0));
        let b = ev("ang(xi)^2", 2, &[0.0, 0.0], &[3.0, -2.0]);
        assert!((b - C64::new(14.0, 0.0)).norm() < 1e-12);
        let e = ev("exp(i*x1)*xi1", 1, &[0.7], &[3.0]);
        assert!((e - C64::from_polar(3.0, 0.7)).norm() < 1e-15);
        assert_eq!(ev("2^-2 + 3*(1-2)", 1, &[0.0], &[0.0]), C64::new(-2.75, 0.0));
        assert!((ev("ang(xi)^(-2)", 1, &[0.0], &[1.0]) - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(ev("-xi^2", 1, &[0.0], &[3.0]), C64::new(-9.0, 0.0));
        assert_eq!(ev("1e-1*t", 1, &[0.0], &[0.0]), C64::new(0.0, 0.0));
    }

    #[test]
    fn norm_bars_and_implicit_imaginary_unit() {
        let a = ev("1+|xi|^2+exp(ix1)", 1, &[0.4], &[-3.0]);
        let want = C64::new(10.0, 0.0) + C64::from_polar(1.0, 0.4);
        assert!((a - want).norm() < 1e-14);
        assert_eq!(ev("ixi1", 1, &[0.0], &[2.0]), C64::new(0.0, 2.0));
    }

    #[test]
    fn parse_errors_report_positions() {
        let pos = |s: &str, n: usize| match Expr::parse(s, n) {
            Err(Error::Parse { pos, .. }) => pos,
            other => panic!("{s}: {other:?}"),
        };
        assert_eq!(pos("1 + foo", 1), 4);
        assert_eq!(pos("x3", 2), 0);
        assert_eq!(pos("xi1^x1", 1), 4);
        assert_eq!(pos("exp(x1", 1), 6);
        assert_eq!(pos("2 $ 3", 1), 2);
        assert_eq!(pos("x", 2), 0);
        assert_eq!(pos("(1+2))", 1), 5);
        assert_eq!(pos("", 1), 0);
    }

    #[test]
    fn symbol_matches_hand_built_table() {
        let bx = FrequencyBox::new(1, 8, 0).unwrap();
        let e = Expr::parse("exp(i*x1)*xi1", 1).unwrap();
        let a = e.symbol_table(bx, 32, SymbolOrder::classical(1.0), 0.0).unwrap();
        let b = SymbolTable::from_fn(bx, 32, SymbolOrder::classical(1.0), |x, p| C64::from_polar(p[0] as f64, x[0]))
            .unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn builders_check_dependencies() {
        let bx = FrequencyBox::new(1, 4, 0).unwrap();
        assert!(Expr::parse("xi*x", 1).unwrap().lattice_function(bx, 0.0).is_err());
        assert!(Expr::parse("ang(xi)", 1).unwrap().grid_function(bx, 16, 0.0).is_err());
        assert!(Expr::parse("x*xi + i", 1).unwrap().phase_table(bx, 16, 0.0).is_err());
        let phi = Expr::parse("x*xi + t*xi^2", 1).unwrap().phase_table(bx, 16, 0.5).unwrap();
        assert!(phi.is_valid());
        let g = Expr::parse("cos(x)", 1).unwrap().grid_function(bx, 16, 0.0).unwrap();
        assert!((g.coefficient(&[1]) - C64::new(0.5, 0.0)).norm() < 1e-15);
    }
}
