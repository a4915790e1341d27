//! Small arithmetic expression language for field literals such as
//! `0.05*cos(2*pi*x1) + 0.01*sin(2*pi*(x1 + y2))`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Real coordinate by axis index: x1 → 0, y1 → 1, x2 → 2, ...
    Var(usize),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens: &tokens, pos: 0 };
        let e = p.sum()?;
        if p.pos != tokens.len() {
            return Err(Error::Config(format!("unexpected trailing input in `{src}`")));
        }
        Ok(e)
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(a) => coords.get(*a).copied().unwrap_or(0.0),
            Expr::Neg(e) => -e.eval(coords),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(coords), b.eval(coords));
                match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    Op::Mul => x * y,
                    Op::Div => x / y,
                    Op::Pow => x.powf(y),
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(coords);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sqrt => x.sqrt(),
                }
            }
        }
    }

    /// Largest axis index referenced, if any.
    pub fn max_axis(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(a) => Some(*a),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_axis(),
            Expr::Bin(_, a, b) => match (a.max_axis(), b.max_axis()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Config(format!("unexpected character `{c}` in expression")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // Right associative; binds tighter than unary minus on the left.
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| Error::Config("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err(Error::Config("missing `)`".into()));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = func(&name) {
                    if !self.eat('(') {
                        return Err(Error::Config(format!("`{name}` needs an argument")));
                    }
                    let e = self.sum()?;
                    if !self.eat(')') {
                        return Err(Error::Config("missing `)`".into()));
                    }
                    return Ok(Expr::Call(f, Box::new(e)));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    _ => variable(&name)
                        .map(Expr::Var)
                        .ok_or_else(|| Error::Config(format!("unknown identifier `{name}`"))),
                }
            }
            Tok::Sym(c) => Err(Error::Config(format!("unexpected `{c}`"))),
        }
    }
}

fn func(name: &str) -> Option<Func> {
    Some(match name {
        "sin" => Func::Sin,
        "cos" => Func::Cos,
        "exp" => Func::Exp,
        "log" | "ln" => Func::Log,
        "sqrt" => Func::Sqrt,
        _ => return None,
    })
}

fn variable(name: &str) -> Option<usize> {
    let (head, idx) = name.split_at(1);
    let i: usize = idx.parse().ok()?;
    if !(1..=3).contains(&i) {
        return None;
    }
    match head {
        "x" => Some(2 * (i - 1)),
        "y" => Some(2 * (i - 1) + 1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn precedence_and_variables() {
        let e = Expr::parse("1 + 2*3^2 - -4/2").unwrap();
        assert_eq!(e.eval(&[]), 1.0 + 18.0 + 2.0);
        let e = Expr::parse("0.05*cos(2*pi*x1) + sin(2*pi*(x1+y2))").unwrap();
        let c = [0.1, 0.0, 0.0, 0.3];
        let want = 0.05 * (2.0 * PI * 0.1).cos() + (2.0 * PI * 0.4).sin();
        assert!((e.eval(&c) - want).abs() < 1e-15);
        assert_eq!(e.max_axis(), Some(3));
        assert_eq!(Expr::parse("-2^2").unwrap().eval(&[]), -4.0);
        assert_eq!(Expr::parse("2^-1").unwrap().eval(&[]), 0.5);
        assert_eq!(Expr::parse("1e-3").unwrap().eval(&[]), 1e-3);
        assert!((Expr::parse("log(2 + cos(0))").unwrap().eval(&[]) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "1 +", "cos 1", "(1", "z1", "x4", "2 $ 3", "1 2"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }
}
