//! Minimal closed-form expression parser for user-specified dynamics.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals,
//! state variables `x1..xn`, and the functions `sin`, `cos`, `exp`, `tanh`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Tanh(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, b) => a.eval(vars).powf(b.eval(vars)),
            Expr::Sin(e) => e.eval(vars).sin(),
            Expr::Cos(e) => e.eval(vars).cos(),
            Expr::Exp(e) => e.eval(vars).exp(),
            Expr::Tanh(e) => e.eval(vars).tanh(),
        }
    }

    /// Highest state index referenced, as a 1-based stage number (0 if none).
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) | Expr::Tanh(e) => e.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n_vars: usize,
}

/// Parse `src` with state variables `x1..x{n_vars}`.
pub fn parse(src: &str, n_vars: usize) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        n_vars,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::Parse(format!(
            "unexpected trailing input at byte {} in {src:?}",
            p.pos
        )));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right associative
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(Error::Parse("missing closing parenthesis".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            other => Err(Error::Parse(format!(
                "unexpected token {:?} at byte {}",
                other.map(|c| c as char),
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Parse(format!("bad number literal {text:?}")))
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k == 0 || k > self.n_vars {
                    return Err(Error::Parse(format!(
                        "state variable {name} out of range 1..={}",
                        self.n_vars
                    )));
                }
                return Ok(Expr::Var(k - 1));
            }
        }
        let func = |p: &mut Self, wrap: fn(Box<Expr>) -> Expr| -> Result<Expr> {
            if p.peek() != Some(b'(') {
                return Err(Error::Parse("expected '(' after function name".into()));
            }
            p.pos += 1;
            let arg = p.expr()?;
            if p.peek() != Some(b')') {
                return Err(Error::Parse("missing closing parenthesis".into()));
            }
            p.pos += 1;
            Ok(wrap(Box::new(arg)))
        };
        match name {
            "sin" => func(self, Expr::Sin),
            "cos" => func(self, Expr::Cos),
            "exp" => func(self, Expr::Exp),
            "tanh" => func(self, Expr::Tanh),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            other => Err(Error::Parse(format!("unknown identifier {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_and_precedence() {
        let e = parse("1 + 2 * 3 ^ 2 - 4 / 2", 0).unwrap();
        assert_relative_eq!(e.eval(&[]), 17.0);
    }

    #[test]
    fn variables_and_functions() {
        let e = parse("x1 / (1 + x2^2)", 2).unwrap();
        assert_relative_eq!(e.eval(&[1.0, 1.0]), 0.5);
        let e = parse("0.15*sin(x1 - x2)*exp(-(x1^2 + x2^4))", 2).unwrap();
        assert_relative_eq!(e.eval(&[1.0, 0.0]), 0.15 * 1.0f64.sin() * (-1.0f64).exp());
    }

    #[test]
    fn unary_minus_binds_tighter_than_sub() {
        let e = parse("-x1^2", 1).unwrap();
        // parsed as -(x1^2)
        assert_relative_eq!(e.eval(&[3.0]), -9.0);
    }

    #[test]
    fn parse_errors() {
        assert!(parse("x3", 2).is_err());
        assert!(parse("sin x1", 1).is_err());
        assert!(parse("1 + ", 0).is_err());
        assert!(parse("(1", 0).is_err());
        assert!(parse("foo(1)", 0).is_err());
        assert!(parse("1 2", 0).is_err());
    }

    #[test]
    fn max_var_tracks_dependence() {
        assert_eq!(parse("x1 + x2*x1", 3).unwrap().max_var(), 2);
        assert_eq!(parse("3.5", 2).unwrap().max_var(), 0);
    }
}
