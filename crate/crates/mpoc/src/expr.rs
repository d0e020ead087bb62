//! Small arithmetic-expression grammar for config-file data:
//! `+ - * / ^`, `sin cos exp sqrt abs`, the constant `pi`, and the
//! variables `x`, `y` (position) and `s` (boundary arc length).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser { toks: lex(text)?, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(Error::Expr(format!("unexpected trailing token in `{text}`")));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64, s: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::S) => s,
            Expr::Neg(e) => -e.eval(x, y, s),
            Expr::Add(a, b) => a.eval(x, y, s) + b.eval(x, y, s),
            Expr::Sub(a, b) => a.eval(x, y, s) - b.eval(x, y, s),
            Expr::Mul(a, b) => a.eval(x, y, s) * b.eval(x, y, s),
            Expr::Div(a, b) => a.eval(x, y, s) / b.eval(x, y, s),
            Expr::Pow(a, b) => a.eval(x, y, s).powf(b.eval(x, y, s)),
            Expr::Call(f, e) => {
                let v = e.eval(x, y, s);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => v.sqrt(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<f64>().map_err(|_| Error::Expr(format!("bad number `{s}`")))?;
                out.push(Tok::Num(v));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(Error::Expr(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary minus binds weaker than exponentiation: -x^2 = -(x^2)
    fn factor(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            let exp = self.factor()?; // right associative
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::Expr("missing closing parenthesis".into())),
                }
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "s" => Ok(Expr::Var(Var::S)),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "sin" | "cos" | "exp" | "sqrt" | "abs" => {
                    if !matches!(self.next(), Some(Tok::LParen)) {
                        return Err(Error::Expr(format!("`{name}` needs parentheses")));
                    }
                    let arg = self.expr()?;
                    if !matches!(self.next(), Some(Tok::RParen)) {
                        return Err(Error::Expr("missing closing parenthesis".into()));
                    }
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "sqrt" => Func::Sqrt,
                        _ => Func::Abs,
                    };
                    Ok(Expr::Call(f, Box::new(arg)))
                }
                _ => Err(Error::Expr(format!("unknown identifier `{name}`"))),
            },
            other => Err(Error::Expr(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_and_precedence() {
        let e = Expr::parse("1 + 2*3 - 4/2").unwrap();
        assert_eq!(e.eval(0.0, 0.0, 0.0), 5.0);
        let e = Expr::parse("2^3^2").unwrap(); // right associative
        assert_eq!(e.eval(0.0, 0.0, 0.0), 512.0);
        let e = Expr::parse("-x^2 + y").unwrap();
        assert_eq!(e.eval(2.0, 1.0, 0.0), -3.0);
    }

    #[test]
    fn functions_and_constants() {
        let e = Expr::parse("sin(pi*x)*cos(pi*y)").unwrap();
        assert!((e.eval(0.5, 0.0, 0.0) - 1.0).abs() < 1e-15);
        let e = Expr::parse("exp(0) + sqrt(4) + abs(-3)").unwrap();
        assert_eq!(e.eval(0.0, 0.0, 0.0), 6.0);
        let e = Expr::parse("s*(1-s)").unwrap();
        assert!((e.eval(0.0, 0.0, 0.25) - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn errors_reported() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(2)").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn scientific_notation() {
        let e = Expr::parse("1.5e-3 + 2E2").unwrap();
        assert!((e.eval(0.0, 0.0, 0.0) - 200.0015).abs() < 1e-12);
    }
}
