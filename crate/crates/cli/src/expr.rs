//! Arithmetic expressions in `x1`, `x2` for user-supplied fields.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x1' | 'x2' | 'pi' | 'e'
//!         | ('sin' | 'cos' | 'abs') '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x1^2`
//! is `-(x1^2)`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at offset {pos}")]
    BadChar { ch: char, pos: usize },
    #[error("unknown identifier '{name}' at offset {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("malformed number '{text}' at offset {pos}")]
    BadNumber { text: String, pos: usize },
    #[error("expected {expected} at offset {pos}")]
    Expected { expected: &'static str, pos: usize },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X1,
    X2,
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Abs,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = lex(src)?;
        if tokens.is_empty() {
            return Err(ExprError::Empty);
        }
        let mut p = Parser {
            tokens,
            at: 0,
            end: src.len(),
        };
        let e = p.expr()?;
        if p.at < p.tokens.len() {
            return Err(ExprError::Expected {
                expected: "end of input",
                pos: p.tokens[p.at].pos,
            });
        }
        Ok(e)
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X1 => x1,
            Expr::X2 => x2,
            Expr::Neg(a) => -a.eval(x1, x2),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x1, x2), b.eval(x1, x2));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(x1, x2);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, only when followed by digits
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| ExprError::BadNumber {
                text: text.to_string(),
                pos: start,
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                pos: i,
            });
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(ExprError::BadChar { ch, pos: i });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |t| t.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if matches!(self.tokens.get(self.at), Some(Token { tok: Tok::Sym(s), .. }) if *s == c) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char, expected: &'static str) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ExprError::Expected {
                expected,
                pos: self.pos(),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
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

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.tokens.get(self.at).cloned() else {
            return Err(ExprError::Expected {
                expected: "a value",
                pos: self.end,
            });
        };
        self.at += 1;
        match tok.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')', "')'")?;
                Ok(e)
            }
            Tok::Sym(_) => Err(ExprError::Expected {
                expected: "a value",
                pos: tok.pos,
            }),
            Tok::Ident(name) => match name.as_str() {
                "x1" => Ok(Expr::X1),
                "x2" => Ok(Expr::X2),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                "sin" | "cos" | "abs" => {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => Func::Abs,
                    };
                    self.expect('(', "'(' after function name")?;
                    let arg = self.expr()?;
                    self.expect(')', "')'")?;
                    Ok(Expr::Call(f, Box::new(arg)))
                }
                _ => Err(ExprError::UnknownIdent { name, pos: tok.pos }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x1: f64, x2: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x1, x2)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0, 0.0), -4.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, 0.0), -4.0);
        assert_eq!(ev("2 ^ -1", 0.0, 0.0), 0.5);
    }

    #[test]
    fn variables_functions_constants() {
        let v = ev("sin(pi*x1)*sin(pi*x2)", 0.5, 0.5);
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(ev("abs(x1 - x2)", 0.25, 1.0), 0.75);
        assert!((ev("cos(0) + e", 0.0, 0.0) - (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0, 0.0), 150.2);
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(Expr::parse(""), Err(ExprError::Empty));
        assert_eq!(Expr::parse("   "), Err(ExprError::Empty));
        assert!(matches!(
            Expr::parse("x1 + $"),
            Err(ExprError::BadChar { ch: '$', pos: 5 })
        ));
        assert!(matches!(
            Expr::parse("y + 1"),
            Err(ExprError::UnknownIdent { pos: 0, .. })
        ));
        assert!(matches!(
            Expr::parse("(1 + 2"),
            Err(ExprError::Expected { pos: 6, .. })
        ));
        assert!(matches!(
            Expr::parse("1 2"),
            Err(ExprError::Expected { pos: 2, .. })
        ));
        assert!(matches!(
            Expr::parse("sin x1"),
            Err(ExprError::Expected { .. })
        ));
        assert!(matches!(
            Expr::parse("1.2.3"),
            Err(ExprError::BadNumber { .. })
        ));
        assert!(matches!(
            Expr::parse("2 *"),
            Err(ExprError::Expected { pos: 3, .. })
        ));
    }
}
