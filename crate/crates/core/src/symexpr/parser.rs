use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::{BinaryOp, ScalarExpr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at offset {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
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
    Comma,
}

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
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
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(start, alloc::format!("malformed number `{text}`")))?;
                if !v.is_finite() {
                    return Err(syntax(start, alloc::format!("number `{text}` overflows")));
                }
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, alloc::format!("unexpected character `{ch}`")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ScalarExpr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = ScalarExpr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<ScalarExpr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.bump();
            if let Some(Tok::Num(v)) = self.peek() {
                if self.peek_at(1) != Some(&Tok::Caret) {
                    let v = *v;
                    self.bump();
                    return Ok(ScalarExpr::Constant(-v));
                }
            }
            let inner = self.unary()?;
            return Ok(ScalarExpr::unary(UnaryOp::Neg, inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarExpr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.bump();
            let exp = self.unary()?;
            return Ok(ScalarExpr::binary(BinaryOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<ScalarExpr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(ScalarExpr::Constant(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    let op = UnaryOp::from_function_name(&name).ok_or_else(|| ParseError::UnknownIdentifier {
                        name: name.clone(),
                        offset: at,
                    })?;
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        args.push(self.expr()?);
                        while self.peek() == Some(&Tok::Comma) {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_rparen()?;
                    if args.len() != 1 {
                        return Err(ParseError::Arity {
                            name,
                            offset: at,
                            expected: 1,
                            found: args.len(),
                        });
                    }
                    return Ok(ScalarExpr::unary(op, args.pop().unwrap()));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(ScalarExpr::Variable(i)),
                    None => Err(ParseError::UnknownIdentifier { name, offset: at }),
                }
            }
            Some(_) => Err(syntax(at, "expected a number, identifier or `(`")),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::RParen) => Ok(()),
            _ => Err(syntax(at, "expected `)`")),
        }
    }
}

/// Parses `src` with variables named by `vars` (index = position).
pub fn parse(src: &str, vars: &[&str]) -> Result<ScalarExpr, ParseError> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
        vars,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.offset(), "unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::BinaryOp::*;
    use crate::symexpr::ScalarExpr::{Constant as C, Variable as V};
    use alloc::format;

    const XY: &[&str] = &["x", "y"];

    fn b(op: BinaryOp, l: ScalarExpr, r: ScalarExpr) -> ScalarExpr {
        ScalarExpr::binary(op, l, r)
    }

    #[test]
    fn planar_field_component() {
        let e = parse("x*(x^2+y^2-1)", XY).unwrap();
        let expected = b(
            Mul,
            V(0),
            b(Sub, b(Add, b(Pow, V(0), C(2.0)), b(Pow, V(1), C(2.0))), C(1.0)),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = parse("x +", XY).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 3, .. }), "{err:?}");
    }

    #[test]
    fn unary_minus_binds_looser_than_pow() {
        let e = parse("-x^2", XY).unwrap();
        assert_eq!(e, ScalarExpr::unary(UnaryOp::Neg, b(Pow, V(0), C(2.0))));
        assert_eq!(parse("-2^2", XY).unwrap().eval(&[0.0, 0.0]).unwrap(), -4.0);
        assert_eq!(parse("-2", XY).unwrap(), C(-2.0));
        assert_eq!(parse("x^-2", XY).unwrap(), b(Pow, V(0), C(-2.0)));
    }

    #[test]
    fn whitespace_insensitive() {
        assert_eq!(parse(" x *\t( y - 1 )\n", XY).unwrap(), parse("x*(y-1)", XY).unwrap());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse("z + 1", XY),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(parse("foo(x)", XY), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(
            parse("sin(x, y)", XY),
            Err(ParseError::Arity {
                expected: 1,
                found: 2,
                ..
            })
        ));
        assert!(matches!(parse("sin()", XY), Err(ParseError::Arity { found: 0, .. })));
        assert!(matches!(parse("", XY), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("(x", XY), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x y", XY), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x $ y", XY), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("1..2", XY), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("1e999", XY), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1.5e-3", XY).unwrap(), C(1.5e-3));
        assert_eq!(parse(".5", XY).unwrap(), C(0.5));
        assert_eq!(parse("2E+2", XY).unwrap(), C(200.0));
    }

    #[test]
    fn print_then_parse_is_identity() {
        for src in [
            "x*(x^2+y^2-1)",
            "-x^2",
            "--2",
            "-(2)",
            "(-2)^x",
            "x^y^2",
            "(x^y)^2",
            "x-(y-1)",
            "x/(y*2)",
            "x*-y",
            "2^-x^2",
            "-(x+y)*3",
            "sin(cos(x))/exp(-y)",
            "-0",
        ] {
            let e = parse(src, XY).unwrap();
            let printed = format!("{}", e.named(XY));
            assert_eq!(parse(&printed, XY).unwrap(), e, "{src} -> {printed}");
        }
    }
}
