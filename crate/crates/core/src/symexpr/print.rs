//! Canonical printer. Parenthesizes only where the grammar requires, so that
//! `parse(print(e)) == e` for every tree.

use core::fmt;

use super::{BinaryOp, ScalarExpr, UnaryOp};

const ADD: u8 = 1;
const MUL: u8 = 2;
const UNARY: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn prec(e: &ScalarExpr) -> u8 {
    match e {
        ScalarExpr::Constant(c) if c.is_sign_negative() => UNARY,
        ScalarExpr::Constant(_) | ScalarExpr::Variable(_) => ATOM,
        ScalarExpr::Unary(UnaryOp::Neg, _) => UNARY,
        ScalarExpr::Unary(_, _) => ATOM,
        ScalarExpr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => ADD,
        ScalarExpr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => MUL,
        ScalarExpr::Binary(BinaryOp::Pow, _, _) => POW,
    }
}

/// Display adapter that prints variables by name.
pub struct Named<'a> {
    expr: &'a ScalarExpr,
    names: Option<&'a [&'a str]>,
}

impl ScalarExpr {
    /// Prints with `names[i]` for variable `i`; plain `Display` uses `x1, x2, …`.
    pub fn named<'a>(&'a self, names: &'a [&'a str]) -> Named<'a> {
        Named {
            expr: self,
            names: Some(names),
        }
    }
}

impl Named<'_> {
    fn sub<'b>(&'b self, expr: &'b ScalarExpr) -> Named<'b> {
        Named {
            expr,
            names: self.names,
        }
    }

    fn child(&self, f: &mut fmt::Formatter<'_>, e: &ScalarExpr, min: u8) -> fmt::Result {
        if prec(e) < min {
            write!(f, "({})", self.sub(e))
        } else {
            write!(f, "{}", self.sub(e))
        }
    }
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            ScalarExpr::Constant(c) => write!(f, "{c}"),
            ScalarExpr::Variable(i) => match self.names.and_then(|n| n.get(*i)) {
                Some(name) => f.write_str(name),
                None => write!(f, "x{}", i + 1),
            },
            ScalarExpr::Unary(UnaryOp::Neg, c) => {
                // `-2` would reparse as a negative literal
                if matches!(**c, ScalarExpr::Constant(v) if !v.is_sign_negative()) {
                    write!(f, "-({})", self.sub(c))
                } else {
                    f.write_str("-")?;
                    self.child(f, c, UNARY)
                }
            }
            ScalarExpr::Unary(op, c) => {
                write!(f, "{}({})", op.function_name().unwrap_or("?"), self.sub(c))
            }
            ScalarExpr::Binary(op, l, r) => {
                let (sym, lmin, rmin) = match op {
                    BinaryOp::Add => ("+", ADD, MUL),
                    BinaryOp::Sub => ("-", ADD, MUL),
                    BinaryOp::Mul => ("*", MUL, UNARY),
                    BinaryOp::Div => ("/", MUL, UNARY),
                    BinaryOp::Pow => ("^", ATOM, UNARY),
                };
                self.child(f, l, lmin)?;
                f.write_str(sym)?;
                self.child(f, r, rmin)
            }
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Named {
            expr: self,
            names: None,
        }
        .fmt(f)
    }
}
