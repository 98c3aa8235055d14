//! Scalar expressions over named variables.
//!
//! Grammar accepted by [`parse`] (whitespace is insignificant):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?
//! primary := number | ident | func "(" expr ")" | "(" expr ")"
//! func    := "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh"
//! number  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2` is
//! `-(x^2)` and `2^3^2` is `2^(3^2)`. A minus directly in front of a numeric
//! literal (not itself raised to a power) folds into a negative constant.

pub(crate) mod diff;
mod parser;
mod print;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

pub use diff::{differentiate, gradient};
pub use parser::{parse, ParseError};
pub use print::Named;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl UnaryOp {
    pub fn function_name(self) -> Option<&'static str> {
        Some(match self {
            UnaryOp::Neg => return None,
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Tanh => "tanh",
        })
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "tanh" => UnaryOp::Tanh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ScalarExpr {
    Constant(f64),
    Variable(usize),
    Unary(UnaryOp, Box<ScalarExpr>),
    Binary(BinaryOp, Box<ScalarExpr>, Box<ScalarExpr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain fault ({reason}) in `{node}` at {point:?}")]
    DomainFault {
        reason: &'static str,
        node: String,
        point: Vec<f64>,
    },
    #[error("variable index {index} out of range for a {dim}-dimensional point")]
    VariableOutOfRange { index: usize, dim: usize },
}

impl ScalarExpr {
    pub fn constant(c: f64) -> Self {
        ScalarExpr::Constant(c)
    }

    pub fn var(index: usize) -> Self {
        ScalarExpr::Variable(index)
    }

    pub fn unary(op: UnaryOp, child: ScalarExpr) -> Self {
        ScalarExpr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, l: ScalarExpr, r: ScalarExpr) -> Self {
        ScalarExpr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarExpr::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            ScalarExpr::Constant(_) => None,
            ScalarExpr::Variable(i) => Some(*i),
            ScalarExpr::Unary(_, c) => c.max_var(),
            ScalarExpr::Binary(_, l, r) => match (l.max_var(), r.max_var()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    pub fn node_count(&self) -> usize {
        match self {
            ScalarExpr::Constant(_) | ScalarExpr::Variable(_) => 1,
            ScalarExpr::Unary(_, c) => 1 + c.node_count(),
            ScalarExpr::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Renames variable `i` to `map[i]`.
    pub fn remap_vars(&self, map: &[usize]) -> Self {
        match self {
            ScalarExpr::Constant(c) => ScalarExpr::Constant(*c),
            ScalarExpr::Variable(i) => ScalarExpr::Variable(map[*i]),
            ScalarExpr::Unary(op, c) => ScalarExpr::unary(*op, c.remap_vars(map)),
            ScalarExpr::Binary(op, l, r) => ScalarExpr::binary(*op, l.remap_vars(map), r.remap_vars(map)),
        }
    }

    /// Evaluates at `point`. Domain violations and non-finite intermediate
    /// values are errors, never NaN.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            ScalarExpr::Constant(c) => *c,
            ScalarExpr::Variable(i) => *point.get(*i).ok_or(EvalError::VariableOutOfRange {
                index: *i,
                dim: point.len(),
            })?,
            ScalarExpr::Unary(op, c) => {
                let u = c.eval(point)?;
                match op {
                    UnaryOp::Neg => -u,
                    UnaryOp::Sin => math::sin(u),
                    UnaryOp::Cos => math::cos(u),
                    UnaryOp::Exp => math::exp(u),
                    UnaryOp::Tanh => math::tanh(u),
                    UnaryOp::Log => {
                        if u <= 0.0 {
                            return Err(self.fault("log of non-positive value", point));
                        }
                        math::ln(u)
                    }
                    UnaryOp::Sqrt => {
                        if u < 0.0 {
                            return Err(self.fault("sqrt of negative value", point));
                        }
                        math::sqrt(u)
                    }
                }
            }
            ScalarExpr::Binary(op, l, r) => {
                let a = l.eval(point)?;
                let b = r.eval(point)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(self.fault("division by zero", point));
                        }
                        a / b
                    }
                    BinaryOp::Pow => eval_pow(a, b).map_err(|why| self.fault(why, point))?,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.fault("non-finite value", point))
        }
    }

    fn fault(&self, reason: &'static str, point: &[f64]) -> EvalError {
        EvalError::DomainFault {
            reason,
            node: format!("{self}"),
            point: point.to_vec(),
        }
    }
}

fn eval_pow(base: f64, exp: f64) -> Result<f64, &'static str> {
    let integral = math::trunc(exp) == exp;
    if base == 0.0 && exp < 0.0 {
        return Err("zero to a negative power");
    }
    if base < 0.0 && !integral {
        return Err("negative base with non-integer exponent");
    }
    if integral && math::abs(exp) <= 64.0 {
        Ok(math::powi(base, exp as i32))
    } else {
        Ok(math::pow(base, exp))
    }
}

/// A vector field with one scalar expression per coordinate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VectorFieldExpr {
    components: Vec<ScalarExpr>,
}

impl VectorFieldExpr {
    pub fn new(components: Vec<ScalarExpr>) -> Self {
        Self { components }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            components: (0..dim).map(|_| ScalarExpr::Constant(0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.components
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(point)?;
        }
        Ok(())
    }
}
