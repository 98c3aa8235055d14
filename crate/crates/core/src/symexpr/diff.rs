//! Structural symbolic differentiation.
//!
//! Simplification is limited to 0/1 identities and folding of constant
//! subtrees; anything else is left as produced by the rules.

use alloc::vec::Vec;

use super::{BinaryOp, ScalarExpr, UnaryOp, VectorFieldExpr};

fn fold(e: ScalarExpr) -> ScalarExpr {
    if e.is_constant() {
        if let Ok(v) = e.eval(&[]) {
            return ScalarExpr::Constant(v);
        }
    }
    e
}

fn is(e: &ScalarExpr, v: f64) -> bool {
    e.as_constant() == Some(v)
}

pub(crate) fn add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    if is(&a, 0.0) {
        return fold(b);
    }
    if is(&b, 0.0) {
        return fold(a);
    }
    fold(ScalarExpr::binary(BinaryOp::Add, a, b))
}

pub(crate) fn sub(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    if is(&b, 0.0) {
        return fold(a);
    }
    if is(&a, 0.0) {
        return neg(fold(b));
    }
    fold(ScalarExpr::binary(BinaryOp::Sub, a, b))
}

pub(crate) fn mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    if is(&a, 0.0) || is(&b, 0.0) {
        return ScalarExpr::Constant(0.0);
    }
    if is(&a, 1.0) {
        return fold(b);
    }
    if is(&b, 1.0) {
        return fold(a);
    }
    fold(ScalarExpr::binary(BinaryOp::Mul, a, b))
}

pub(crate) fn div(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    if is(&b, 1.0) {
        return a;
    }
    if is(&a, 0.0) && !b.is_constant() {
        return ScalarExpr::Constant(0.0);
    }
    fold(ScalarExpr::binary(BinaryOp::Div, a, b))
}

pub(crate) fn pow(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    if is(&b, 1.0) {
        return a;
    }
    if is(&b, 0.0) {
        return ScalarExpr::Constant(1.0);
    }
    fold(ScalarExpr::binary(BinaryOp::Pow, a, b))
}

pub(crate) fn neg(a: ScalarExpr) -> ScalarExpr {
    match a {
        ScalarExpr::Constant(c) => ScalarExpr::Constant(-c),
        ScalarExpr::Unary(UnaryOp::Neg, inner) => *inner,
        other => ScalarExpr::unary(UnaryOp::Neg, other),
    }
}

fn func(op: UnaryOp, a: ScalarExpr) -> ScalarExpr {
    fold(ScalarExpr::unary(op, a))
}

/// Exact partial derivative `∂e/∂x_var`.
pub fn differentiate(e: &ScalarExpr, var: usize) -> ScalarExpr {
    use ScalarExpr::*;
    match e {
        Constant(_) => Constant(0.0),
        Variable(i) => Constant(if *i == var { 1.0 } else { 0.0 }),
        Unary(op, u) => {
            let du = differentiate(u, var);
            if is(&du, 0.0) {
                return Constant(0.0);
            }
            let u = (**u).clone();
            let outer = match op {
                UnaryOp::Neg => return neg(du),
                UnaryOp::Sin => func(UnaryOp::Cos, u),
                UnaryOp::Cos => neg(func(UnaryOp::Sin, u)),
                UnaryOp::Exp => func(UnaryOp::Exp, u),
                UnaryOp::Log => return div(du, u),
                UnaryOp::Sqrt => {
                    return div(du, mul(Constant(2.0), func(UnaryOp::Sqrt, u)));
                }
                UnaryOp::Tanh => {
                    let t = func(UnaryOp::Tanh, u);
                    sub(Constant(1.0), pow(t, Constant(2.0)))
                }
            };
            mul(outer, du)
        }
        Binary(op, l, r) => {
            let dl = differentiate(l, var);
            let dr = differentiate(r, var);
            let (l, r) = ((**l).clone(), (**r).clone());
            match op {
                BinaryOp::Add => add(dl, dr),
                BinaryOp::Sub => sub(dl, dr),
                BinaryOp::Mul => add(mul(dl, r.clone()), mul(l, dr)),
                BinaryOp::Div => {
                    if is(&dr, 0.0) {
                        return div(dl, r);
                    }
                    div(sub(mul(dl, r.clone()), mul(l, dr)), pow(r, Constant(2.0)))
                }
                BinaryOp::Pow => {
                    if r.is_constant() {
                        // c · u^(c−1) · u'
                        if is(&dl, 0.0) {
                            return Constant(0.0);
                        }
                        let c = fold(r);
                        let lowered = pow(l, sub(c.clone(), Constant(1.0)));
                        return mul(mul(c, lowered), dl);
                    }
                    // u^v = exp(v·log u): u^v · (v'·log u + v·u'/u)
                    let inner = add(
                        mul(dr, func(UnaryOp::Log, l.clone())),
                        div(mul(r.clone(), dl), l.clone()),
                    );
                    mul(pow(l, r), inner)
                }
            }
        }
    }
}

/// Euclidean gradient over `dim` variables.
pub fn gradient(e: &ScalarExpr, dim: usize) -> VectorFieldExpr {
    VectorFieldExpr::new((0..dim).map(|k| differentiate(e, k)).collect::<Vec<_>>())
}
