//! Symbolic differentiation by the chain, product and quotient rules.
//!
//! Every operator in the vocabulary has a rule, so differentiation is total.
//! `|.|` differentiates to `sign(.)` with `sign(0) = 0`.

use super::simplify::{mk_binary, mk_unary};
use super::{simplify, BinaryOp, Expr, UnaryOp};

/// Partial derivative with respect to the zero-based variable `var`.
pub fn differentiate(expr: &Expr, var: usize) -> Expr {
    simplify(&d(expr, var))
}

/// Sum of unmixed second partials over the first `dim` variables.
pub fn laplacian(expr: &Expr, dim: usize) -> Expr {
    let mut acc = Expr::Const(0.0);
    for k in 0..dim {
        let second = differentiate(&differentiate(expr, k), k);
        acc = mk_binary(BinaryOp::Add, acc, second);
    }
    simplify(&acc)
}

fn d(expr: &Expr, var: usize) -> Expr {
    match expr {
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Unary {
            op, alpha, child, ..
        } => {
            let inner = d(child, var);
            if inner.as_const() == Some(0.0) {
                return Expr::Const(0.0);
            }
            let outer = match outer_derivative(*op, *alpha, child) {
                Some(e) => e,
                None => return Expr::Const(0.0),
            };
            mk_binary(BinaryOp::Mul, outer, inner)
        }
        Expr::Binary { op, left, right } => {
            let dl = d(left, var);
            let dr = d(right, var);
            let (l, r) = (left.as_ref().clone(), right.as_ref().clone());
            match op {
                BinaryOp::Add | BinaryOp::Sub => mk_binary(*op, dl, dr),
                BinaryOp::Mul => mk_binary(
                    BinaryOp::Add,
                    mk_binary(BinaryOp::Mul, dl, r),
                    mk_binary(BinaryOp::Mul, l, dr),
                ),
                BinaryOp::Div => {
                    let num = mk_binary(
                        BinaryOp::Sub,
                        mk_binary(BinaryOp::Mul, dl, r.clone()),
                        mk_binary(BinaryOp::Mul, l, dr),
                    );
                    mk_binary(BinaryOp::Div, num, mk_unary(UnaryOp::Square, 1.0, 0.0, r))
                }
            }
        }
    }
}

/// `alpha * op'(child)`, or `None` when it vanishes identically.
fn outer_derivative(op: UnaryOp, alpha: f64, child: &Expr) -> Option<Expr> {
    let c = child.clone();
    let e = match op {
        UnaryOp::Zero | UnaryOp::One | UnaryOp::Sign => return None,
        UnaryOp::Id => Expr::Const(alpha),
        UnaryOp::Square => mk_unary(UnaryOp::Id, 2.0 * alpha, 0.0, c),
        UnaryOp::Cube => mk_unary(UnaryOp::Square, 3.0 * alpha, 0.0, c),
        UnaryOp::Fourth => mk_unary(UnaryOp::Cube, 4.0 * alpha, 0.0, c),
        UnaryOp::Exp => mk_unary(UnaryOp::Exp, alpha, 0.0, c),
        UnaryOp::Sin => mk_unary(UnaryOp::Cos, alpha, 0.0, c),
        UnaryOp::Cos => mk_unary(UnaryOp::Sin, -alpha, 0.0, c),
        UnaryOp::Sqrt => mk_binary(
            BinaryOp::Div,
            Expr::Const(alpha / 2.0),
            mk_unary(UnaryOp::Sqrt, 1.0, 0.0, c),
        ),
        UnaryOp::Abs => mk_unary(UnaryOp::Sign, alpha, 0.0, c),
        UnaryOp::Lg => mk_binary(
            BinaryOp::Div,
            Expr::Const(alpha / std::f64::consts::LN_10),
            c,
        ),
        UnaryOp::Ln => mk_binary(BinaryOp::Div, Expr::Const(alpha), c),
    };
    Some(e)
}
