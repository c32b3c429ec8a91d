//! Local rewriting: constant folding, neutral-element removal and merging of
//! nested affine wrappers. Every rule preserves the value at points where the
//! input is defined.

use super::{BinaryOp, Expr, UnaryOp};

const MAX_PASSES: usize = 16;

/// Rewrites `expr` bottom-up until a fixpoint is reached.
pub fn simplify(expr: &Expr) -> Expr {
    let mut current = pass(expr);
    for _ in 0..MAX_PASSES {
        let next = pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn pass(expr: &Expr) -> Expr {
    match expr {
        Expr::Var(_) | Expr::Const(_) => expr.clone(),
        Expr::Unary {
            op,
            alpha,
            beta,
            child,
        } => mk_unary(*op, *alpha, *beta, pass(child)),
        Expr::Binary { op, left, right } => mk_binary(*op, pass(left), pass(right)),
    }
}

fn fold_unary(op: UnaryOp, alpha: f64, beta: f64, v: f64) -> Option<f64> {
    let raw = op.apply(v).ok()?;
    let out = alpha * raw + beta;
    out.is_finite().then_some(out)
}

/// Unary constructor applying the local rules.
pub(crate) fn mk_unary(op: UnaryOp, alpha: f64, beta: f64, child: Expr) -> Expr {
    match op {
        UnaryOp::Zero => return Expr::Const(beta),
        UnaryOp::One => return Expr::Const(alpha + beta),
        _ => {}
    }
    if alpha == 0.0 {
        return Expr::Const(beta);
    }
    if let Expr::Const(v) = child {
        if let Some(out) = fold_unary(op, alpha, beta, v) {
            return Expr::Const(out);
        }
        return Expr::unary(op, alpha, beta, child);
    }
    if op == UnaryOp::Id {
        if alpha == 1.0 && beta == 0.0 {
            return child;
        }
        if let Expr::Unary {
            op: inner,
            alpha: a2,
            beta: b2,
            child: c2,
        } = child
        {
            return mk_unary(inner, alpha * a2, alpha * b2 + beta, *c2);
        }
    }
    Expr::unary(op, alpha, beta, child)
}

/// Binary constructor applying the local rules.
pub(crate) fn mk_binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
    if let (Some(a), Some(b)) = (left.as_const(), right.as_const()) {
        if let Ok(v) = op.apply(a, b) {
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
        return Expr::binary(op, left, right);
    }
    match op {
        BinaryOp::Add => match (left.as_const(), right.as_const()) {
            (Some(c), _) if c == 0.0 => right,
            (_, Some(c)) if c == 0.0 => left,
            (Some(c), _) => shift(right, c),
            (_, Some(c)) => shift(left, c),
            _ => Expr::binary(op, left, right),
        },
        BinaryOp::Sub => match (left.as_const(), right.as_const()) {
            (_, Some(c)) if c == 0.0 => left,
            (_, Some(c)) => shift(left, -c),
            (Some(c), _) => mk_unary(UnaryOp::Id, -1.0, c, right),
            _ => Expr::binary(op, left, right),
        },
        BinaryOp::Mul => match (left.as_const(), right.as_const()) {
            (Some(c), _) | (_, Some(c)) if c == 0.0 => Expr::Const(0.0),
            (Some(c), _) => mk_unary(UnaryOp::Id, c, 0.0, right),
            (_, Some(c)) => mk_unary(UnaryOp::Id, c, 0.0, left),
            _ => Expr::binary(op, left, right),
        },
        BinaryOp::Div => match (left.as_const(), right.as_const()) {
            (_, Some(c)) if c == 0.0 => Expr::binary(op, left, right),
            (_, Some(c)) if c == 1.0 => left,
            (_, Some(c)) => mk_unary(UnaryOp::Id, 1.0 / c, 0.0, left),
            (Some(c), _) if c == 0.0 => Expr::Const(0.0),
            _ => Expr::binary(op, left, right),
        },
    }
}

/// `e + c`, absorbed into the affine offset of a unary head when possible.
fn shift(e: Expr, c: f64) -> Expr {
    mk_unary(UnaryOp::Id, 1.0, c, e)
}
