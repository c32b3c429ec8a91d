//! Binary computational trees over variables, constants, affine-wrapped unary
//! operators and binary operators.
//!
//! A unary node always carries two scalars and evaluates to
//! `alpha * op(child) + beta`. Trees are immutable values; every operation in
//! this module is a pure function.

mod diff;
pub mod jet;
mod opset;
mod ops;
mod postfix;
mod random;
mod simplify;

use std::fmt;

use thiserror::Error;

pub use diff::{differentiate, laplacian};
pub use opset::{
    encode_operator_set, extract_operator_set, extract_operator_set_from_tokens, mismatch,
    OperatorDictionary, OperatorSet, OperatorSetVector,
};
pub use ops::{
    format_number, is_numeric_literal, parse_variable, variable_token, BinaryOp, Operator,
    UnaryOp,
};
pub use postfix::{parse_postfix, parse_postfix_str, to_postfix, to_postfix_string};
pub use random::{random_tree, random_tree_seeded, sample_coefficient, TreeSampler};
pub use simplify::simplify;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Zero-based variable index.
    Var(usize),
    Const(f64),
    Unary {
        op: UnaryOp,
        alpha: f64,
        beta: f64,
        child: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("variable x{} is out of range for a point of dimension {dim}", .index + 1)]
    VariableOutOfRange { index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("malformed postfix sequence: {0}")]
    MalformedSequence(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("operator-set vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("duplicate dictionary token `{0}`")]
    DuplicateToken(String),
}

impl Expr {
    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn unary(op: UnaryOp, alpha: f64, beta: f64, child: Expr) -> Expr {
        Expr::Unary {
            op,
            alpha,
            beta,
            child: Box::new(child),
        }
    }

    /// `op(child)` with the neutral affine wrapper.
    pub fn apply(op: UnaryOp, child: Expr) -> Expr {
        Expr::unary(op, 1.0, 0.0, child)
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn add(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, left, right)
    }

    pub fn sub(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, left, right)
    }

    pub fn mul(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, left, right)
    }

    pub fn div(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, left, right)
    }

    /// `alpha * self + beta` as an identity node.
    pub fn affine(self, alpha: f64, beta: f64) -> Expr {
        Expr::unary(UnaryOp::Id, alpha, beta, self)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    /// Evaluates the tree at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Var(i) => *point.get(*i).ok_or(EvalError::VariableOutOfRange {
                index: *i,
                dim: point.len(),
            })?,
            Expr::Const(c) => *c,
            Expr::Unary {
                op,
                alpha,
                beta,
                child,
            } => {
                if op.is_constant() {
                    let raw = if *op == UnaryOp::One { 1.0 } else { 0.0 };
                    alpha * raw + beta
                } else {
                    let c = child.eval(point)?;
                    let raw = op.apply(c).map_err(|value| EvalError::Domain {
                        op: op.token(),
                        value,
                    })?;
                    let out = alpha * raw + beta;
                    if !out.is_finite() {
                        return Err(EvalError::NonFinite { op: op.token() });
                    }
                    out
                }
            }
            Expr::Binary { op, left, right } => {
                let a = left.eval(point)?;
                let b = right.eval(point)?;
                let out = op.apply(a, b).map_err(|value| EvalError::Domain {
                    op: op.token(),
                    value,
                })?;
                if !out.is_finite() {
                    return Err(EvalError::NonFinite { op: op.token() });
                }
                out
            }
        };
        Ok(v)
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Unary { child, .. } => 1 + child.node_count(),
            Expr::Binary { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Number of unary layers on the deepest root-to-leaf path.
    pub fn unary_depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 0,
            Expr::Unary { child, .. } => 1 + child.unary_depth(),
            Expr::Binary { left, right, .. } => left.unary_depth().max(right.unary_depth()),
        }
    }

    /// Largest variable index + 1 referenced by the tree (0 for closed trees).
    pub fn arity_dim(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Const(_) => 0,
            Expr::Unary { child, .. } => child.arity_dim(),
            Expr::Binary { left, right, .. } => left.arity_dim().max(right.arity_dim()),
        }
    }
}

impl fmt::Display for Expr {
    /// Infix pretty-print.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Const(c) => write!(f, "{}", format_number(*c)),
            Expr::Unary {
                op,
                alpha,
                beta,
                child,
            } => {
                let inner = match op {
                    UnaryOp::Zero => "0".to_string(),
                    UnaryOp::One => "1".to_string(),
                    UnaryOp::Id => format!("{child}"),
                    UnaryOp::Square => format!("({child})^2"),
                    UnaryOp::Cube => format!("({child})^3"),
                    UnaryOp::Fourth => format!("({child})^4"),
                    UnaryOp::Exp => format!("exp({child})"),
                    UnaryOp::Sin => format!("sin({child})"),
                    UnaryOp::Cos => format!("cos({child})"),
                    UnaryOp::Sqrt => format!("sqrt({child})"),
                    UnaryOp::Abs => format!("|{child}|"),
                    UnaryOp::Lg => format!("lg({child})"),
                    UnaryOp::Ln => format!("ln({child})"),
                    UnaryOp::Sign => format!("sign({child})"),
                };
                let scaled = if *alpha == 1.0 {
                    inner
                } else if *op == UnaryOp::Id {
                    format!("{}*({inner})", format_number(*alpha))
                } else {
                    format!("{}*{inner}", format_number(*alpha))
                };
                if *beta == 0.0 {
                    f.write_str(&scaled)
                } else if *beta < 0.0 {
                    write!(f, "({scaled} - {})", format_number(-beta))
                } else {
                    write!(f, "({scaled} + {})", format_number(*beta))
                }
            }
            Expr::Binary { op, left, right } => {
                write!(f, "({left} {} {right})", op.token())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn unary_affine_semantics() {
        let e = Expr::unary(UnaryOp::Sin, 16.0, 0.0, Expr::var(2));
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((e.eval(&[0.0, 0.0, FRAC_PI_2]).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn singularities_are_errors() {
        let ln = Expr::apply(UnaryOp::Ln, Expr::var(0));
        assert!(matches!(ln.eval(&[0.0]), Err(EvalError::Domain { .. })));
        let sq = Expr::apply(UnaryOp::Sqrt, Expr::var(0));
        assert!(sq.eval(&[-1.0]).is_err());
        assert_eq!(sq.eval(&[4.0]).unwrap(), 2.0);
        let q = Expr::div(Expr::constant(1.0), Expr::var(0));
        assert!(q.eval(&[0.0]).is_err());
        assert!(matches!(
            Expr::var(3).eval(&[1.0]),
            Err(EvalError::VariableOutOfRange { index: 3, dim: 1 })
        ));
        let big = Expr::apply(UnaryOp::Exp, Expr::constant(1000.0));
        assert!(matches!(big.eval(&[]), Err(EvalError::NonFinite { .. })));
    }

    #[test]
    fn constant_operators_ignore_operand() {
        let bad = Expr::apply(UnaryOp::Ln, Expr::constant(-1.0));
        let z = Expr::unary(UnaryOp::Zero, 3.0, 2.0, bad.clone());
        let o = Expr::unary(UnaryOp::One, 3.0, 2.0, bad);
        assert_eq!(z.eval(&[]).unwrap(), 2.0);
        assert_eq!(o.eval(&[]).unwrap(), 5.0);
    }

    #[test]
    fn infix_rendering() {
        let e = Expr::add(
            Expr::unary(UnaryOp::Sin, 16.0, 0.0, Expr::var(2)),
            Expr::unary(UnaryOp::Square, 1.0, -2.0, Expr::var(0)),
        );
        assert_eq!(e.to_string(), "(16*sin(x3) + ((x1)^2 - 2))");
    }
}
