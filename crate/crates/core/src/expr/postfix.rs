//! Reverse Polish serialization.
//!
//! A unary node `alpha * op(c) + beta` renders as `c OP alpha * beta +`, with
//! the `alpha *` part dropped when `alpha == 1`, the `beta +` part dropped when
//! `beta == 0` and the `Id` token never written. The constant operators `0`
//! and `1` render as the numeric literal they evaluate to.

use super::{
    format_number, is_numeric_literal, variable_token, Expr, ExprError, Operator,
    OperatorDictionary, UnaryOp,
};

pub fn to_postfix(expr: &Expr) -> Vec<String> {
    let mut out = Vec::new();
    emit(expr, &mut out);
    out
}

pub fn to_postfix_string(expr: &Expr) -> String {
    to_postfix(expr).join(" ")
}

fn emit(expr: &Expr, out: &mut Vec<String>) {
    match expr {
        Expr::Var(i) => out.push(variable_token(*i)),
        Expr::Const(c) => out.push(format_number(*c)),
        Expr::Unary {
            op,
            alpha,
            beta,
            child,
        } => {
            match op {
                UnaryOp::Zero => {
                    out.push(format_number(*beta));
                    return;
                }
                UnaryOp::One => {
                    out.push(format_number(alpha + beta));
                    return;
                }
                _ => {}
            }
            emit(child, out);
            if *op != UnaryOp::Id {
                out.push(op.token().to_string());
            }
            if *alpha != 1.0 {
                out.push(format_number(*alpha));
                out.push("*".to_string());
            }
            if *beta != 0.0 {
                out.push(format_number(*beta));
                out.push("+".to_string());
            }
        }
        Expr::Binary { op, left, right } => {
            emit(left, out);
            emit(right, out);
            out.push(op.token().to_string());
        }
    }
}

/// Rebuilds a tree from a token sequence. Numeric literals are always
/// accepted; every other token must be in `dict` and name a known operator.
pub fn parse_postfix<S: AsRef<str>>(
    tokens: &[S],
    dict: &OperatorDictionary,
) -> Result<Expr, ExprError> {
    if tokens.is_empty() {
        return Err(ExprError::MalformedSequence("empty sequence".into()));
    }
    let mut stack: Vec<Expr> = Vec::with_capacity(tokens.len());
    for (pos, tok) in tokens.iter().map(AsRef::as_ref).enumerate() {
        if is_numeric_literal(tok) {
            let v: f64 = tok
                .parse()
                .map_err(|_| ExprError::UnknownToken(tok.to_string()))?;
            stack.push(Expr::Const(v));
            continue;
        }
        if !dict.contains(tok) {
            return Err(ExprError::UnknownToken(tok.to_string()));
        }
        let op = Operator::from_token(tok).ok_or_else(|| ExprError::UnknownToken(tok.to_string()))?;
        let underflow = || {
            ExprError::MalformedSequence(format!("stack underflow at token {pos} (`{tok}`)"))
        };
        match op {
            Operator::Leaf(i) => stack.push(Expr::Var(i)),
            Operator::Unary(u) => {
                let c = stack.pop().ok_or_else(underflow)?;
                stack.push(Expr::apply(u, c));
            }
            Operator::Binary(b) => {
                let r = stack.pop().ok_or_else(underflow)?;
                let l = stack.pop().ok_or_else(underflow)?;
                stack.push(Expr::binary(b, l, r));
            }
        }
    }
    if stack.len() != 1 {
        return Err(ExprError::MalformedSequence(format!(
            "{} operands left on the stack",
            stack.len()
        )));
    }
    Ok(stack.pop().expect("one element"))
}

pub fn parse_postfix_str(text: &str, dict: &OperatorDictionary) -> Result<Expr, ExprError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    parse_postfix(&tokens, dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BinaryOp, UnaryOp};

    fn dict() -> OperatorDictionary {
        OperatorDictionary::standard(3)
    }

    #[test]
    fn simple_sum() {
        let e = Expr::add(Expr::var(0), Expr::var(1));
        assert_eq!(to_postfix_string(&e), "x1 x2 +");
        assert_eq!(parse_postfix_str("x1 x2 +", &dict()).unwrap(), e);
    }

    #[test]
    fn affine_rendering() {
        let e = Expr::unary(UnaryOp::Sin, 3.0, 0.0, Expr::var(1));
        assert_eq!(to_postfix_string(&e), "x2 SIN 3 *");
        let e = Expr::unary(UnaryOp::Square, -2.0, 0.5, Expr::var(0));
        assert_eq!(to_postfix_string(&e), "x1 ^2 -2 * 0.5 +");
        let e = Expr::unary(UnaryOp::Id, 1.0, 0.0, Expr::var(2));
        assert_eq!(to_postfix_string(&e), "x3");
        let e = Expr::unary(UnaryOp::One, 2.0, 1.0, Expr::var(2));
        assert_eq!(to_postfix_string(&e), "3");
    }

    #[test]
    fn malformed_sequences() {
        let d = dict();
        assert!(matches!(
            parse_postfix_str("x1 +", &d),
            Err(ExprError::MalformedSequence(_))
        ));
        assert!(matches!(
            parse_postfix_str("x1 x2", &d),
            Err(ExprError::MalformedSequence(_))
        ));
        assert!(matches!(
            parse_postfix_str("", &d),
            Err(ExprError::MalformedSequence(_))
        ));
        assert_eq!(
            parse_postfix_str("x1 SNI", &d),
            Err(ExprError::UnknownToken("SNI".into()))
        );
        assert_eq!(
            parse_postfix_str("x4", &d),
            Err(ExprError::UnknownToken("x4".into()))
        );
    }

    #[test]
    fn negative_literals_are_not_subtraction() {
        let e = parse_postfix_str("x1 -2 -", &dict()).unwrap();
        assert_eq!(
            e,
            Expr::binary(BinaryOp::Sub, Expr::var(0), Expr::constant(-2.0))
        );
        assert_eq!(e.eval(&[1.0]).unwrap(), 3.0);
    }
}
