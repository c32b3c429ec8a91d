//! Operator vocabulary shared by trees, token streams and dictionaries.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Unary operators. Every unary node wraps its operator as `alpha * op(child) + beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Zero,
    One,
    Id,
    Square,
    Cube,
    Fourth,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Lg,
    Ln,
    /// Derivative of `Abs`; `sign(0) = 0`.
    Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 14] = [
        UnaryOp::Zero,
        UnaryOp::One,
        UnaryOp::Id,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::Fourth,
        UnaryOp::Exp,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Sqrt,
        UnaryOp::Abs,
        UnaryOp::Lg,
        UnaryOp::Ln,
        UnaryOp::Sign,
    ];

    /// The fixed unary pool of uninformed search and of random generation.
    pub const DEFAULT_SET: [UnaryOp; 9] = [
        UnaryOp::Zero,
        UnaryOp::One,
        UnaryOp::Id,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::Fourth,
        UnaryOp::Exp,
        UnaryOp::Sin,
        UnaryOp::Cos,
    ];

    pub fn token(self) -> &'static str {
        match self {
            UnaryOp::Zero => "0",
            UnaryOp::One => "1",
            UnaryOp::Id => "Id",
            UnaryOp::Square => "^2",
            UnaryOp::Cube => "^3",
            UnaryOp::Fourth => "^4",
            UnaryOp::Exp => "EXP",
            UnaryOp::Sin => "SIN",
            UnaryOp::Cos => "COS",
            UnaryOp::Sqrt => "SQRT",
            UnaryOp::Abs => "ABS",
            UnaryOp::Lg => "LG",
            UnaryOp::Ln => "LN",
            UnaryOp::Sign => "SIGN",
        }
    }

    pub fn from_token(token: &str) -> Option<UnaryOp> {
        UnaryOp::ALL.iter().copied().find(|op| op.token() == token)
    }

    /// Zero and One ignore their operand and render as numeric literals.
    pub fn is_constant(self) -> bool {
        matches!(self, UnaryOp::Zero | UnaryOp::One)
    }

    /// Raw operator value `op(v)` before the affine wrapper.
    pub fn apply(self, v: f64) -> Result<f64, f64> {
        let out = match self {
            UnaryOp::Zero => 0.0,
            UnaryOp::One => 1.0,
            UnaryOp::Id => v,
            UnaryOp::Square => v * v,
            UnaryOp::Cube => v * v * v,
            UnaryOp::Fourth => {
                let s = v * v;
                s * s
            }
            UnaryOp::Exp => v.exp(),
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Sqrt => {
                if v < 0.0 {
                    return Err(v);
                }
                v.sqrt()
            }
            UnaryOp::Abs => v.abs(),
            UnaryOp::Lg => {
                if v <= 0.0 {
                    return Err(v);
                }
                v.log10()
            }
            UnaryOp::Ln => {
                if v <= 0.0 {
                    return Err(v);
                }
                v.ln()
            }
            UnaryOp::Sign => sign(v),
        };
        Ok(out)
    }

    /// `(op(v), op'(v), op''(v))`, used by forward-mode jets.
    pub fn apply_with_derivatives(self, v: f64) -> Result<(f64, f64, f64), f64> {
        let ln10 = std::f64::consts::LN_10;
        let out = match self {
            UnaryOp::Zero => (0.0, 0.0, 0.0),
            UnaryOp::One => (1.0, 0.0, 0.0),
            UnaryOp::Id => (v, 1.0, 0.0),
            UnaryOp::Square => (v * v, 2.0 * v, 2.0),
            UnaryOp::Cube => (v * v * v, 3.0 * v * v, 6.0 * v),
            UnaryOp::Fourth => {
                let s = v * v;
                (s * s, 4.0 * s * v, 12.0 * s)
            }
            UnaryOp::Exp => {
                let e = v.exp();
                (e, e, e)
            }
            UnaryOp::Sin => {
                let (s, c) = v.sin_cos();
                (s, c, -s)
            }
            UnaryOp::Cos => {
                let (s, c) = v.sin_cos();
                (c, -s, -c)
            }
            UnaryOp::Sqrt => {
                if v <= 0.0 {
                    return Err(v);
                }
                let r = v.sqrt();
                (r, 0.5 / r, -0.25 / (r * v))
            }
            UnaryOp::Abs => (v.abs(), sign(v), 0.0),
            UnaryOp::Lg => {
                if v <= 0.0 {
                    return Err(v);
                }
                (v.log10(), 1.0 / (v * ln10), -1.0 / (v * v * ln10))
            }
            UnaryOp::Ln => {
                if v <= 0.0 {
                    return Err(v);
                }
                (v.ln(), 1.0 / v, -1.0 / (v * v))
            }
            UnaryOp::Sign => (sign(v), 0.0, 0.0),
        };
        Ok(out)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    /// The fixed binary pool of uninformed search and of random generation.
    pub const DEFAULT_SET: [BinaryOp; 3] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul];

    pub fn token(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn from_token(token: &str) -> Option<BinaryOp> {
        BinaryOp::ALL.iter().copied().find(|op| op.token() == token)
    }

    pub fn apply(self, a: f64, b: f64) -> Result<f64, f64> {
        match self {
            BinaryOp::Add => Ok(a + b),
            BinaryOp::Sub => Ok(a - b),
            BinaryOp::Mul => Ok(a * b),
            BinaryOp::Div => {
                if b == 0.0 {
                    Err(b)
                } else {
                    Ok(a / b)
                }
            }
        }
    }
}

macro_rules! token_serde {
    ($ty:ty, $what:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.token())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let t = String::deserialize(d)?;
                <$ty>::from_token(&t)
                    .ok_or_else(|| de::Error::custom(format!(concat!("unknown ", $what, " `{}`"), t)))
            }
        }
    };
}

token_serde!(UnaryOp, "unary operator");
token_serde!(BinaryOp, "binary operator");

/// A token-level operator: a variable leaf, a unary or a binary operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    /// Zero-based variable index; rendered as `x{index + 1}`.
    Leaf(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl Operator {
    pub fn token(&self) -> String {
        match self {
            Operator::Leaf(i) => variable_token(*i),
            Operator::Unary(op) => op.token().to_string(),
            Operator::Binary(op) => op.token().to_string(),
        }
    }

    /// Parses operator and variable tokens. Numeric literals are not operators.
    pub fn from_token(token: &str) -> Option<Operator> {
        if let Some(i) = parse_variable(token) {
            return Some(Operator::Leaf(i));
        }
        if is_numeric_literal(token) {
            return None;
        }
        UnaryOp::from_token(token)
            .map(Operator::Unary)
            .or_else(|| BinaryOp::from_token(token).map(Operator::Binary))
    }

    pub fn arity(&self) -> usize {
        match self {
            Operator::Leaf(_) => 0,
            Operator::Unary(_) => 1,
            Operator::Binary(_) => 2,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

pub fn variable_token(index: usize) -> String {
    format!("x{}", index + 1)
}

/// `"x3"` -> `Some(2)`. `"x0"` is not a variable.
pub fn parse_variable(token: &str) -> Option<usize> {
    let digits = token.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    k.checked_sub(1)
}

/// Integer and decimal literals with an optional leading minus sign.
pub fn is_numeric_literal(token: &str) -> bool {
    let body = token.strip_prefix('-').unwrap_or(token);
    if body.is_empty() {
        return false;
    }
    let mut seen_digit = false;
    let mut seen_dot = false;
    for b in body.bytes() {
        match b {
            b'0'..=b'9' => seen_digit = true,
            b'.' if !seen_dot => seen_dot = true,
            _ => return false,
        }
    }
    seen_digit
}

/// Shortest round-trip decimal rendering (at most 17 significant digits).
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{x}")
}
