//! Operator dictionaries, operator sets and their binary encoding.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{is_numeric_literal, BinaryOp, Expr, ExprError, Operator, UnaryOp};

/// Ordered token basis. A token's position is its encoding index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct OperatorDictionary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl OperatorDictionary {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self, ExprError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(ExprError::DuplicateToken(t.clone()));
            }
        }
        Ok(OperatorDictionary { tokens, index })
    }

    /// Variables `x1..x{dim}` followed by every non-constant unary and every
    /// binary operator. `0` and `1` are left out because they coincide with
    /// numeric literals in token streams.
    pub fn standard(dim: usize) -> Self {
        let mut tokens: Vec<String> = (0..dim).map(super::variable_token).collect();
        tokens.extend(
            UnaryOp::ALL
                .iter()
                .filter(|op| !op.is_constant())
                .map(|op| op.token().to_string()),
        );
        tokens.extend(BinaryOp::ALL.iter().map(|op| op.token().to_string()));
        OperatorDictionary::new(tokens).expect("standard dictionary has unique tokens")
    }

    /// One token per line; the line number is the encoding index.
    pub fn from_file(path: impl AsRef<Path>) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string);
        OperatorDictionary::new(tokens).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Largest `k` such that `xk` is in the dictionary.
    pub fn max_variable(&self) -> usize {
        self.tokens
            .iter()
            .filter_map(|t| super::parse_variable(t))
            .map(|i| i + 1)
            .max()
            .unwrap_or(0)
    }
}

impl TryFrom<Vec<String>> for OperatorDictionary {
    type Error = ExprError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        OperatorDictionary::new(tokens)
    }
}

impl From<OperatorDictionary> for Vec<String> {
    fn from(d: OperatorDictionary) -> Self {
        d.tokens
    }
}

/// Sort key: variables by index, then unary operators, binary operators, and
/// unrecognised tokens lexicographically.
fn canonical_key(token: &str) -> (u8, usize, String) {
    match Operator::from_token(token) {
        Some(Operator::Leaf(i)) => (0, i, String::new()),
        Some(Operator::Unary(op)) => (1, op as usize, String::new()),
        Some(Operator::Binary(op)) => (2, op as usize, String::new()),
        None => (3, 0, token.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Keyed(String);

impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        canonical_key(&self.0).cmp(&canonical_key(&other.0))
    }
}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A set of operator and variable tokens in canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperatorSet {
    items: BTreeSet<Keyed>,
}

impl OperatorSet {
    pub fn new() -> Self {
        OperatorSet::default()
    }

    pub fn insert(&mut self, token: impl Into<String>) -> bool {
        self.items.insert(Keyed(token.into()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.items.contains(&Keyed(token.to_string()))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|k| k.0.as_str())
    }

    pub fn union(&self, other: &OperatorSet) -> OperatorSet {
        let mut out = self.clone();
        out.extend(other.iter().map(str::to_string));
        out
    }

    pub fn is_subset(&self, other: &OperatorSet) -> bool {
        self.items.is_subset(&other.items)
    }

    /// Keeps only tokens present in `dict`.
    pub fn restrict_to(&self, dict: &OperatorDictionary) -> OperatorSet {
        self.iter().filter(|t| dict.contains(t)).collect()
    }

    /// Tokens ordered by their position in `dict`; tokens outside it are dropped.
    pub fn ordered_by(&self, dict: &OperatorDictionary) -> Vec<String> {
        let mut v: Vec<(usize, String)> = self
            .iter()
            .filter_map(|t| dict.index_of(t).map(|i| (i, t.to_string())))
            .collect();
        v.sort();
        v.into_iter().map(|(_, t)| t).collect()
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.iter().map(str::to_string).collect()
    }

    pub fn unary_ops(&self) -> Vec<UnaryOp> {
        self.iter().filter_map(UnaryOp::from_token).collect()
    }

    pub fn binary_ops(&self) -> Vec<BinaryOp> {
        self.iter().filter_map(BinaryOp::from_token).collect()
    }

    pub fn variables(&self) -> Vec<usize> {
        self.iter().filter_map(super::parse_variable).collect()
    }
}

impl<S: Into<String>> FromIterator<S> for OperatorSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut s = OperatorSet::new();
        s.extend(iter);
        s
    }
}

impl<S: Into<String>> Extend<S> for OperatorSet {
    fn extend<I: IntoIterator<Item = S>>(&mut self, iter: I) {
        for t in iter {
            self.insert(t);
        }
    }
}

/// Unique operator and variable tokens of a tree, as its postfix rendering
/// would show them.
pub fn extract_operator_set(expr: &Expr) -> OperatorSet {
    let mut set = OperatorSet::new();
    collect(expr, &mut set);
    set
}

fn collect(expr: &Expr, set: &mut OperatorSet) {
    match expr {
        Expr::Var(i) => {
            set.insert(super::variable_token(*i));
        }
        Expr::Const(_) => {}
        Expr::Unary {
            op,
            alpha,
            beta,
            child,
        } => {
            if op.is_constant() {
                return;
            }
            collect(child, set);
            if *op != UnaryOp::Id {
                set.insert(op.token());
            }
            if *alpha != 1.0 {
                set.insert(BinaryOp::Mul.token());
            }
            if *beta != 0.0 {
                set.insert(BinaryOp::Add.token());
            }
        }
        Expr::Binary { op, left, right } => {
            collect(left, set);
            collect(right, set);
            set.insert(op.token());
        }
    }
}

/// Unique non-numeric tokens of a token sequence.
pub fn extract_operator_set_from_tokens<S: AsRef<str>>(tokens: &[S]) -> OperatorSet {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_numeric_literal(t))
        .collect()
}

/// Membership bits aligned with a dictionary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSetVector {
    pub bits: Vec<u8>,
}

impl OperatorSetVector {
    pub fn zeros(n: usize) -> Self {
        OperatorSetVector { bits: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn to_set(&self, dict: &OperatorDictionary) -> OperatorSet {
        self.bits
            .iter()
            .zip(dict.tokens())
            .filter(|(b, _)| **b == 1)
            .map(|(_, t)| t.clone())
            .collect()
    }
}

pub fn encode_operator_set(
    set: &OperatorSet,
    dict: &OperatorDictionary,
) -> Result<OperatorSetVector, ExprError> {
    let mut v = OperatorSetVector::zeros(dict.len());
    for t in set.iter() {
        let i = dict
            .index_of(t)
            .ok_or_else(|| ExprError::UnknownToken(t.to_string()))?;
        v.bits[i] = 1;
    }
    Ok(v)
}

/// Squared Euclidean distance between two membership vectors.
pub fn mismatch(y: &OperatorSetVector, z: &OperatorSetVector) -> Result<usize, ExprError> {
    if y.len() != z.len() {
        return Err(ExprError::LengthMismatch(y.len(), z.len()));
    }
    Ok(y.bits
        .iter()
        .zip(&z.bits)
        .map(|(&a, &b)| {
            let d = a as i64 - b as i64;
            (d * d) as usize
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_dictionary() -> OperatorDictionary {
        OperatorDictionary::new(["x1", "x2", "^2", "^3", "+", "*", "SIN", "COS", "EXP"]).unwrap()
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert_eq!(
            OperatorDictionary::new(["x1", "SIN", "x1"]),
            Err(ExprError::DuplicateToken("x1".into()))
        );
    }

    #[test]
    fn encode_and_mismatch() {
        let dict = table_dictionary();
        let a: OperatorSet = ["x1", "SIN", "+"].into_iter().collect();
        let va = encode_operator_set(&a, &dict).unwrap();
        assert_eq!(va.bits, vec![1, 0, 0, 0, 1, 0, 1, 0, 0]);
        assert_eq!(mismatch(&va, &va).unwrap(), 0);
        let empty = encode_operator_set(&OperatorSet::new(), &dict).unwrap();
        assert_eq!(empty, OperatorSetVector::zeros(9));
        let mut one = OperatorSetVector::zeros(9);
        one.bits[4] = 1;
        assert_eq!(mismatch(&empty, &one).unwrap(), 1);
        assert_eq!(
            mismatch(&empty, &OperatorSetVector::zeros(3)),
            Err(ExprError::LengthMismatch(9, 3))
        );
        let odd: OperatorSet = ["LN"].into_iter().collect();
        assert_eq!(
            encode_operator_set(&odd, &dict),
            Err(ExprError::UnknownToken("LN".into()))
        );
    }

    #[test]
    fn canonical_order() {
        let s: OperatorSet = ["*", "SIN", "x2", "FOO", "x1", "^2"].into_iter().collect();
        assert_eq!(s.to_vec(), ["x1", "x2", "^2", "SIN", "*", "FOO"]);
    }

    #[test]
    fn dictionary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.txt");
        let dict = OperatorDictionary::standard(3);
        dict.write_file(&path).unwrap();
        assert_eq!(OperatorDictionary::from_file(&path).unwrap(), dict);
        assert_eq!(dict.max_variable(), 3);
        let json = serde_json::to_string(&dict).unwrap();
        let back: OperatorDictionary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.index_of("SIN"), dict.index_of("SIN"));
    }
}
