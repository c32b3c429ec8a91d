//! Random trees of the fixed layered shape.
//!
//! Depth counts unary layers: a depth-1 tree is a unary node over a leaf, and a
//! depth-k tree is a unary node over a binary node whose two operands are
//! depth-(k-1) trees. A depth-k tree therefore has `2^(k+1) - 2` nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BinaryOp, Expr, UnaryOp};

const COEFFICIENTS: [f64; 8] = [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0];

/// Uniform draw from `{-4, ..., -1, 1, ..., 4}`.
pub fn sample_coefficient<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    COEFFICIENTS[rng.random_range(0..COEFFICIENTS.len())]
}

#[derive(Clone, Debug)]
pub struct TreeSampler {
    pub unary: Vec<UnaryOp>,
    pub binary: Vec<BinaryOp>,
    pub dim: usize,
}

impl TreeSampler {
    /// Samples use the default generation pools.
    pub fn standard(dim: usize) -> Self {
        TreeSampler {
            unary: UnaryOp::DEFAULT_SET.to_vec(),
            binary: BinaryOp::DEFAULT_SET.to_vec(),
            dim,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Expr {
        assert!(depth >= 1, "tree depth must be at least 1");
        assert!(
            !self.unary.is_empty() && !self.binary.is_empty() && self.dim >= 1,
            "operator pools and dimension must be non-empty"
        );
        self.layer(depth, rng)
    }

    fn layer<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Expr {
        let op = self.unary[rng.random_range(0..self.unary.len())];
        let alpha = sample_coefficient(rng);
        let beta = if rng.random_bool(0.5) {
            0.0
        } else {
            sample_coefficient(rng)
        };
        let child = if depth == 1 {
            Expr::Var(rng.random_range(0..self.dim))
        } else {
            let b = self.binary[rng.random_range(0..self.binary.len())];
            let l = self.layer(depth - 1, rng);
            let r = self.layer(depth - 1, rng);
            Expr::binary(b, l, r)
        };
        Expr::unary(op, alpha, beta, child)
    }
}

pub fn random_tree<R: Rng + ?Sized>(
    depth: usize,
    unary: &[UnaryOp],
    binary: &[BinaryOp],
    dim: usize,
    rng: &mut R,
) -> Expr {
    TreeSampler {
        unary: unary.to_vec(),
        binary: binary.to_vec(),
        dim,
    }
    .sample(depth, rng)
}

pub fn random_tree_seeded(
    depth: usize,
    unary: &[UnaryOp],
    binary: &[BinaryOp],
    dim: usize,
    seed: u64,
) -> Expr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_tree(depth, unary, binary, dim, &mut rng)
}
