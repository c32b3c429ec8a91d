//! Symbolic PDE toolkit: expression trees, manufactured PDE problems, dataset
//! generation, operator-set prediction, a policy-gradient finite expression
//! solver and a walk-on-spheres reference estimator.

pub mod expr;
pub mod datagen;
pub mod pde;
pub mod predictor;
pub mod fex;
pub mod wos;

pub use expr::{Expr, EvalError, ExprError};
