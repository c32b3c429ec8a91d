use log::warn;
use serde::{Deserialize, Serialize};

use super::FexError;
use crate::expr::jet::{Instr, Program, Scalar};
use crate::expr::{simplify, BinaryOp, Expr, OperatorSet, UnaryOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Unary,
    Binary,
    Leaf,
}

/// Fixed-depth tree skeleton plus the operator pool of each slot kind.
///
/// Slots are listed in pre-order. A layer is a unary slot whose child is
/// either a leaf (bottom layer) or a binary slot joining two lower layers, so
/// depth 2 reads `U(B(U(L), U(L)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub depth: usize,
    pub dim: usize,
    pub slots: Vec<SlotKind>,
    pub unary: Vec<UnaryOp>,
    pub binary: Vec<BinaryOp>,
    /// Variable indices a leaf may pick.
    pub leaves: Vec<usize>,
}

fn skeleton(depth: usize, out: &mut Vec<SlotKind>) {
    out.push(SlotKind::Unary);
    if depth <= 1 {
        out.push(SlotKind::Leaf);
    } else {
        out.push(SlotKind::Binary);
        skeleton(depth - 1, out);
        skeleton(depth - 1, out);
    }
}

/// Builds the slot pools from a predicted operator set, or the full default
/// pools when `ops` is `None`.
///
/// `Id` is always offered to unary slots. If the prediction names no binary
/// operator, `+` is used; if it names no variable, every variable is allowed.
pub fn build_search_space(
    ops: Option<&OperatorSet>,
    depth: usize,
    dim: usize,
) -> Result<SearchSpace, FexError> {
    if depth == 0 || dim == 0 {
        return Err(FexError::EmptySearchSpace(format!(
            "depth {depth} and dimension {dim} leave no slots"
        )));
    }
    let mut slots = Vec::new();
    skeleton(depth, &mut slots);
    let all_vars: Vec<usize> = (0..dim).collect();
    let (unary, binary, leaves) = match ops {
        None => (
            UnaryOp::DEFAULT_SET.to_vec(),
            BinaryOp::DEFAULT_SET.to_vec(),
            all_vars,
        ),
        Some(set) => {
            let mut unary = set.unary_ops();
            if !unary.contains(&UnaryOp::Id) {
                unary.push(UnaryOp::Id);
            }
            unary.sort();
            let mut binary = set.binary_ops();
            if binary.is_empty() {
                warn!("predicted set has no binary operator; using `+`");
                binary.push(BinaryOp::Add);
            }
            let mut leaves: Vec<usize> =
                set.variables().into_iter().filter(|&v| v < dim).collect();
            if leaves.is_empty() {
                warn!("predicted set has no usable variable; allowing all {dim}");
                leaves = all_vars;
            }
            (unary, binary, leaves)
        }
    };
    Ok(SearchSpace {
        depth,
        dim,
        slots,
        unary,
        binary,
        leaves,
    })
}

impl SearchSpace {
    pub fn choice_counts(&self) -> Vec<usize> {
        self.slots
            .iter()
            .map(|s| match s {
                SlotKind::Unary => self.unary.len(),
                SlotKind::Binary => self.binary.len(),
                SlotKind::Leaf => self.leaves.len(),
            })
            .collect()
    }

    /// Number of distinct operator assignments.
    pub fn n_structures(&self) -> f64 {
        self.choice_counts().iter().map(|&c| c as f64).product()
    }

    pub fn n_unary_slots(&self) -> usize {
        self.slots.iter().filter(|s| **s == SlotKind::Unary).count()
    }

    /// `alpha, beta` per unary slot in pre-order, then the global `a, b`.
    pub fn n_params(&self) -> usize {
        2 * self.n_unary_slots() + 2
    }

    pub fn initial_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for _ in 0..self.n_unary_slots() + 1 {
            p.extend([1.0, 0.0]);
        }
        p
    }

    /// Straight-line program of a candidate with all scalars as parameters.
    pub fn program(&self, choices: &[usize]) -> Program {
        assert_eq!(choices.len(), self.slots.len(), "choice vector length");
        let mut prog = Program::new();
        let mut slot = 0;
        let mut param = 0;
        let root = self.emit(choices, &mut slot, &mut param, &mut prog);
        let root = prog.push(Instr::Unary {
            op: UnaryOp::Id,
            alpha: Scalar::Param(param),
            beta: Scalar::Param(param + 1),
            src: root,
        });
        debug_assert_eq!(root + 1, prog.len());
        prog
    }

    fn emit(&self, choices: &[usize], slot: &mut usize, param: &mut usize, prog: &mut Program) -> usize {
        let s = *slot;
        *slot += 1;
        match self.slots[s] {
            SlotKind::Leaf => prog.push(Instr::Var(self.leaves[choices[s]])),
            SlotKind::Binary => {
                let a = self.emit(choices, slot, param, prog);
                let b = self.emit(choices, slot, param, prog);
                prog.push(Instr::Binary {
                    op: self.binary[choices[s]],
                    a,
                    b,
                })
            }
            SlotKind::Unary => {
                let op = self.unary[choices[s]];
                let (pa, pb) = (*param, *param + 1);
                *param += 2;
                let src = self.emit(choices, slot, param, prog);
                match op {
                    // the child stays in the program but no longer feeds the output
                    UnaryOp::Zero => prog.push(Instr::Const(Scalar::Param(pb))),
                    UnaryOp::One => prog.push(Instr::Const(Scalar::Param(pb))),
                    _ => prog.push(Instr::Unary {
                        op,
                        alpha: Scalar::Param(pa),
                        beta: Scalar::Param(pb),
                        src,
                    }),
                }
            }
        }
    }

    /// Tree of a candidate with its scalars substituted, before simplification.
    pub fn realize(&self, choices: &[usize], params: &[f64]) -> Expr {
        self.program(choices).to_expr(params)
    }

    pub fn realize_simplified(&self, choices: &[usize], params: &[f64]) -> Expr {
        simplify(&self.realize(choices, params))
    }

    /// Human readable choice vector, e.g. `[SIN, +, Id, x1, COS, x3]`.
    pub fn describe(&self, choices: &[usize]) -> String {
        let names: Vec<String> = self
            .slots
            .iter()
            .zip(choices)
            .map(|(s, &c)| match s {
                SlotKind::Unary => self.unary[c].token().to_string(),
                SlotKind::Binary => self.binary[c].token().to_string(),
                SlotKind::Leaf => crate::expr::variable_token(self.leaves[c]),
            })
            .collect();
        format!("[{}]", names.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::jet::Workspace;

    #[test]
    fn skeleton_shapes() {
        let s = build_search_space(None, 1, 2).unwrap();
        assert_eq!(s.slots, vec![SlotKind::Unary, SlotKind::Leaf]);
        let s = build_search_space(None, 2, 3).unwrap();
        use SlotKind::*;
        assert_eq!(s.slots, vec![Unary, Binary, Unary, Leaf, Unary, Leaf]);
        assert_eq!(s.choice_counts(), vec![9, 3, 9, 3, 9, 3]);
        assert_eq!(s.n_params(), 8);
        let s = build_search_space(None, 3, 3).unwrap();
        assert_eq!(s.slots.len(), 1 + 1 + 2 * 6);
    }

    #[test]
    fn informed_pools() {
        let set: OperatorSet = ["x1", "SIN", "+"].into_iter().collect();
        let s = build_search_space(Some(&set), 2, 3).unwrap();
        assert_eq!(s.unary, vec![UnaryOp::Id, UnaryOp::Sin]);
        assert_eq!(s.binary, vec![BinaryOp::Add]);
        assert_eq!(s.leaves, vec![0]);

        let set: OperatorSet = ["COS"].into_iter().collect();
        let s = build_search_space(Some(&set), 2, 3).unwrap();
        assert_eq!(s.binary, vec![BinaryOp::Add]);
        assert_eq!(s.leaves, vec![0, 1, 2]);
        assert!(build_search_space(None, 0, 3).is_err());
    }

    #[test]
    fn program_matches_realized_tree() {
        let s = build_search_space(None, 2, 3).unwrap();
        // Cos(Sin(x2) * Square(x1))
        let choices = [
            s.unary.iter().position(|&u| u == UnaryOp::Cos).unwrap(),
            2,
            s.unary.iter().position(|&u| u == UnaryOp::Sin).unwrap(),
            1,
            s.unary.iter().position(|&u| u == UnaryOp::Square).unwrap(),
            0,
        ];
        let params = [2.0, 0.5, 1.5, -1.0, 0.7, 0.2, 3.0, 1.0];
        let prog = s.program(&choices);
        let e = s.realize(&choices, &params);
        let x = [0.3, -0.2, 0.9];
        let mut ws = Workspace::new();
        let a = prog.eval(&params, &x, &mut ws).unwrap();
        let inner = (1.5 * (-0.2f64).sin() - 1.0) * (0.7 * 0.09 + 0.2);
        let want = 3.0 * (2.0 * inner.cos() + 0.5) + 1.0;
        assert!((a - want).abs() < 1e-12);
        assert!((e.eval(&x).unwrap() - want).abs() < 1e-12);
        assert_eq!(s.describe(&choices), "[COS, *, SIN, x2, ^2, x1]");
    }

    #[test]
    fn constant_slot_ignores_its_subtree() {
        let s = build_search_space(None, 1, 1).unwrap();
        let zero = s.unary.iter().position(|&u| u == UnaryOp::Zero).unwrap();
        let e = s.realize_simplified(&[zero, 0], &[5.0, 2.0, 3.0, 1.0]);
        assert_eq!(e, Expr::Const(7.0));
    }
}
