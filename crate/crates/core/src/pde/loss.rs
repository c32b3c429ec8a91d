use serde::{Deserialize, Serialize};

use super::{is_constrained, BcType, Domain, PdeError, PdeInstance, PdeType};
use crate::expr::jet::{Order, Program, Workspace};
use crate::expr::{EvalError, Expr};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollocationConfig {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub sampler_seed: u64,
    /// Draw a fresh point set whenever the solver asks for one instead of
    /// keeping the first set for the whole solve.
    pub resample_each_eval: bool,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        CollocationConfig {
            n_interior: 4096,
            n_boundary: 1024,
            sampler_seed: 0,
            resample_each_eval: false,
        }
    }
}

impl CollocationConfig {
    fn boundary_seed(&self) -> u64 {
        self.sampler_seed ^ 0x9E37_79B9_7F4A_7C15
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BoundaryRow {
    Free,
    Value,
    Normal,
}

/// Collocation points with the data values precomputed, ready to score many
/// candidate solutions of one instance.
#[derive(Clone, Debug)]
pub struct LossContext {
    pde_type: PdeType,
    dim: usize,
    interior: Vec<f64>,
    f_vals: Vec<f64>,
    boundary: Vec<f64>,
    normals: Vec<f64>,
    rows: Vec<BoundaryRow>,
    g_vals: Vec<f64>,
    w_interior: f64,
    w_boundary: f64,
}

impl LossContext {
    pub fn new(instance: &PdeInstance, cfg: &CollocationConfig) -> Result<Self, PdeError> {
        if cfg.n_interior == 0 || cfg.n_boundary == 0 {
            return Err(PdeError::InvalidInstance(
                "collocation counts must be positive".into(),
            ));
        }
        let interior = instance.domain.sample_interior(cfg.n_interior, cfg.sampler_seed);
        let boundary = instance.domain.sample_boundary(cfg.n_boundary, cfg.boundary_seed());
        LossContext::with_points(instance, &interior, &boundary)
    }

    pub fn with_points(
        instance: &PdeInstance,
        interior: &[Vec<f64>],
        boundary: &[Vec<f64>],
    ) -> Result<Self, PdeError> {
        let dom: &Domain = &instance.domain;
        let d = dom.dim;
        let mut ctx = LossContext {
            pde_type: instance.pde_type,
            dim: d,
            interior: Vec::with_capacity(interior.len() * d),
            f_vals: Vec::with_capacity(interior.len()),
            boundary: Vec::with_capacity(boundary.len() * d),
            normals: Vec::new(),
            rows: Vec::with_capacity(boundary.len()),
            g_vals: Vec::with_capacity(boundary.len()),
            w_interior: dom.volume() / interior.len() as f64,
            w_boundary: instance.lambda * dom.boundary_measure() / boundary.len() as f64,
        };
        let bad = |what: &str, e: EvalError| {
            PdeError::InvalidInstance(format!("{what} cannot be evaluated on the samples: {e}"))
        };
        for x in interior {
            ctx.interior.extend_from_slice(x);
            ctx.f_vals.push(instance.f.eval(x).map_err(|e| bad("f", e))?);
        }
        for x in boundary {
            ctx.boundary.extend_from_slice(x);
            let row = if !is_constrained(instance.bc_type, dom, x) {
                BoundaryRow::Free
            } else if instance.bc_type == BcType::Neumann {
                BoundaryRow::Normal
            } else {
                BoundaryRow::Value
            };
            let g = match row {
                BoundaryRow::Free => 0.0,
                _ => instance.g.at(x).eval(x).map_err(|e| bad("g", e))?,
            };
            if instance.bc_type == BcType::Neumann {
                ctx.normals.extend(dom.outward_normal(x));
            }
            ctx.rows.push(row);
            ctx.g_vals.push(g);
        }
        Ok(ctx)
    }

    pub fn n_interior(&self) -> usize {
        self.f_vals.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.g_vals.len()
    }

    pub fn n_residuals(&self) -> usize {
        self.n_interior() + self.n_boundary()
    }

    /// Weighted residual vector whose squared norm is the loss. Interior rows
    /// come first.
    pub fn residuals(
        &self,
        program: &Program,
        params: &[f64],
        ws: &mut Workspace,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        assert_eq!(out.len(), self.n_residuals());
        let d = self.dim;
        let si = self.w_interior.sqrt();
        let sb = self.w_boundary.sqrt();
        let order = match self.pde_type {
            PdeType::Poisson => Order::Second,
            PdeType::Conservation => Order::First,
        };
        for (k, f) in self.f_vals.iter().enumerate() {
            let x = &self.interior[k * d..(k + 1) * d];
            program.eval_jet(params, x, order, ws)?;
            let du = match self.pde_type {
                PdeType::Poisson => -ws.laplacian(),
                PdeType::Conservation => ws.gradient().iter().sum(),
            };
            out[k] = si * (du - f);
        }
        let n_int = self.n_interior();
        for (k, row) in self.rows.iter().enumerate() {
            let x = &self.boundary[k * d..(k + 1) * d];
            let r = match row {
                BoundaryRow::Free => 0.0,
                BoundaryRow::Value => {
                    program.eval_jet(params, x, Order::Value, ws)?;
                    ws.value() - self.g_vals[k]
                }
                BoundaryRow::Normal => {
                    program.eval_jet(params, x, Order::First, ws)?;
                    let n = &self.normals[k * d..(k + 1) * d];
                    let dn: f64 = n.iter().zip(ws.gradient()).map(|(a, b)| a * b).sum();
                    dn - self.g_vals[k]
                }
            };
            out[n_int + k] = sb * r;
        }
        Ok(())
    }

    /// Interior and boundary terms of the loss; `+inf` on any evaluation failure.
    pub fn loss_parts(&self, program: &Program, params: &[f64], ws: &mut Workspace) -> (f64, f64) {
        let mut r = vec![0.0; self.n_residuals()];
        if self.residuals(program, params, ws, &mut r).is_err() {
            return (f64::INFINITY, f64::INFINITY);
        }
        let n = self.n_interior();
        let a = r[..n].iter().map(|v| v * v).sum::<f64>();
        let b = r[n..].iter().map(|v| v * v).sum::<f64>();
        if !(a + b).is_finite() {
            return (f64::INFINITY, f64::INFINITY);
        }
        (a, b)
    }

    pub fn loss_program(&self, program: &Program, params: &[f64], ws: &mut Workspace) -> f64 {
        let (a, b) = self.loss_parts(program, params, ws);
        a + b
    }

    pub fn loss(&self, u: &Expr) -> f64 {
        self.loss_program(&Program::from_expr(u), &[], &mut Workspace::new())
    }

    pub fn loss_parts_expr(&self, u: &Expr) -> (f64, f64) {
        self.loss_parts(&Program::from_expr(u), &[], &mut Workspace::new())
    }
}

/// Collocation estimate of `|Du - f|^2 + lambda |Bu - g|^2`; `+inf` when the
/// candidate is undefined at a sample.
pub fn assemble_loss(instance: &PdeInstance, u: &Expr, cfg: &CollocationConfig) -> f64 {
    match LossContext::new(instance, cfg) {
        Ok(ctx) => ctx.loss(u),
        Err(_) => f64::INFINITY,
    }
}
