//! Scalar fitting for a fixed operator structure.
//!
//! The loss is a sum of squared weighted residuals, so a damped Gauss-Newton
//! (Levenberg-Marquardt) iteration on the residual vector is used. The
//! Jacobian is taken by central differences.

use nalgebra::{DMatrix, DVector};

use crate::expr::jet::{Program, Workspace};
use crate::pde::LossContext;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFit {
    pub params: Vec<f64>,
    pub loss: f64,
    /// Accepted steps.
    pub steps: usize,
    /// Residual vector evaluations.
    pub evals: usize,
}

struct Evaluator<'a> {
    ctx: &'a LossContext,
    prog: &'a Program,
    ws: Workspace,
    evals: usize,
}

impl Evaluator<'_> {
    fn residuals(&mut self, params: &[f64], out: &mut [f64]) -> bool {
        self.evals += 1;
        self.ctx.residuals(self.prog, params, &mut self.ws, out).is_ok()
            && out.iter().all(|v| v.is_finite())
    }
}

fn sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes the collocation loss over the program parameters starting at
/// `init`, taking at most `max_steps` Jacobian evaluations. Only improving
/// steps are accepted, so the returned loss never exceeds the initial one.
pub fn optimize_scalars(ctx: &LossContext, prog: &Program, init: &[f64], max_steps: usize) -> ScalarFit {
    let n = ctx.n_residuals();
    let p = prog.n_params();
    assert_eq!(init.len(), p, "parameter vector length");
    let mut ev = Evaluator {
        ctx,
        prog,
        ws: Workspace::new(),
        evals: 0,
    };
    let mut x = init.to_vec();
    let mut r = vec![0.0; n];
    if !ev.residuals(&x, &mut r) {
        return ScalarFit {
            params: x,
            loss: f64::INFINITY,
            steps: 0,
            evals: ev.evals,
        };
    }
    let mut loss = sq(&r);
    let mut steps = 0;
    if p == 0 {
        return ScalarFit {
            params: x,
            loss,
            steps,
            evals: ev.evals,
        };
    }

    let mut jac = DMatrix::<f64>::zeros(n, p);
    let mut rp = vec![0.0; n];
    let mut rm = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut mu = 1e-3;
    let mut stalled = 0;
    for _ in 0..max_steps {
        if loss <= 1e-30 {
            break;
        }
        for j in 0..p {
            let h = 1e-6 * x[j].abs().max(1.0);
            let xj = x[j];
            x[j] = xj + h;
            let ok_p = ev.residuals(&x, &mut rp);
            x[j] = xj - h;
            let ok_m = ev.residuals(&x, &mut rm);
            x[j] = xj;
            for i in 0..n {
                jac[(i, j)] = match (ok_p, ok_m) {
                    (true, true) => (rp[i] - rm[i]) / (2.0 * h),
                    (true, false) => (rp[i] - r[i]) / h,
                    (false, true) => (r[i] - rm[i]) / h,
                    (false, false) => 0.0,
                };
            }
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let scale = (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);

        let mut accepted = false;
        for _ in 0..12 {
            let mut m = a.clone();
            for i in 0..p {
                m[(i, i)] += mu * (a[(i, i)] + 1e-9 * scale);
            }
            let Some(chol) = m.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if ev.residuals(&xn, &mut trial) {
                let ln = sq(&trial);
                if ln < loss {
                    stalled = if loss - ln <= 1e-10 * loss { stalled + 1 } else { 0 };
                    x = xn;
                    std::mem::swap(&mut r, &mut trial);
                    loss = ln;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted || stalled >= 3 {
            break;
        }
        steps += 1;
    }
    ScalarFit {
        params: x,
        loss,
        steps,
        evals: ev.evals,
    }
}
