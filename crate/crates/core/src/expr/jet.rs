//! Straight-line programs with forward-mode derivatives.
//!
//! A [`Program`] is a tree flattened into instructions whose affine scalars can
//! be bound to an external parameter vector. Evaluation optionally propagates
//! the gradient and the unmixed second partials with respect to the input
//! point, which is all the residual operators need.

use super::{BinaryOp, EvalError, Expr, UnaryOp};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Fixed(f64),
    Param(usize),
}

impl Scalar {
    #[inline]
    fn get(self, params: &[f64]) -> f64 {
        match self {
            Scalar::Fixed(v) => v,
            Scalar::Param(i) => params[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    Var(usize),
    Const(Scalar),
    /// `alpha * op(src) + beta`; never holds the constant operators.
    Unary {
        op: UnaryOp,
        alpha: Scalar,
        beta: Scalar,
        src: usize,
    },
    Binary {
        op: BinaryOp,
        a: usize,
        b: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    instrs: Vec<Instr>,
    n_params: usize,
}

impl Program {
    pub fn new() -> Self {
        Program::default()
    }

    /// Compiles a tree with all scalars fixed.
    pub fn from_expr(expr: &Expr) -> Self {
        let mut p = Program::new();
        p.compile(expr);
        p
    }

    fn compile(&mut self, expr: &Expr) -> usize {
        match expr {
            Expr::Var(i) => self.push(Instr::Var(*i)),
            Expr::Const(c) => self.push(Instr::Const(Scalar::Fixed(*c))),
            Expr::Unary {
                op,
                alpha,
                beta,
                child,
            } => match op {
                UnaryOp::Zero => self.push(Instr::Const(Scalar::Fixed(*beta))),
                UnaryOp::One => self.push(Instr::Const(Scalar::Fixed(alpha + beta))),
                _ => {
                    let src = self.compile(child);
                    self.push(Instr::Unary {
                        op: *op,
                        alpha: Scalar::Fixed(*alpha),
                        beta: Scalar::Fixed(*beta),
                        src,
                    })
                }
            },
            Expr::Binary { op, left, right } => {
                let a = self.compile(left);
                let b = self.compile(right);
                self.push(Instr::Binary { op: *op, a, b })
            }
        }
    }

    /// Appends an instruction and returns its slot. Operands must refer to
    /// earlier slots.
    pub fn push(&mut self, instr: Instr) -> usize {
        let at = self.instrs.len();
        match &instr {
            Instr::Unary { op, src, alpha, beta } => {
                assert!(*src < at, "operand must precede its user");
                assert!(!op.is_constant(), "constant operators compile to Const");
                self.note_scalar(*alpha);
                self.note_scalar(*beta);
            }
            Instr::Binary { a, b, .. } => assert!(*a < at && *b < at, "operand must precede its user"),
            Instr::Const(s) => self.note_scalar(*s),
            Instr::Var(_) => {}
        }
        self.instrs.push(instr);
        at
    }

    fn note_scalar(&mut self, s: Scalar) {
        if let Scalar::Param(i) = s {
            self.n_params = self.n_params.max(i + 1);
        }
    }

    /// Reserves a fresh parameter index.
    pub fn new_param(&mut self) -> Scalar {
        let s = Scalar::Param(self.n_params);
        self.n_params += 1;
        s
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn instrs(&self) -> &[Instr] {
        &self.instrs
    }

    /// Rebuilds the symbolic tree rooted at the last instruction with the
    /// parameters substituted.
    pub fn to_expr(&self, params: &[f64]) -> Expr {
        assert!(!self.instrs.is_empty(), "empty program");
        let mut built: Vec<Expr> = Vec::with_capacity(self.instrs.len());
        for ins in &self.instrs {
            let e = match ins {
                Instr::Var(i) => Expr::Var(*i),
                Instr::Const(s) => Expr::Const(s.get(params)),
                Instr::Unary {
                    op,
                    alpha,
                    beta,
                    src,
                } => Expr::unary(*op, alpha.get(params), beta.get(params), built[*src].clone()),
                Instr::Binary { op, a, b } => {
                    Expr::binary(*op, built[*a].clone(), built[*b].clone())
                }
            };
            built.push(e);
        }
        built.pop().expect("non-empty")
    }

    /// Value at `x`.
    pub fn eval(&self, params: &[f64], x: &[f64], ws: &mut Workspace) -> Result<f64, EvalError> {
        self.eval_jet(params, x, Order::Value, ws)?;
        Ok(ws.value())
    }

    /// Evaluates up to `order`; results are read back from `ws`.
    pub fn eval_jet(
        &self,
        params: &[f64],
        x: &[f64],
        order: Order,
        ws: &mut Workspace,
    ) -> Result<(), EvalError> {
        let d = x.len();
        let stride = match order {
            Order::Value => 1,
            Order::First => 1 + d,
            Order::Second => 1 + 2 * d,
        };
        ws.reset(self.instrs.len(), stride, d, order);
        let buf = &mut ws.buf;
        for (k, ins) in self.instrs.iter().enumerate() {
            let (done, rest) = buf.split_at_mut(k * stride);
            let out = &mut rest[..stride];
            match ins {
                Instr::Var(i) => {
                    let v = *x.get(*i).ok_or(EvalError::VariableOutOfRange { index: *i, dim: d })?;
                    out.fill(0.0);
                    out[0] = v;
                    if order >= Order::First {
                        out[1 + i] = 1.0;
                    }
                }
                Instr::Const(s) => {
                    out.fill(0.0);
                    out[0] = s.get(params);
                }
                Instr::Unary {
                    op,
                    alpha,
                    beta,
                    src,
                } => {
                    let c = &done[src * stride..(src + 1) * stride];
                    let a = alpha.get(params);
                    let b = beta.get(params);
                    let domain = |value| EvalError::Domain {
                        op: op.token(),
                        value,
                    };
                    if order == Order::Value {
                        out[0] = a * op.apply(c[0]).map_err(domain)? + b;
                    } else {
                        let (f0, f1, f2) = op.apply_with_derivatives(c[0]).map_err(domain)?;
                        out[0] = a * f0 + b;
                        for i in 0..d {
                            let g = c[1 + i];
                            out[1 + i] = a * f1 * g;
                            if order == Order::Second {
                                out[1 + d + i] = a * (f2 * g * g + f1 * c[1 + d + i]);
                            }
                        }
                    }
                    if !out[0].is_finite() {
                        return Err(EvalError::NonFinite { op: op.token() });
                    }
                }
                Instr::Binary { op, a, b } => {
                    let p = &done[a * stride..(a + 1) * stride];
                    let q = &done[b * stride..(b + 1) * stride];
                    binary_jet(*op, p, q, out, d, order)?;
                    if !out[0].is_finite() {
                        return Err(EvalError::NonFinite { op: op.token() });
                    }
                }
            }
        }
        Ok(())
    }
}

fn binary_jet(
    op: BinaryOp,
    p: &[f64],
    q: &[f64],
    out: &mut [f64],
    d: usize,
    order: Order,
) -> Result<(), EvalError> {
    let n = out.len();
    match op {
        BinaryOp::Add => {
            for k in 0..n {
                out[k] = p[k] + q[k];
            }
        }
        BinaryOp::Sub => {
            for k in 0..n {
                out[k] = p[k] - q[k];
            }
        }
        BinaryOp::Mul => {
            out[0] = p[0] * q[0];
            if order >= Order::First {
                for i in 0..d {
                    out[1 + i] = p[1 + i] * q[0] + p[0] * q[1 + i];
                    if order == Order::Second {
                        let j = 1 + d + i;
                        out[j] = p[j] * q[0] + 2.0 * p[1 + i] * q[1 + i] + p[0] * q[j];
                    }
                }
            }
        }
        BinaryOp::Div => {
            if q[0] == 0.0 {
                return Err(EvalError::Domain { op: "/", value: 0.0 });
            }
            let v = p[0] / q[0];
            out[0] = v;
            if order >= Order::First {
                for i in 0..d {
                    let g = (p[1 + i] - v * q[1 + i]) / q[0];
                    out[1 + i] = g;
                    if order == Order::Second {
                        let j = 1 + d + i;
                        out[j] = (p[j] - 2.0 * g * q[1 + i] - v * q[j]) / q[0];
                    }
                }
            }
        }
    }
    Ok(())
}

/// Scratch space reused across evaluations.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    buf: Vec<f64>,
    stride: usize,
    dim: usize,
    last: usize,
    order: Option<Order>,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace::default()
    }

    fn reset(&mut self, n: usize, stride: usize, dim: usize, order: Order) {
        if self.buf.len() < n * stride {
            self.buf.resize(n * stride, 0.0);
        }
        self.stride = stride;
        self.dim = dim;
        self.last = n.saturating_sub(1);
        self.order = Some(order);
    }

    fn root(&self) -> &[f64] {
        &self.buf[self.last * self.stride..(self.last + 1) * self.stride]
    }

    pub fn value(&self) -> f64 {
        self.root()[0]
    }

    /// Gradient of the last evaluation; requires `Order::First` or higher.
    pub fn gradient(&self) -> &[f64] {
        assert!(self.order >= Some(Order::First), "gradient was not computed");
        &self.root()[1..1 + self.dim]
    }

    /// Unmixed second partials; requires `Order::Second`.
    pub fn second(&self) -> &[f64] {
        assert!(self.order == Some(Order::Second), "second partials were not computed");
        &self.root()[1 + self.dim..1 + 2 * self.dim]
    }

    pub fn laplacian(&self) -> f64 {
        self.second().iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{differentiate, laplacian};

    #[test]
    fn matches_symbolic_derivatives() {
        // sin(2 x1) * (x2^2 + 1) / exp(x3 - 1)
        let e = Expr::div(
            Expr::mul(
                Expr::apply(UnaryOp::Sin, Expr::var(0).affine(2.0, 0.0)),
                Expr::unary(UnaryOp::Square, 1.0, 1.0, Expr::var(1)),
            ),
            Expr::apply(UnaryOp::Exp, Expr::var(2).affine(1.0, -1.0)),
        );
        let prog = Program::from_expr(&e);
        let mut ws = Workspace::new();
        let x = [0.3, -0.7, 0.4];
        prog.eval_jet(&[], &x, Order::Second, &mut ws).unwrap();
        assert!((ws.value() - e.eval(&x).unwrap()).abs() < 1e-14);
        for k in 0..3 {
            let dk = differentiate(&e, k).eval(&x).unwrap();
            assert!((ws.gradient()[k] - dk).abs() < 1e-12);
        }
        let lap = laplacian(&e, 3).eval(&x).unwrap();
        assert!((ws.laplacian() - lap).abs() < 1e-12);
    }

    #[test]
    fn parameters_bind_late() {
        let mut p = Program::new();
        let x = p.push(Instr::Var(0));
        let a = p.new_param();
        let b = p.new_param();
        p.push(Instr::Unary {
            op: UnaryOp::Sin,
            alpha: a,
            beta: b,
            src: x,
        });
        let mut ws = Workspace::new();
        let v = p.eval(&[2.0, 1.0], &[0.5], &mut ws).unwrap();
        assert!((v - (2.0 * 0.5f64.sin() + 1.0)).abs() < 1e-15);
        assert_eq!(
            p.to_expr(&[2.0, 1.0]),
            Expr::unary(UnaryOp::Sin, 2.0, 1.0, Expr::var(0))
        );
    }

    #[test]
    fn constant_operators_skip_their_operand() {
        let e = Expr::unary(
            UnaryOp::One,
            2.0,
            0.0,
            Expr::apply(UnaryOp::Ln, Expr::constant(-1.0)),
        );
        let prog = Program::from_expr(&e);
        assert_eq!(prog.len(), 1);
        assert_eq!(prog.eval(&[], &[], &mut Workspace::new()).unwrap(), 2.0);
    }
}
