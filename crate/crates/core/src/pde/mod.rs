//! Linear PDE problems, manufactured instances, and the collocation loss.
//!
//! Two operators are supported: Poisson, `Du = -Δu`, and a linear transport
//! law `Du = Σ_k ∂u/∂x_k` in which `x1` plays the role of time.

mod domain;
mod loss;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{
    differentiate, laplacian, parse_postfix, simplify, to_postfix, EvalError, Expr, ExprError,
    OperatorDictionary, UnaryOp,
};

pub use domain::{norm, sphere_point, unit_ball_volume, Domain, DomainKind};
pub use loss::{assemble_loss, CollocationConfig, LossContext};

/// Tolerance used to decide whether a point lies on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Separator prefix for per-face boundary data in token streams.
pub const FACE_TAG: &str = "FACE:";

#[derive(Debug, Error)]
pub enum PdeError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("point is not on the boundary (tolerance {BOUNDARY_TOL})")]
    NotOnBoundary,
    #[error("reference solution is numerically zero on the samples")]
    DegenerateReference,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeType {
    Poisson,
    Conservation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcType {
    Dirichlet,
    Neumann,
    /// Dirichlet data on every face except the outflow face `x1 = +1`.
    Cauchy,
}

impl PdeType {
    pub const ALL: [PdeType; 2] = [PdeType::Poisson, PdeType::Conservation];

    pub fn as_str(self) -> &'static str {
        match self {
            PdeType::Poisson => "poisson",
            PdeType::Conservation => "conservation",
        }
    }
}

impl BcType {
    pub const ALL: [BcType; 3] = [BcType::Dirichlet, BcType::Neumann, BcType::Cauchy];

    pub fn as_str(self) -> &'static str {
        match self {
            BcType::Dirichlet => "dirichlet",
            BcType::Neumann => "neumann",
            BcType::Cauchy => "cauchy",
        }
    }
}

impl fmt::Display for PdeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for BcType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PdeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PdeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown PDE type `{s}`"))
    }
}

impl FromStr for BcType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BcType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown boundary condition `{s}`"))
    }
}

/// Boundary datum `g`: one expression for the whole boundary, or one per box
/// face (face `2i` is `x_{i+1} = -1`, face `2i + 1` is `x_{i+1} = +1`).
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryData {
    Uniform(Expr),
    PerFace(Vec<Expr>),
}

impl BoundaryData {
    /// Expression in force at boundary point `x`.
    pub fn at(&self, x: &[f64]) -> &Expr {
        match self {
            BoundaryData::Uniform(e) => e,
            BoundaryData::PerFace(faces) => &faces[Domain::box_face(x)],
        }
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            BoundaryData::Uniform(e) => vec![e],
            BoundaryData::PerFace(v) => v.iter().collect(),
        }
    }

    /// Postfix tokens; per-face data is tagged `FACE:k` before each face.
    pub fn to_postfix(&self) -> Vec<String> {
        match self {
            BoundaryData::Uniform(e) => to_postfix(e),
            BoundaryData::PerFace(faces) => {
                let mut out = Vec::new();
                for (k, e) in faces.iter().enumerate() {
                    out.push(format!("{FACE_TAG}{k}"));
                    out.extend(to_postfix(e));
                }
                out
            }
        }
    }

    pub fn parse<S: AsRef<str>>(tokens: &[S], dict: &OperatorDictionary) -> Result<Self, ExprError> {
        let tagged = tokens
            .first()
            .is_some_and(|t| t.as_ref().starts_with(FACE_TAG));
        if !tagged {
            return parse_postfix(tokens, dict).map(BoundaryData::Uniform);
        }
        let mut faces: Vec<Expr> = Vec::new();
        let mut start = 0;
        for i in 1..=tokens.len() {
            if i == tokens.len() || tokens[i].as_ref().starts_with(FACE_TAG) {
                let tag = &tokens[start].as_ref()[FACE_TAG.len()..];
                if tag.parse::<usize>().ok() != Some(faces.len()) {
                    return Err(ExprError::MalformedSequence(format!(
                        "face tag `{}` out of order",
                        tokens[start].as_ref()
                    )));
                }
                faces.push(parse_postfix(&tokens[start + 1..i], dict)?);
                start = i;
            }
        }
        Ok(BoundaryData::PerFace(faces))
    }
}

/// Symbolic `Du`.
pub fn residual_operator(pde_type: PdeType, u: &Expr, dim: usize) -> Expr {
    match pde_type {
        PdeType::Poisson => simplify(&laplacian(u, dim).affine(-1.0, 0.0)),
        PdeType::Conservation => {
            let mut acc = Expr::Const(0.0);
            for k in 0..dim {
                acc = Expr::add(acc, differentiate(u, k));
            }
            simplify(&acc)
        }
    }
}

/// Boundary datum implied by `u` for the given condition.
pub fn boundary_data(bc_type: BcType, u: &Expr, domain: &Domain) -> BoundaryData {
    match bc_type {
        BcType::Dirichlet | BcType::Cauchy => BoundaryData::Uniform(simplify(u)),
        BcType::Neumann => match domain.kind {
            DomainKind::UnitBox => {
                let mut faces = Vec::with_capacity(2 * domain.dim);
                for i in 0..domain.dim {
                    let di = differentiate(u, i);
                    faces.push(simplify(&di.clone().affine(-1.0, 0.0)));
                    faces.push(di);
                }
                BoundaryData::PerFace(faces)
            }
            DomainKind::UnitBall => {
                // on the unit sphere the outward normal is x itself
                let mut acc = Expr::Const(0.0);
                for i in 0..domain.dim {
                    acc = Expr::add(acc, Expr::mul(Expr::Var(i), differentiate(u, i)));
                }
                BoundaryData::Uniform(simplify(&acc))
            }
        },
    }
}

/// Whether the boundary condition constrains `x`. Only Cauchy data leave a
/// face free (the outflow face `x1 = +1` of the box).
pub fn is_constrained(bc_type: BcType, domain: &Domain, x: &[f64]) -> bool {
    !(bc_type == BcType::Cauchy
        && domain.kind == DomainKind::UnitBox
        && Domain::box_face(x) == 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeInstance {
    pub pde_type: PdeType,
    pub bc_type: BcType,
    pub domain: Domain,
    pub f: Expr,
    pub g: BoundaryData,
    pub true_u: Option<Expr>,
    /// Boundary weight in the loss.
    pub lambda: f64,
}

impl PdeInstance {
    /// Builds `f` and `g` symbolically from a known solution.
    pub fn manufactured(pde_type: PdeType, bc_type: BcType, domain: Domain, u: Expr) -> Self {
        let f = residual_operator(pde_type, &u, domain.dim);
        let g = boundary_data(bc_type, &u, &domain);
        PdeInstance {
            pde_type,
            bc_type,
            domain,
            f,
            g,
            true_u: Some(u),
            lambda: 1.0,
        }
    }

    pub fn dictionary(&self) -> OperatorDictionary {
        OperatorDictionary::standard(self.domain.dim)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            pde_type: self.pde_type,
            bc_type: self.bc_type,
            domain: self.domain,
            lambda: self.lambda,
            f_postfix: to_postfix(&self.f).join(" "),
            g_postfix: self.g.to_postfix().join(" "),
            true_u_postfix: self.true_u.as_ref().map(|u| to_postfix(u).join(" ")),
        }
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self, PdeError> {
        if !(file.lambda > 0.0) {
            return Err(PdeError::InvalidInstance("lambda must be positive".into()));
        }
        if file.domain.dim == 0 {
            return Err(PdeError::InvalidInstance("dimension must be positive".into()));
        }
        let dict = OperatorDictionary::standard(file.domain.dim);
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let f = parse_postfix(&split(&file.f_postfix), &dict)?;
        let g = BoundaryData::parse(&split(&file.g_postfix), &dict)?;
        if let BoundaryData::PerFace(faces) = &g {
            if file.domain.kind != DomainKind::UnitBox || faces.len() != 2 * file.domain.dim {
                return Err(PdeError::InvalidInstance(
                    "per-face boundary data needs one entry per box face".into(),
                ));
            }
        }
        let true_u = match &file.true_u_postfix {
            Some(s) => Some(parse_postfix(&split(s), &dict)?),
            None => None,
        };
        Ok(PdeInstance {
            pde_type: file.pde_type,
            bc_type: file.bc_type,
            domain: file.domain,
            f,
            g,
            true_u,
            lambda: file.lambda,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    /// Parses an instance file; leading `#` comment lines are skipped.
    pub fn from_json(text: &str) -> Result<Self, PdeError> {
        let file: InstanceFile = serde_json::from_str(&strip_comment_lines(text))?;
        PdeInstance::from_file(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PdeError> {
        PdeInstance::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PdeError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// On-disk form of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub pde_type: PdeType,
    pub bc_type: BcType,
    pub domain: Domain,
    pub lambda: f64,
    pub f_postfix: String,
    pub g_postfix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_u_postfix: Option<String>,
}

/// `Bu - g` at a boundary point.
pub fn boundary_residual(
    bc_type: BcType,
    u: &Expr,
    g: &BoundaryData,
    domain: &Domain,
    x: &[f64],
) -> Result<f64, PdeError> {
    if !domain.is_on_boundary(x, BOUNDARY_TOL) {
        return Err(PdeError::NotOnBoundary);
    }
    if !is_constrained(bc_type, domain, x) {
        return Ok(0.0);
    }
    let target = g.at(x).eval(x)?;
    let value = match bc_type {
        BcType::Dirichlet | BcType::Cauchy => u.eval(x)?,
        BcType::Neumann => {
            let n = domain.outward_normal(x);
            let mut acc = 0.0;
            for (k, nk) in n.iter().enumerate() {
                if *nk != 0.0 {
                    acc += nk * differentiate(u, k).eval(x)?;
                }
            }
            acc
        }
    };
    Ok(value - target)
}

/// `1 / (1 + L)`, with `R(+inf) = 0`.
pub fn reward(loss: f64) -> f64 {
    if loss.is_nan() || loss == f64::INFINITY {
        0.0
    } else {
        1.0 / (1.0 + loss.max(0.0))
    }
}

/// Drops lines starting with `#` so JSON files can carry a header.
pub fn strip_comment_lines(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Monte-Carlo estimate of `|u - u*| / |u*|` in `L2(Ω)`.
pub fn relative_l2_error(
    u: &Expr,
    true_u: &Expr,
    domain: &Domain,
    n: usize,
    seed: u64,
) -> Result<f64, PdeError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for x in domain.sample_interior(n, seed) {
        let a = u.eval(&x)?;
        let b = true_u.eval(&x)?;
        num += (a - b) * (a - b);
        den += b * b;
    }
    if (den / n as f64).sqrt() < 1e-14 {
        return Err(PdeError::DegenerateReference);
    }
    Ok((num / den).sqrt())
}

/// Convenience used by tests and examples: `alpha * op(x_k)`.
pub fn scaled(op: UnaryOp, alpha: f64, var: usize) -> Expr {
    Expr::unary(op, alpha, 0.0, Expr::Var(var))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::Var(i)
    }

    #[test]
    fn residual_examples() {
        let u = Expr::apply(UnaryOp::Square, x(0));
        assert_eq!(
            residual_operator(PdeType::Poisson, &u, 3),
            Expr::constant(-2.0)
        );
        assert_eq!(
            residual_operator(PdeType::Conservation, &x(0), 3),
            Expr::constant(1.0)
        );
        let u = Expr::apply(UnaryOp::Sin, x(1));
        assert_eq!(
            residual_operator(PdeType::Conservation, &u, 3),
            Expr::apply(UnaryOp::Cos, x(1))
        );
    }

    #[test]
    fn boundary_residual_examples() {
        let ball = Domain::unit_ball(3);
        let u = Expr::add(
            Expr::add(
                Expr::apply(UnaryOp::Square, x(0)),
                Expr::apply(UnaryOp::Square, x(1)),
            ),
            Expr::apply(UnaryOp::Square, x(2)),
        );
        let g = BoundaryData::Uniform(Expr::constant(2.0));
        let p = [0.6, 0.0, 0.8];
        let r = boundary_residual(BcType::Neumann, &u, &g, &ball, &p).unwrap();
        assert!(r.abs() < 1e-14);
        let g = BoundaryData::Uniform(u.clone());
        let r = boundary_residual(BcType::Dirichlet, &u, &g, &ball, &p).unwrap();
        assert_eq!(r, 0.0);
        assert!(matches!(
            boundary_residual(BcType::Dirichlet, &u, &g, &ball, &[0.1, 0.0, 0.0]),
            Err(PdeError::NotOnBoundary)
        ));
    }

    #[test]
    fn cauchy_leaves_outflow_face_free() {
        let b = Domain::unit_box(2);
        let g = BoundaryData::Uniform(Expr::constant(5.0));
        let u = Expr::constant(0.0);
        let r = boundary_residual(BcType::Cauchy, &u, &g, &b, &[1.0, 0.3]).unwrap();
        assert_eq!(r, 0.0);
        let r = boundary_residual(BcType::Cauchy, &u, &g, &b, &[-1.0, 0.3]).unwrap();
        assert_eq!(r, -5.0);
        let r = boundary_residual(BcType::Cauchy, &u, &g, &b, &[0.2, 1.0]).unwrap();
        assert_eq!(r, -5.0);
    }

    #[test]
    fn rewards() {
        assert_eq!(reward(0.0), 1.0);
        assert_eq!(reward(1.0), 0.5);
        assert_eq!(reward(f64::INFINITY), 0.0);
    }

    #[test]
    fn relative_error_examples() {
        let d = Domain::unit_box(3);
        let u = scaled(UnaryOp::Sin, 16.0, 2);
        assert_eq!(relative_l2_error(&u, &u, &d, 200, 1).unwrap(), 0.0);
        let twice = u.clone().affine(2.0, 0.0);
        assert!((relative_l2_error(&twice, &u, &d, 200, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            relative_l2_error(&u, &Expr::constant(0.0), &d, 10, 1),
            Err(PdeError::DegenerateReference)
        ));
    }

    #[test]
    fn instance_json_round_trip() {
        let u = Expr::add(scaled(UnaryOp::Sin, 16.0, 2), Expr::apply(UnaryOp::Square, x(0)));
        for bc in BcType::ALL {
            let inst = PdeInstance::manufactured(PdeType::Poisson, bc, Domain::unit_box(3), u.clone());
            let back = PdeInstance::from_json(&inst.to_json()).unwrap();
            let p = [0.1, -0.4, 1.0];
            assert_eq!(back.f.eval(&p).unwrap(), inst.f.eval(&p).unwrap());
            assert_eq!(back.g.at(&p).eval(&p).unwrap(), inst.g.at(&p).eval(&p).unwrap());
        }
    }
}
