//! Walk-on-spheres estimator for `-Δu = f` with Dirichlet data, used as an
//! independent check of candidate solutions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::pde::{sphere_point, unit_ball_volume, BcType, Domain, DomainKind, PdeInstance, PdeType};

#[derive(Debug, Error)]
pub enum WosError {
    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("walk-on-spheres needs a Poisson problem with Dirichlet data, got {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WosConfig {
    pub n_paths: usize,
    /// Walks stop once closer than this to the boundary.
    pub eps_shell: f64,
    pub max_steps: usize,
    /// Source samples per step.
    pub interior_samples: usize,
    pub seed: u64,
}

impl Default for WosConfig {
    fn default() -> Self {
        WosConfig {
            n_paths: 10_000,
            eps_shell: 1e-3,
            max_steps: 10_000,
            interior_samples: 1,
            seed: 0,
        }
    }
}

impl WosConfig {
    fn validate(&self) -> Result<(), WosError> {
        if self.n_paths == 0 || self.max_steps == 0 || self.interior_samples == 0 {
            return Err(WosError::InvalidConfig("counts must be positive".into()));
        }
        if !(self.eps_shell > 0.0) {
            return Err(WosError::InvalidConfig("eps_shell must be positive".into()));
        }
        Ok(())
    }
}

/// Distance to the boundary and the nearest boundary point. On the box, ties
/// go to the lowest coordinate and a zero coordinate snaps to the `+1` face.
pub fn distance_to_boundary(domain: &Domain, x: &[f64]) -> Result<(f64, Vec<f64>), WosError> {
    if x.len() != domain.dim || !domain.contains(x) {
        return Err(WosError::OutsideDomain(x.to_vec()));
    }
    Ok(nearest(domain, x))
}

fn nearest(domain: &Domain, x: &[f64]) -> (f64, Vec<f64>) {
    match domain.kind {
        DomainKind::UnitBox => {
            let mut best = 0;
            for i in 1..x.len() {
                if 1.0 - x[i].abs() < 1.0 - x[best].abs() {
                    best = i;
                }
            }
            let mut p = x.to_vec();
            p[best] = if x[best] < 0.0 { -1.0 } else { 1.0 };
            ((1.0 - x[best].abs()).max(0.0), p)
        }
        DomainKind::UnitBall => {
            let r = crate::pde::norm(x);
            let p = if r > 0.0 {
                x.iter().map(|v| v / r).collect()
            } else {
                let mut e = vec![0.0; x.len()];
                e[0] = 1.0;
                e
            };
            ((1.0 - r).max(0.0), p)
        }
    }
}

/// Green's function of the unit ball with pole at the centre, for `-Δ`.
pub fn unit_ball_green(z: &[f64]) -> f64 {
    let d = z.len();
    let r = crate::pde::norm(z);
    match d {
        2 => -r.ln() / (2.0 * std::f64::consts::PI),
        _ => {
            let surface = d as f64 * unit_ball_volume(d);
            (r.powi(2 - d as i32) - 1.0) / ((d as f64 - 2.0) * surface)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Walk {
    value: f64,
    steps: usize,
    truncated: bool,
}

/// Pairwise summation.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

struct Problem<'a> {
    domain: Domain,
    f: &'a Expr,
    g: &'a Expr,
    zero_source: bool,
}

impl Problem<'_> {
    fn walk(&self, x0: &[f64], cfg: &WosConfig, rng: &mut ChaCha8Rng) -> Result<Walk, EvalError> {
        let d = self.domain.dim;
        let ball = crate::pde::Domain::unit_ball(d);
        let vol = unit_ball_volume(d);
        let mut x = x0.to_vec();
        let mut source = 0.0;
        let mut y = vec![0.0; d];
        for k in 0..=cfg.max_steps {
            let (r, p) = nearest(&self.domain, &x);
            if r < cfg.eps_shell || k == cfg.max_steps {
                return Ok(Walk {
                    value: source + self.g.eval(&p)?,
                    steps: k,
                    truncated: r >= cfg.eps_shell,
                });
            }
            if !self.zero_source {
                let mut acc = 0.0;
                for _ in 0..cfg.interior_samples {
                    let z = ball.interior_point(rng);
                    for i in 0..d {
                        y[i] = x[i] + r * z[i];
                    }
                    acc += unit_ball_green(&z) * self.f.eval(&y)?;
                }
                source += r * r * vol * acc / cfg.interior_samples as f64;
            }
            let s = sphere_point(d, rng);
            for i in 0..d {
                x[i] += r * s[i];
            }
            debug_assert!(
                self.domain.distance(&x) >= -1e-12,
                "walk left the domain at {x:?}"
            );
        }
        unreachable!()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WosEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub mean_steps: f64,
    /// Walks stopped by the step cap rather than the shell.
    pub truncated: usize,
}

fn check_instance(instance: &PdeInstance) -> Result<&Expr, WosError> {
    if instance.pde_type != PdeType::Poisson || instance.bc_type != BcType::Dirichlet {
        return Err(WosError::Unsupported(format!(
            "{}/{}",
            instance.pde_type, instance.bc_type
        )));
    }
    match instance.g.exprs()[..] {
        [g] => Ok(g),
        _ => Err(WosError::Unsupported("per-face boundary data".into())),
    }
}

/// Monte-Carlo estimate of the solution at `x` with its standard error.
pub fn wos_estimate(instance: &PdeInstance, x: &[f64], cfg: &WosConfig) -> Result<WosEstimate, WosError> {
    cfg.validate()?;
    let g = check_instance(instance)?;
    distance_to_boundary(&instance.domain, x)?;
    let problem = Problem {
        domain: instance.domain,
        f: &instance.f,
        g,
        zero_source: instance.f.as_const() == Some(0.0),
    };
    let walks: Vec<Walk> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            problem.walk(x, cfg, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let m = walks.len() as f64;
    let values: Vec<f64> = walks.iter().map(|w| w.value).collect();
    let mean = pairwise_sum(&values) / m;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if walks.len() > 1 { pairwise_sum(&dev) / (m - 1.0) } else { 0.0 };
    Ok(WosEstimate {
        mean,
        stderr: (var / m).sqrt(),
        mean_steps: walks.iter().map(|w| w.steps as f64).sum::<f64>() / m,
        truncated: walks.iter().filter(|w| w.truncated).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCheck {
    pub x: Vec<f64>,
    pub candidate: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub points: Vec<PointCheck>,
    /// `max |candidate - estimate|` divided by `max(1, max |estimate|)`.
    pub max_scaled_error: f64,
    pub flagged: Vec<usize>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn max_z(&self) -> f64 {
        self.points.iter().map(|p| p.z).fold(0.0, f64::max)
    }
}

pub const Z_THRESHOLD: f64 = 4.0;

/// Compares `candidate` with walk-on-spheres estimates at `points`. Points
/// whose z-score exceeds 4, or where the candidate cannot be evaluated, are
/// flagged. Each point uses its own random stream family.
pub fn verify_solution(
    candidate: &Expr,
    instance: &PdeInstance,
    points: &[Vec<f64>],
    cfg: &WosConfig,
) -> Result<VerifyReport, WosError> {
    let mut checks = Vec::with_capacity(points.len());
    for (k, x) in points.iter().enumerate() {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let est = wos_estimate(instance, x, &c)?;
        let cand = candidate.eval(x).unwrap_or(f64::NAN);
        let diff = (cand - est.mean).abs();
        let z = if est.stderr > 0.0 {
            diff / est.stderr
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        checks.push(PointCheck {
            x: x.clone(),
            candidate: cand,
            estimate: est.mean,
            stderr: est.stderr,
            z: if z.is_nan() { f64::INFINITY } else { z },
        });
    }
    let scale = checks.iter().map(|c| c.estimate.abs()).fold(1.0, f64::max);
    let max_err = checks
        .iter()
        .map(|c| (c.candidate - c.estimate).abs())
        .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
    let flagged = checks
        .iter()
        .enumerate()
        .filter(|(_, c)| !(c.z <= Z_THRESHOLD))
        .map(|(i, _)| i)
        .collect();
    Ok(VerifyReport {
        points: checks,
        max_scaled_error: max_err / scale,
        flagged,
    })
}
