use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `[-1, 1]^d`
    UnitBox,
    /// `{x : |x| <= 1}`
    UnitBall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    #[serde(rename = "d")]
    pub dim: usize,
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} * 2 pi / d
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

impl Domain {
    pub fn unit_box(dim: usize) -> Self {
        Domain {
            kind: DomainKind::UnitBox,
            dim,
        }
    }

    pub fn unit_ball(dim: usize) -> Self {
        Domain {
            kind: DomainKind::UnitBall,
            dim,
        }
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::UnitBox => 2f64.powi(self.dim as i32),
            DomainKind::UnitBall => unit_ball_volume(self.dim),
        }
    }

    /// Surface measure of the boundary (point count for `d = 1`).
    pub fn boundary_measure(&self) -> f64 {
        let d = self.dim;
        match self.kind {
            DomainKind::UnitBox => 2.0 * d as f64 * 2f64.powi(d as i32 - 1),
            DomainKind::UnitBall => d as f64 * unit_ball_volume(d),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            DomainKind::UnitBox => x.iter().all(|v| v.abs() <= 1.0),
            DomainKind::UnitBall => norm(x) <= 1.0,
        }
    }

    /// Distance from an interior point to the boundary.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self.kind {
            DomainKind::UnitBox => x
                .iter()
                .map(|v| 1.0 - v.abs())
                .fold(f64::INFINITY, f64::min),
            DomainKind::UnitBall => 1.0 - norm(x),
        }
    }

    pub fn is_on_boundary(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match self.kind {
            DomainKind::UnitBox => {
                let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (m - 1.0).abs() <= tol
            }
            DomainKind::UnitBall => (norm(x) - 1.0).abs() <= tol,
        }
    }

    /// Box face of a boundary point: `2i` for `x_{i+1} = -1`, `2i + 1` for
    /// `x_{i+1} = +1`. Edges and corners go to the lowest coordinate index.
    pub fn box_face(x: &[f64]) -> usize {
        let mut best = 0;
        for i in 1..x.len() {
            if x[i].abs() > x[best].abs() {
                best = i;
            }
        }
        2 * best + usize::from(x[best] > 0.0)
    }

    pub fn outward_normal(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            DomainKind::UnitBox => {
                let face = Domain::box_face(x);
                let mut n = vec![0.0; self.dim];
                n[face / 2] = if face % 2 == 1 { 1.0 } else { -1.0 };
                n
            }
            DomainKind::UnitBall => {
                let r = norm(x);
                x.iter().map(|v| v / r).collect()
            }
        }
    }

    pub fn sample_interior(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.interior_point(&mut rng)).collect()
    }

    pub fn sample_boundary(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.boundary_point(&mut rng)).collect()
    }

    pub fn interior_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            DomainKind::UnitBox => (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            DomainKind::UnitBall => {
                let dir = sphere_point(self.dim, rng);
                let r = rng.random::<f64>().powf(1.0 / self.dim as f64);
                dir.into_iter().map(|v| v * r).collect()
            }
        }
    }

    /// Uniform point on the boundary; box faces all have the same area.
    pub fn boundary_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            DomainKind::UnitBox => {
                let face = rng.random_range(0..2 * self.dim);
                let mut x: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                x[face / 2] = if face % 2 == 1 { 1.0 } else { -1.0 };
                x
            }
            DomainKind::UnitBall => sphere_point(self.dim, rng),
        }
    }
}

/// Uniform point on the unit sphere via normalized Gaussians.
pub fn sphere_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::UnitBox => "unit_box",
            DomainKind::UnitBall => "unit_ball",
        })
    }
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit_box" | "box" => Ok(DomainKind::UnitBox),
            "unit_ball" | "ball" => Ok(DomainKind::UnitBall),
            _ => Err(format!("unknown domain `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures() {
        assert_eq!(Domain::unit_box(3).volume(), 8.0);
        assert_eq!(Domain::unit_box(3).boundary_measure(), 24.0);
        let pi = std::f64::consts::PI;
        assert!((Domain::unit_ball(2).volume() - pi).abs() < 1e-15);
        assert!((Domain::unit_ball(3).volume() - 4.0 * pi / 3.0).abs() < 1e-14);
        assert!((Domain::unit_ball(3).boundary_measure() - 4.0 * pi).abs() < 1e-14);
        assert_eq!(Domain::unit_ball(1).volume(), 2.0);
    }

    #[test]
    fn samples_lie_where_they_should() {
        let b = Domain::unit_box(1);
        assert!(b.sample_interior(500, 3).iter().all(|p| p[0].abs() <= 1.0));
        let s = Domain::unit_ball(3);
        for p in s.sample_boundary(500, 4) {
            assert!((norm(&p) - 1.0).abs() < 1e-12);
        }
        for p in Domain::unit_box(3).sample_boundary(500, 5) {
            assert!(Domain::unit_box(3).is_on_boundary(&p, 1e-12));
        }
    }

    #[test]
    fn faces_and_normals() {
        let d = Domain::unit_box(3);
        assert_eq!(Domain::box_face(&[0.2, 1.0, -0.3]), 3);
        assert_eq!(Domain::box_face(&[-1.0, 0.0, 0.5]), 0);
        assert_eq!(d.outward_normal(&[0.0, 0.0, -1.0]), vec![0.0, 0.0, -1.0]);
    }
}
