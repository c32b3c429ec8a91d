//! Product-categorical policy over slot choices and the projected
//! policy-gradient update.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One independent softmax per slot. Logits live in the box
/// `[-phi_max, phi_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<f64>,
    pub sizes: Vec<usize>,
    pub phi_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    /// Squared norm of the stochastic gradient estimate.
    pub grad_norm_sq: f64,
    /// `|(phi' - phi) / eta|^2`, the gradient-mapping norm.
    pub stat_proxy: f64,
    pub mean_reward: f64,
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

impl PolicyParams {
    /// Uniform policy (all logits zero).
    pub fn uniform(sizes: &[usize], phi_max: f64) -> Self {
        assert!(sizes.iter().all(|&n| n > 0), "every slot needs a choice");
        PolicyParams {
            logits: vec![0.0; sizes.iter().sum()],
            sizes: sizes.to_vec(),
            phi_max,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.sizes.len()
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sizes.iter().scan(0, |off, &n| {
            let start = *off;
            *off += n;
            Some((start, n))
        })
    }

    /// Flattened per-slot choice probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.logits.len()];
        for (s, n) in self.blocks() {
            softmax_into(&self.logits[s..s + n], &mut p[s..s + n]);
        }
        p
    }

    pub fn log_prob(&self, choices: &[usize]) -> f64 {
        let p = self.probabilities();
        self.blocks()
            .zip(choices)
            .map(|((s, _), &c)| p[s + c].ln())
            .sum()
    }

    /// Draws one choice per slot by inverse CDF; returns the log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, f64) {
        let p = self.probabilities();
        let mut choices = Vec::with_capacity(self.n_slots());
        let mut lp = 0.0;
        for (s, n) in self.blocks() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = n - 1;
            for k in 0..n {
                acc += p[s + k];
                if u < acc {
                    pick = k;
                    break;
                }
            }
            choices.push(pick);
            lp += p[s + pick].ln();
        }
        (choices, lp)
    }

    /// `grad_phi log pi(choices)`: one-hot minus softmax in every block.
    pub fn score(&self, choices: &[usize]) -> Vec<f64> {
        let mut g: Vec<f64> = self.probabilities().into_iter().map(|v| -v).collect();
        for ((s, _), &c) in self.blocks().zip(choices) {
            g[s + c] += 1.0;
        }
        g
    }

    /// REINFORCE estimate `(1/B) sum_i r_i grad log pi(theta_i)`.
    pub fn gradient_estimate(&self, batch: &[(Vec<usize>, f64)]) -> Vec<f64> {
        let mut g = vec![0.0; self.logits.len()];
        if batch.is_empty() {
            return g;
        }
        let p = self.probabilities();
        for (choices, r) in batch {
            for ((s, _), &c) in self.blocks().zip(choices) {
                g[s + c] += r;
            }
            for (gk, pk) in g.iter_mut().zip(&p) {
                *gk -= r * pk;
            }
        }
        let b = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= b);
        g
    }

    /// Euclidean projection onto the box, i.e. coordinatewise clamping.
    pub fn project(&mut self) {
        let m = self.phi_max;
        self.logits.iter_mut().for_each(|v| *v = v.clamp(-m, m));
    }

    /// `phi <- Proj(phi + eta g)`. Returns the gradient-mapping norm squared.
    pub fn ascend(&mut self, grad: &[f64], eta: f64) -> f64 {
        let old = self.logits.clone();
        for (v, g) in self.logits.iter_mut().zip(grad) {
            *v += eta * g;
        }
        self.project();
        old.iter()
            .zip(&self.logits)
            .map(|(a, b)| ((b - a) / eta).powi(2))
            .sum()
    }

    /// Most likely choice in every slot.
    pub fn mode(&self) -> Vec<usize> {
        let p = self.probabilities();
        self.blocks()
            .map(|(s, n)| {
                (0..n)
                    .max_by(|&a, &b| p[s + a].total_cmp(&p[s + b]).then(b.cmp(&a)))
                    .unwrap()
            })
            .collect()
    }
}

/// One projected policy-gradient iteration on already scored samples.
pub fn sppgm_step(policy: &mut PolicyParams, batch: &[(Vec<usize>, f64)], eta: f64) -> StepStats {
    let g = policy.gradient_estimate(batch);
    let grad_norm_sq = g.iter().map(|v| v * v).sum();
    let stat_proxy = policy.ascend(&g, eta);
    let mean_reward = if batch.is_empty() {
        0.0
    } else {
        batch.iter().map(|(_, r)| r).sum::<f64>() / batch.len() as f64
    };
    StepStats {
        grad_norm_sq,
        stat_proxy,
        mean_reward,
    }
}
