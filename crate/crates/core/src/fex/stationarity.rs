//! Diagnostics for the projected policy-gradient iteration on small,
//! fully enumerable reward landscapes where the exact objective gradient is
//! available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;

/// Reward table over the product of slot choices, row-major with the last
/// slot varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditLandscape {
    pub sizes: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl BanditLandscape {
    pub fn new(sizes: Vec<usize>, rewards: Vec<f64>) -> Self {
        assert_eq!(sizes.iter().product::<usize>(), rewards.len(), "reward table size");
        BanditLandscape { sizes, rewards }
    }

    /// Uniform random rewards in `[0, 1)`.
    pub fn random(sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sizes.iter().product();
        BanditLandscape::new(sizes, (0..n).map(|_| rng.random()).collect())
    }

    /// Reward 1 on `target`, 0 elsewhere.
    pub fn needle(sizes: Vec<usize>, target: &[usize]) -> Self {
        let n = sizes.iter().product();
        let mut l = BanditLandscape::new(sizes, vec![0.0; n]);
        let i = l.index(target);
        l.rewards[i] = 1.0;
        l
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn index(&self, choices: &[usize]) -> usize {
        choices
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn choices(&self, mut index: usize) -> Vec<usize> {
        let mut c = vec![0; self.sizes.len()];
        for (k, &n) in self.sizes.iter().enumerate().rev() {
            c[k] = index % n;
            index /= n;
        }
        c
    }

    pub fn reward(&self, choices: &[usize]) -> f64 {
        self.rewards[self.index(choices)]
    }

    /// `J(phi) = E_pi r`.
    pub fn objective(&self, policy: &PolicyParams) -> f64 {
        (0..self.len())
            .map(|i| {
                let c = self.choices(i);
                policy.log_prob(&c).exp() * self.rewards[i]
            })
            .sum()
    }

    /// Exact `grad J = sum_theta pi(theta) r(theta) grad log pi(theta)`.
    pub fn exact_gradient(&self, policy: &PolicyParams) -> Vec<f64> {
        let mut g = vec![0.0; policy.logits.len()];
        for i in 0..self.len() {
            let c = self.choices(i);
            let w = policy.log_prob(&c).exp() * self.rewards[i];
            for (gk, s) in g.iter_mut().zip(policy.score(&c)) {
                *gk += w * s;
            }
        }
        g
    }

    /// Per-sample variance `E |r grad log pi - grad J|^2`.
    pub fn score_variance(&self, policy: &PolicyParams) -> f64 {
        let mean = self.exact_gradient(policy);
        (0..self.len())
            .map(|i| {
                let c = self.choices(i);
                let p = policy.log_prob(&c).exp();
                let r = self.rewards[i];
                let d: f64 = policy
                    .score(&c)
                    .iter()
                    .zip(&mean)
                    .map(|(s, m)| (r * s - m).powi(2))
                    .sum();
                p * d
            })
            .sum()
    }
}

/// `|(Proj(phi + eta g) - phi) / eta|^2` without modifying `policy`.
pub fn gradient_mapping_sq(policy: &PolicyParams, grad: &[f64], eta: f64) -> f64 {
    let mut p = policy.clone();
    p.ascend(grad, eta)
}

/// Squared distance from zero to `-grad + N(phi)`, with `N` the normal cone of
/// the box at `phi`. Zero exactly at first-order stationary points.
pub fn normal_cone_gap_sq(policy: &PolicyParams, grad: &[f64]) -> f64 {
    let m = policy.phi_max;
    policy
        .logits
        .iter()
        .zip(grad)
        .map(|(&v, &g)| {
            if v >= m && g >= 0.0 || v <= -m && g <= 0.0 {
                0.0
            } else {
                g * g
            }
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRun {
    /// Stochastic proxy `|(phi_{t+1} - phi_t) / eta|^2`.
    pub proxies: Vec<f64>,
    /// Same mapping with the exact gradient at `phi_t`.
    pub exact_mappings: Vec<f64>,
    /// `|g_t - grad J(phi_t)|^2`.
    pub gradient_errors: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Iterate returned by the uniform output rule.
    pub output_index: usize,
    pub final_logits: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub eta: f64,
    pub phi_max: f64,
    pub seed: u64,
    /// Replace the sampled estimate by the exact gradient.
    pub exact_gradient: bool,
}

/// Runs the projected policy-gradient iteration on `landscape` from the
/// uniform policy.
pub fn run_synthetic(landscape: &BanditLandscape, cfg: &SyntheticConfig) -> SyntheticRun {
    let mut policy = PolicyParams::uniform(&landscape.sizes, cfg.phi_max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_max = cfg.iterations;
    let mut run = SyntheticRun {
        proxies: Vec::with_capacity(t_max),
        exact_mappings: Vec::with_capacity(t_max),
        gradient_errors: Vec::with_capacity(t_max),
        objectives: Vec::with_capacity(t_max),
        output_index: 0,
        final_logits: Vec::new(),
    };
    for _ in 0..t_max {
        let exact = landscape.exact_gradient(&policy);
        run.exact_mappings.push(gradient_mapping_sq(&policy, &exact, cfg.eta));
        run.objectives.push(landscape.objective(&policy));
        let g = if cfg.exact_gradient {
            exact.clone()
        } else {
            let batch: Vec<(Vec<usize>, f64)> = (0..cfg.batch_size)
                .map(|_| {
                    let c = policy.sample(&mut rng).0;
                    let r = landscape.reward(&c);
                    (c, r)
                })
                .collect();
            policy.gradient_estimate(&batch)
        };
        run.gradient_errors
            .push(g.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum());
        run.proxies.push(policy.ascend(&g, cfg.eta));
    }
    if t_max > 0 {
        run.output_index = rng.random_range(0..t_max);
    }
    run.final_logits = policy.logits;
    run
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub mean_proxy: f64,
    /// Mean squared gradient-estimation error; scales like `sigma^2 / B`.
    pub variance_term: f64,
    /// Mean exact gradient mapping; scales like `Delta / T`.
    pub bias_term: f64,
    /// Exact mapping at the uniformly drawn output iterate.
    pub output_mapping: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn stationarity_report(run: &SyntheticRun) -> StationarityReport {
    StationarityReport {
        mean_proxy: mean(&run.proxies),
        variance_term: mean(&run.gradient_errors),
        bias_term: mean(&run.exact_mappings),
        output_mapping: run.exact_mappings.get(run.output_index).copied().unwrap_or(0.0),
    }
}

/// Right-hand side of the expected-stationarity bound for step `eta`,
/// smoothness `l`, per-sample variance `sigma2` and initial optimality gap
/// `delta`. Requires `eta * l < 1/2`.
pub fn stationarity_bound(sigma2: f64, batch: usize, delta: f64, iterations: usize, eta: f64, l: f64) -> Option<f64> {
    let el = eta * l;
    if !(el > 0.0 && el < 0.5) || batch == 0 || iterations == 0 {
        return None;
    }
    let c1 = 2.0 + 2.0 / (el * (1.0 - 2.0 * el));
    let c2 = 2.0 / eta + 4.0 / (eta * (1.0 - 2.0 * el));
    Some(c1 * sigma2 / batch as f64 + c2 * delta / iterations as f64)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
