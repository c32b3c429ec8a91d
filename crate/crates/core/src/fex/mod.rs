//! Finite expression search: a policy over operator choices on a fixed tree
//! skeleton, trained with projected policy gradients, with the affine scalars
//! of every sampled structure fitted to the collocation loss.

mod inner;
pub mod policy;
pub mod space;
pub mod stationarity;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::jet::Workspace;
use crate::expr::{simplify, to_postfix_string, Expr, OperatorSet};
use crate::pde::{relative_l2_error, reward, CollocationConfig, LossContext, PdeError, PdeInstance};

pub use inner::{optimize_scalars, ScalarFit};
pub use policy::{sppgm_step, PolicyParams, StepStats};
pub use space::{build_search_space, SearchSpace, SlotKind};

#[derive(Debug, Error)]
pub enum FexError {
    #[error("empty search space: {0}")]
    EmptySearchSpace(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FexConfig {
    pub depth: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub phi_max: f64,
    pub max_iterations: usize,
    /// Scalar-fitting steps per sampled structure.
    pub inner_steps: usize,
    /// Extra steps for the best structure once the search stops.
    pub fine_tune_steps: usize,
    pub reward_threshold: f64,
    pub pool_size: usize,
    pub seed: u64,
    pub collocation: CollocationConfig,
    /// Monte-Carlo points for the reported relative error.
    pub error_samples: usize,
}

impl Default for FexConfig {
    fn default() -> Self {
        FexConfig {
            depth: 2,
            batch_size: 32,
            eta: 0.05,
            phi_max: 10.0,
            max_iterations: 100,
            inner_steps: 60,
            fine_tune_steps: 600,
            reward_threshold: 0.999,
            pool_size: 10,
            seed: 0,
            collocation: CollocationConfig::default(),
            error_samples: 4096,
        }
    }
}

/// A structure with fitted scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub choices: Vec<usize>,
    pub params: Vec<f64>,
    pub loss: f64,
    pub reward: f64,
    /// Node count of the simplified realized tree.
    pub nodes: usize,
    /// Log-probability under the policy that drew it.
    pub log_prob: f64,
}

/// Draws a structure from `policy` with scalars at their initial values and
/// no loss assigned yet.
pub fn sample_candidate<R: rand::Rng + ?Sized>(space: &SearchSpace, policy: &PolicyParams, rng: &mut R) -> Candidate {
    let (choices, log_prob) = policy.sample(rng);
    Candidate {
        choices,
        params: space.initial_params(),
        loss: f64::INFINITY,
        reward: 0.0,
        nodes: usize::MAX,
        log_prob,
    }
}

impl Candidate {
    fn fit(space: &SearchSpace, ctx: &LossContext, choices: Vec<usize>, init: &[f64], steps: usize) -> Self {
        let prog = space.program(&choices);
        let fit = optimize_scalars(ctx, &prog, init, steps);
        Candidate::scored(space, choices, fit.params, fit.loss)
    }

    fn scored(space: &SearchSpace, choices: Vec<usize>, params: Vec<f64>, loss: f64) -> Self {
        let nodes = if loss.is_finite() {
            space.realize_simplified(&choices, &params).node_count()
        } else {
            usize::MAX
        };
        Candidate {
            choices,
            params,
            loss,
            reward: reward(loss),
            nodes,
            log_prob: 0.0,
        }
    }

    /// Rounds scalars that are numerically zero or integral when doing so
    /// leaves the loss essentially unchanged.
    fn snapped(&self, space: &SearchSpace, ctx: &LossContext) -> Candidate {
        let prog = space.program(&self.choices);
        let mut ws = Workspace::new();
        let mut params = self.params.clone();
        let mut loss = self.loss;
        for k in 0..params.len() {
            let v = params[k];
            let target = if v.abs() < 1e-6 {
                0.0
            } else if (v - v.round()).abs() < 1e-6 * v.abs().max(1.0) {
                v.round()
            } else {
                continue;
            };
            if target == v {
                continue;
            }
            params[k] = target;
            let l = ctx.loss_program(&prog, &params, &mut ws);
            if l <= loss * 1.01 + 1e-12 {
                loss = l;
            } else {
                params[k] = v;
            }
        }
        Candidate::scored(space, self.choices.clone(), params, loss)
    }

    /// Higher reward first, then the smaller tree.
    fn rank(&self, other: &Candidate) -> Ordering {
        other
            .reward
            .total_cmp(&self.reward)
            .then(self.nodes.cmp(&other.nodes))
    }
}

fn n_scalars(e: &Expr) -> usize {
    match e {
        Expr::Var(_) => 0,
        Expr::Const(_) => 1,
        Expr::Unary { child, .. } => 2 + n_scalars(child),
        Expr::Binary { left, right, .. } => n_scalars(left) + n_scalars(right),
    }
}

/// Copy of `e` with its `k`-th scalar (pre-order, `alpha` before `beta`)
/// replaced by `v`.
fn with_scalar(e: &Expr, k: usize, v: f64) -> Expr {
    fn go(e: &Expr, k: &mut usize, v: f64) -> Expr {
        match e {
            Expr::Var(i) => Expr::Var(*i),
            Expr::Const(c) => {
                let out = if *k == 0 { v } else { *c };
                *k = k.wrapping_sub(1);
                Expr::Const(out)
            }
            Expr::Unary { op, alpha, beta, child } => {
                let a = if *k == 0 { v } else { *alpha };
                *k = k.wrapping_sub(1);
                let b = if *k == 0 { v } else { *beta };
                *k = k.wrapping_sub(1);
                Expr::unary(*op, a, b, go(child, k, v))
            }
            Expr::Binary { op, left, right } => {
                let l = go(left, k, v);
                Expr::binary(*op, l, go(right, k, v))
            }
        }
    }
    go(e, &mut { k }, v)
}

/// Drops scalars of the realized tree that are numerically zero when that
/// leaves the loss essentially unchanged.
fn tidy_expr(expr: Expr, loss: f64, ctx: &LossContext) -> (Expr, f64) {
    let mut e = expr;
    let mut loss = loss;
    let mut k = 0;
    let mut budget = 64;
    while k < n_scalars(&e) && budget > 0 {
        let v = scalar_at(&e, k);
        if v != 0.0 && v.abs() < 1e-9 {
            let cand = simplify(&with_scalar(&e, k, 0.0));
            let l = ctx.loss(&cand);
            if l <= loss * 1.01 + 1e-12 {
                e = cand;
                loss = l;
                k = 0;
                budget -= 1;
                continue;
            }
        }
        k += 1;
    }
    (e, loss)
}

fn scalar_at(e: &Expr, k: usize) -> f64 {
    fn go(e: &Expr, k: &mut usize) -> Option<f64> {
        match e {
            Expr::Var(_) => None,
            Expr::Const(c) => {
                if *k == 0 {
                    return Some(*c);
                }
                *k -= 1;
                None
            }
            Expr::Unary { alpha, beta, child, .. } => {
                for v in [alpha, beta] {
                    if *k == 0 {
                        return Some(*v);
                    }
                    *k -= 1;
                }
                go(child, k)
            }
            Expr::Binary { left, right, .. } => go(left, k).or_else(|| go(right, k)),
        }
    }
    go(e, &mut { k }).unwrap_or(f64::NAN)
}

/// Best distinct structures seen so far.
#[derive(Clone, Debug, Default)]
struct Pool {
    items: Vec<Candidate>,
    cap: usize,
}

impl Pool {
    fn offer(&mut self, c: &Candidate) {
        if let Some(i) = self.items.iter().position(|p| p.choices == c.choices) {
            if c.rank(&self.items[i]) == Ordering::Less {
                self.items[i] = c.clone();
            } else {
                return;
            }
        } else {
            self.items.push(c.clone());
        }
        self.items.sort_by(Candidate::rank);
        self.items.truncate(self.cap.max(1));
    }

    fn best(&self) -> Option<&Candidate> {
        self.items.first()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub best_reward: f64,
    pub mean_reward: f64,
    pub grad_norm: f64,
    pub stat_proxy: f64,
    /// Structures whose scalars were fitted in this iteration.
    pub new_structures: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Iteration at which the threshold was first met, or the iteration cap.
    pub iterations: usize,
    pub wall_time_s: f64,
    pub best_postfix: String,
    pub best_infix: String,
    pub best_loss: f64,
    pub best_reward: f64,
    pub relative_l2_error: Option<f64>,
    pub n_structures: f64,
    pub evaluated_structures: usize,
    pub slot_description: String,
    #[serde(skip)]
    pub best_expr: Option<Expr>,
    #[serde(skip)]
    pub space: Option<SearchSpace>,
    #[serde(skip)]
    pub final_policy: Option<PolicyParams>,
}

impl SolveTrace {
    pub fn mean_stat_proxy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.stat_proxy).sum::<f64>() / self.records.len() as f64
    }
}

/// Searches for a closed-form solution of `instance`. With `predicted` the
/// operator pools are restricted to that set; without it the full default
/// pools are used.
pub fn solve(
    instance: &PdeInstance,
    predicted: Option<&OperatorSet>,
    cfg: &FexConfig,
) -> Result<SolveTrace, FexError> {
    let start = Instant::now();
    let space = build_search_space(predicted, cfg.depth, instance.domain.dim)?;
    let base_ctx = LossContext::new(instance, &cfg.collocation)?;
    let init = space.initial_params();
    let mut policy = PolicyParams::uniform(&space.choice_counts(), cfg.phi_max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut memo: HashMap<Vec<usize>, Candidate> = HashMap::new();
    let mut pool = Pool {
        items: Vec::new(),
        cap: cfg.pool_size,
    };
    let mut records = Vec::new();
    let mut converged = false;
    let mut evaluated = 0;
    info!(
        "search space: {} unary, {} binary, {} leaf choices, {} structures",
        space.unary.len(),
        space.binary.len(),
        space.leaves.len(),
        space.n_structures()
    );

    for t in 0..cfg.max_iterations {
        let it_start = Instant::now();
        let resampled;
        let ctx = if cfg.collocation.resample_each_eval {
            let mut c = cfg.collocation.clone();
            c.sampler_seed = c.sampler_seed.wrapping_add(t as u64 + 1);
            resampled = LossContext::new(instance, &c)?;
            memo.clear();
            &resampled
        } else {
            &base_ctx
        };
        let samples: Vec<Vec<usize>> = (0..cfg.batch_size)
            .map(|_| sample_candidate(&space, &policy, &mut rng).choices)
            .collect();
        let mut fresh: Vec<Vec<usize>> = Vec::new();
        for s in &samples {
            if !memo.contains_key(s) && !fresh.contains(s) {
                fresh.push(s.clone());
            }
        }
        let fitted: Vec<Candidate> = fresh
            .par_iter()
            .map(|c| Candidate::fit(&space, ctx, c.clone(), &init, cfg.inner_steps))
            .collect();
        let new_structures = fitted.len();
        evaluated += new_structures;
        for c in fitted {
            pool.offer(&c);
            memo.insert(c.choices.clone(), c);
        }
        let batch: Vec<(Vec<usize>, f64)> = samples
            .into_iter()
            .map(|s| {
                let r = memo[&s].reward;
                (s, r)
            })
            .collect();
        let stats = sppgm_step(&mut policy, &batch, cfg.eta);
        let best = pool.best().map_or(0.0, |c| c.reward);
        let rec = IterationRecord {
            iter: t + 1,
            best_reward: best,
            mean_reward: stats.mean_reward,
            grad_norm: stats.grad_norm_sq.sqrt(),
            stat_proxy: stats.stat_proxy,
            new_structures,
            wall_ms: it_start.elapsed().as_secs_f64() * 1e3,
        };
        debug!("{rec:?}");
        records.push(rec);
        if best >= cfg.reward_threshold {
            converged = true;
            break;
        }
    }

    let mut best = pool
        .best()
        .cloned()
        .ok_or_else(|| FexError::EmptySearchSpace("no candidate was evaluated".into()))?;
    if cfg.collocation.resample_each_eval {
        let loss = base_ctx.loss_program(&space.program(&best.choices), &best.params, &mut Workspace::new());
        best = Candidate::scored(&space, best.choices, best.params, loss);
    }
    if cfg.fine_tune_steps > 0 && best.loss.is_finite() {
        let tuned = Candidate::fit(&space, &base_ctx, best.choices.clone(), &best.params, cfg.fine_tune_steps);
        if tuned.loss <= best.loss {
            best = tuned;
        }
        best = best.snapped(&space, &base_ctx);
    }
    let mut expr = space.realize_simplified(&best.choices, &best.params);
    if best.loss.is_finite() {
        let (e, l) = tidy_expr(expr, best.loss, &base_ctx);
        expr = e;
        best.loss = l;
        best.reward = reward(l);
    }
    let rel = match &instance.true_u {
        Some(u) if best.loss.is_finite() => {
            relative_l2_error(&expr, u, &instance.domain, cfg.error_samples, cfg.seed ^ 0xE7).ok()
        }
        _ => None,
    };
    let iterations = records.len();
    info!(
        "{} after {iterations} iterations: {} (loss {:.3e})",
        if converged { "converged" } else { "stopped" },
        expr,
        best.loss
    );
    Ok(SolveTrace {
        records,
        converged,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        best_postfix: to_postfix_string(&expr),
        best_infix: expr.to_string(),
        best_loss: best.loss,
        best_reward: best.reward,
        relative_l2_error: rel,
        n_structures: space.n_structures(),
        evaluated_structures: evaluated,
        slot_description: space.describe(&best.choices),
        best_expr: Some(expr),
        space: Some(space),
        final_policy: Some(policy),
    })
}
