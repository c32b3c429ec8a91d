//! Informed versus uninformed solver benchmark.

use std::collections::BTreeMap;

use fexkit::datagen::record_seed;
use fexkit::expr::{parse_postfix_str, OperatorDictionary};
use fexkit::fex::{solve, FexConfig, FexError};
use fexkit::pde::{BcType, CollocationConfig, Domain, PdeError, PdeInstance, PdeType};
use fexkit::predictor::oracle_predict_instance;
use serde::{Deserialize, Serialize};

/// Errors at or below this level are treated as equal when comparing the two
/// modes; both are then at round-off.
pub const ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub id: String,
    pub pde_type: PdeType,
    pub bc_type: BcType,
    pub domain: Domain,
    pub u_postfix: String,
}

impl BenchInstance {
    pub fn build(&self) -> Result<PdeInstance, PdeError> {
        let dict = OperatorDictionary::standard(self.domain.dim);
        let u = parse_postfix_str(&self.u_postfix, &dict)?;
        Ok(PdeInstance::manufactured(self.pde_type, self.bc_type, self.domain, u))
    }
}

/// Ten depth-2 targets on the unit cube, five per PDE type.
pub fn default_instances() -> Vec<BenchInstance> {
    let rows = [
        (PdeType::Poisson, "x3 SIN 16 *"),
        (PdeType::Poisson, "x1 ^2 x3 * 8 * 2 +"),
        (PdeType::Poisson, "x1 SIN 2 * x3 COS 2 * - SIN 2 *"),
        (PdeType::Poisson, "x3 EXP -4 * x1 SIN 4 * + 2 +"),
        (PdeType::Poisson, "x1 ^3 2 * x3 ^2 2 * - COS 2 *"),
        (PdeType::Conservation, "x3 ^3 ^2 32 * 2 +"),
        (PdeType::Conservation, "x3 2 * 2 + SIN 2 * -2 +"),
        (PdeType::Conservation, "x2 SIN x1 COS * ^2 64 *"),
        (PdeType::Conservation, "x2 SIN 2 * 2 + EXP 4 *"),
        (PdeType::Conservation, "x2 SIN 2 * -2 + SIN -2 *"),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (pde, u))| BenchInstance {
            id: format!("{}-{}", pde, i + 1),
            pde_type: *pde,
            bc_type: BcType::Dirichlet,
            domain: Domain::unit_box(3),
            u_postfix: u.to_string(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub repeats: usize,
    pub seed: u64,
    pub fex: FexConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repeats: 5,
            seed: 0,
            fex: FexConfig {
                collocation: CollocationConfig {
                    n_interior: 128,
                    n_boundary: 64,
                    sampler_seed: 0,
                    resample_each_eval: false,
                },
                ..FexConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Informed,
    Uninformed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub instance: usize,
    pub repeat: usize,
    pub mode: Mode,
    pub iterations: usize,
    pub converged: bool,
    pub time_s: f64,
    pub relative_error: Option<f64>,
    pub expression: String,
    /// Number of operator assignments in the search space.
    pub structures: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub instance_id: String,
    pub pde_type: PdeType,
    pub true_solution: String,
    pub iterations_informed: f64,
    pub iterations_uninformed: f64,
    pub time_informed_s: f64,
    pub time_uninformed_s: f64,
    pub error_informed: Option<f64>,
    pub error_uninformed: Option<f64>,
    pub converged_informed: usize,
    pub converged_uninformed: usize,
    pub iteration_speedup: f64,
    pub time_speedup: f64,
    /// Informed error over repeats where both modes converged, floored, is at
    /// most twice the uninformed one. `None` when no repeat qualifies.
    pub error_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub median_iteration_speedup: f64,
    pub median_time_speedup: f64,
    /// Mean-iteration and mean-time speedups per PDE type.
    pub per_pde: BTreeMap<String, (f64, f64)>,
    pub error_checks: usize,
    pub error_failures: usize,
}

pub fn run_seed(base: u64, instance: usize, repeat: usize) -> u64 {
    record_seed(base, (instance as u64) << 16 | repeat as u64)
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Solves every (instance, repeat, mode) triple. Informed runs use the
/// oracle operator set of the instance. Both modes of a repeat share a seed.
/// Runs are sequential so each wall time covers a single solve; candidate
/// evaluation inside a solve is still parallel.
pub fn run_all(instances: &[BenchInstance], cfg: &BenchConfig) -> Result<Vec<RunOutcome>, FexError> {
    let built: Vec<PdeInstance> = instances.iter().map(|b| b.build()).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for i in 0..instances.len() {
        for r in 0..cfg.repeats {
            for m in [Mode::Informed, Mode::Uninformed] {
                jobs.push((i, r, m));
            }
        }
    }
    jobs.iter()
        .map(|&(i, r, mode)| {
            let inst = &built[i];
            let seed = run_seed(cfg.seed, i, r);
            let mut fex = cfg.fex.clone();
            fex.seed = seed;
            fex.collocation.sampler_seed = seed;
            let ops = oracle_predict_instance(inst, &OperatorDictionary::standard(inst.domain.dim));
            let trace = match mode {
                Mode::Informed => solve(inst, Some(&ops), &fex)?,
                Mode::Uninformed => solve(inst, None, &fex)?,
            };
            Ok(RunOutcome {
                instance: i,
                repeat: r,
                mode,
                iterations: trace.iterations,
                converged: trace.converged,
                time_s: trace.wall_time_s,
                relative_error: trace.relative_l2_error,
                expression: trace.best_infix,
                structures: trace.n_structures,
            })
        })
        .collect()
}

pub fn aggregate(instances: &[BenchInstance], runs: &[RunOutcome]) -> (Vec<BenchmarkRow>, BenchSummary) {
    let mut rows = Vec::new();
    for (i, b) in instances.iter().enumerate() {
        let pick = |m: Mode| -> Vec<&RunOutcome> { runs.iter().filter(|o| o.instance == i && o.mode == m).collect() };
        let inf = pick(Mode::Informed);
        let uni = pick(Mode::Uninformed);
        let it_i = mean(inf.iter().map(|o| o.iterations as f64));
        let it_u = mean(uni.iter().map(|o| o.iterations as f64));
        let t_i = mean(inf.iter().map(|o| o.time_s));
        let t_u = mean(uni.iter().map(|o| o.time_s));
        let errs = |v: &[&RunOutcome]| {
            let e: Vec<f64> = v.iter().filter_map(|o| o.relative_error).collect();
            (!e.is_empty()).then(|| mean(e))
        };
        let mut both_i = Vec::new();
        let mut both_u = Vec::new();
        for a in &inf {
            if let Some(c) = uni.iter().find(|o| o.repeat == a.repeat) {
                if a.converged && c.converged {
                    if let (Some(x), Some(y)) = (a.relative_error, c.relative_error) {
                        both_i.push(x);
                        both_u.push(y);
                    }
                }
            }
        }
        let error_ok = (!both_i.is_empty())
            .then(|| mean(both_i).max(ERROR_FLOOR) <= 2.0 * mean(both_u).max(ERROR_FLOOR));
        let true_solution = b
            .build()
            .ok()
            .and_then(|p| p.true_u.map(|u| u.to_string()))
            .unwrap_or_else(|| b.u_postfix.clone());
        rows.push(BenchmarkRow {
            instance_id: b.id.clone(),
            pde_type: b.pde_type,
            true_solution,
            iterations_informed: it_i,
            iterations_uninformed: it_u,
            time_informed_s: t_i,
            time_uninformed_s: t_u,
            error_informed: errs(&inf),
            error_uninformed: errs(&uni),
            converged_informed: inf.iter().filter(|o| o.converged).count(),
            converged_uninformed: uni.iter().filter(|o| o.converged).count(),
            iteration_speedup: it_u / it_i,
            time_speedup: t_u / t_i,
            error_ok,
        });
    }
    let mut per_pde = BTreeMap::new();
    for pde in PdeType::ALL {
        let sel: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.pde_type == pde).collect();
        if sel.is_empty() {
            continue;
        }
        let it = mean(sel.iter().map(|r| r.iterations_uninformed)) / mean(sel.iter().map(|r| r.iterations_informed));
        let t = mean(sel.iter().map(|r| r.time_uninformed_s)) / mean(sel.iter().map(|r| r.time_informed_s));
        per_pde.insert(pde.to_string(), (it, t));
    }
    let summary = BenchSummary {
        median_iteration_speedup: median(&rows.iter().map(|r| r.iteration_speedup).collect::<Vec<_>>()),
        median_time_speedup: median(&rows.iter().map(|r| r.time_speedup).collect::<Vec<_>>()),
        per_pde,
        error_checks: rows.iter().filter(|r| r.error_ok.is_some()).count(),
        error_failures: rows.iter().filter(|r| r.error_ok == Some(false)).count(),
    };
    (rows, summary)
}
