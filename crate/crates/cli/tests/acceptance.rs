//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset with `cargo test --release --test acceptance -- 1 3 5`.

use std::time::{Duration, Instant};

use fexkit::datagen::{all_types, generate_dataset, GeneratorConfig};
use fexkit::expr::{
    differentiate, encode_operator_set, extract_operator_set, laplacian, mismatch, parse_postfix,
    parse_postfix_str, random_tree_seeded, to_postfix, BinaryOp, OperatorDictionary, UnaryOp,
};
use fexkit::fex::stationarity::{loglog_slope, run_synthetic, stationarity_report, BanditLandscape, SyntheticConfig};
use fexkit::fex::{solve, FexConfig, PolicyParams};
use fexkit::pde::{BcType, Domain, PdeInstance, PdeType};
use fexkit::predictor::{
    evaluate_predictor, mean_label_cardinality, oracle_predict_instance, train_baseline, PredictorModel, TrainConfig,
};
use fexkit::wos::{verify_solution, wos_estimate, WosConfig};
use fexkit::Expr;
use fexkit_cli::bench::{aggregate, default_instances, run_all, BenchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1

fn mismatch_oracle() -> Outcome {
    let dict = OperatorDictionary::new(["x1", "x2", "^2", "^3", "+", "*", "SIN", "COS", "EXP"]).unwrap();
    // (5 x1)^2 + sin(3 x2) x2 and 5 exp(2 x1) cos(6 x1)^3
    let h1 = parse_postfix_str("x1 5 * ^2 x2 3 * SIN x2 * +", &dict).unwrap();
    let h2 = parse_postfix_str("x1 2 * EXP 5 * x1 6 * COS ^3 *", &dict).unwrap();
    let y = encode_operator_set(&extract_operator_set(&h1), &dict).unwrap();
    let z = encode_operator_set(&extract_operator_set(&h2), &dict).unwrap();
    let m = mismatch(&y, &z).unwrap();
    let pass = y.bits == [1, 1, 1, 0, 1, 1, 1, 0, 0] && z.bits == [1, 0, 0, 1, 0, 1, 0, 1, 1] && m == 7;
    outcome(pass, format!("h1 {:?}, h2 {:?}, mismatch {m}", y.bits, z.bits))
}

// ---------------------------------------------------------------- 2

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn eval_at(e: &Expr, x: &[f64]) -> Option<f64> {
    e.eval(x).ok().filter(|v| v.is_finite())
}

fn shifted(x: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] += h;
    y
}

/// Central difference with one Richardson step.
fn fd_first(e: &Expr, x: &[f64], k: usize, h: f64) -> Option<f64> {
    let d = |h: f64| Some((eval_at(e, &shifted(x, k, h))? - eval_at(e, &shifted(x, k, -h))?) / (2.0 * h));
    Some((4.0 * d(h / 2.0)? - d(h)?) / 3.0)
}

fn fd_laplacian(e: &Expr, x: &[f64], h: f64) -> Option<f64> {
    let f0 = eval_at(e, x)?;
    let d2 = |k: usize, h: f64| {
        Some((eval_at(e, &shifted(x, k, h))? - 2.0 * f0 + eval_at(e, &shifted(x, k, -h))?) / (h * h))
    };
    let mut s = 0.0;
    for k in 0..x.len() {
        s += (4.0 * d2(k, h / 2.0)? - d2(k, h)?) / 3.0;
    }
    Some(s)
}

/// A stencil is usable when two step sizes agree well inside the tolerance
/// under test; otherwise the point sits next to a kink or a singularity and
/// differences say nothing.
fn stable(a: Option<f64>, b: Option<f64>, tol: f64) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if close(a, b, tol) => Some(a),
        _ => None,
    }
}

fn calculus_suite() -> Outcome {
    let dim = 3;
    let dict = OperatorDictionary::standard(dim);
    let pts = Domain::unit_box(dim).sample_interior(10, 77);
    let (mut rt_n, mut d1_n, mut lap_n, mut skipped) = (0usize, 0usize, 0usize, 0usize);
    let (mut rt_err, mut d1_err, mut lap_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    for i in 0..500u64 {
        let depth = 1 + (i % 3) as usize;
        let e = random_tree_seeded(depth, &UnaryOp::DEFAULT_SET, &BinaryOp::DEFAULT_SET, dim, 1000 + i);
        let back = match parse_postfix(&to_postfix(&e), &dict) {
            Ok(b) => b,
            Err(err) => {
                failures.push(format!("tree {i}: {err}"));
                continue;
            }
        };
        let grads: Vec<Expr> = (0..dim).map(|k| differentiate(&e, k)).collect();
        let lap = laplacian(&e, dim);
        for x in &pts {
            match (eval_at(&e, x), eval_at(&back, x)) {
                (Some(a), Some(b)) => {
                    rt_n += 1;
                    rt_err = rt_err.max(rel(a, b));
                    if !close(a, b, 1e-12) {
                        failures.push(format!("tree {i}: round trip {a} vs {b}"));
                    }
                }
                (None, None) => {}
                _ => failures.push(format!("tree {i}: round trip changes the domain at {x:?}")),
            }
            for (k, g) in grads.iter().enumerate() {
                let fd = stable(fd_first(&e, x, k, 1e-3), fd_first(&e, x, k, 5e-4), 1e-8);
                match (eval_at(g, x), fd) {
                    (Some(a), Some(b)) => {
                        d1_n += 1;
                        d1_err = d1_err.max(rel(a, b));
                        if !close(a, b, 1e-6) {
                            failures.push(format!("tree {i}: d/dx{} {a} vs {b}", k + 1));
                        }
                    }
                    _ => skipped += 1,
                }
            }
            let fd = stable(fd_laplacian(&e, x, 2e-3), fd_laplacian(&e, x, 1e-3), 1e-6);
            match (eval_at(&lap, x), fd) {
                (Some(a), Some(b)) => {
                    lap_n += 1;
                    lap_err = lap_err.max(rel(a, b));
                    if !close(a, b, 1e-4) {
                        failures.push(format!("tree {i}: laplacian {a} vs {b}"));
                    }
                }
                _ => skipped += 1,
            }
        }
    }
    let total = 500 * pts.len() * (dim + 1);
    let coverage = 1.0 - skipped as f64 / total as f64;
    let pass = failures.is_empty() && coverage >= 0.8;
    let mut detail = format!(
        "checks: {rt_n} round trip (max rel {rt_err:.1e}), {d1_n} first derivative (max rel {d1_err:.1e}), \
         {lap_n} laplacian (max rel {lap_err:.1e}); derivative coverage {:.1}%",
        100.0 * coverage
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} failures, first: {f}", failures.len()));
    }
    outcome(pass, detail)
}

// ---------------------------------------------------------------- 3

fn wos_oracle() -> Outcome {
    let dict = OperatorDictionary::standard(3);
    let ball = Domain::unit_ball(3);
    let cfg = WosConfig {
        n_paths: 10_000,
        seed: 11,
        ..WosConfig::default()
    };
    let harmonic = PdeInstance::manufactured(PdeType::Poisson, BcType::Dirichlet, ball, Expr::Var(0));
    let a = wos_estimate(&harmonic, &[0.3, 0.0, 0.0], &cfg).unwrap();
    let pass_a = (a.mean - 0.3).abs() <= 3.0 * a.stderr;

    let sq = parse_postfix_str("x1 ^2 x2 ^2 + x3 ^2 +", &dict).unwrap();
    let inst = PdeInstance::manufactured(PdeType::Poisson, BcType::Dirichlet, ball, sq);
    let f0 = inst.f.eval(&[0.0; 3]).unwrap();
    let b = wos_estimate(&inst, &[0.0; 3], &cfg).unwrap();
    let pass_b = b.mean.abs() <= 3.0 * b.stderr && (f0 + 6.0).abs() < 1e-12;

    let ms = [1e2, 1e3, 1e4];
    let errs: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let c = WosConfig {
                n_paths: m as usize,
                ..cfg.clone()
            };
            wos_estimate(&inst, &[0.0; 3], &c).unwrap().stderr
        })
        .collect();
    let slope = loglog_slope(&ms, &errs);
    let pass_c = (slope + 0.5).abs() <= 0.1;
    outcome(
        pass_a && pass_b && pass_c,
        format!(
            "g=x1 at (0.3,0,0): {:.4} +- {:.4}; |x|^2 (f={f0}) at 0: {:.4} +- {:.4}; stderr slope {slope:.3}",
            a.mean, a.stderr, b.mean, b.stderr
        ),
    )
}

// ---------------------------------------------------------------- 4

fn predictor_properties() -> Outcome {
    let records = generate_dataset(20_000, 3, 3, &all_types(), 2024, &GeneratorConfig::default()).unwrap();
    let (train, test) = records.split_at(16_000);
    let dict = OperatorDictionary::standard(3);
    let (model, _) = train_baseline(train, &dict, &TrainConfig::default()).unwrap();
    let model = PredictorModel::Baseline(model);
    let held_out = evaluate_predictor(&model, test, 0.5).unwrap().average_mismatch;
    let zeros = mean_label_cardinality(test, &dict);
    let pass_a = held_out < zeros;

    let mut monotone = true;
    let mut worst = 0.0f64;
    for lr in [1e-2, 1e-3] {
        let cfg = TrainConfig {
            epochs: 60,
            lr,
            ..TrainConfig::default()
        };
        let (_, rep) = train_baseline(train, &dict, &cfg).unwrap();
        for w in rep.loss_history.windows(2) {
            worst = worst.max(w[1] - w[0]);
            monotone &= w[1] <= w[0];
        }
    }
    outcome(
        pass_a && monotone,
        format!(
            "held-out mismatch {held_out:.3} vs all-zeros {zeros:.3}; full-batch loss monotone at lr 1e-2, 1e-3: {monotone} (largest increase {worst:.1e})"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn sppgm_properties() -> Outcome {
    // (a) score function against finite differences of log pi
    let sizes = [3usize, 4, 2];
    let mut p = PolicyParams::uniform(&sizes, 10.0);
    for (k, v) in p.logits.iter_mut().enumerate() {
        *v = (1.7 * k as f64).sin() * 2.0;
    }
    let mut score_err = 0.0f64;
    for c0 in 0..3 {
        for c1 in 0..4 {
            for c2 in 0..2 {
                let c = [c0, c1, c2];
                let s = p.score(&c);
                for k in 0..p.logits.len() {
                    let (mut a, mut b) = (p.clone(), p.clone());
                    a.logits[k] += 1e-6;
                    b.logits[k] -= 1e-6;
                    let fd = (a.log_prob(&c) - b.log_prob(&c)) / 2e-6;
                    score_err = score_err.max((fd - s[k]).abs());
                }
            }
        }
    }
    let pass_a = score_err <= 1e-6;

    // (b) single-sample estimates against the enumerated gradient
    let land = BanditLandscape::random(vec![3, 4], 5);
    let mut q = PolicyParams::uniform(&land.sizes, 10.0);
    q.logits = vec![0.3, -0.5, 0.9, 0.1, -1.2, 0.4, 0.7];
    let exact = land.exact_gradient(&q);
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sum = vec![0.0; exact.len()];
    let mut sum_sq = vec![0.0; exact.len()];
    for _ in 0..n {
        let c = q.sample(&mut rng).0;
        let r = land.reward(&c);
        for (k, g) in q.gradient_estimate(&[(c, r)]).into_iter().enumerate() {
            sum[k] += g;
            sum_sq[k] += g * g;
        }
    }
    let mut worst_z = 0.0f64;
    for k in 0..exact.len() {
        let mean = sum[k] / n as f64;
        let var = sum_sq[k] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        worst_z = worst_z.max((mean - exact[k]).abs() / se);
    }
    let pass_b = worst_z <= 3.0;

    // (c) mean stationarity proxy against B (T fixed) and T (B fixed)
    let land = BanditLandscape::random(vec![4, 4], 7);
    let mean_proxy = |batch: usize, iterations: usize| {
        let seeds = 4;
        (0..seeds)
            .map(|seed| {
                let cfg = SyntheticConfig {
                    batch_size: batch,
                    iterations,
                    eta: 1.0,
                    phi_max: 2.0,
                    seed,
                    exact_gradient: false,
                };
                stationarity_report(&run_synthetic(&land, &cfg)).mean_proxy
            })
            .sum::<f64>()
            / seeds as f64
    };
    let bs = [8.0, 32.0, 128.0];
    let ts = [50.0, 200.0, 800.0];
    let by_b: Vec<f64> = bs.iter().map(|&b| mean_proxy(b as usize, 2000)).collect();
    let by_t: Vec<f64> = ts.iter().map(|&t| mean_proxy(4096, t as usize)).collect();
    let sb = loglog_slope(&bs, &by_b);
    let st = loglog_slope(&ts, &by_t);
    let pass_c = (sb + 1.0).abs() <= 0.4 && (st + 1.0).abs() <= 0.4;
    outcome(
        pass_a && pass_b && pass_c,
        format!(
            "score max error {score_err:.1e}; estimator max |z| {worst_z:.2} over {n} samples; \
             proxy slope vs B (T=2000) {sb:.3}, vs T (B=4096) {st:.3}"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn speedup() -> Outcome {
    let instances = default_instances();
    let runs = run_all(&instances, &BenchConfig::default()).unwrap();
    let (rows, s) = aggregate(&instances, &runs);
    for r in &rows {
        println!(
            "    {:<16} iter {:>6.1} / {:>6.1}  time {:>7.2}s / {:>7.2}s  converged {}/{}  err {} / {}",
            r.instance_id,
            r.iterations_informed,
            r.iterations_uninformed,
            r.time_informed_s,
            r.time_uninformed_s,
            r.converged_informed,
            r.converged_uninformed,
            r.error_informed.map(|e| format!("{e:.1e}")).unwrap_or_default(),
            r.error_uninformed.map(|e| format!("{e:.1e}")).unwrap_or_default(),
        );
    }
    let pass = s.median_iteration_speedup >= 2.0 && s.median_time_speedup >= 2.0 && s.error_failures == 0;
    outcome(
        pass,
        format!(
            "median iteration speedup {:.2}, median time speedup {:.2}, error check failures {}/{}",
            s.median_iteration_speedup, s.median_time_speedup, s.error_failures, s.error_checks
        ),
    )
}

// ---------------------------------------------------------------- 7

fn end_to_end() -> Outcome {
    let dict = OperatorDictionary::standard(3);
    let u = parse_postfix_str("x1 ^2 x3 * 8 * 2 +", &dict).unwrap();
    let inst = PdeInstance::manufactured(PdeType::Poisson, BcType::Dirichlet, Domain::unit_box(3), u);
    let ops = oracle_predict_instance(&inst, &dict);
    let trace = solve(&inst, Some(&ops), &FexConfig::default()).unwrap();
    let Some(best) = trace.best_expr.clone() else {
        return outcome(false, "no expression found".into());
    };
    let pts = inst.domain.sample_interior(20, 99);
    let rep = verify_solution(&best, &inst, &pts, &WosConfig::default()).unwrap();
    outcome(
        rep.passed(),
        format!(
            "found {} after {} iterations; {} points, max z {:.2}, flagged {}",
            trace.best_infix,
            trace.iterations,
            rep.points.len(),
            rep.max_z(),
            rep.flagged.len()
        ),
    )
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "mismatch oracle", Duration::from_secs(1), mismatch_oracle),
        (2, "symbolic calculus", Duration::from_secs(30), calculus_suite),
        (3, "walk-on-spheres oracle", Duration::from_secs(120), wos_oracle),
        (4, "predictor properties", Duration::from_secs(600), predictor_properties),
        (5, "policy-gradient properties", Duration::from_secs(300), sppgm_properties),
        (6, "informed speedup", Duration::from_secs(3600), speedup),
        (7, "end-to-end verification", Duration::from_secs(300), end_to_end),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} {name}: {} ({:.2} s of {} s) {}{}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            o.detail,
            if in_time { "" } else { " [over time budget]" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
