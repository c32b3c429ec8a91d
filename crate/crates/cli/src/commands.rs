use std::io::Write;
use std::path::Path;

use fexkit::datagen::{all_types, generate_dataset, read_dataset, render_prompt, DatasetRecord, GeneratorConfig};
use fexkit::expr::{parse_postfix_str, OperatorDictionary, OperatorSet};
use fexkit::fex::{solve, FexConfig};
use fexkit::pde::{BcType, CollocationConfig, Domain, DomainKind, PdeInstance, PdeType};
use fexkit::predictor::{
    evaluate_predictor, mean_label_cardinality, oracle_predict_instance, postprocess, train_baseline,
    ExternalPredictions, PredictorModel, TrainConfig,
};
use fexkit::wos::{verify_solution, WosConfig};

use crate::bench::{aggregate, default_instances, run_all, BenchConfig, BenchInstance};
use crate::output::{config_header, num, sink, write_comment};
use crate::{
    BenchArgs, Cli, CliError, Command, EvalArgs, GenDataArgs, GlobalArgs, MakeInstanceArgs, OracleArgs, SolveArgs,
    TrainArgs,
};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::GenData(a) => gen_data(g, a),
        Command::TrainPredictor(a) => train_predictor(g, a),
        Command::EvalPredictor(a) => eval_predictor(g, a),
        Command::Solve(a) => solve_cmd(g, a),
        Command::Bench(a) => bench_cmd(g, a),
        Command::Oracle(a) => oracle_cmd(g, a),
        Command::MakeInstance(a) => make_instance(g, a),
    }
}

/// Summary text goes to stdout unless the main output already does.
fn report(g: &GlobalArgs, text: &str) {
    if g.out.is_some() {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
}

fn parse_types(spec: Option<&str>) -> Result<Vec<(PdeType, BcType)>, CliError> {
    let Some(spec) = spec else {
        return Ok(all_types());
    };
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (p, b) = item
            .split_once(':')
            .ok_or_else(|| CliError::Config(format!("expected `pde:bc`, got `{item}`")))?;
        out.push((p.parse().map_err(CliError::Config)?, b.parse().map_err(CliError::Config)?));
    }
    if out.is_empty() {
        return Err(CliError::Config("--types is empty".into()));
    }
    Ok(out)
}

fn gen_data(g: &GlobalArgs, a: &GenDataArgs) -> Result<(), CliError> {
    if a.depth == 0 || a.dim == 0 {
        return Err(CliError::Config("depth and dimension must be positive".into()));
    }
    let types = parse_types(a.types.as_deref())?;
    let cfg = GeneratorConfig {
        include_bc_in_prompt: a.include_bc,
        max_attempts: a.max_attempts,
        ..GeneratorConfig::default()
    };
    let records = generate_dataset(a.n, a.depth, a.dim, &types, g.seed, &cfg)?;
    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &config_header("gen-data", g.seed, a))?;
    for r in &records {
        serde_json::to_writer(&mut *w, r).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    w.flush()?;
    log::info!("wrote {} records", records.len());
    Ok(())
}

fn train_predictor(g: &GlobalArgs, a: &TrainArgs) -> Result<(), CliError> {
    let records = read_dataset(&a.data)?;
    let dim = records.iter().map(|r| r.dim).max().unwrap_or(1);
    let dict = OperatorDictionary::standard(dim);
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        l2: a.l2,
        seed: g.seed,
        batch_size: a.batch_size,
    };
    let (model, rep) = train_baseline(&records, &dict, &cfg)?;
    let last = *rep.loss_history.last().unwrap();
    if !last.is_finite() {
        return Err(CliError::Numerical(format!("training diverged (loss {last})")));
    }
    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &config_header("train-predictor", g.seed, a))?;
    write_comment(&mut *w, &format!("records: {}, final loss: {last}", records.len()))?;
    let model = PredictorModel::Baseline(model);
    serde_json::to_writer(&mut *w, &model).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    report(
        g,
        &format!(
            "trained on {} records: loss {} -> {}",
            records.len(),
            rep.loss_history[0],
            last
        ),
    );
    Ok(())
}

fn load_model(spec: &str) -> Result<PredictorModel, CliError> {
    if spec == "oracle" {
        Ok(PredictorModel::Oracle)
    } else if spec.ends_with(".jsonl") {
        Ok(PredictorModel::External(ExternalPredictions::load(spec)?))
    } else {
        Ok(PredictorModel::load(spec)?)
    }
}

fn eval_predictor(g: &GlobalArgs, a: &EvalArgs) -> Result<(), CliError> {
    let records = read_dataset(&a.data)?;
    let model = load_model(&a.model)?;
    let rep = evaluate_predictor(&model, &records, a.threshold)?;
    let dict = model.evaluation_dictionary(&records);
    let zeros = mean_label_cardinality(&records, &dict);
    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &config_header("eval-predictor", g.seed, a))?;
    write_comment(
        &mut *w,
        &format!(
            "model: {}, records: {}, average mismatch: {}, all-zeros baseline: {zeros}",
            model.kind(),
            records.len(),
            rep.average_mismatch
        ),
    )?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["token", "true_positive", "false_positive", "false_negative", "precision", "recall"])?;
    for s in &rep.per_operator {
        csv.write_record([
            s.token.clone(),
            s.true_positive.to_string(),
            s.false_positive.to_string(),
            s.false_negative.to_string(),
            num(Some(s.precision())),
            num(Some(s.recall())),
        ])?;
    }
    csv.flush()?;
    report(
        g,
        &format!(
            "{} predictor on {} records: average mismatch {:.4} (all-zeros {:.4})",
            model.kind(),
            records.len(),
            rep.average_mismatch,
            zeros
        ),
    );
    Ok(())
}

/// Dataset-style record describing `instance`, so trained predictors can be
/// applied to it. The prompt omits the boundary data.
pub fn record_for_instance(instance: &PdeInstance, seed: u64) -> DatasetRecord {
    let file = instance.to_file();
    let u = file.true_u_postfix.clone().unwrap_or_default();
    let r = render_prompt(instance.pde_type, instance.bc_type, &file.f_postfix, None, &u);
    DatasetRecord {
        pde_type: instance.pde_type,
        bc_type: instance.bc_type,
        dim: instance.domain.dim,
        depth: 0,
        seed,
        f_postfix: file.f_postfix,
        g_postfix: file.g_postfix,
        u_postfix: u,
        prompt: r.prompt,
        target: r.target,
    }
}

fn load_instance(path: &Path) -> Result<PdeInstance, CliError> {
    PdeInstance::load(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn predicted_ops(instance: &PdeInstance, a: &SolveArgs) -> Result<Option<OperatorSet>, CliError> {
    let Some(spec) = a.ops_from.as_deref() else {
        return Ok(None);
    };
    let dict = instance.dictionary();
    let ops = match spec {
        "none" => return Ok(None),
        "oracle" => oracle_predict_instance(instance, &dict),
        s if s.ends_with(".jsonl") => {
            let ext = ExternalPredictions::load(s)?;
            let raw = ext
                .by_seed
                .get(&a.record_seed)
                .ok_or(fexkit::predictor::PredictorError::MissingExternalPrediction(a.record_seed))?;
            postprocess(raw, &dict)
        }
        s => PredictorModel::load(s)?.predict(&record_for_instance(instance, a.record_seed), a.threshold)?,
    };
    Ok(Some(ops))
}

fn solve_cmd(g: &GlobalArgs, a: &SolveArgs) -> Result<(), CliError> {
    let instance = load_instance(&a.instance)?;
    let ops = predicted_ops(&instance, a)?;
    let cfg = FexConfig {
        depth: a.depth,
        batch_size: a.batch,
        eta: a.eta,
        max_iterations: a.max_iter,
        inner_steps: a.inner_steps,
        fine_tune_steps: a.fine_tune_steps,
        reward_threshold: a.reward_threshold,
        seed: g.seed,
        collocation: CollocationConfig {
            n_interior: a.n_interior,
            n_boundary: a.n_boundary,
            sampler_seed: g.seed,
            resample_each_eval: false,
        },
        ..FexConfig::default()
    };
    if cfg.batch_size == 0 || !(cfg.eta > 0.0) {
        return Err(CliError::Config("batch and eta must be positive".into()));
    }
    let trace = solve(&instance, ops.as_ref(), &cfg)?;
    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &config_header("solve", g.seed, a))?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["iter", "best_reward", "mean_reward", "grad_norm", "stat_proxy", "wall_ms"])?;
    for r in &trace.records {
        csv.write_record([
            r.iter.to_string(),
            num(Some(r.best_reward)),
            num(Some(r.mean_reward)),
            num(Some(r.grad_norm)),
            num(Some(r.stat_proxy)),
            num(Some(r.wall_ms)),
        ])?;
    }
    csv.flush()?;
    let ops_text = match &ops {
        Some(s) => format!("{{{}}}", s.ordered_by(&instance.dictionary()).join(", ")),
        None => "none (full dictionary)".to_string(),
    };
    let err = trace
        .relative_l2_error
        .map(|e| format!("{e:.3e}"))
        .unwrap_or_else(|| "n/a".into());
    report(
        g,
        &format!(
            "predicted operators: {ops_text}\n\
             search space: {} structures, {} evaluated\n\
             converged: {} after {} iterations ({:.2} s)\n\
             slots: {}\n\
             postfix: {}\n\
             infix: {}\n\
             loss: {:.3e}, reward: {:.6}, relative L2 error: {err}",
            trace.n_structures,
            trace.evaluated_structures,
            trace.converged,
            trace.iterations,
            trace.wall_time_s,
            trace.slot_description,
            trace.best_postfix,
            trace.best_infix,
            trace.best_loss,
            trace.best_reward,
        ),
    );
    Ok(())
}

fn bench_cmd(g: &GlobalArgs, a: &BenchArgs) -> Result<(), CliError> {
    let mut instances: Vec<BenchInstance> = match &a.instances {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&fexkit::pde::strip_comment_lines(&text))
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => default_instances(),
    };
    if let Some(n) = a.limit {
        instances.truncate(n);
    }
    if instances.is_empty() || a.repeats == 0 {
        return Err(CliError::Config("nothing to run".into()));
    }
    let mut cfg = BenchConfig {
        repeats: a.repeats,
        seed: g.seed,
        ..BenchConfig::default()
    };
    cfg.fex.collocation.n_interior = a.n_interior;
    cfg.fex.collocation.n_boundary = a.n_boundary;
    cfg.fex.max_iterations = a.max_iter;
    cfg.fex.batch_size = a.batch;
    let runs = run_all(&instances, &cfg)?;
    let (rows, summary) = aggregate(&instances, &runs);

    let header = config_header("bench", g.seed, a);
    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &header)?;
    write_comment(&mut *w, "iterations and times are means over repeats; times in seconds")?;
    let mut csv = csv::Writer::from_writer(w);
    for r in &rows {
        csv.serialize(r)?;
    }
    csv.flush()?;

    if let Some(p) = &a.runs {
        let mut w = sink(Some(p))?;
        write_comment(&mut *w, &header)?;
        let mut csv = csv::Writer::from_writer(w);
        for r in &runs {
            csv.serialize(r)?;
        }
        csv.flush()?;
    }

    let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::from)?;
    match &a.summary {
        Some(p) => {
            let mut w = sink(Some(p))?;
            writeln!(w, "{json}")?;
            w.flush()?;
        }
        None => report(g, &json),
    }
    Ok(())
}

fn read_points(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.is_io_error() {
            true => CliError::Io(e.to_string()),
            false => CliError::Config(e.to_string()),
        })?;
    let mut pts = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let vals: Result<Vec<f64>, _> = row.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == dim => pts.push(v),
            Ok(v) => {
                return Err(CliError::Config(format!(
                    "row {}: expected {dim} coordinates, found {}",
                    i + 1,
                    v.len()
                )))
            }
            // a header row
            Err(_) if i == 0 => {}
            Err(e) => return Err(CliError::Config(format!("row {}: {e}", i + 1))),
        }
    }
    Ok(pts)
}

fn oracle_cmd(g: &GlobalArgs, a: &OracleArgs) -> Result<(), CliError> {
    let instance = load_instance(&a.instance)?;
    let dim = instance.domain.dim;
    let candidate = match (&a.candidate, &instance.true_u) {
        (Some(s), _) => parse_postfix_str(s, &instance.dictionary())?,
        (None, Some(u)) => u.clone(),
        (None, None) => {
            return Err(CliError::Config(
                "instance has no true solution; pass --candidate".into(),
            ))
        }
    };
    let points = match &a.points {
        Some(p) => read_points(p, dim)?,
        None => instance.domain.sample_interior(a.n_points, g.seed ^ 0x0A11),
    };
    let cfg = WosConfig {
        n_paths: a.paths,
        eps_shell: a.eps_shell,
        max_steps: a.max_steps,
        seed: g.seed,
        ..WosConfig::default()
    };
    let rep = verify_solution(&candidate, &instance, &points, &cfg)?;

    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &config_header("oracle", g.seed, a))?;
    let mut csv = csv::Writer::from_writer(w);
    let mut head: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    head.extend(["candidate", "estimate", "stderr", "z", "flagged"].map(String::from));
    csv.write_record(&head)?;
    for (k, p) in rep.points.iter().enumerate() {
        let mut row: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
        row.push(num(Some(p.candidate)));
        row.push(num(Some(p.estimate)));
        row.push(num(Some(p.stderr)));
        row.push(num(Some(p.z)));
        row.push(rep.flagged.contains(&k).to_string());
        csv.write_record(&row)?;
    }
    csv.flush()?;
    report(
        g,
        &format!(
            "{} points, max |z| {:.3}, max error {:.3e}, flagged {}: {}",
            rep.points.len(),
            rep.max_z(),
            rep.max_scaled_error,
            rep.flagged.len(),
            if rep.passed() { "PASS" } else { "FAIL" }
        ),
    );
    Ok(())
}

fn make_instance(g: &GlobalArgs, a: &MakeInstanceArgs) -> Result<(), CliError> {
    if a.dim == 0 {
        return Err(CliError::Config("dimension must be positive".into()));
    }
    let pde: PdeType = a.pde.parse().map_err(CliError::Config)?;
    let bc: BcType = a.bc.parse().map_err(CliError::Config)?;
    let kind: DomainKind = a.domain.parse().map_err(CliError::Config)?;
    let domain = Domain { kind, dim: a.dim };
    let u = parse_postfix_str(&a.u, &OperatorDictionary::standard(a.dim))?;
    let inst = PdeInstance::manufactured(pde, bc, domain, u);
    let mut w = sink(g.out.as_deref())?;
    write_comment(&mut *w, &config_header("make-instance", g.seed, a))?;
    writeln!(w, "{}", inst.to_json())?;
    w.flush()?;
    Ok(())
}
