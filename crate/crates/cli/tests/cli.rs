use std::fs;
use std::path::Path;

use fexkit::datagen::read_dataset;
use fexkit::fex::build_search_space;
use fexkit::pde::PdeInstance;
use fexkit::predictor::oracle_predict_instance;
use fexkit_cli::run;
use tempfile::TempDir;

fn fexkit(args: &[&str]) -> i32 {
    let mut v = vec!["fexkit"];
    v.extend_from_slice(args);
    run(v)
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn data_rows(path: &str) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn make_instance(dir: &TempDir) -> String {
    let inst = p(dir, "inst.json");
    assert_eq!(fexkit(&["make-instance", "--u", "x3 SIN 16 *", "--out", &inst]), 0);
    inst
}

#[test]
fn gen_data_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (p(&dir, "a.jsonl"), p(&dir, "b.jsonl"));
    assert_eq!(fexkit(&["gen-data", "--n", "10", "--seed", "1", "--out", &a]), 0);
    assert_eq!(fexkit(&["gen-data", "--n", "10", "--seed", "1", "--out", &b]), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# config: "));
    assert_eq!(read_dataset(&a).unwrap().len(), 10);
}

#[test]
fn gen_data_type_filter() {
    let dir = TempDir::new().unwrap();
    let a = p(&dir, "a.jsonl");
    assert_eq!(fexkit(&["gen-data", "--n", "12", "--types", "poisson:dirichlet", "--out", &a]), 0);
    let recs = read_dataset(&a).unwrap();
    assert!(recs.iter().all(|r| r.pde_type.as_str() == "poisson" && r.bc_type.as_str() == "dirichlet"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(fexkit(&["--help"]), 0);
    assert_eq!(fexkit(&["bogus"]), 2);
    assert_eq!(fexkit(&["gen-data", "--n", "nope"]), 2);
    assert_eq!(fexkit(&["gen-data", "--types", "poisson:robin", "--out", &p(&dir, "x")]), 2);
    assert_eq!(fexkit(&["solve", "--instance", &p(&dir, "missing.json")]), 3);
    let blocker = p(&dir, "plain-file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(fexkit(&["gen-data", "--n", "1", "--out", &format!("{blocker}/d.jsonl")]), 3);
    // no attempts allowed: generation fails
    assert_eq!(fexkit(&["gen-data", "--n", "1", "--max-attempts", "0", "--out", &p(&dir, "y")]), 4);
    let inst = make_instance(&dir);
    assert_eq!(fexkit(&["solve", "--instance", &inst, "--depth", "0"]), 4);
    assert_eq!(fexkit(&["oracle", "--instance", &inst, "--candidate", "x9 SIN"]), 2);
}

#[test]
fn eval_in_oracle_mode() {
    let dir = TempDir::new().unwrap();
    let (d, e) = (p(&dir, "d.jsonl"), p(&dir, "e.csv"));
    assert_eq!(fexkit(&["gen-data", "--n", "100", "--out", &d]), 0);
    assert_eq!(fexkit(&["eval-predictor", "--data", &d, "--model", "oracle", "--out", &e]), 0);
    let text = fs::read_to_string(&e).unwrap();
    assert!(text.contains("average mismatch"));
    let rows = data_rows(&e);
    assert_eq!(rows[0], "token,true_positive,false_positive,false_negative,precision,recall");
    assert!(rows.len() > 5);
}

#[test]
fn train_then_eval_on_held_out_split() {
    let dir = TempDir::new().unwrap();
    let (tr, te, m, e) = (p(&dir, "tr.jsonl"), p(&dir, "te.jsonl"), p(&dir, "m.json"), p(&dir, "e.csv"));
    assert_eq!(fexkit(&["gen-data", "--n", "300", "--seed", "1", "--out", &tr]), 0);
    assert_eq!(fexkit(&["gen-data", "--n", "100", "--seed", "2", "--out", &te]), 0);
    assert_eq!(fexkit(&["train-predictor", "--data", &tr, "--epochs", "100", "--out", &m]), 0);
    assert_eq!(fexkit(&["eval-predictor", "--data", &te, "--model", &m, "--out", &e]), 0);
    let head = fs::read_to_string(&e).unwrap();
    let line = head.lines().find(|l| l.contains("average mismatch")).unwrap();
    let num = |key: &str| -> f64 {
        let rest = &line[line.find(key).unwrap() + key.len()..];
        rest.trim_start_matches([':', ' ']).split(',').next().unwrap().trim().parse().unwrap()
    };
    assert!(num("average mismatch") < num("all-zeros baseline"), "{line}");
}

#[test]
fn solve_writes_trace_and_uses_a_smaller_space_when_informed() {
    let dir = TempDir::new().unwrap();
    let inst = make_instance(&dir);
    let t = p(&dir, "trace.csv");
    let args = ["--n-interior", "128", "--n-boundary", "64", "--max-iter", "5"];
    let mut v = vec!["solve", "--instance", &inst, "--ops-from", "oracle", "--out", &t];
    v.extend_from_slice(&args);
    assert_eq!(fexkit(&v), 0);
    let rows = data_rows(&t);
    assert_eq!(rows[0], "iter,best_reward,mean_reward,grad_norm,stat_proxy,wall_ms");
    assert!(rows.len() >= 2);

    let instance = PdeInstance::load(&inst).unwrap();
    let ops = oracle_predict_instance(&instance, &instance.dictionary());
    let informed = build_search_space(Some(&ops), 2, 3).unwrap().n_structures();
    let uninformed = build_search_space(None, 2, 3).unwrap().n_structures();
    assert!(informed <= uninformed);
}

#[test]
fn oracle_accepts_the_true_solution() {
    let dir = TempDir::new().unwrap();
    let inst = make_instance(&dir);
    let o = p(&dir, "o.csv");
    assert_eq!(fexkit(&["oracle", "--instance", &inst, "--n-points", "6", "--paths", "2000", "--out", &o]), 0);
    let rows = data_rows(&o);
    assert_eq!(rows[0], "x1,x2,x3,candidate,estimate,stderr,z,flagged");
    assert_eq!(rows.len(), 7);
    assert!(rows[1..].iter().all(|r| r.ends_with(",false")));

    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "x1,x2,x3\n0.1,0.2,0.3\n-0.5,0.0,0.4\n").unwrap();
    assert_eq!(
        fexkit(&["oracle", "--instance", &inst, "--points", &pts.to_string_lossy(), "--paths", "500", "--out", &o]),
        0
    );
    assert_eq!(data_rows(&o).len(), 3);
}

fn strip_times(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let head = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            head.iter()
                .zip(r.iter())
                .filter(|(h, _)| !h.starts_with("time"))
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn bench_is_deterministic_apart_from_timings() {
    let dir = TempDir::new().unwrap();
    let (a, b, s) = (p(&dir, "a.csv"), p(&dir, "b.csv"), p(&dir, "s.json"));
    let args = |out: &str| {
        vec![
            "bench".to_string(),
            "--repeats".into(),
            "1".into(),
            "--limit".into(),
            "1".into(),
            "--max-iter".into(),
            "3".into(),
            "--n-interior".into(),
            "64".into(),
            "--n-boundary".into(),
            "32".into(),
            "--summary".into(),
            s.clone(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let call = |out: &str| run(std::iter::once("fexkit".to_string()).chain(args(out)));
    assert_eq!(call(&a), 0);
    assert_eq!(call(&b), 0);
    let ra = strip_times(Path::new(&a));
    assert_eq!(ra.len(), 1);
    assert_eq!(ra, strip_times(Path::new(&b)));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
    assert!(summary["median_iteration_speedup"].as_f64().unwrap() > 0.0);
}
