//! Operator-set prediction: token post-processing, an analytic oracle, a
//! multi-label logistic baseline, and an adapter for externally produced
//! predictions.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::DatasetRecord;
use crate::expr::{
    encode_operator_set, extract_operator_set, extract_operator_set_from_tokens, is_numeric_literal,
    mismatch, OperatorDictionary, OperatorSet,
};
use crate::pde::{BcType, DomainKind, PdeInstance, PdeType};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("no external prediction for record seed {0}")]
    MissingExternalPrediction(u64),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Deduplicates raw tokens, dropping numeric literals and anything outside
/// `dict`.
pub fn postprocess<S: AsRef<str>>(raw: &[S], dict: &OperatorDictionary) -> OperatorSet {
    raw.iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_numeric_literal(t) && dict.contains(t))
        .collect()
}

/// Operators needed to evaluate the distance to the boundary.
pub fn distance_operators(kind: DomainKind) -> &'static [&'static str] {
    match kind {
        DomainKind::UnitBox => &["ABS"],
        DomainKind::UnitBall => &["^2", "+", "SQRT"],
    }
}

const ARITHMETIC: [&str; 3] = ["+", "*", "^2"];

fn oracle_from_parts(
    f_ops: OperatorSet,
    g_ops: OperatorSet,
    domain: DomainKind,
    dict: &OperatorDictionary,
) -> OperatorSet {
    let mut s = f_ops.union(&g_ops);
    s.extend(ARITHMETIC);
    s.extend(distance_operators(domain).iter().copied());
    s.restrict_to(dict)
}

/// `ops(f) ∪ ops(g) ∪ {+, *, ^2} ∪ ops(distance)`, restricted to `dict`.
/// Records always live on the unit box.
pub fn oracle_predict(record: &DatasetRecord, dict: &OperatorDictionary) -> OperatorSet {
    oracle_from_parts(
        extract_operator_set_from_tokens(&record.f_tokens()),
        extract_operator_set_from_tokens(&record.g_tokens()),
        DomainKind::UnitBox,
        dict,
    )
}

pub fn oracle_predict_instance(instance: &PdeInstance, dict: &OperatorDictionary) -> OperatorSet {
    let mut g_ops = OperatorSet::new();
    for e in instance.g.exprs() {
        g_ops = g_ops.union(&extract_operator_set(e));
    }
    oracle_from_parts(
        extract_operator_set(&instance.f),
        g_ops,
        instance.domain.kind,
        dict,
    )
}

/// Sparse indicator features: indices of present prompt tokens followed by
/// the PDE and boundary-condition one-hots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Featurizer {
    pub tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Featurizer {
    fn from(tokens: Vec<String>) -> Self {
        Featurizer::from_tokens(tokens)
    }
}

impl From<Featurizer> for Vec<String> {
    fn from(f: Featurizer) -> Self {
        f.tokens
    }
}

impl Featurizer {
    pub fn fit(records: &[DatasetRecord]) -> Self {
        let mut seen = BTreeSet::new();
        for r in records {
            for t in r.prompt.split_whitespace() {
                seen.insert(t.to_string());
            }
        }
        Featurizer::from_tokens(seen.into_iter().collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Featurizer { tokens, index }
    }

    pub fn dim(&self) -> usize {
        self.tokens.len() + PdeType::ALL.len() + BcType::ALL.len()
    }

    pub fn featurize(&self, record: &DatasetRecord) -> Vec<usize> {
        let mut idx: BTreeSet<usize> = record
            .prompt
            .split_whitespace()
            .filter_map(|t| self.index.get(t).copied())
            .collect();
        let n = self.tokens.len();
        let p = PdeType::ALL.iter().position(|&t| t == record.pde_type).expect("known type");
        let b = BcType::ALL.iter().position(|&t| t == record.bc_type).expect("known type");
        idx.insert(n + p);
        idx.insert(n + PdeType::ALL.len() + b);
        idx.into_iter().collect()
    }

    pub fn dense(&self, record: &DatasetRecord) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for i in self.featurize(record) {
            v[i] = 1.0;
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
    /// `None` for full-batch descent.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            lr: 0.5,
            l2: 1e-4,
            seed: 0,
            batch_size: None,
        }
    }
}

/// Independent logistic regressions, one per output token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub features: Featurizer,
    pub output_dictionary: OperatorDictionary,
    /// `n_out x n_features`
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl BaselineModel {
    pub fn logits(&self, feats: &[usize]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| b + feats.iter().map(|&j| row[j]).sum::<f64>())
            .collect()
    }

    pub fn probabilities(&self, record: &DatasetRecord) -> Vec<f64> {
        self.logits(&self.features.featurize(record))
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    /// Mean per-label cross-entropy (summed over labels) plus the L2 penalty.
    pub fn objective(&self, feats: &[Vec<usize>], labels: &[Vec<u8>], l2: f64) -> f64 {
        let n = feats.len() as f64;
        // collected before summing so the result does not depend on thread count
        let per_record: Vec<f64> = feats
            .par_iter()
            .zip(labels)
            .map(|(x, y)| {
                self.logits(x)
                    .iter()
                    .zip(y)
                    .map(|(&z, &t)| softplus(z) - t as f64 * z)
                    .sum::<f64>()
            })
            .collect();
        let ce: f64 = per_record.iter().sum();
        let reg: f64 = self.w.iter().flatten().map(|w| w * w).sum();
        ce / n + 0.5 * l2 * reg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective before training and after every epoch.
    pub loss_history: Vec<f64>,
    /// Output tokens whose label is the same on every training record.
    pub constant_labels: Vec<String>,
}

pub fn label_vectors(records: &[DatasetRecord], dict: &OperatorDictionary) -> Vec<Vec<u8>> {
    records
        .iter()
        .map(|r| {
            let s = r.label_set().restrict_to(dict);
            encode_operator_set(&s, dict).expect("restricted to dictionary").bits
        })
        .collect()
}

pub fn train_baseline(
    records: &[DatasetRecord],
    output_dictionary: &OperatorDictionary,
    cfg: &TrainConfig,
) -> Result<(BaselineModel, TrainReport), PredictorError> {
    if records.is_empty() {
        return Err(PredictorError::EmptyTrainingSet);
    }
    let features = Featurizer::fit(records);
    let nf = features.dim();
    let no = output_dictionary.len();
    let xs: Vec<Vec<usize>> = records.iter().map(|r| features.featurize(r)).collect();
    let ys = label_vectors(records, output_dictionary);

    let mut constant_labels = Vec::new();
    for k in 0..no {
        if ys.iter().all(|y| y[k] == ys[0][k]) {
            constant_labels.push(output_dictionary.tokens()[k].clone());
        }
    }
    if !constant_labels.is_empty() {
        warn!(
            "label columns constant over the training set: {}",
            constant_labels.join(", ")
        );
    }

    let mut model = BaselineModel {
        features,
        output_dictionary: output_dictionary.clone(),
        w: vec![vec![0.0; nf]; no],
        b: vec![0.0; no],
    };
    let mut history = vec![model.objective(&xs, &ys, cfg.l2)];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size.unwrap_or(xs.len()).clamp(1, xs.len());

    for _ in 0..cfg.epochs {
        if batch < xs.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (gw, gb) = gradient(&model, &xs, &ys, chunk);
            let m = chunk.len() as f64;
            for k in 0..no {
                for j in 0..nf {
                    let g = gw[k][j] / m + cfg.l2 * model.w[k][j];
                    model.w[k][j] -= cfg.lr * g;
                }
                model.b[k] -= cfg.lr * gb[k] / m;
            }
        }
        history.push(model.objective(&xs, &ys, cfg.l2));
    }
    Ok((
        model,
        TrainReport {
            loss_history: history,
            constant_labels,
        },
    ))
}

/// Summed (not averaged) cross-entropy gradient over the records in `rows`.
fn gradient(
    model: &BaselineModel,
    xs: &[Vec<usize>],
    ys: &[Vec<u8>],
    rows: &[usize],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let no = model.b.len();
    let nf = model.features.dim();
    let zero = || (vec![vec![0.0; nf]; no], vec![0.0; no]);
    let partials: Vec<(Vec<Vec<f64>>, Vec<f64>)> = rows
        .par_chunks(512)
        .map(|part| {
            let (mut gw, mut gb) = zero();
            for &i in part {
                let z = model.logits(&xs[i]);
                for k in 0..no {
                    let e = sigmoid(z[k]) - ys[i][k] as f64;
                    gb[k] += e;
                    for &j in &xs[i] {
                        gw[k][j] += e;
                    }
                }
            }
            (gw, gb)
        })
        .collect();
    let (mut aw, mut ab) = zero();
    for (bw, bb) in partials {
        for k in 0..no {
            for j in 0..nf {
                aw[k][j] += bw[k][j];
            }
            ab[k] += bb[k];
        }
    }
    (aw, ab)
}

/// Externally produced predictions keyed by record seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExternalPredictions {
    pub by_seed: HashMap<u64, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ExternalRow {
    seed: u64,
    ops: Vec<String>,
}

impl ExternalPredictions {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictorError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut by_seed = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let row: ExternalRow = serde_json::from_str(t).map_err(|e| PredictorError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            by_seed.insert(row.seed, row.ops);
        }
        Ok(ExternalPredictions { by_seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictorError> {
        let mut seeds: Vec<&u64> = self.by_seed.keys().collect();
        seeds.sort();
        let mut text = String::new();
        for s in seeds {
            let row = ExternalRow {
                seed: *s,
                ops: self.by_seed[s].clone(),
            };
            text.push_str(&serde_json::to_string(&row)?);
            text.push('\n');
        }
        fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorModel {
    Oracle,
    Baseline(BaselineModel),
    #[serde(skip)]
    External(ExternalPredictions),
}

impl PredictorModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictorError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    /// Reads a saved model; leading `#` comment lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictorError> {
        let text = crate::pde::strip_comment_lines(&fs::read_to_string(path)?);
        Ok(serde_json::from_str(&text)?)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PredictorModel::Oracle => "oracle",
            PredictorModel::Baseline(_) => "baseline",
            PredictorModel::External(_) => "external",
        }
    }

    /// Predicted set; always a subset of the working dictionary.
    pub fn predict(
        &self,
        record: &DatasetRecord,
        threshold: f64,
    ) -> Result<OperatorSet, PredictorError> {
        match self {
            PredictorModel::Oracle => Ok(oracle_predict(record, &record.dictionary())),
            PredictorModel::Baseline(m) => Ok(m
                .probabilities(record)
                .iter()
                .zip(m.output_dictionary.tokens())
                .filter(|(p, _)| **p >= threshold)
                .map(|(_, t)| t.clone())
                .collect()),
            PredictorModel::External(ext) => {
                let raw = ext
                    .by_seed
                    .get(&record.seed)
                    .ok_or(PredictorError::MissingExternalPrediction(record.seed))?;
                Ok(postprocess(raw, &record.dictionary()))
            }
        }
    }

    /// Dictionary over which predictions and labels are compared.
    pub fn evaluation_dictionary(&self, records: &[DatasetRecord]) -> OperatorDictionary {
        match self {
            PredictorModel::Baseline(m) => m.output_dictionary.clone(),
            _ => OperatorDictionary::standard(records.iter().map(|r| r.dim).max().unwrap_or(1)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorStats {
    pub token: String,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl OperatorStats {
    pub fn precision(&self) -> f64 {
        let d = self.true_positive + self.false_positive;
        if d == 0 {
            f64::NAN
        } else {
            self.true_positive as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.true_positive + self.false_negative;
        if d == 0 {
            f64::NAN
        } else {
            self.true_positive as f64 / d as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub mismatches: Vec<usize>,
    pub average_mismatch: f64,
    pub per_operator: Vec<OperatorStats>,
}

/// Scores predicted sets against record labels over `dict`.
pub fn evaluate_sets(
    records: &[DatasetRecord],
    predictions: &[OperatorSet],
    dict: &OperatorDictionary,
) -> PredictionReport {
    assert_eq!(records.len(), predictions.len());
    let mut per_operator: Vec<OperatorStats> = dict
        .tokens()
        .iter()
        .map(|t| OperatorStats {
            token: t.clone(),
            true_positive: 0,
            false_positive: 0,
            false_negative: 0,
        })
        .collect();
    let mut mismatches = Vec::with_capacity(records.len());
    for (r, p) in records.iter().zip(predictions) {
        let y = encode_operator_set(&r.label_set().restrict_to(dict), dict).expect("restricted");
        let z = encode_operator_set(&p.restrict_to(dict), dict).expect("restricted");
        mismatches.push(mismatch(&y, &z).expect("same dictionary"));
        for (k, st) in per_operator.iter_mut().enumerate() {
            match (y.bits[k], z.bits[k]) {
                (1, 1) => st.true_positive += 1,
                (0, 1) => st.false_positive += 1,
                (1, 0) => st.false_negative += 1,
                _ => {}
            }
        }
    }
    let average_mismatch = if mismatches.is_empty() {
        0.0
    } else {
        mismatches.iter().sum::<usize>() as f64 / mismatches.len() as f64
    };
    PredictionReport {
        mismatches,
        average_mismatch,
        per_operator,
    }
}

pub fn evaluate_predictor(
    model: &PredictorModel,
    records: &[DatasetRecord],
    threshold: f64,
) -> Result<PredictionReport, PredictorError> {
    let dict = model.evaluation_dictionary(records);
    let preds = records
        .par_iter()
        .map(|r| model.predict(r, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_sets(records, &preds, &dict))
}

/// Mean number of label tokens, which is the average mismatch of a predictor
/// that always returns the empty set.
pub fn mean_label_cardinality(records: &[DatasetRecord], dict: &OperatorDictionary) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let total: usize = records
        .iter()
        .map(|r| r.label_set().restrict_to(dict).len())
        .sum();
    total as f64 / records.len() as f64
}
