//! Labeled symbolic datasets: random solutions, their derived right-hand
//! sides and boundary data, and the prompt/target text rendering.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{
    extract_operator_set_from_tokens, parse_postfix_str, simplify, to_postfix_string, BinaryOp,
    Expr, OperatorDictionary, OperatorSet, TreeSampler, UnaryOp,
};
use crate::pde::{boundary_data, residual_operator, BcType, BoundaryData, Domain, PdeType};

pub const PROMPT_TOKEN_BUDGET: usize = 256;
pub const TARGET_TOKEN_BUDGET: usize = 64;
pub const COMBINED_TOKEN_BUDGET: usize = 300;
pub const EOS: &str = "<EOS>";

const PROBE_POINTS: usize = 20;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("no acceptable solution after {attempts} attempts for {pde}/{bc} (depth {depth})")]
    GenerationFailure {
        pde: PdeType,
        bc: BcType,
        depth: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One dataset row. Field order is the on-disk JSON field order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub pde_type: PdeType,
    pub bc_type: BcType,
    pub dim: usize,
    pub depth: usize,
    pub seed: u64,
    pub f_postfix: String,
    pub g_postfix: String,
    pub u_postfix: String,
    pub prompt: String,
    pub target: String,
}

impl DatasetRecord {
    /// Operator set of the solution, the prediction label.
    pub fn label_set(&self) -> OperatorSet {
        let toks: Vec<&str> = self.u_postfix.split_whitespace().collect();
        extract_operator_set_from_tokens(&toks)
    }

    pub fn f_tokens(&self) -> Vec<&str> {
        self.f_postfix.split_whitespace().collect()
    }

    /// Boundary-data tokens with face tags removed.
    pub fn g_tokens(&self) -> Vec<&str> {
        self.g_postfix
            .split_whitespace()
            .filter(|t| !t.starts_with(crate::pde::FACE_TAG))
            .collect()
    }

    pub fn dictionary(&self) -> OperatorDictionary {
        OperatorDictionary::standard(self.dim)
    }

    pub fn solution(&self) -> Result<Expr, crate::expr::ExprError> {
        parse_postfix_str(&self.u_postfix, &self.dictionary())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub unary: Vec<UnaryOp>,
    pub binary: Vec<BinaryOp>,
    /// Adds a `| BC:<g>` field to the prompt.
    pub include_bc_in_prompt: bool,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            unary: UnaryOp::DEFAULT_SET.to_vec(),
            binary: BinaryOp::DEFAULT_SET.to_vec(),
            include_bc_in_prompt: false,
            max_attempts: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptRendering {
    pub prompt: String,
    pub target: String,
    pub prompt_truncated: bool,
    pub target_truncated: bool,
}

/// Renders the prompt and target with budget truncation (tokens beyond the
/// budget are dropped from the right).
pub fn render_prompt(
    pde: PdeType,
    bc: BcType,
    f_postfix: &str,
    g_postfix: Option<&str>,
    u_postfix: &str,
) -> PromptRendering {
    let mut prompt = format!("Type:{pde} | RHS:{f_postfix}");
    if let Some(g) = g_postfix {
        prompt.push_str(&format!(" | BC:{g}"));
    }
    prompt.push_str(&format!(" | BC_Type:{bc} | Solution:"));

    let mut target: Vec<&str> = u_postfix.split_whitespace().collect();
    let target_truncated = target.len() + 1 > TARGET_TOKEN_BUDGET;
    target.truncate(TARGET_TOKEN_BUDGET - 1);
    target.push(EOS);

    let mut ptoks: Vec<&str> = prompt.split_whitespace().collect();
    let budget = PROMPT_TOKEN_BUDGET.min(COMBINED_TOKEN_BUDGET - target.len());
    let prompt_truncated = ptoks.len() > budget;
    ptoks.truncate(budget);
    PromptRendering {
        prompt: ptoks.join(" "),
        target: target.join(" "),
        prompt_truncated,
        target_truncated,
    }
}

/// Fields recovered from an untruncated prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptFields {
    pub pde_type: PdeType,
    pub bc_type: BcType,
    pub f_postfix: String,
    pub g_postfix: Option<String>,
}

pub fn parse_prompt(prompt: &str) -> Option<PromptFields> {
    let body = prompt.strip_suffix(" | Solution:")?;
    let parts: Vec<&str> = body.split(" | ").collect();
    let pde_type = parts.first()?.strip_prefix("Type:")?.parse().ok()?;
    let f_postfix = parts.get(1)?.strip_prefix("RHS:")?.to_string();
    let (g_postfix, bc_part) = match parts.len() {
        3 => (None, parts[2]),
        4 => (Some(parts[2].strip_prefix("BC:")?.to_string()), parts[3]),
        _ => return None,
    };
    let bc_type = bc_part.strip_prefix("BC_Type:")?.parse().ok()?;
    Some(PromptFields {
        pde_type,
        bc_type,
        f_postfix,
        g_postfix,
    })
}

/// Builds a record from a given solution. `None` when the solution is
/// degenerate: constant, undefined at a probe point, or with `f = 0`.
pub fn record_from_solution(
    pde: PdeType,
    bc: BcType,
    depth: usize,
    dim: usize,
    seed: u64,
    u: &Expr,
    cfg: &GeneratorConfig,
) -> Option<DatasetRecord> {
    let u = simplify(u);
    if u.is_const() {
        return None;
    }
    let domain = Domain::unit_box(dim);
    let f = residual_operator(pde, &u, dim);
    if f.as_const() == Some(0.0) {
        return None;
    }
    let g = boundary_data(bc, &u, &domain);
    let probes = domain.sample_interior(PROBE_POINTS, seed ^ 0x5DEE_CE66);
    let ok = probes
        .iter()
        .all(|x| u.eval(x).is_ok() && f.eval(x).is_ok() && g.exprs().iter().all(|e| e.eval(x).is_ok()));
    if !ok {
        return None;
    }
    let f_postfix = to_postfix_string(&f);
    let g_postfix = g.to_postfix().join(" ");
    let u_postfix = to_postfix_string(&u);
    let r = render_prompt(
        pde,
        bc,
        &f_postfix,
        cfg.include_bc_in_prompt.then_some(g_postfix.as_str()),
        &u_postfix,
    );
    Some(DatasetRecord {
        pde_type: pde,
        bc_type: bc,
        dim,
        depth,
        seed,
        f_postfix,
        g_postfix,
        u_postfix,
        prompt: r.prompt,
        target: r.target,
    })
}

/// Draws random solutions from `seed` until one is acceptable.
pub fn generate_instance(
    pde: PdeType,
    bc: BcType,
    depth: usize,
    dim: usize,
    seed: u64,
    cfg: &GeneratorConfig,
) -> Result<DatasetRecord, DatagenError> {
    assert!(depth >= 1 && dim >= 1, "depth and dimension must be positive");
    let sampler = TreeSampler {
        unary: cfg.unary.clone(),
        binary: cfg.binary.clone(),
        dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.max_attempts {
        let u = sampler.sample(depth, &mut rng);
        if let Some(r) = record_from_solution(pde, bc, depth, dim, seed, &u, cfg) {
            return Ok(r);
        }
    }
    Err(DatagenError::GenerationFailure {
        pde,
        bc,
        depth,
        attempts: cfg.max_attempts,
    })
}

/// All six PDE/boundary combinations in a fixed order.
pub fn all_types() -> Vec<(PdeType, BcType)> {
    PdeType::ALL
        .iter()
        .flat_map(|&p| BcType::ALL.iter().map(move |&b| (p, b)))
        .collect()
}

/// Seed of the `index`-th record of a dataset.
pub fn record_seed(base_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` records cycling through `types`.
pub fn generate_dataset(
    n: usize,
    depth: usize,
    dim: usize,
    types: &[(PdeType, BcType)],
    base_seed: u64,
    cfg: &GeneratorConfig,
) -> Result<Vec<DatasetRecord>, DatagenError> {
    assert!(!types.is_empty(), "at least one PDE/boundary type is required");
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (p, b) = types[i % types.len()];
            generate_instance(p, b, depth, dim, record_seed(base_seed, i as u64), cfg)
        })
        .collect()
}

/// JSONL writer; `header` lines are written first, each prefixed with `# `.
pub fn write_dataset(
    records: &[DatasetRecord],
    path: impl AsRef<Path>,
    header: Option<&str>,
) -> Result<(), DatagenError> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL dataset, skipping blank lines and `#` comments.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DatagenError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let rec = serde_json::from_str(t).map_err(|e| DatagenError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Re-derives `f` and `g` from the stored solution and compares values at
/// probe points.
pub fn check_record(record: &DatasetRecord, tol: f64) -> Result<(), String> {
    let dict = record.dictionary();
    let u = parse_postfix_str(&record.u_postfix, &dict).map_err(|e| e.to_string())?;
    let f = parse_postfix_str(&record.f_postfix, &dict).map_err(|e| e.to_string())?;
    let toks: Vec<&str> = record.g_postfix.split_whitespace().collect();
    let g = BoundaryData::parse(&toks, &dict).map_err(|e| e.to_string())?;
    let domain = Domain::unit_box(record.dim);
    let f2 = residual_operator(record.pde_type, &u, record.dim);
    let g2 = boundary_data(record.bc_type, &u, &domain);
    let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + b.abs());
    for x in domain.sample_interior(PROBE_POINTS, record.seed) {
        let (a, b) = (f.eval(&x), f2.eval(&x));
        match (a, b) {
            (Ok(a), Ok(b)) if close(a, b) => {}
            other => return Err(format!("f mismatch at {x:?}: {other:?}")),
        }
    }
    for x in domain.sample_boundary(PROBE_POINTS, record.seed) {
        let (a, b) = (g.at(&x).eval(&x), g2.at(&x).eval(&x));
        match (a, b) {
            (Ok(a), Ok(b)) if close(a, b) => {}
            other => return Err(format!("g mismatch at {x:?}: {other:?}")),
        }
    }
    Ok(())
}
