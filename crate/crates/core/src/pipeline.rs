//! Simulation benchmark: simulate a scenario, score every replicate with
//! CAR, COR and RND, select model sizes by local fdr and evaluate against
//! the planted causal markers.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{evaluate, CausalSet, EvaluationInput, EvaluationReport, MethodRuns};
use crate::genomatrix::{encode_additive, GenotypeMatrix, PhenotypeVector, RawGenotypes};
use crate::io::Provenance;
use crate::lowrank::{estimate_lambda_analytic, LowRankCorrelation, ShrinkageEstimate};
use crate::scores::{car_scores_with, marginal_correlations, random_scores};
use crate::selection::select;
use crate::simulate::{simulate_genotypes, simulate_phenotypes, SimulationScenario};

/// Shrinkage intensity as requested by the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSpec {
    Fixed(f64),
    Analytic,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Fixed(0.1)
    }
}

impl LambdaSpec {
    pub fn resolve(self, x: &nalgebra::DMatrix<f64>) -> Result<ShrinkageEstimate> {
        match self {
            LambdaSpec::Fixed(v) => ShrinkageEstimate::fixed(v),
            LambdaSpec::Analytic => estimate_lambda_analytic(x),
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("analytic") {
            return Ok(LambdaSpec::Analytic);
        }
        let v: f64 = s.parse().map_err(|_| format!("`{s}` is neither a number nor `analytic`"))?;
        if !(v > 0.0 && v <= 1.0) {
            return Err(format!("lambda {v} outside (0, 1]"));
        }
        Ok(LambdaSpec::Fixed(v))
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Fixed(v) => write!(f, "{v}"),
            LambdaSpec::Analytic => f.write_str("analytic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: SimulationScenario,
    pub lambda: LambdaSpec,
    pub fdr_cutoff: f64,
    /// Length of the TP@k curves.
    pub k_max: usize,
    /// Top-`window` used for recovery counts and the rare/common split.
    pub window: usize,
}

impl BenchConfig {
    pub fn new(scenario: SimulationScenario) -> Self {
        Self {
            scenario,
            lambda: LambdaSpec::default(),
            fdr_cutoff: crate::selection::DEFAULT_CUTOFF,
            k_max: 500,
            window: crate::evaluate::DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub report: EvaluationReport,
    pub lambda: f64,
    pub factor_rank: usize,
    pub markers_simulated: usize,
    pub markers_kept: usize,
    /// Causal ids after filtering; duplicates collapse onto the kept copy.
    pub causal_ids: Vec<String>,
}

pub const METHODS: [&str; 3] = ["car", "cor", "rnd"];

/// Maps causal markers of the simulated panel onto the filtered panel.
/// A marker removed as a duplicate is represented by the kept column with
/// the same calls; a monomorphic one is gone.
pub fn map_causal(raw: &RawGenotypes, kept: &[usize], causal: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let by_column: HashMap<&[Option<u8>], usize> =
        kept.iter().enumerate().map(|(new, &old)| (raw.calls()[old].as_slice(), new)).collect();
    let mut out: Vec<usize> = causal
        .into_iter()
        .filter_map(|j| by_column.get(raw.calls()[j].as_slice()).copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn replicate_seed(seed: u64, b: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(b as u64 + 1)
}

struct ReplicateRuns {
    car: (Vec<usize>, usize),
    cor: (Vec<usize>, usize),
    rnd: Vec<usize>,
}

fn run_replicate(
    x: &GenotypeMatrix,
    factor: &LowRankCorrelation,
    y: &[f64],
    b: usize,
    cfg: &BenchConfig,
) -> Result<ReplicateRuns> {
    let y = PhenotypeVector::standardized(y, b)?;
    let car = select(&car_scores_with(factor, x, &y)?, cfg.fdr_cutoff)?;
    let cor = select(&marginal_correlations(x, &y)?, cfg.fdr_cutoff)?;
    let rnd = random_scores(x.marker_ids(), x.genes(), replicate_seed(cfg.scenario.seed, b));
    let (car_size, cor_size) = (car.model_size(), cor.model_size());
    Ok(ReplicateRuns {
        car: (car.ranked, car_size),
        cor: (cor.ranked, cor_size),
        rnd: rnd.ranking(),
    })
}

/// Runs the benchmark on `threads` workers (0 = rayon default). Replicates
/// are independent and collected in order, so the result does not depend
/// on the thread count.
pub fn run_bench(cfg: &BenchConfig, threads: usize) -> Result<BenchResult> {
    let sc = &cfg.scenario;
    sc.validate()?;
    if !(cfg.fdr_cutoff > 0.0 && cfg.fdr_cutoff <= 1.0) {
        return Err(Error::InvalidCutoff(cfg.fdr_cutoff));
    }
    let raw = simulate_genotypes(sc)?;
    let phenotypes = simulate_phenotypes(&encode_additive(&raw)?, sc)?;
    let (x, filtered) = GenotypeMatrix::from_raw(&raw, false)?;
    let causal_idx = map_causal(&raw, &filtered.kept, sc.causal.iter().map(|c| c.index));
    let causal = CausalSet::new(x.d(), causal_idx.iter().copied())?;
    info!(
        "{}: {} of {} markers kept, {} causal after filtering",
        sc.name,
        x.d(),
        raw.d(),
        causal.len()
    );

    let lambda = cfg.lambda.resolve(x.matrix())?;
    let factor = LowRankCorrelation::build(x.matrix(), lambda)?;
    info!("lambda = {}, factor rank = {}", factor.lambda(), factor.rank());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let reps: Vec<ReplicateRuns> = pool.install(|| {
        phenotypes
            .par_iter()
            .enumerate()
            .map(|(b, y)| run_replicate(&x, &factor, y, b, cfg))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut car = MethodRuns { method: "car".into(), rankings: Vec::new(), model_sizes: Some(Vec::new()) };
    let mut cor = MethodRuns { method: "cor".into(), rankings: Vec::new(), model_sizes: Some(Vec::new()) };
    let mut rnd = MethodRuns { method: "rnd".into(), rankings: Vec::new(), model_sizes: None };
    for r in reps {
        for (runs, (ranking, size)) in [(&mut car, r.car), (&mut cor, r.cor)] {
            runs.rankings.push(ranking);
            runs.model_sizes.as_mut().expect("sized method").push(size);
        }
        rnd.rankings.push(r.rnd);
    }
    let runs = [car, cor, rnd];

    let ids = x.marker_ids();
    let report = evaluate(
        &EvaluationInput {
            runs: &runs,
            causal: &causal,
            marker_ids: &ids,
            mafs: &x.mafs(),
            k_max: cfg.k_max,
            window: cfg.window,
        },
        Provenance::new(cfg),
    )?;
    Ok(BenchResult {
        report,
        lambda: factor.lambda(),
        factor_rank: factor.rank(),
        markers_simulated: raw.d(),
        markers_kept: x.d(),
        causal_ids: causal.members().iter().map(|&j| ids[j].clone()).collect(),
    })
}
