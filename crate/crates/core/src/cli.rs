//! Command-line entry point.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::cache;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, CausalSet, EvaluationInput, EvaluationReport, MethodRuns};
use crate::genomatrix::{
    encode_additive, residualize_phenotype, CovariateMatrix, GenotypeMatrix, PhenotypeVector,
};
use crate::io::{self, Provenance};
use crate::lowrank::LowRankCorrelation;
use crate::pipeline::{run_bench, BenchConfig, BenchResult, LambdaSpec};
use crate::scores::{self, ScoreKind, ScoreVector};
use crate::selection::{select, select_top_k, SelectionJson, DEFAULT_CUTOFF};
use crate::simulate::{self, SimulationScenario};

#[derive(Debug, Parser, Serialize)]
#[command(name = "carsel", version, about = "Correlation-adjusted marker ranking and selection")]
pub struct Cli {
    /// Worker threads for replicate-level work (0 = all cores).
    #[arg(long, global = true, env = "CARSEL_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    #[serde(skip)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Score every marker against one phenotype.
    Score(ScoreArgs),
    /// Choose a model size from a score file.
    Select(SelectArgs),
    /// Write a simulated data set in the input formats.
    Simulate(SimulateArgs),
    /// Compare score files against the causal markers of a simulation.
    Evaluate(EvaluateArgs),
    /// Simulate, score and evaluate CAR, COR and RND in one run.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Car,
    Cat,
    Cor,
    Tscore,
    Rnd,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Genotype TSV: `sample_id` then one column per marker.
    #[arg(long)]
    pub genotypes: PathBuf,
    /// Phenotype TSV: `sample_id`, `y`, then optional covariates.
    #[arg(long)]
    pub phenotypes: PathBuf,
    /// Marker metadata TSV: `marker_id`, `gene`, `synonymous`.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Drop markers flagged synonymous in the metadata.
    #[arg(long)]
    pub drop_synonymous: bool,
    #[arg(long, value_enum, default_value = "car")]
    pub method: Method,
    /// Shrinkage intensity in (0, 1], or `analytic`.
    #[arg(long, default_value = "0.1")]
    pub lambda: LambdaSpec,
    /// Seed for `--method rnd`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reuse (or create) a cached correlation factor; CAR only.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Output TSV; stdout if omitted.
    #[arg(long, short)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// Score TSV written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Keep markers with local fdr below this value.
    #[arg(long, default_value_t = DEFAULT_CUTOFF, conflicts_with = "top_k")]
    pub fdr_cutoff: f64,
    /// Keep the top k markers instead of thresholding the local fdr.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Include the per-marker local fdr (in score-file order).
    #[arg(long)]
    pub with_fdr: bool,
    /// Output JSON; stdout if omitted.
    #[arg(long, short)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScenarioArgs {
    /// Built-in scenario: q1like, q2like or q4like.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub preset: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Override the number of phenotype replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<SimulationScenario> {
        let mut sc = match (&self.preset, &self.scenario) {
            (Some(name), _) => simulate::preset(name)
                .ok_or_else(|| Error::InvalidScenario(format!("unknown preset `{name}`")))?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                SimulationScenario::from_toml(&text)?
            }
            (None, None) => return Err(Error::InvalidScenario("no scenario given".into())),
        };
        if let Some(b) = self.replicates {
            sc.replicates = b;
        }
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// `truth.tsv` written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Score files, one per method and replicate, in replicate order.
    #[arg(required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub fdr_cutoff: f64,
    #[arg(long, default_value_t = 500)]
    pub k_max: usize,
    #[arg(long, default_value_t = crate::evaluate::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value = "0.1")]
    pub lambda: LambdaSpec,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub fdr_cutoff: f64,
    #[arg(long, default_value_t = 500)]
    pub k_max: usize,
    #[arg(long, default_value_t = crate::evaluate::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let provenance = Provenance::new(&cli.command);
    match &cli.command {
        Command::Score(a) => score(a, &provenance),
        Command::Select(a) => select_cmd(a, &provenance),
        Command::Simulate(a) => simulate_cmd(a, &provenance),
        Command::Evaluate(a) => evaluate_cmd(a, &provenance),
        Command::Bench(a) => bench(a, cli.threads),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn score(a: &ScoreArgs, provenance: &Provenance) -> Result<()> {
    let mut raw = io::read_genotypes(&a.genotypes)?;
    if let Some(meta) = &a.metadata {
        raw = io::attach_metadata(raw, &io::read_marker_metadata(meta)?)?;
    }
    let (x, filtered) = GenotypeMatrix::from_raw(&raw, a.drop_synonymous)?;
    info!("{} of {} markers kept after filtering", filtered.kept.len(), raw.d());
    let table = io::read_phenotypes(&a.phenotypes)?.aligned_to(raw.samples())?;

    let continuous = || -> Result<PhenotypeVector> {
        if table.covariate_names.is_empty() {
            return PhenotypeVector::standardized(&table.y, 0);
        }
        let z = DMatrix::from_fn(table.y.len(), table.covariate_names.len(), |i, c| table.covariates[i][c]);
        residualize_phenotype(&table.y, &CovariateMatrix::new(z), 0)
    };
    let binary = || -> Result<Vec<bool>> {
        if !table.covariate_names.is_empty() {
            warn!("covariates are ignored for binary scores");
        }
        table.binary_labels()
    };

    let s: ScoreVector = match a.method {
        Method::Cor => scores::marginal_correlations(&x, &continuous()?)?,
        Method::Car => {
            let factor = car_factor(&x, a)?;
            scores::car_scores_with(&factor, &x, &continuous()?)?
        }
        Method::Tscore => scores::t_scores(&x, &binary()?)?,
        Method::Cat => {
            let labels = binary()?;
            let within = scores::pooled_within_class(&x, &labels)?;
            scores::cat_scores(&x, &labels, a.lambda.resolve(&within)?)?
        }
        Method::Rnd => scores::random_scores(x.marker_ids(), x.genes(), a.seed),
    };
    emit(a.out.as_deref(), &io::write_scores(&s, provenance))
}

fn car_factor(x: &GenotypeMatrix, a: &ScoreArgs) -> Result<LowRankCorrelation> {
    if let Some(path) = a.cache.as_deref().filter(|p| p.exists()) {
        let f = cache::load(path)?;
        if f.d() != x.d() {
            return Err(Error::Cache(format!("factor has d = {}, data has d = {}", f.d(), x.d())));
        }
        if let LambdaSpec::Fixed(v) = a.lambda {
            if v != f.lambda() {
                return Err(Error::Cache(format!("factor has lambda = {}, requested {v}", f.lambda())));
            }
        }
        info!("loaded factor of rank {} from {}", f.rank(), path.display());
        return Ok(f);
    }
    let f = LowRankCorrelation::build(x.matrix(), a.lambda.resolve(x.matrix())?)?;
    if let Some(path) = &a.cache {
        cache::save(path, &f)?;
    }
    Ok(f)
}

#[derive(Serialize)]
struct SelectionOutput<'a> {
    provenance: &'a Provenance,
    kind: String,
    lambda: Option<f64>,
    #[serde(flatten)]
    selection: SelectionJson,
}

fn select_cmd(a: &SelectArgs, provenance: &Provenance) -> Result<()> {
    let s = io::read_scores(&a.scores)?;
    let result = match a.top_k {
        Some(k) => select_top_k(&s, k)?,
        None => select(&s, a.fdr_cutoff)?,
    };
    let out = SelectionOutput {
        provenance,
        kind: s.kind.to_string(),
        lambda: s.lambda,
        selection: result.to_json(a.with_fdr),
    };
    let json = serde_json::to_string_pretty(&out).expect("selection serializes") + "\n";
    emit(a.out.as_deref(), &json)
}

fn simulate_cmd(a: &SimulateArgs, provenance: &Provenance) -> Result<()> {
    let sc = a.scenario.load()?;
    let raw = simulate::simulate_genotypes(&sc)?;
    let codes = encode_additive(&raw)?;
    let phenotypes = simulate::simulate_phenotypes(&codes, &sc)?;
    let dir = &a.out_dir;

    let header = format!("# {}\n", provenance.comment());
    io::write_text(&dir.join("scenario.toml"), &(header.clone() + &sc.to_toml()))?;
    io::write_text(&dir.join("genotypes.tsv"), &io::write_genotypes(&raw, provenance))?;
    io::write_text(&dir.join("metadata.tsv"), &io::write_marker_metadata(raw.markers(), provenance))?;

    let beta: BTreeMap<usize, f64> = sc.causal.iter().map(|c| (c.index, c.beta)).collect();
    let mut truth = header + "marker_id\tgene\tmaf\tcausal\tbeta\n";
    for (j, m) in raw.markers().iter().enumerate() {
        let p = codes.column(j).sum() / (2.0 * sc.n as f64);
        let b = beta.get(&j);
        truth.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            m.id,
            m.gene,
            p.min(1.0 - p),
            u8::from(b.is_some()),
            b.copied().unwrap_or(0.0)
        ));
    }
    io::write_text(&dir.join("truth.tsv"), &truth)?;

    let width = (sc.replicates.max(2) - 1).to_string().len().max(3);
    for (b, y) in phenotypes.iter().enumerate() {
        let path = dir.join("phenotypes").join(format!("y_{b:0width$}.tsv"));
        io::write_text(&path, &io::write_phenotypes(raw.samples(), y, provenance))?;
    }
    info!("wrote {} replicates to {}", sc.replicates, dir.display());
    Ok(())
}

/// Marker ids, MAF and causal flags from `truth.tsv`.
fn read_truth(path: &Path) -> Result<BTreeMap<String, (f64, bool)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
    let bad = |line: usize, col: usize, msg: &str| Error::Parse {
        path: path.display().to_string(),
        line: line + 1,
        column: col,
        message: msg.to_string(),
    };
    match lines.next() {
        Some((_, h)) if h.split('\t').take(4).eq(["marker_id", "gene", "maf", "causal"]) => {}
        Some((i, _)) => return Err(bad(i, 1, "expected header marker_id, gene, maf, causal")),
        None => return Err(bad(0, 1, "empty truth file")),
    }
    for (i, l) in lines {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() < 4 {
            return Err(bad(i, f.len() + 1, "too few fields"));
        }
        let maf: f64 = f[2].parse().map_err(|_| bad(i, 3, "maf is not a number"))?;
        let causal = match f[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad(i, 4, "causal flag is not 0 or 1")),
        };
        out.insert(f[0].to_string(), (maf, causal));
    }
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs, provenance: &Provenance) -> Result<()> {
    let truth = read_truth(&a.truth)?;
    let mut by_kind: BTreeMap<ScoreKind, Vec<ScoreVector>> = BTreeMap::new();
    for p in &a.scores {
        let s = io::read_scores(p)?;
        by_kind.entry(s.kind).or_default().push(s);
    }

    // Index markers by the id order of the first file.
    let first = by_kind.values().next().and_then(|v| v.first()).expect("at least one score file");
    let ids = first.marker_ids.clone();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let mut mafs = Vec::with_capacity(ids.len());
    let mut causal_idx = Vec::new();
    for (j, id) in ids.iter().enumerate() {
        let &(maf, causal) = truth
            .get(id)
            .ok_or_else(|| Error::DimensionMismatch(format!("marker `{id}` is not in the truth file")))?;
        mafs.push(maf);
        if causal {
            causal_idx.push(j);
        }
    }
    let dropped = truth.values().filter(|(_, c)| *c).count() - causal_idx.len();
    if dropped > 0 {
        warn!("{dropped} causal markers are absent from the score files");
    }
    let causal = CausalSet::new(ids.len(), causal_idx)?;

    let mut runs = Vec::new();
    for (kind, files) in &by_kind {
        let mut m = MethodRuns {
            method: kind.as_str().to_ascii_lowercase(),
            rankings: Vec::new(),
            model_sizes: (*kind != ScoreKind::Rnd).then(Vec::new),
        };
        for s in files {
            if s.len() != ids.len() {
                return Err(Error::DimensionMismatch(format!("score files differ in marker count ({})", s.len())));
            }
            let ranking = s
                .ranking()
                .into_iter()
                .map(|j| {
                    index.get(s.marker_ids[j].as_str()).copied().ok_or_else(|| {
                        Error::DimensionMismatch(format!("marker `{}` not in the first score file", s.marker_ids[j]))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(sizes) = m.model_sizes.as_mut() {
                sizes.push(select(s, a.fdr_cutoff)?.model_size());
            }
            m.rankings.push(ranking);
        }
        runs.push(m);
    }
    let report = evaluate(
        &EvaluationInput {
            runs: &runs,
            causal: &causal,
            marker_ids: &ids,
            mafs: &mafs,
            k_max: a.k_max,
            window: a.window,
        },
        provenance.clone(),
    )?;
    write_report(&a.out_dir, &report, &report.to_json())
}

fn write_report(dir: &Path, report: &EvaluationReport, json: &str) -> Result<()> {
    io::write_text(&dir.join("report.json"), &format!("{json}\n"))?;
    io::write_text(&dir.join("tp_curve.tsv"), &report.tp_curve_tsv())?;
    io::write_text(&dir.join("model_size.tsv"), &report.model_size_tsv())?;
    io::write_text(&dir.join("rare_common.tsv"), &report.rare_common_tsv())?;
    io::write_text(&dir.join("recovery.tsv"), &report.recovery_tsv())
}

fn bench(a: &BenchArgs, threads: usize) -> Result<()> {
    let cfg = BenchConfig {
        scenario: a.scenario.load()?,
        lambda: a.lambda,
        fdr_cutoff: a.fdr_cutoff,
        k_max: a.k_max,
        window: a.window,
    };
    let result: BenchResult = run_bench(&cfg, threads)?;
    let json = serde_json::to_string_pretty(&result).expect("bench result serializes");
    write_report(&a.out_dir, &result.report, &json)?;
    let r = &result.report;
    for m in ["car", "cor"] {
        let size = r.model_size[m];
        info!(
            "{m}: median size {} (IQR {}), TP at own size {:.2}",
            size.median, size.iqr, r.tp_at_own_size[m]
        );
    }
    Ok(())
}
