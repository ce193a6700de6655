//! Scoring of rankings against a known causal set.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Provenance;
use crate::stats::median_iqr;

/// Rare-variant threshold on minor allele frequency.
pub const RARE_MAF: f64 = 0.01;
pub const DEFAULT_WINDOW: usize = 100;

/// Causal marker indices over a panel of `d` markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalSet {
    mask: Vec<bool>,
    members: Vec<usize>,
}

impl CausalSet {
    pub fn new(d: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; d];
        for j in indices {
            if j >= d {
                return Err(Error::DimensionMismatch(format!("causal index {j} >= d = {d}")));
            }
            mask[j] = true;
        }
        let members = (0..d).filter(|&j| mask[j]).collect();
        Ok(Self { mask, members })
    }

    pub fn d(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.mask.get(j).copied().unwrap_or(false)
    }

    /// Sorted member indices.
    pub fn members(&self) -> &[usize] {
        &self.members
    }
}

/// `|top-k ∩ causal|`; `k` past the end of the ranking counts the whole ranking.
pub fn true_positives_at_k(ranking: &[usize], causal: &CausalSet, k: usize) -> usize {
    ranking.iter().take(k).filter(|&&j| causal.contains(j)).count()
}

/// TP@k for `k = 1..=k_max`.
pub fn tp_curve(ranking: &[usize], causal: &CausalSet, k_max: usize) -> Vec<usize> {
    let mut hits = 0;
    (0..k_max)
        .map(|i| {
            if ranking.get(i).is_some_and(|&j| causal.contains(j)) {
                hits += 1;
            }
            hits
        })
        .collect()
}

/// One method's output on each replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRuns {
    pub method: String,
    pub rankings: Vec<Vec<usize>>,
    /// Selected model size per replicate; `None` for methods without a
    /// selection rule.
    pub model_sizes: Option<Vec<usize>>,
}

/// `table[m][r]`: mean TP of `r`'s ranking truncated at `m`'s model size,
/// replicate by replicate. Only methods with model sizes appear as rows.
pub fn cross_method_tp(runs: &[MethodRuns], causal: &CausalSet) -> BTreeMap<String, BTreeMap<String, f64>> {
    let d = causal.d();
    let mut table = BTreeMap::new();
    for m in runs {
        let Some(sizes) = &m.model_sizes else { continue };
        let row = runs
            .iter()
            .map(|r| {
                let total: usize = sizes
                    .iter()
                    .zip(&r.rankings)
                    .map(|(&k, ranking)| true_positives_at_k(ranking, causal, k.min(d)))
                    .sum();
                (r.method.clone(), total as f64 / sizes.len().max(1) as f64)
            })
            .collect();
        table.insert(m.method.clone(), row);
    }
    table
}

/// Per causal marker (in `causal.members()` order), the number of rankings
/// placing it in the top `window`.
pub fn recovery_frequency(rankings: &[Vec<usize>], causal: &CausalSet, window: usize) -> Vec<usize> {
    let mut slot = vec![usize::MAX; causal.d()];
    for (s, &j) in causal.members().iter().enumerate() {
        slot[j] = s;
    }
    let mut counts = vec![0; causal.len()];
    for ranking in rankings {
        for &j in ranking.iter().take(window) {
            if causal.contains(j) {
                counts[slot[j]] += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RareCommon {
    pub rare: f64,
    pub common: f64,
    pub true_positives: usize,
}

/// Split of the true positives found in the top `window`, pooled over all
/// rankings. `None` when no causal marker is found.
pub fn rare_common_split(
    rankings: &[Vec<usize>],
    causal: &CausalSet,
    mafs: &[f64],
    window: usize,
) -> Option<RareCommon> {
    let (mut rare, mut total) = (0usize, 0usize);
    for ranking in rankings {
        for &j in ranking.iter().take(window) {
            if causal.contains(j) {
                total += 1;
                if mafs[j] < RARE_MAF {
                    rare += 1;
                }
            }
        }
    }
    (total > 0).then(|| RareCommon {
        rare: rare as f64 / total as f64,
        common: (total - rare) as f64 / total as f64,
        true_positives: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub median: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub provenance: Provenance,
    pub replicates: usize,
    pub d: usize,
    pub causal: usize,
    pub window: usize,
    pub methods: Vec<String>,
    /// Mean TP@k for `k = 1..=k_max`.
    pub tp_at_k: BTreeMap<String, Vec<f64>>,
    pub model_size: BTreeMap<String, SizeSummary>,
    pub tp_at_own_size: BTreeMap<String, f64>,
    /// Row: method whose model size is used; column: method whose ranking is cut.
    pub cross_tp: BTreeMap<String, BTreeMap<String, f64>>,
    /// Expected TP of a uniformly random ranking at each method's sizes.
    pub random_expectation: BTreeMap<String, f64>,
    /// Method → causal marker id → count in `0..=replicates`.
    pub recovery: BTreeMap<String, BTreeMap<String, usize>>,
    pub rare_common: BTreeMap<String, Option<RareCommon>>,
}

pub struct EvaluationInput<'a> {
    pub runs: &'a [MethodRuns],
    pub causal: &'a CausalSet,
    pub marker_ids: &'a [String],
    pub mafs: &'a [f64],
    pub k_max: usize,
    pub window: usize,
}

pub fn evaluate(input: &EvaluationInput<'_>, provenance: Provenance) -> Result<EvaluationReport> {
    let EvaluationInput { runs, causal, marker_ids, mafs, k_max, window } = *input;
    let d = causal.d();
    if marker_ids.len() != d || mafs.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} ids and {} MAFs for {d} markers",
            marker_ids.len(),
            mafs.len()
        )));
    }
    let replicates = runs.first().map_or(0, |r| r.rankings.len());
    if replicates == 0 {
        return Err(Error::InvalidScenario("no replicates to evaluate".into()));
    }
    for r in runs {
        let sizes_ok = r.model_sizes.as_ref().is_none_or(|s| s.len() == replicates);
        if r.rankings.len() != replicates || !sizes_ok {
            return Err(Error::DimensionMismatch(format!(
                "method {} has a different replicate count",
                r.method
            )));
        }
    }

    let k_max = k_max.min(d);
    let mut report = EvaluationReport {
        provenance,
        replicates,
        d,
        causal: causal.len(),
        window,
        methods: runs.iter().map(|r| r.method.clone()).collect(),
        tp_at_k: BTreeMap::new(),
        model_size: BTreeMap::new(),
        tp_at_own_size: BTreeMap::new(),
        cross_tp: cross_method_tp(runs, causal),
        random_expectation: BTreeMap::new(),
        recovery: BTreeMap::new(),
        rare_common: BTreeMap::new(),
    };

    for r in runs {
        let mut sums = vec![0usize; k_max];
        for ranking in &r.rankings {
            for (s, tp) in sums.iter_mut().zip(tp_curve(ranking, causal, k_max)) {
                *s += tp;
            }
        }
        let means = sums.into_iter().map(|s| s as f64 / replicates as f64).collect();
        report.tp_at_k.insert(r.method.clone(), means);

        if let Some(sizes) = &r.model_sizes {
            let (median, iqr) = median_iqr(sizes);
            report.model_size.insert(r.method.clone(), SizeSummary { median, iqr });
            report.tp_at_own_size.insert(r.method.clone(), report.cross_tp[&r.method][&r.method]);
            let mean_size = sizes.iter().map(|&k| k.min(d)).sum::<usize>() as f64 / replicates as f64;
            report
                .random_expectation
                .insert(r.method.clone(), mean_size * causal.len() as f64 / d as f64);
        }

        let counts = recovery_frequency(&r.rankings, causal, window);
        let per_marker = causal
            .members()
            .iter()
            .zip(counts)
            .map(|(&j, c)| (marker_ids[j].clone(), c))
            .collect();
        report.recovery.insert(r.method.clone(), per_marker);
        report
            .rare_common
            .insert(r.method.clone(), rare_common_split(&r.rankings, causal, mafs, window));
    }
    Ok(report)
}

impl EvaluationReport {
    fn header(&self) -> String {
        format!("# {}\n", self.provenance.comment())
    }

    /// Long format `k, method, mean_tp`.
    pub fn tp_curve_tsv(&self) -> String {
        let mut out = self.header();
        out.push_str("k\tmethod\tmean_tp\n");
        for m in &self.methods {
            for (i, v) in self.tp_at_k[m].iter().enumerate() {
                let _ = writeln!(out, "{}\t{m}\t{v}", i + 1);
            }
        }
        out
    }

    /// Model size summary with TP of every ranking at that size.
    pub fn model_size_tsv(&self) -> String {
        let mut out = self.header();
        out.push_str("method\tmedian_size\tiqr_size\trandom_expectation");
        for m in &self.methods {
            let _ = write!(out, "\ttp_{m}");
        }
        out.push('\n');
        for (m, s) in &self.model_size {
            let _ = write!(out, "{m}\t{}\t{}\t{}", s.median, s.iqr, self.random_expectation[m]);
            for r in &self.methods {
                let _ = write!(out, "\t{}", self.cross_tp[m][r]);
            }
            out.push('\n');
        }
        out
    }

    pub fn rare_common_tsv(&self) -> String {
        let mut out = self.header();
        out.push_str("method\tcommon\trare\ttrue_positives\n");
        for (m, rc) in &self.rare_common {
            match rc {
                Some(rc) => {
                    let _ = writeln!(out, "{m}\t{}\t{}\t{}", rc.common, rc.rare, rc.true_positives);
                }
                None => {
                    let _ = writeln!(out, "{m}\tNA\tNA\t0");
                }
            }
        }
        out
    }

    pub fn recovery_tsv(&self) -> String {
        let mut out = self.header();
        out.push_str("method\tmarker_id\tcount\treplicates\n");
        for (m, counts) in &self.recovery {
            for (id, c) in counts {
                let _ = writeln!(out, "{m}\t{id}\t{c}\t{}", self.replicates);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
