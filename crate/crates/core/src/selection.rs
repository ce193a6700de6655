//! Model-size selection by local false discovery rates.
//!
//! Scores are folded to `z = |score|` and modelled as a two-component
//! mixture. The null is a half-normal whose scale is fitted by truncated
//! maximum likelihood on the lower 75% of `z`; the mixture density is the
//! Grenander estimate (slope of the least concave majorant of the empirical
//! CDF). The local fdr `min(1, η0 f0(z) / f(z))` is then forced to be
//! non-increasing in `z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{rank_by_magnitude, ScoreVector};
use crate::stats::{half_normal_cdf, half_normal_pdf, quantile_sorted};

/// Default cutoff on the local fdr.
pub const DEFAULT_CUTOFF: f64 = 0.5;
/// Fewest scores for which the null fit is attempted.
pub const MIN_SCORES: usize = 50;
/// Quantile of `z` at which the null fit is truncated.
pub const TRUNCATION_QUANTILE: f64 = 0.75;

/// Local fdr per marker plus the fitted null.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFdr {
    pub fdr: Vec<f64>,
    pub eta0: f64,
    pub null_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Marker indices by descending `|score|`.
    pub ranked: Vec<usize>,
    pub ranked_ids: Vec<String>,
    /// Selected marker indices, in rank order.
    pub selected: Vec<usize>,
    pub selected_ids: Vec<String>,
    pub cutoff: Option<f64>,
    pub local_fdr: Option<LocalFdr>,
}

impl SelectionResult {
    pub fn model_size(&self) -> usize {
        self.selected.len()
    }

    pub fn to_json(&self, include_fdr: bool) -> SelectionJson {
        SelectionJson {
            cutoff: self.cutoff,
            eta0: self.local_fdr.as_ref().map(|l| l.eta0),
            null_scale: self.local_fdr.as_ref().map(|l| l.null_scale),
            model_size: self.model_size(),
            selected: self.selected_ids.clone(),
            fdr: if include_fdr { self.local_fdr.as_ref().map(|l| l.fdr.clone()) } else { None },
        }
    }
}

/// Serialized form of a [`SelectionResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionJson {
    pub cutoff: Option<f64>,
    pub eta0: Option<f64>,
    pub null_scale: Option<f64>,
    pub model_size: usize,
    pub selected: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fdr: Option<Vec<f64>>,
}

pub fn local_fdr(s: &ScoreVector) -> Result<LocalFdr> {
    local_fdr_values(&s.values)
}

pub(crate) fn local_fdr_values(values: &[f64]) -> Result<LocalFdr> {
    let d = values.len();
    if d < MIN_SCORES {
        return Err(Error::TooFewScores { needed: MIN_SCORES, got: d });
    }
    let z: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| z[i]).collect();
    if sorted[0] == sorted[d - 1] {
        return Err(Error::DegenerateScores);
    }

    let cut = quantile_sorted(&sorted, TRUNCATION_QUANTILE);
    let below = sorted.partition_point(|&v| v <= cut);
    let null_scale = fit_truncated_half_normal(&sorted[..below], cut)?;
    let eta0 = ((below as f64 / d as f64) / half_normal_cdf(cut, null_scale)).clamp(0.0, 1.0);

    let density = grenander(&sorted);
    let mut fdr_sorted: Vec<f64> = sorted
        .iter()
        .zip(&density)
        .map(|(&v, &f)| {
            let f0 = half_normal_pdf(v, null_scale);
            if f > 0.0 { (eta0 * f0 / f).min(1.0) } else { 1.0 }
        })
        .collect();
    // Non-increasing in z: carry the running maximum down from the top.
    for i in (0..d - 1).rev() {
        fdr_sorted[i] = fdr_sorted[i].max(fdr_sorted[i + 1]);
    }

    let mut fdr = vec![0.0; d];
    for (&i, &v) in order.iter().zip(&fdr_sorted) {
        fdr[i] = v;
    }
    Ok(LocalFdr { fdr, eta0, null_scale })
}

/// ML scale of a half-normal truncated to `[0, cut]`. The search runs on
/// `σ / cut`, so the fit is exactly equivariant under rescaling of `z`.
fn fit_truncated_half_normal(sample: &[f64], cut: f64) -> Result<f64> {
    if sample.len() < 2 || !(cut > 0.0) {
        return Err(Error::DegenerateScores);
    }
    let k = sample.len() as f64;
    let mean_sq = sample.iter().map(|v| (v / cut).powi(2)).sum::<f64>() / k;
    // Negative log-likelihood per point in terms of s = σ / cut.
    let nll = |log_s: f64| {
        let s = log_s.exp();
        log_s + mean_sq / (2.0 * s * s) + half_normal_cdf(1.0, s).ln()
    };
    let log_s = golden_section_min(nll, (1e-3f64).ln(), (1e3f64).ln(), 1e-12);
    Ok(log_s.exp() * cut)
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Grenander density at each point of sorted non-negative data: the slope
/// of the least concave majorant of the empirical CDF on the segment that
/// ends at (or contains) the point. Tied values share one knot.
pub(crate) fn grenander(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len() as f64;
    // Knots: distinct values with cumulative mass, anchored at the origin.
    let mut xs = vec![0.0];
    let mut fs = vec![0.0];
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        if v == 0.0 {
            // mass at zero replaces the origin anchor
            fs[0] = j as f64 / n;
        } else {
            xs.push(v);
            fs.push(j as f64 / n);
        }
        i = j;
    }

    let mut hull: Vec<usize> = vec![0];
    for k in 1..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let s_ab = (fs[b] - fs[a]) / (xs[b] - xs[a]);
            let s_bk = (fs[k] - fs[b]) / (xs[k] - xs[b]);
            if s_bk >= s_ab {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }

    // Slope for every knot index 1..: the hull segment that covers it.
    let mut knot_slope = vec![0.0; xs.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (fs[b] - fs[a]) / (xs[b] - xs[a]);
        for s in &mut knot_slope[a + 1..=b] {
            *s = slope;
        }
    }
    // A zero-valued knot takes the first segment's slope.
    if xs.len() > 1 {
        knot_slope[0] = knot_slope[1];
    }

    let mut out = Vec::with_capacity(sorted.len());
    let mut knot = 0;
    for &v in sorted {
        if v == 0.0 {
            out.push(knot_slope[0]);
            continue;
        }
        while xs[knot] != v {
            knot += 1;
        }
        out.push(knot_slope[knot]);
    }
    out
}

/// Markers with local fdr strictly below `cutoff`.
pub fn select(s: &ScoreVector, cutoff: f64) -> Result<SelectionResult> {
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::InvalidCutoff(cutoff));
    }
    let lfdr = local_fdr(s)?;
    let ranked = s.ranking();
    let selected: Vec<usize> = ranked.iter().copied().filter(|&j| lfdr.fdr[j] < cutoff).collect();
    Ok(build_result(s, ranked, selected, Some(cutoff), Some(lfdr)))
}

/// The `k` markers with the largest `|score|`.
pub fn select_top_k(s: &ScoreVector, k: usize) -> Result<SelectionResult> {
    if k == 0 || k > s.len() {
        return Err(Error::KOutOfRange { k, d: s.len() });
    }
    let ranked = rank_by_magnitude(&s.values);
    let selected = ranked[..k].to_vec();
    Ok(build_result(s, ranked, selected, None, None))
}

fn build_result(
    s: &ScoreVector,
    ranked: Vec<usize>,
    selected: Vec<usize>,
    cutoff: Option<f64>,
    local_fdr: Option<LocalFdr>,
) -> SelectionResult {
    let ids = |idx: &[usize]| idx.iter().map(|&j| s.marker_ids[j].clone()).collect();
    SelectionResult {
        ranked_ids: ids(&ranked),
        selected_ids: ids(&selected),
        ranked,
        selected,
        cutoff,
        local_fdr,
    }
}
