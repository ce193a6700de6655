//! Univariate and correlation-adjusted marker scores.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::genomatrix::{GenotypeMatrix, PhenotypeVector};
use crate::lowrank::{LowRankCorrelation, ShrinkageEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScoreKind {
    Cor,
    TScore,
    Car,
    Cat,
    Rnd,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::Cor => "COR",
            ScoreKind::TScore => "TSCORE",
            ScoreKind::Car => "CAR",
            ScoreKind::Cat => "CAT",
            ScoreKind::Rnd => "RND",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "COR" => Ok(ScoreKind::Cor),
            "TSCORE" => Ok(ScoreKind::TScore),
            "CAR" => Ok(ScoreKind::Car),
            "CAT" => Ok(ScoreKind::Cat),
            "RND" => Ok(ScoreKind::Rnd),
            other => Err(format!("unknown score kind {other}")),
        }
    }
}

/// One score per marker, tagged with how it was computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub kind: ScoreKind,
    pub lambda: Option<f64>,
    pub marker_ids: Vec<String>,
    pub genes: Vec<String>,
}

impl ScoreVector {
    fn for_matrix(x: &GenotypeMatrix, values: Vec<f64>, kind: ScoreKind, lambda: Option<f64>) -> Self {
        Self { values, kind, lambda, marker_ids: x.marker_ids(), genes: x.genes() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Marker indices by descending `|value|`, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        rank_by_magnitude(&self.values)
    }
}

pub(crate) fn rank_by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps ascending index among ties
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order
}

fn check_rows(x: &GenotypeMatrix, n: usize) -> Result<()> {
    if x.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "genotype matrix has {} samples, response has {}",
            x.n(),
            n
        )));
    }
    Ok(())
}

/// `Xᵀy / (n - 1)` for standardized `X` and `y`.
pub fn marginal_correlations(x: &GenotypeMatrix, y: &PhenotypeVector) -> Result<ScoreVector> {
    check_rows(x, y.len())?;
    let r = x.matrix().tr_mul(&y.y) / (x.n() as f64 - 1.0);
    Ok(ScoreVector::for_matrix(x, r.data.into(), ScoreKind::Cor, None))
}

fn class_sizes(labels: &[bool]) -> Result<(usize, usize)> {
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    if n0 < 2 || n1 < 2 {
        return Err(Error::SingleClass(n0, n1));
    }
    Ok((n0, n1))
}

/// Two-sample pooled-variance t-statistic per column, class `true` minus
/// class `false`.
pub fn t_scores(x: &GenotypeMatrix, labels: &[bool]) -> Result<ScoreVector> {
    check_rows(x, labels.len())?;
    let (n0, n1) = class_sizes(labels)?;
    let (f0, f1) = (n0 as f64, n1 as f64);
    let mut out = Vec::with_capacity(x.d());
    for (j, col) in x.matrix().column_iter().enumerate() {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (&v, &l) in col.iter().zip(labels) {
            if l {
                s1 += v;
            } else {
                s0 += v;
            }
        }
        let (m0, m1) = (s0 / f0, s1 / f1);
        let mut ss = 0.0;
        for (&v, &l) in col.iter().zip(labels) {
            let c = if l { v - m1 } else { v - m0 };
            ss += c * c;
        }
        let pooled = ss / (f0 + f1 - 2.0);
        if !(pooled > 0.0) {
            return Err(Error::ZeroPooledVariance(x.markers()[j].id.clone()));
        }
        out.push((m1 - m0) / (pooled.sqrt() * (1.0 / f0 + 1.0 / f1).sqrt()));
    }
    Ok(ScoreVector::for_matrix(x, out, ScoreKind::TScore, None))
}

/// CAR scores `R^{-1/2} r_XY` with the shrinkage correlation factor built
/// from `x`.
pub fn car_scores(
    x: &GenotypeMatrix,
    y: &PhenotypeVector,
    lambda: ShrinkageEstimate,
) -> Result<ScoreVector> {
    let factor = LowRankCorrelation::build(x.matrix(), lambda)?;
    car_scores_with(&factor, x, y)
}

/// CAR scores against a precomputed factor, for reuse across replicates.
pub fn car_scores_with(
    factor: &LowRankCorrelation,
    x: &GenotypeMatrix,
    y: &PhenotypeVector,
) -> Result<ScoreVector> {
    let cor = marginal_correlations(x, y)?;
    let adj = factor.adjust(&DVector::from_vec(cor.values))?;
    Ok(ScoreVector::for_matrix(x, adj.data.into(), ScoreKind::Car, Some(factor.lambda())))
}

/// Data centered within each class, then scaled to unit sample variance
/// over all samples. Its `XᵀX/(n-1)` is the pooled within-class
/// correlation matrix.
pub fn pooled_within_class(x: &GenotypeMatrix, labels: &[bool]) -> Result<DMatrix<f64>> {
    check_rows(x, labels.len())?;
    let (n0, n1) = class_sizes(labels)?;
    let mut out = x.matrix().clone();
    let n = x.n() as f64;
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (&v, &l) in col.iter().zip(labels) {
            if l {
                s1 += v;
            } else {
                s0 += v;
            }
        }
        let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
        for (v, &l) in col.iter_mut().zip(labels) {
            *v -= if l { m1 } else { m0 };
        }
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ZeroPooledVariance(x.markers()[j].id.clone()));
        }
        col /= sd;
    }
    Ok(out)
}

/// CAT scores `R^{-1/2} τ`, with `R` the shrinkage pooled within-class
/// correlation matrix.
pub fn cat_scores(
    x: &GenotypeMatrix,
    labels: &[bool],
    lambda: ShrinkageEstimate,
) -> Result<ScoreVector> {
    let t = t_scores(x, labels)?;
    let within = pooled_within_class(x, labels)?;
    let factor = LowRankCorrelation::build(&within, lambda)?;
    let adj = factor.adjust(&DVector::from_vec(t.values))?;
    Ok(ScoreVector::for_matrix(x, adj.data.into(), ScoreKind::Cat, Some(factor.lambda())))
}

/// Random ordering: a uniform permutation encoded as scores `d, d-1, ..., 1`
/// so that ranking by magnitude reproduces the permutation.
pub fn random_scores(marker_ids: Vec<String>, genes: Vec<String>, seed: u64) -> ScoreVector {
    let d = marker_ids.len();
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut values = vec![0.0; d];
    for (pos, &j) in perm.iter().enumerate() {
        values[j] = (d - pos) as f64;
    }
    ScoreVector { values, kind: ScoreKind::Rnd, lambda: None, marker_ids, genes }
}

/// Variance explained by adjusted scores: `R²` for CAR, Hotelling's `T²`
/// for CAT, split by gene.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSummary {
    pub kind: ScoreKind,
    pub total: f64,
    pub per_group: BTreeMap<String, f64>,
}

pub fn decompose(s: &ScoreVector, genes: &[String]) -> Result<DecompositionSummary> {
    if !matches!(s.kind, ScoreKind::Car | ScoreKind::Cat) {
        return Err(Error::DecompositionUnsupported(s.kind.to_string()));
    }
    if genes.len() != s.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gene labels for {} scores",
            genes.len(),
            s.len()
        )));
    }
    let mut per_group = BTreeMap::new();
    for (v, g) in s.values.iter().zip(genes) {
        *per_group.entry(g.clone()).or_insert(0.0) += v * v;
    }
    let total = s.values.iter().map(|v| v * v).sum();
    Ok(DecompositionSummary { kind: s.kind, total, per_group })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genomatrix::{standardize_columns, MarkerMeta};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gm(x: DMatrix<f64>) -> GenotypeMatrix {
        let x = standardize_columns(&x).unwrap();
        let markers = (0..x.ncols())
            .map(|j| MarkerMeta { id: format!("m{j}"), gene: format!("g{}", j % 3), maf: 0.3 })
            .collect();
        GenotypeMatrix::from_standardized(x, markers).unwrap()
    }

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn pheno(v: &[f64]) -> PhenotypeVector {
        PhenotypeVector::standardized(v, 1).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let x = gm(random(20, 5, 1));
        let y = PhenotypeVector { y: x.matrix().column(2).into_owned(), replicate: 1 };
        let r = marginal_correlations(&x, &y).unwrap();
        assert!((r.values[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_column_has_zero_correlation() {
        let x = gm(DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]));
        let y = pheno(&[1.0, 1.0, -1.0, -1.0]);
        assert!(marginal_correlations(&x, &y).unwrap().values[0].abs() < 1e-12);
    }

    #[test]
    fn correlations_match_pairwise_pearson() {
        let raw = random(30, 10, 2);
        let x = gm(raw.clone());
        let yraw: Vec<f64> = random(30, 1, 3).column(0).iter().copied().collect();
        let r = marginal_correlations(&x, &pheno(&yraw)).unwrap();
        let n = 30;
        let my = yraw.iter().sum::<f64>() / n as f64;
        for j in 0..10 {
            let mx = (0..n).map(|i| raw[(i, j)]).sum::<f64>() / n as f64;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let a = raw[(i, j)] - mx;
                let b = yraw[i] - my;
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            assert!((r.values[j] - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = gm(random(10, 3, 1));
        assert!(marginal_correlations(&x, &pheno(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn t_is_zero_when_classes_look_alike() {
        let col = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let x = gm(DMatrix::from_column_slice(6, 1, &col));
        let labels = [false, false, false, true, true, true];
        assert!(t_scores(&x, &labels).unwrap().values[0].abs() < 1e-12);
    }

    #[test]
    fn zero_within_class_variance_is_an_error() {
        let x = gm(DMatrix::from_column_slice(4, 1, &[-1.0, -1.0, 1.0, 1.0]));
        let err = t_scores(&x, &[false, false, true, true]).unwrap_err();
        assert!(matches!(err, Error::ZeroPooledVariance(ref id) if id == "m0"));
    }

    #[test]
    fn single_class_is_an_error() {
        let x = gm(random(5, 2, 4));
        assert!(matches!(t_scores(&x, &[true; 5]), Err(Error::SingleClass(0, 5))));
        assert!(matches!(
            t_scores(&x, &[true, false, false, false, false]),
            Err(Error::SingleClass(4, 1))
        ));
    }

    #[test]
    fn t_matches_textbook_formula() {
        let raw = random(40, 8, 5);
        let x = gm(raw.clone());
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let t = t_scores(&x, &labels).unwrap();
        for j in 0..8 {
            let a: Vec<f64> = (0..40).filter(|&i| labels[i]).map(|i| x.matrix()[(i, j)]).collect();
            let b: Vec<f64> = (0..40).filter(|&i| !labels[i]).map(|i| x.matrix()[(i, j)]).collect();
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let ma = a.iter().sum::<f64>() / na;
            let mb = b.iter().sum::<f64>() / nb;
            let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (na - 1.0);
            let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (nb - 1.0);
            let sp = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
            let expected = (ma - mb) / (sp * (1.0 / na + 1.0 / nb).sqrt());
            assert!((t.values[j] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn car_at_lambda_one_is_cor() {
        let x = gm(random(25, 60, 6));
        let y = pheno(random(25, 1, 7).as_slice());
        let cor = marginal_correlations(&x, &y).unwrap();
        let car = car_scores(&x, &y, ShrinkageEstimate::fixed(1.0).unwrap()).unwrap();
        assert_eq!(car.values, cor.values);
        assert_eq!(car.kind, ScoreKind::Car);
        assert_eq!(car.lambda, Some(1.0));
    }

    #[test]
    fn cat_at_lambda_one_is_t() {
        let x = gm(random(25, 60, 8));
        let labels: Vec<bool> = (0..25).map(|i| i % 2 == 0).collect();
        let t = t_scores(&x, &labels).unwrap();
        let cat = cat_scores(&x, &labels, ShrinkageEstimate::fixed(1.0).unwrap()).unwrap();
        assert_eq!(cat.values, t.values);
    }

    #[test]
    fn duplicated_columns_share_car_and_cat() {
        let mut raw = random(30, 40, 9);
        let c = raw.column(4).into_owned();
        raw.set_column(17, &c);
        let x = gm(raw);
        let y: Vec<f64> = (0..30).map(|i| x.matrix()[(i, 4)] + 0.5 * ((i * 13 % 7) as f64 - 3.0)).collect();
        let car = car_scores(&x, &pheno(&y), ShrinkageEstimate::fixed(0.1).unwrap()).unwrap();
        assert!((car.values[4] - car.values[17]).abs() < 1e-10);
        assert!(car.values[4].abs() > 0.05);
        let labels: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
        let cat = cat_scores(&x, &labels, ShrinkageEstimate::fixed(0.1).unwrap()).unwrap();
        assert!((cat.values[4] - cat.values[17]).abs() < 1e-10);
    }

    #[test]
    fn antagonistic_pair_scores_are_low() {
        let n = 200;
        let noise = random(n, 2, 12);
        let base = random(n, 1, 13);
        let x = gm(DMatrix::from_fn(n, 2, |i, j| base[(i, 0)] + 0.05 * noise[(i, j)]));
        let rho = x.matrix().column(0).dot(&x.matrix().column(1)) / (n as f64 - 1.0);
        assert!(rho > 0.99);
        let col = |j: usize| x.matrix().column(j).into_owned();
        let anti: Vec<f64> = (col(0) - col(1)).iter().copied().collect();
        let conc: Vec<f64> = (col(0) + col(1)).iter().copied().collect();
        for lam in [0.01, 0.1, 0.5] {
            let est = ShrinkageEstimate::fixed(lam).unwrap();
            let a = car_scores(&x, &pheno(&anti), est).unwrap();
            let c = car_scores(&x, &pheno(&conc), est).unwrap();
            // Shrinkage regression coefficients beta = R^-1 r for the 2x2 case.
            let r = marginal_correlations(&x, &pheno(&anti)).unwrap().values;
            let off = (1.0 - lam) * rho;
            let det = 1.0 - off * off;
            let beta = [(r[0] - off * r[1]) / det, (r[1] - off * r[0]) / det];
            for j in 0..2 {
                assert!(a.values[j].abs() < beta[j].abs(), "lambda {lam}");
                assert!(a.values[j].abs() < c.values[j].abs(), "lambda {lam}");
                assert!(a.values[j].signum() != a.values[1 - j].signum());
            }
        }
    }

    #[test]
    fn ranking_is_by_magnitude_then_index() {
        let s = ScoreVector {
            values: vec![0.1, -0.9, 0.5, 0.9, -0.5],
            kind: ScoreKind::Cor,
            lambda: None,
            marker_ids: vec![String::new(); 5],
            genes: vec![String::new(); 5],
        };
        assert_eq!(s.ranking(), vec![1, 3, 2, 4, 0]);
    }

    #[test]
    fn decomposition_rejects_unadjusted_scores() {
        let s = random_scores(vec!["a".into()], vec!["g".into()], 1);
        assert!(matches!(decompose(&s, &["g".into()]), Err(Error::DecompositionUnsupported(_))));
    }

    #[test]
    fn decomposition_totals() {
        let s = ScoreVector {
            values: vec![0.0; 4],
            kind: ScoreKind::Car,
            lambda: Some(0.1),
            marker_ids: vec![String::new(); 4],
            genes: vec![String::new(); 4],
        };
        let genes: Vec<String> = ["a", "b", "a", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(decompose(&s, &genes).unwrap().total, 0.0);

        let s = ScoreVector { values: vec![0.3, -0.2, 0.1, 0.4], ..s };
        let one = vec!["all".to_string(); 4];
        let dec = decompose(&s, &one).unwrap();
        assert!((dec.per_group["all"] - dec.total).abs() < 1e-15);
        let dec = decompose(&s, &genes).unwrap();
        assert!((dec.per_group["a"] - 0.1).abs() < 1e-15);
        let sum: f64 = dec.per_group.values().sum();
        assert!((sum - dec.total).abs() < 1e-12);
    }

    #[test]
    fn random_scores_reproducible_permutation() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let a = random_scores(ids.clone(), ids.clone(), 42);
        let b = random_scores(ids.clone(), ids.clone(), 42);
        assert_eq!(a, b);
        let mut v = a.values.clone();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn random_scores_rank_first_uniformly() {
        let d = 8;
        let draws = 10_000;
        let ids: Vec<String> = (0..d).map(|i| i.to_string()).collect();
        let mut first = vec![0usize; d];
        for seed in 0..draws {
            let s = random_scores(ids.clone(), ids.clone(), seed as u64);
            first[s.ranking()[0]] += 1;
        }
        let p = 1.0 / d as f64;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &first {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{first:?}");
        }
    }

    #[test]
    fn car_ranking_invariant_to_positive_scaling_of_y() {
        let x = gm(random(30, 50, 10));
        let y: Vec<f64> = random(30, 1, 11).iter().copied().collect();
        let y5: Vec<f64> = y.iter().map(|v| v * 5.0).collect();
        let lam = ShrinkageEstimate::fixed(0.1).unwrap();
        let a = car_scores(&x, &pheno(&y), lam).unwrap();
        let b = car_scores(&x, &pheno(&y5), lam).unwrap();
        assert_eq!(a.ranking(), b.ranking());
    }
}
