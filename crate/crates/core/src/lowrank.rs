//! Low-rank representation of the shrinkage correlation matrix.
//!
//! For standardized `X` (`n × d`) the shrinkage estimate
//! `R = λI + (1-λ) XᵀX/(n-1)` is stored as `λ(I + U M Uᵀ)`, where `U`
//! (`d × m`) holds the eigenvectors of the empirical correlation matrix with
//! non-negligible eigenvalues `s` and `M = diag((1-λ)/λ · s)`. Any real power
//! then reduces to a power of the `m × m` diagonal `I + M`:
//!
//! `R^α = λ^α (I - U (I - (I + M)^α) Uᵀ)`
//!
//! No `d × d` buffer is ever allocated when `n < d`; the eigenproblem is
//! solved on the `n × n` Gram matrix instead.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest admissible shrinkage intensity.
pub const MIN_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSource {
    Fixed,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageEstimate {
    value: f64,
    source: LambdaSource,
}

impl ShrinkageEstimate {
    /// A user-chosen intensity in `(0, 1]`, clamped below at [`MIN_LAMBDA`].
    pub fn fixed(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::InvalidLambda(value));
        }
        Ok(Self { value: value.max(MIN_LAMBDA), source: LambdaSource::Fixed })
    }

    fn analytic(raw: f64) -> Self {
        let value = if raw.is_nan() { 1.0 } else { raw.clamp(MIN_LAMBDA, 1.0) };
        Self { value, source: LambdaSource::Analytic }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn source(&self) -> LambdaSource {
        self.source
    }
}

/// Analytic shrinkage intensity towards the identity for a standardized
/// matrix: `Σ_{i≠j} Var(r_ij) / Σ_{i≠j} r_ij²`.
///
/// The pairwise sums are rewritten through row norms and the `n × n` Gram
/// matrix, so the cost is `O(n²d)` and no `d × d` matrix is formed.
pub fn estimate_lambda_analytic(x: &DMatrix<f64>) -> Result<ShrinkageEstimate> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let nf = n as f64;

    // Σ_{i≠j} Σ_k (x_ki x_kj)² = Σ_k [(Σ_i x_ki²)² - Σ_i x_ki⁴]
    let s1: f64 = x
        .row_iter()
        .map(|row| {
            let (sq, quart) = row.iter().fold((0.0, 0.0), |(a, b), &v| {
                let v2 = v * v;
                (a + v2, b + v2 * v2)
            });
            sq * sq - quart
        })
        .sum();

    // Σ_{i,j} (XᵀX)_ij² = ‖XXᵀ‖_F², minus the diagonal (Σ_k x_ki²)².
    let gram = x * x.transpose();
    let frob = gram.norm_squared();
    let diag: f64 = x.column_iter().map(|c| c.norm_squared().powi(2)).sum();
    // w̄_ij = (1/n) Σ_k x_ki x_kj
    let sum_wbar_sq = (frob - diag) / (nf * nf);

    let sum_var = nf / (nf - 1.0).powi(3) * (s1 - nf * sum_wbar_sq);
    let sum_r_sq = (nf / (nf - 1.0)).powi(2) * sum_wbar_sq;
    let raw = if sum_r_sq <= 0.0 { 1.0 } else { sum_var / sum_r_sq };
    Ok(ShrinkageEstimate::analytic(raw))
}

/// `R = λ(I + U diag(M) Uᵀ)` without the `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankCorrelation {
    lambda: f64,
    u: DMatrix<f64>,
    m: DVector<f64>,
}

impl LowRankCorrelation {
    /// Factorizes the shrinkage correlation matrix of a standardized `X`.
    ///
    /// Eigenvalues of `XᵀX/(n-1)` at or below `max(n, d)·ε·s_max` are
    /// treated as zero. For `λ = 1` the factor is empty.
    pub fn build(x: &DMatrix<f64>, lambda: ShrinkageEstimate) -> Result<Self> {
        let (n, d) = x.shape();
        let lam = lambda.value();
        if !(lam > 0.0 && lam <= 1.0) {
            return Err(Error::InvalidLambda(lam));
        }
        if lam == 1.0 || n < 2 || d == 0 {
            return Ok(Self { lambda: lam, u: DMatrix::zeros(d, 0), m: DVector::zeros(0) });
        }
        let scale = 1.0 / (n as f64 - 1.0);
        let (values, u) = if n < d {
            gram_route(x, scale)?
        } else {
            let xt = x.transpose();
            let cov = (&xt * x) * scale;
            let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0)
                .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
            let order = descending_order(&eig.eigenvalues);
            let keep = kept_count(&eig.eigenvalues, &order, n.max(d));
            let mut u = DMatrix::zeros(d, keep);
            let mut vals = DVector::zeros(keep);
            for (c, &idx) in order.iter().take(keep).enumerate() {
                u.set_column(c, &eig.eigenvectors.column(idx));
                vals[c] = eig.eigenvalues[idx];
            }
            (vals, u)
        };
        let ratio = (1.0 - lam) / lam;
        Ok(Self { lambda: lam, u, m: values * ratio })
    }

    /// Reassembles a factor from stored parts, checking the invariants that
    /// are cheap to check.
    pub fn from_parts(lambda: f64, u: DMatrix<f64>, m: DVector<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidLambda(lambda));
        }
        if u.ncols() != m.len() {
            return Err(Error::DimensionMismatch(format!(
                "U has {} columns, M has {} entries",
                u.ncols(),
                m.len()
            )));
        }
        if m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Numerical("M must be strictly positive".into()));
        }
        Ok(Self { lambda, u, m })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn m(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn d(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// `R^α v` in `O(dm)`.
    pub fn power_apply(&self, alpha: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        if alpha == 0.0 {
            return Ok(v.clone());
        }
        let inner: DVector<f64> = self.m.map(|mi| 1.0 - (1.0 + mi).powf(alpha));
        Ok(self.apply_correction(v, &inner, self.lambda.powf(alpha)))
    }

    /// `R^{-1/2} r`: the correlation-adjusted version of a score vector.
    pub fn adjust(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(r)?;
        if self.lambda <= 0.0 {
            return Err(Error::InvalidLambda(self.lambda));
        }
        let inner: DVector<f64> = self.m.map(|mi| 1.0 - 1.0 / (1.0 + mi).sqrt());
        Ok(self.apply_correction(r, &inner, 1.0 / self.lambda.sqrt()))
    }

    /// `scale · (v - U (inner ∘ (Uᵀ v)))`
    fn apply_correction(&self, v: &DVector<f64>, inner: &DVector<f64>, scale: f64) -> DVector<f64> {
        if self.rank() == 0 {
            return if scale == 1.0 { v.clone() } else { v * scale };
        }
        let proj = self.u.tr_mul(v).component_mul(inner);
        let mut out = v - &self.u * proj;
        if scale != 1.0 {
            out *= scale;
        }
        out
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}-dimensional factor",
                v.len(),
                self.d()
            )));
        }
        Ok(())
    }
}

/// Eigenpairs of `XᵀX·scale` through the `n × n` Gram matrix `XXᵀ·scale`.
/// Right singular vectors are recovered as `Xᵀ v / sqrt(s / scale)`.
fn gram_route(x: &DMatrix<f64>, scale: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, d) = x.shape();
    let gram = (x * x.transpose()) * scale;
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
    let order = descending_order(&eig.eigenvalues);
    let keep = kept_count(&eig.eigenvalues, &order, n.max(d));
    let mut v = DMatrix::zeros(n, keep);
    let mut vals = DVector::zeros(keep);
    for (c, &idx) in order.iter().take(keep).enumerate() {
        v.set_column(c, &eig.eigenvectors.column(idx));
        vals[c] = eig.eigenvalues[idx];
    }
    // Xᵀ V, via the gemm path.
    let mut u = (v.transpose() * x).transpose();
    for (c, mut col) in u.column_iter_mut().enumerate() {
        col *= (scale / vals[c]).sqrt();
    }
    Ok((vals, u))
}

fn descending_order(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn kept_count(values: &DVector<f64>, order: &[usize], dim: usize) -> usize {
    let Some(&top) = order.first() else { return 0 };
    let smax = values[top];
    if smax <= 0.0 {
        return 0;
    }
    let tol = dim as f64 * f64::EPSILON * smax;
    order.iter().take_while(|&&i| values[i] > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genomatrix::standardize_columns;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_standardized(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        standardize_columns(&m).unwrap()
    }

    fn dense_shrinkage(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let d = x.ncols();
        DMatrix::identity(d, d) * lambda + x.tr_mul(x) * ((1.0 - lambda) / (n - 1.0))
    }

    fn dense_power(r: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(r.clone());
        let p = eig.eigenvalues.map(|v| v.powf(alpha));
        &eig.eigenvectors * DMatrix::from_diagonal(&p) * eig.eigenvectors.transpose()
    }

    /// Explicit double loop over pairs, straight from the pairwise definition.
    fn lambda_brute_force(x: &DMatrix<f64>) -> f64 {
        let (n, d) = x.shape();
        let nf = n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let w: Vec<f64> = (0..n).map(|k| x[(k, i)] * x[(k, j)]).collect();
                let wbar = w.iter().sum::<f64>() / nf;
                let var_r = nf / (nf - 1.0).powi(3) * w.iter().map(|v| (v - wbar).powi(2)).sum::<f64>();
                let r = nf / (nf - 1.0) * wbar;
                num += var_r;
                den += r * r;
            }
        }
        num / den
    }

    #[test]
    fn analytic_lambda_matches_pairwise_loop() {
        let x = random_standardized(6, 4, 11);
        let fast = estimate_lambda_analytic(&x).unwrap().value();
        let slow = lambda_brute_force(&x).clamp(MIN_LAMBDA, 1.0);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn analytic_lambda_zero_variance_pair_clamps() {
        // Identical columns whose products x_k1 x_k2 are constant across k,
        // so the sampling variance of r_12 vanishes.
        let col = standardize_columns(&DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]))
            .unwrap();
        let mut x = DMatrix::zeros(4, 2);
        x.set_column(0, &col.column(0));
        x.set_column(1, &col.column(0));
        let est = estimate_lambda_analytic(&x).unwrap();
        assert_eq!(est.value(), MIN_LAMBDA);
        assert_eq!(est.source(), LambdaSource::Analytic);
    }

    #[test]
    fn analytic_lambda_near_one_for_independent_columns() {
        let x = random_standardized(50, 200, 3);
        assert!(estimate_lambda_analytic(&x).unwrap().value() > 0.5);
    }

    #[test]
    fn analytic_lambda_needs_three_samples() {
        let x = DMatrix::from_column_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(matches!(
            estimate_lambda_analytic(&x),
            Err(Error::TooFewSamples { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn fixed_lambda_range() {
        assert!(ShrinkageEstimate::fixed(0.0).is_err());
        assert!(ShrinkageEstimate::fixed(1.5).is_err());
        assert!(ShrinkageEstimate::fixed(f64::NAN).is_err());
        assert_eq!(ShrinkageEstimate::fixed(1e-9).unwrap().value(), MIN_LAMBDA);
        assert_eq!(ShrinkageEstimate::fixed(1.0).unwrap().value(), 1.0);
    }

    #[test]
    fn pure_shrinkage_target_is_empty_factor() {
        let x = random_standardized(10, 30, 1);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(1.0).unwrap()).unwrap();
        assert_eq!(lr.rank(), 0);
        let v = DVector::from_fn(30, |i, _| i as f64 - 4.0);
        assert_eq!(lr.power_apply(0.7, &v).unwrap(), v);
        assert_eq!(lr.adjust(&v).unwrap(), v);
    }

    #[test]
    fn dense_reconstruction() {
        let x = random_standardized(20, 5, 2);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.3).unwrap()).unwrap();
        let implied = (DMatrix::identity(5, 5)
            + lr.u() * DMatrix::from_diagonal(lr.m()) * lr.u().transpose())
            * lr.lambda();
        assert!((implied - dense_shrinkage(&x, 0.3)).amax() < 1e-10);
    }

    #[test]
    fn gram_route_factor_is_orthonormal_with_unit_diagonal() {
        let x = random_standardized(30, 120, 5);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.2).unwrap()).unwrap();
        assert_eq!(lr.rank(), 29);
        let utu = lr.u().tr_mul(lr.u());
        assert!((utu - DMatrix::identity(29, 29)).amax() < 1e-8);
        assert!(lr.m().iter().all(|&v| v > 0.0));
        for i in 0..120 {
            let row = lr.u().row(i);
            let diag = lr.lambda() * (1.0 + row.component_mul(&lr.m().transpose()).dot(&row));
            assert!((diag - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_columns_get_convex_combination() {
        let mut x = random_standardized(15, 6, 8);
        let c = x.column(0).into_owned();
        x.set_column(3, &c);
        let lam = 0.4;
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(lam).unwrap()).unwrap();
        let e3 = DVector::from_fn(6, |i, _| if i == 3 { 1.0 } else { 0.0 });
        let col = lr.power_apply(1.0, &e3).unwrap();
        assert!((col[0] - (1.0 - lam)).abs() < 1e-10);
        assert!((col[3] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zeroth_power_is_identity() {
        let x = random_standardized(12, 40, 4);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.1).unwrap()).unwrap();
        let v = DVector::from_fn(40, |i, _| (i as f64).cos());
        assert_eq!(lr.power_apply(0.0, &v).unwrap(), v);
    }

    #[test]
    fn first_power_matches_dense_matvec() {
        let x = random_standardized(12, 40, 6);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.25).unwrap()).unwrap();
        let v = DVector::from_fn(40, |i, _| (i as f64 * 0.3).sin());
        let dense = dense_shrinkage(&x, 0.25) * &v;
        assert!((lr.power_apply(1.0, &v).unwrap() - dense).amax() < 1e-10);
    }

    #[test]
    fn inverse_square_roots_undo_r() {
        let x = random_standardized(12, 40, 7);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.15).unwrap()).unwrap();
        let v = DVector::from_fn(40, |i, _| 1.0 + i as f64 / 10.0);
        let a = lr.power_apply(-0.5, &v).unwrap();
        let b = lr.power_apply(-0.5, &a).unwrap();
        let c = lr.power_apply(1.0, &b).unwrap();
        assert!((c - v).amax() < 1e-8);
    }

    #[test]
    fn adjust_matches_dense_inverse_root() {
        let x = random_standardized(40, 200, 9);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.2).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let r = DVector::from_fn(200, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.1);
        let dense = dense_power(&dense_shrinkage(&x, 0.2), -0.5) * &r;
        assert!((lr.adjust(&r).unwrap() - dense).amax() < 1e-8);
    }

    #[test]
    fn adjust_of_zero_is_zero() {
        let x = random_standardized(10, 25, 10);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.5).unwrap()).unwrap();
        assert_eq!(lr.adjust(&DVector::zeros(25)).unwrap(), DVector::zeros(25));
    }

    #[test]
    fn tall_matrix_uses_covariance_route() {
        let x = random_standardized(60, 8, 12);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.3).unwrap()).unwrap();
        assert_eq!(lr.rank(), 8);
        let r = DVector::from_fn(8, |i, _| i as f64 * 0.05);
        let dense = dense_power(&dense_shrinkage(&x, 0.3), -0.5) * &r;
        assert!((lr.adjust(&r).unwrap() - dense).amax() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = random_standardized(10, 20, 1);
        let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(0.5).unwrap()).unwrap();
        assert!(matches!(lr.adjust(&DVector::zeros(3)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn from_parts_validates() {
        let u = DMatrix::zeros(4, 1);
        assert!(LowRankCorrelation::from_parts(0.0, u.clone(), DVector::from_element(1, 1.0)).is_err());
        assert!(LowRankCorrelation::from_parts(0.5, u.clone(), DVector::from_element(1, -1.0)).is_err());
        assert!(LowRankCorrelation::from_parts(0.5, u, DVector::zeros(2)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (DMatrix<f64>, f64, Vec<f64>, Vec<f64>)> {
            (8usize..30, 20usize..120, 0.05f64..0.95, any::<u64>()).prop_flat_map(
                |(n, d, lam, seed)| {
                    let x = random_standardized(n, d, seed);
                    (
                        Just(x),
                        Just(lam),
                        proptest::collection::vec(-1.0f64..1.0, d),
                        proptest::collection::vec(-1.0f64..1.0, d),
                    )
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn powers_compose((x, lam, v, _w) in instance(), a in -1.5f64..1.5, b in -1.5f64..1.5) {
                let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(lam).unwrap()).unwrap();
                let v = DVector::from_vec(v);
                let lhs = lr.power_apply(a, &lr.power_apply(b, &v).unwrap()).unwrap();
                let rhs = lr.power_apply(a + b, &v).unwrap();
                prop_assert!((lhs - rhs).amax() < 1e-7);
            }

            #[test]
            fn adjust_equals_inverse_root_power((x, lam, v, _w) in instance()) {
                let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(lam).unwrap()).unwrap();
                let v = DVector::from_vec(v);
                let a = lr.adjust(&v).unwrap();
                let b = lr.power_apply(-0.5, &v).unwrap();
                prop_assert!((a - b).amax() < 1e-12);
            }

            #[test]
            fn power_is_linear((x, lam, v, w) in instance(), alpha in -1.0f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let lr = LowRankCorrelation::build(&x, ShrinkageEstimate::fixed(lam).unwrap()).unwrap();
                let v = DVector::from_vec(v);
                let w = DVector::from_vec(w);
                let combined = lr.power_apply(alpha, &(&v * a + &w * b)).unwrap();
                let separate = lr.power_apply(alpha, &v).unwrap() * a + lr.power_apply(alpha, &w).unwrap() * b;
                prop_assert!((combined - separate).amax() < 1e-10);
            }
        }
    }
}
