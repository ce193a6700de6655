//! Genotype and phenotype preprocessing.
//!
//! Raw allele counts are coded additively as 0/1/2, missing calls are
//! mean-imputed, duplicate and (optionally) synonymous markers are dropped,
//! and columns are standardized to mean 0 and unit sample variance.
//! Phenotypes are residualized against non-genetic covariates.

use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-marker annotation carried alongside the calls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerInfo {
    pub id: String,
    pub gene: String,
    pub synonymous: bool,
}

impl MarkerInfo {
    pub fn new(id: impl Into<String>, gene: impl Into<String>, synonymous: bool) -> Self {
        Self { id: id.into(), gene: gene.into(), synonymous }
    }
}

/// Allele-count calls before any numeric processing. Stored column-major,
/// one `Vec` per marker; `None` is a missing call.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGenotypes {
    samples: Vec<String>,
    markers: Vec<MarkerInfo>,
    calls: Vec<Vec<Option<u8>>>,
}

impl RawGenotypes {
    pub fn new(
        samples: Vec<String>,
        markers: Vec<MarkerInfo>,
        calls: Vec<Vec<Option<u8>>>,
    ) -> Result<Self> {
        if markers.len() != calls.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} markers but {} call columns",
                markers.len(),
                calls.len()
            )));
        }
        for (marker, column) in markers.iter().zip(&calls) {
            if column.len() != samples.len() {
                return Err(Error::DimensionMismatch(format!(
                    "marker {} has {} calls for {} samples",
                    marker.id,
                    column.len(),
                    samples.len()
                )));
            }
            if let Some(&v) = column.iter().flatten().find(|&&v| v > 2) {
                return Err(Error::InvalidCall { marker: marker.id.clone(), value: v });
            }
        }
        Ok(Self { samples, markers, calls })
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn markers(&self) -> &[MarkerInfo] {
        &self.markers
    }

    pub fn calls(&self) -> &[Vec<Option<u8>>] {
        &self.calls
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn d(&self) -> usize {
        self.markers.len()
    }
}

/// Maps codes to 0.0/1.0/2.0 and replaces missing calls by the column mean
/// of the observed calls. Returns an `n × d` matrix.
pub fn encode_additive(raw: &RawGenotypes) -> Result<DMatrix<f64>> {
    let n = raw.n();
    let mut out = DMatrix::zeros(n, raw.d());
    for (j, (marker, column)) in raw.markers.iter().zip(&raw.calls).enumerate() {
        let observed: Vec<f64> = column.iter().flatten().map(|&v| f64::from(v)).collect();
        if observed.is_empty() {
            return Err(Error::AllMissing(marker.id.clone()));
        }
        let fill = observed.iter().sum::<f64>() / observed.len() as f64;
        for (i, call) in column.iter().enumerate() {
            out[(i, j)] = call.map_or(fill, f64::from);
        }
    }
    Ok(out)
}

/// Result of [`deduplicate_and_filter`].
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub genotypes: RawGenotypes,
    /// For each surviving column, its index in the input.
    pub kept: Vec<usize>,
    /// For each input column, its index in the output if it survived.
    pub old_to_new: Vec<Option<usize>>,
}

/// Drops monomorphic markers, exact duplicate columns (first occurrence
/// wins) and, if requested, synonymous markers.
pub fn deduplicate_and_filter(raw: &RawGenotypes, drop_synonymous: bool) -> FilterOutcome {
    let mut seen: HashMap<&[Option<u8>], usize> = HashMap::new();
    let mut kept = Vec::new();
    for (j, (marker, column)) in raw.markers.iter().zip(&raw.calls).enumerate() {
        if seen.contains_key(column.as_slice()) {
            continue;
        }
        seen.insert(column.as_slice(), j);
        if drop_synonymous && marker.synonymous {
            continue;
        }
        if is_monomorphic(column) {
            continue;
        }
        kept.push(j);
    }
    if kept.is_empty() {
        warn!("no markers survived filtering");
    }
    let mut old_to_new = vec![None; raw.d()];
    for (new, &old) in kept.iter().enumerate() {
        old_to_new[old] = Some(new);
    }
    let genotypes = RawGenotypes {
        samples: raw.samples.clone(),
        markers: kept.iter().map(|&j| raw.markers[j].clone()).collect(),
        calls: kept.iter().map(|&j| raw.calls[j].clone()).collect(),
    };
    FilterOutcome { genotypes, kept, old_to_new }
}

fn is_monomorphic(column: &[Option<u8>]) -> bool {
    let mut observed = column.iter().flatten();
    match observed.next() {
        Some(first) => observed.all(|v| v == first),
        None => true,
    }
}

/// Centers each column and scales it to unit sample variance (`n - 1`
/// denominator). On a constant column the error carries its index.
pub fn standardize_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::ConstantColumn(j.to_string()));
        }
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        col /= sd;
    }
    Ok(out)
}

/// Column metadata of a standardized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerMeta {
    pub id: String,
    pub gene: String,
    /// Minor allele frequency `min(p, 1 - p)` of the unstandardized codes.
    pub maf: f64,
}

/// Standardized `n × d` predictor matrix with per-column metadata.
#[derive(Debug, Clone)]
pub struct GenotypeMatrix {
    x: DMatrix<f64>,
    markers: Vec<MarkerMeta>,
}

impl GenotypeMatrix {
    /// Runs the full preprocessing chain: filter, encode, standardize.
    pub fn from_raw(raw: &RawGenotypes, drop_synonymous: bool) -> Result<(Self, FilterOutcome)> {
        let filtered = deduplicate_and_filter(raw, drop_synonymous);
        let codes = encode_additive(&filtered.genotypes)?;
        let gm = Self::from_codes(&codes, filtered.genotypes.markers())?;
        Ok((gm, filtered))
    }

    /// Standardizes additive codes and records per-marker MAF.
    pub fn from_codes(codes: &DMatrix<f64>, markers: &[MarkerInfo]) -> Result<Self> {
        if codes.ncols() != markers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} markers",
                codes.ncols(),
                markers.len()
            )));
        }
        let x = standardize_columns(codes).map_err(|e| match e {
            Error::ConstantColumn(j) => {
                let j: usize = j.parse().expect("column index");
                Error::ConstantColumn(markers[j].id.clone())
            }
            other => other,
        })?;
        let n = codes.nrows() as f64;
        let markers = markers
            .iter()
            .zip(codes.column_iter())
            .map(|(m, col)| {
                let p = col.sum() / (2.0 * n);
                MarkerMeta { id: m.id.clone(), gene: m.gene.clone(), maf: p.min(1.0 - p) }
            })
            .collect();
        Ok(Self { x, markers })
    }

    /// Wraps an already standardized matrix. Intended for synthetic inputs;
    /// the caller is responsible for the standardization invariant.
    pub fn from_standardized(x: DMatrix<f64>, markers: Vec<MarkerMeta>) -> Result<Self> {
        if x.ncols() != markers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} markers",
                x.ncols(),
                markers.len()
            )));
        }
        Ok(Self { x, markers })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn markers(&self) -> &[MarkerMeta] {
        &self.markers
    }

    pub fn marker_ids(&self) -> Vec<String> {
        self.markers.iter().map(|m| m.id.clone()).collect()
    }

    pub fn genes(&self) -> Vec<String> {
        self.markers.iter().map(|m| m.gene.clone()).collect()
    }

    pub fn mafs(&self) -> Vec<f64> {
        self.markers.iter().map(|m| m.maf).collect()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Standardized response vector for replicate `b` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeVector {
    pub y: DVector<f64>,
    pub replicate: usize,
}

impl PhenotypeVector {
    /// Centers and scales `y` to unit sample variance.
    pub fn standardized(y: &[f64], replicate: usize) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let mut v = DVector::from_column_slice(y);
        let mean = v.sum() / n as f64;
        v.add_scalar_mut(-mean);
        let sd = (v.norm_squared() / (n as f64 - 1.0)).sqrt();
        if sd == 0.0 || !sd.is_finite() {
            return Err(Error::ZeroResidualVariance);
        }
        v /= sd;
        Ok(Self { y: v, replicate })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Non-genetic covariates; the intercept column is implicit.
#[derive(Debug, Clone)]
pub struct CovariateMatrix {
    z: DMatrix<f64>,
}

impl CovariateMatrix {
    /// `covariates` is `n × c` without an intercept column.
    pub fn new(covariates: DMatrix<f64>) -> Self {
        Self { z: covariates }
    }

    pub fn intercept_only(n: usize) -> Self {
        Self { z: DMatrix::zeros(n, 0) }
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Design matrix `[1 | Z]`.
    pub fn design(&self) -> DMatrix<f64> {
        let n = self.z.nrows();
        let mut d = DMatrix::from_element(n, self.z.ncols() + 1, 1.0);
        d.columns_mut(1, self.z.ncols()).copy_from(&self.z);
        d
    }
}

/// Least-squares residuals of `y` on `[1 | Z]`, standardized.
pub fn residualize_phenotype(
    y: &[f64],
    covariates: &CovariateMatrix,
    replicate: usize,
) -> Result<PhenotypeVector> {
    let n = y.len();
    if covariates.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "phenotype has {} samples, covariates {}",
            n,
            covariates.n()
        )));
    }
    let design = covariates.design();
    if design.ncols() >= n {
        return Err(Error::RankDeficient);
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = scale * n as f64 * f64::EPSILON * 10.0;
    if r.diagonal().iter().any(|v| v.abs() <= tol) {
        return Err(Error::RankDeficient);
    }
    let q = qr.q();
    let yv = DVector::from_column_slice(y);
    let fitted = &q * (q.transpose() * &yv);
    let resid = &yv - fitted;
    let y_scale = yv.amax().max(1.0);
    if resid.amax() <= 1e-10 * y_scale {
        return Err(Error::ZeroResidualVariance);
    }
    PhenotypeVector::standardized(resid.as_slice(), replicate)
}
