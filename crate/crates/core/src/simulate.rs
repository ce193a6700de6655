//! Synthetic genotype/phenotype replicates with known causal markers.
//!
//! Genotypes come from a latent-Gaussian threshold model: each haplotype is
//! a Gaussian vector, equicorrelated with `ρ` inside an LD block, thresholded
//! at the marker's MAF quantile. Two independent haplotypes are summed into
//! an allele count. Phenotypes are `y = Σ β_j g_j + ε` with the noise
//! variance set to hit the requested heritability.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genomatrix::{MarkerInfo, RawGenotypes};
use crate::stats::{sample_variance, standard_normal_quantile};

/// RNG stream ids; replicate `b` draws its noise from stream `NOISE + b`.
const STREAM_MAF: u64 = 1;
const STREAM_GENOTYPES: u64 = 2;
const STREAM_NOISE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdBlock {
    pub size: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalMarker {
    pub index: usize,
    pub beta: f64,
    pub maf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub name: String,
    pub n: usize,
    pub d: usize,
    /// Consecutive LD blocks starting at marker 0; markers past the last
    /// block are independent.
    pub blocks: Vec<LdBlock>,
    pub causal: Vec<CausalMarker>,
    /// MAF range for non-causal markers, drawn uniformly.
    pub background_maf: [f64; 2],
    /// Share of phenotypic variance explained by the causal markers.
    pub heritability: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n < 3 || self.d == 0 {
            return bad(format!("need n >= 3 and d >= 1, got n = {}, d = {}", self.n, self.d));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.heritability) {
            return bad(format!("heritability {} outside [0, 1]", self.heritability));
        }
        let covered: usize = self.blocks.iter().map(|b| b.size).sum();
        if covered > self.d {
            return bad(format!("blocks cover {covered} markers but d = {}", self.d));
        }
        if let Some(b) = self.blocks.iter().find(|b| !(0.0..1.0).contains(&b.rho)) {
            return bad(format!("block correlation {} outside [0, 1)", b.rho));
        }
        let [lo, hi] = self.background_maf;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return bad(format!("background MAF range [{lo}, {hi}] outside (0, 0.5]"));
        }
        let mut seen = HashSet::new();
        for c in &self.causal {
            if c.index >= self.d {
                return bad(format!("causal index {} >= d = {}", c.index, self.d));
            }
            if !seen.insert(c.index) {
                return bad(format!("causal index {} repeated", c.index));
            }
            if !(c.maf > 0.0 && c.maf <= 0.5) {
                return bad(format!("maf {} of marker {} outside (0, 0.5]", c.maf, c.index));
            }
        }
        if self.heritability == 0.0 && self.causal.iter().any(|c| c.beta != 0.0) {
            return bad("zero heritability with non-zero causal effects".into());
        }
        Ok(())
    }

    /// Block label per marker: `gene{k}` inside block `k`, `free` outside.
    pub fn gene_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.d);
        for (k, b) in self.blocks.iter().enumerate() {
            labels.extend(std::iter::repeat_n(format!("gene{k:03}"), b.size));
        }
        labels.resize(self.d, "free".to_string());
        labels
    }

    pub fn marker_ids(&self) -> Vec<String> {
        (0..self.d).map(|j| format!("snp{j:05}")).collect()
    }

    /// Per-marker target MAF: causal markers use theirs, the rest are drawn
    /// from the background range.
    pub fn marker_mafs(&self) -> Vec<f64> {
        let mut rng = stream(self.seed, STREAM_MAF);
        let [lo, hi] = self.background_maf;
        let mut mafs: Vec<f64> = (0..self.d).map(|_| rng.random_range(lo..=hi)).collect();
        for c in &self.causal {
            mafs[c.index] = c.maf;
        }
        mafs
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Self = toml::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Allele counts for every sample and marker.
pub fn simulate_genotypes(sc: &SimulationScenario) -> Result<RawGenotypes> {
    sc.validate()?;
    let (n, d) = (sc.n, sc.d);
    let thresholds: Vec<f64> = sc.marker_mafs().into_iter().map(standard_normal_quantile).collect();

    // (start, size, rho) per block, singletons for the uncovered tail.
    let mut layout = Vec::new();
    let mut start = 0;
    for b in &sc.blocks {
        layout.push((start, b.size, b.rho));
        start += b.size;
    }
    layout.extend((start..d).map(|j| (j, 1, 0.0)));

    let mut rng = stream(sc.seed, STREAM_GENOTYPES);
    let mut calls = vec![vec![Some(0u8); n]; d];
    for i in 0..n {
        for _haplotype in 0..2 {
            for &(start, size, rho) in &layout {
                let shared: f64 = rng.sample(StandardNormal);
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                for j in start..start + size {
                    let e: f64 = rng.sample(StandardNormal);
                    if a * shared + b * e < thresholds[j] {
                        if let Some(c) = calls[j][i].as_mut() {
                            *c += 1;
                        }
                    }
                }
            }
        }
    }

    let markers = sc
        .marker_ids()
        .into_iter()
        .zip(sc.gene_labels())
        .map(|(id, gene)| MarkerInfo::new(id, gene, false))
        .collect();
    let samples = (0..n).map(|i| format!("ind{i:05}")).collect();
    RawGenotypes::new(samples, markers, calls)
}

/// Genetic value `Σ β_j g_j` per sample, on the raw 0/1/2 codes.
pub fn genetic_values(codes: &DMatrix<f64>, sc: &SimulationScenario) -> Vec<f64> {
    let mut g = vec![0.0; codes.nrows()];
    for c in &sc.causal {
        for (gi, &x) in g.iter_mut().zip(codes.column(c.index).iter()) {
            *gi += c.beta * x;
        }
    }
    g
}

/// `B` raw (unstandardized) phenotype vectors. Replicate `b` uses its own
/// RNG stream, so any subset can be regenerated independently.
pub fn simulate_phenotypes(codes: &DMatrix<f64>, sc: &SimulationScenario) -> Result<Vec<Vec<f64>>> {
    sc.validate()?;
    if codes.shape() != (sc.n, sc.d) {
        return Err(Error::DimensionMismatch(format!(
            "codes are {:?}, scenario is {}x{}",
            codes.shape(),
            sc.n,
            sc.d
        )));
    }
    let g = genetic_values(codes, sc);
    let h2 = sc.heritability;
    let noise_sd = if h2 == 0.0 {
        1.0
    } else {
        let vg = sample_variance(&g);
        if !(vg > 0.0) {
            return Err(Error::ZeroGeneticVariance);
        }
        (vg * (1.0 - h2) / h2).sqrt()
    };
    Ok((0..sc.replicates).map(|b| simulate_replicate(&g, noise_sd, sc.seed, b)).collect())
}

fn simulate_replicate(g: &[f64], noise_sd: f64, seed: u64, b: usize) -> Vec<f64> {
    let mut rng = stream(seed, STREAM_NOISE + b as u64);
    g.iter()
        .map(|&gi| {
            let e: f64 = rng.sample(StandardNormal);
            gi + noise_sd * e
        })
        .collect()
}

/// Built-in scenarios at `n = 400`, `d = 2000`: two polygenic traits driven
/// largely by rare variants and one trait with no genetic component.
pub fn scenario_presets() -> Vec<SimulationScenario> {
    vec![q1_like(), q2_like(), q4_like()]
}

pub fn preset(name: &str) -> Option<SimulationScenario> {
    let key = name.to_ascii_lowercase().replace(['-', '_'], "");
    scenario_presets().into_iter().find(|s| s.name.replace('-', "") == key)
}

/// (MAF, β) of the leading causal markers in `q1-like`.
const Q1_EFFECTS: [(f64, f64); 10] = [
    (0.011478, 0.56190),
    (0.017217, 0.74136),
    (0.027977, 0.61830),
    (0.066714, 0.64997),
    (0.004304, 0.62223),
    (0.000717, 1.07706),
    (0.164993, 0.13573),
    (0.020803, 0.29558),
    (0.002152, 1.20645),
    (0.000717, 1.35726),
];

/// Same for `q2-like`.
const Q2_EFFECTS: [(f64, f64); 8] = [
    (0.000717, 1.01569),
    (0.000717, 1.09484),
    (0.015782, 0.49459),
    (0.002152, 0.83224),
    (0.002152, 0.97060),
    (0.170732, 0.24437),
    (0.098278, 0.27053),
    (0.010043, 0.66909),
];

const PRESET_N: usize = 400;
const PRESET_D: usize = 2000;
const PRESET_BLOCK: usize = 20;
const PRESET_REPLICATES: usize = 100;

fn q1_like() -> SimulationScenario {
    preset_scenario("q1-like", 38, 9, &Q1_EFFECTS, 0.44, 101)
}

fn q2_like() -> SimulationScenario {
    preset_scenario("q2-like", 71, 13, &Q2_EFFECTS, 0.29, 102)
}

fn q4_like() -> SimulationScenario {
    preset_scenario("q4-like", 0, 0, &[], 0.0, 104)
}

/// Blocks of 20 markers with `ρ ~ U(0.3, 0.9)`. The causal markers sit in
/// `genes` randomly chosen blocks; the listed (MAF, β) pairs come first and
/// the rest get `MAF ~ U(0.01, 0.3)`, `β ~ U(0.1, 0.8)`.
fn preset_scenario(
    name: &str,
    n_causal: usize,
    genes: usize,
    effects: &[(f64, f64)],
    heritability: f64,
    seed: u64,
) -> SimulationScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blocks = PRESET_D / PRESET_BLOCK;
    let blocks: Vec<LdBlock> = (0..n_blocks)
        .map(|_| LdBlock { size: PRESET_BLOCK, rho: rng.random_range(0.3..0.9) })
        .collect();

    let mut block_ids: Vec<usize> = (0..n_blocks).collect();
    rand::seq::SliceRandom::shuffle(block_ids.as_mut_slice(), &mut rng);
    let mut causal = Vec::with_capacity(n_causal);
    for g in 0..genes {
        let per = n_causal / genes + usize::from(g < n_causal % genes);
        let mut slots: Vec<usize> = (0..PRESET_BLOCK).collect();
        rand::seq::SliceRandom::shuffle(slots.as_mut_slice(), &mut rng);
        for &s in slots.iter().take(per) {
            let k = causal.len();
            let (maf, beta) = match effects.get(k) {
                Some(&pair) => pair,
                None => (rng.random_range(0.01..0.3), rng.random_range(0.1..0.8)),
            };
            causal.push(CausalMarker { index: block_ids[g] * PRESET_BLOCK + s, beta, maf });
        }
    }

    SimulationScenario {
        name: name.to_string(),
        n: PRESET_N,
        d: PRESET_D,
        blocks,
        causal,
        background_maf: [0.01, 0.5],
        heritability,
        replicates: PRESET_REPLICATES,
        seed,
    }
}
