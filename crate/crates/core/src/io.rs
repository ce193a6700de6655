//! Tab-separated file formats and provenance stamps.
//!
//! Lines starting with `#` are comments. Missing calls and values are the
//! literal `NA`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::genomatrix::{MarkerInfo, RawGenotypes};
use crate::scores::{ScoreKind, ScoreVector};

pub const MISSING: &str = "NA";

/// Tool version and a hash of the configuration that produced an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new<T: Serialize + ?Sized>(config: &T) -> Self {
        let json = serde_json::to_vec(config).expect("config serializes");
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: crate::VERSION.to_string(),
            config_sha256: hex::encode(Sha256::digest(&json)),
        }
    }

    /// Single-line form for comment headers.
    pub fn comment(&self) -> String {
        format!("{} {} config_sha256={}", self.tool, self.version, self.config_sha256)
    }
}

struct Table<'a> {
    path: &'a Path,
    /// (1-based line number, fields)
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Table<'a> {
    fn parse(path: &'a Path, text: &'a str) -> Result<Self> {
        let rows: Vec<_> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect::<Vec<_>>()))
            .collect();
        if rows.is_empty() {
            return Err(parse_error(path, 1, 1, "file has no header row"));
        }
        let width = rows[0].1.len();
        for (line, fields) in &rows[1..] {
            if fields.len() != width {
                let col = fields.len().min(width) + 1;
                return Err(parse_error(
                    path,
                    *line,
                    col,
                    &format!("expected {width} fields, found {}", fields.len()),
                ));
            }
        }
        Ok(Self { path, rows })
    }

    fn header(&self) -> &[&'a str] {
        &self.rows[0].1
    }

    fn body(&self) -> &[(usize, Vec<&'a str>)] {
        &self.rows[1..]
    }

    fn expect_header(&self, col: usize, name: &str) -> Result<()> {
        match self.header().get(col) {
            Some(&h) if h == name => Ok(()),
            other => Err(parse_error(
                self.path,
                self.rows[0].0,
                col + 1,
                &format!("expected column `{name}`, found `{}`", other.copied().unwrap_or("")),
            )),
        }
    }

    fn float(&self, line: usize, col: usize, s: &str) -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| parse_error(self.path, line, col + 1, &format!("`{s}` is not a number")))
    }
}

fn parse_error(path: &Path, line: usize, column: usize, message: &str) -> Error {
    Error::Parse { path: path.display().to_string(), line, column, message: message.to_string() }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Genotype matrix: header `sample_id` then marker ids, one sample per row,
/// calls `0`, `1`, `2` or `NA`.
pub fn read_genotypes(path: &Path) -> Result<RawGenotypes> {
    let text = read(path)?;
    let t = Table::parse(path, &text)?;
    t.expect_header(0, "sample_id")?;
    let ids = &t.header()[1..];
    let mut calls: Vec<Vec<Option<u8>>> = vec![Vec::with_capacity(t.body().len()); ids.len()];
    let mut samples = Vec::with_capacity(t.body().len());
    for (line, fields) in t.body() {
        samples.push(fields[0].to_string());
        for (j, &f) in fields[1..].iter().enumerate() {
            let call = match f {
                "0" => Some(0),
                "1" => Some(1),
                "2" => Some(2),
                MISSING => None,
                other => {
                    return Err(parse_error(
                        path,
                        *line,
                        j + 2,
                        &format!("genotype call `{other}` is not 0, 1, 2 or NA"),
                    ))
                }
            };
            calls[j].push(call);
        }
    }
    let markers = ids.iter().map(|id| MarkerInfo::new(*id, "", false)).collect();
    RawGenotypes::new(samples, markers, calls)
}

pub fn write_genotypes(raw: &RawGenotypes, provenance: &Provenance) -> String {
    let mut out = format!("# {}\nsample_id", provenance.comment());
    for m in raw.markers() {
        out.push('\t');
        out.push_str(&m.id);
    }
    out.push('\n');
    for (i, s) in raw.samples().iter().enumerate() {
        out.push_str(s);
        for col in raw.calls() {
            out.push('\t');
            match col[i] {
                Some(c) => out.push(char::from(b'0' + c)),
                None => out.push_str(MISSING),
            }
        }
        out.push('\n');
    }
    out
}

/// Sidecar metadata: `marker_id`, `gene`, `synonymous` (0/1).
pub fn read_marker_metadata(path: &Path) -> Result<Vec<MarkerInfo>> {
    let text = read(path)?;
    let t = Table::parse(path, &text)?;
    for (c, name) in ["marker_id", "gene", "synonymous"].iter().enumerate() {
        t.expect_header(c, name)?;
    }
    t.body()
        .iter()
        .map(|(line, f)| {
            let syn = match f[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(parse_error(path, *line, 3, &format!("synonymous flag `{other}` is not 0 or 1")))
                }
            };
            Ok(MarkerInfo::new(f[0], f[1], syn))
        })
        .collect()
}

pub fn write_marker_metadata(markers: &[MarkerInfo], provenance: &Provenance) -> String {
    let mut out = format!("# {}\nmarker_id\tgene\tsynonymous\n", provenance.comment());
    for m in markers {
        let _ = writeln!(out, "{}\t{}\t{}", m.id, m.gene, u8::from(m.synonymous));
    }
    out
}

/// Replaces marker metadata by id; markers absent from `meta` keep theirs.
pub fn attach_metadata(raw: RawGenotypes, meta: &[MarkerInfo]) -> Result<RawGenotypes> {
    let by_id: HashMap<&str, &MarkerInfo> = meta.iter().map(|m| (m.id.as_str(), m)).collect();
    let markers = raw
        .markers()
        .iter()
        .map(|m| by_id.get(m.id.as_str()).map_or_else(|| m.clone(), |&x| x.clone()))
        .collect();
    RawGenotypes::new(raw.samples().to_vec(), markers, raw.calls().to_vec())
}

/// Phenotype table: `sample_id`, `y`, then any covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeTable {
    pub samples: Vec<String>,
    pub y: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Row-major, one vector per sample.
    pub covariates: Vec<Vec<f64>>,
}

pub fn read_phenotypes(path: &Path) -> Result<PhenotypeTable> {
    let text = read(path)?;
    let t = Table::parse(path, &text)?;
    t.expect_header(0, "sample_id")?;
    t.expect_header(1, "y")?;
    let mut table = PhenotypeTable {
        samples: Vec::new(),
        y: Vec::new(),
        covariate_names: t.header()[2..].iter().map(|s| s.to_string()).collect(),
        covariates: Vec::new(),
    };
    for (line, f) in t.body() {
        table.samples.push(f[0].to_string());
        table.y.push(t.float(*line, 1, f[1])?);
        let cov = f[2..]
            .iter()
            .enumerate()
            .map(|(c, s)| t.float(*line, c + 2, s))
            .collect::<Result<Vec<_>>>()?;
        table.covariates.push(cov);
    }
    Ok(table)
}

impl PhenotypeTable {
    /// Reorders rows to follow `samples`; every genotyped sample must appear.
    pub fn aligned_to(&self, samples: &[String]) -> Result<Self> {
        let pos: HashMap<&str, usize> = self.samples.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let order = samples
            .iter()
            .map(|s| {
                pos.get(s.as_str())
                    .copied()
                    .ok_or_else(|| Error::DimensionMismatch(format!("sample `{s}` has no phenotype")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples: samples.to_vec(),
            y: order.iter().map(|&i| self.y[i]).collect(),
            covariate_names: self.covariate_names.clone(),
            covariates: order.iter().map(|&i| self.covariates[i].clone()).collect(),
        })
    }

    /// Class labels for a 0/1 response.
    pub fn binary_labels(&self) -> Result<Vec<bool>> {
        self.y
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(Error::DimensionMismatch(format!(
                    "sample `{}` has response {v}; binary scores need 0 or 1",
                    self.samples[i]
                ))),
            })
            .collect()
    }
}

pub fn write_phenotypes(samples: &[String], y: &[f64], provenance: &Provenance) -> String {
    let mut out = format!("# {}\nsample_id\ty\n", provenance.comment());
    for (s, v) in samples.iter().zip(y) {
        let _ = writeln!(out, "{s}\t{v}");
    }
    out
}

const SCORE_HEADER: [&str; 7] = ["rank", "marker_id", "gene", "score", "abs_score", "kind", "lambda"];

/// Scores in rank order. Floats use the shortest representation that
/// reads back to the same bits.
pub fn write_scores(s: &ScoreVector, provenance: &Provenance) -> String {
    let mut out = format!("# {}\n{}\n", provenance.comment(), SCORE_HEADER.join("\t"));
    let lambda = s.lambda.map_or_else(|| MISSING.to_string(), |l| l.to_string());
    for (rank, j) in s.ranking().into_iter().enumerate() {
        let v = s.values[j];
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{v}\t{}\t{}\t{lambda}",
            rank + 1,
            s.marker_ids[j],
            s.genes[j],
            v.abs(),
            s.kind
        );
    }
    out
}

/// Reads a score file back; rows are returned in file (rank) order.
pub fn read_scores(path: &Path) -> Result<ScoreVector> {
    let text = read(path)?;
    let t = Table::parse(path, &text)?;
    for (c, name) in SCORE_HEADER.iter().enumerate() {
        t.expect_header(c, name)?;
    }
    let mut s = ScoreVector {
        values: Vec::new(),
        kind: ScoreKind::Cor,
        lambda: None,
        marker_ids: Vec::new(),
        genes: Vec::new(),
    };
    for (i, (line, f)) in t.body().iter().enumerate() {
        s.marker_ids.push(f[1].to_string());
        s.genes.push(f[2].to_string());
        s.values.push(t.float(*line, 3, f[3])?);
        let kind: ScoreKind = f[5].parse().map_err(|_| parse_error(path, *line, 6, "unknown score kind"))?;
        let lambda = match f[6] {
            MISSING => None,
            v => Some(t.float(*line, 6, v)?),
        };
        if i == 0 {
            s.kind = kind;
            s.lambda = lambda;
        } else if kind != s.kind || lambda != s.lambda {
            return Err(parse_error(path, *line, 6, "score kind or lambda differs from the first row"));
        }
    }
    if s.values.is_empty() {
        return Err(parse_error(path, t.rows[0].0, 1, "no scores"));
    }
    Ok(s)
}
