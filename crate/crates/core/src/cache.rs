//! Binary cache for a [`LowRankCorrelation`] factor.
//!
//! Layout, all little-endian: magic `LRC1`, `d: u64`, `m: u64`, `λ: f64`,
//! `m` values of `M`, then `U` column by column (`d·m` values).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lowrank::LowRankCorrelation;

pub const MAGIC: &[u8; 4] = b"LRC1";
const HEADER_LEN: usize = 4 + 8 + 8 + 8;

pub fn encode(f: &LowRankCorrelation) -> Vec<u8> {
    let (d, m) = (f.d(), f.rank());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m * (d + 1));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&f.lambda().to_le_bytes());
    for v in f.m().iter().chain(f.u().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<LowRankCorrelation> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Cache(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Cache("missing LRC1 magic".into()));
    }
    let word = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().expect("8 bytes") };
    let d = u64::from_le_bytes(word(4));
    let m = u64::from_le_bytes(word(12));
    let lambda = f64::from_le_bytes(word(20));

    let expected = d
        .checked_add(1)
        .and_then(|x| x.checked_mul(m))
        .and_then(|x| x.checked_mul(8))
        .and_then(|x| x.checked_add(HEADER_LEN as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::Cache(format!("length {} does not match d = {d}, m = {m}", bytes.len())));
    }
    let (d, m) = (d as usize, m as usize);
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mv = DVector::from_iterator(m, values.by_ref().take(m));
    let u = DMatrix::from_iterator(d, m, values);
    LowRankCorrelation::from_parts(lambda, u, mv)
}

pub fn save(path: &Path, f: &LowRankCorrelation) -> Result<()> {
    fs::write(path, encode(f)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<LowRankCorrelation> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
