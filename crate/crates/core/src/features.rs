//! Hashed bag-of-n-grams featurization for the full-input model.
//!
//! Every requested n-gram is rendered as bytes (tokens joined by a single space; tokens
//! never contain whitespace, so unigram and bigram keys cannot collide), hashed with
//! XXH64 under `hash_seed`, and reduced modulo `dims`. Counts are accumulated and the
//! vector is L2-normalized. Pair samples are joined with `pair_separator` as an extra
//! token, so bigrams crossing the boundary depend on sentence order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::corpus::{tokenize, Dataset, TextSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashingConfig {
    pub dims: usize,
    pub ngram_orders: Vec<usize>,
    pub hash_seed: u64,
    pub pair_separator: String,
}

impl Default for HashingConfig {
    fn default() -> Self {
        HashingConfig {
            dims: 1 << 18,
            ngram_orders: vec![1, 2],
            hash_seed: 0,
            pair_separator: "[SEP]".into(),
        }
    }
}

impl HashingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims < 2 || self.dims > u32::MAX as usize {
            return Err(Error::invalid(format!("hash dims {} out of range", self.dims)));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.iter().any(|n| !(1..=2).contains(n)) {
            return Err(Error::invalid(format!(
                "ngram orders must be a non-empty subset of {{1, 2}}, got {:?}",
                self.ngram_orders
            )));
        }
        // Every token the tokenizer emits is a fixed point of it, so a separator
        // that does not survive tokenization unchanged can never collide.
        if tokenize(&self.pair_separator).tokens() == [self.pair_separator.clone()] {
            return Err(Error::invalid(format!(
                "pair separator `{}` can be produced by the tokenizer",
                self.pair_separator
            )));
        }
        Ok(())
    }

    fn bucket(&self, key: &[u8]) -> u32 {
        (xxh64(key, self.hash_seed) % self.dims as u64) as u32
    }
}

/// Sorted, unique indices with strictly positive finite values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid("sparse vector index/value length mismatch"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse vector indices must be strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("sparse vector values must be finite and positive"));
        }
        Ok(SparseVector { indices, values })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dims: usize) -> Vec<f64> {
        let mut dense = vec![0.0; dims];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }
}

fn sample_tokens(sample: &TextSample, config: &HashingConfig) -> Vec<String> {
    let mut tokens = tokenize(&sample.text_a).into_tokens();
    if let Some(b) = &sample.text_b {
        tokens.push(config.pair_separator.clone());
        tokens.extend(tokenize(b).into_tokens());
    }
    tokens
}

/// An empty token sequence yields the zero (empty) vector.
pub fn featurize(sample: &TextSample, config: &HashingConfig) -> SparseVector {
    let tokens = sample_tokens(sample, config);
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for &order in &config.ngram_orders {
        for window in tokens.windows(order) {
            let key = window.join(" ");
            *counts.entry(config.bucket(key.as_bytes())).or_insert(0.0) += 1.0;
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let (indices, values) = counts.into_iter().map(|(i, c)| (i, c / norm)).unzip();
    SparseVector { indices, values }
}

pub struct FeaturizedSet {
    pub rows: Vec<SparseVector>,
    /// Samples whose text produced no n-grams.
    pub empty: usize,
}

pub fn featurize_dataset(dataset: &Dataset, config: &HashingConfig) -> Result<FeaturizedSet> {
    config.validate()?;
    let rows: Vec<SparseVector> = dataset
        .samples()
        .par_iter()
        .map(|s| featurize(s, config))
        .collect();
    let empty = rows.iter().filter(|r| r.is_empty()).count();
    Ok(FeaturizedSet { rows, empty })
}

const SPARSE_MAGIC: &str = "#tsi-sparse v1";

/// Text cache format:
///
/// ```text
/// #tsi-sparse v1 dims=<dims> seed=<hash_seed>
/// <label> <index>:<value> <index>:<value> ...
/// ```
///
/// Values are written with Rust's shortest round-trip float formatting.
pub fn write_sparse<W: Write>(
    mut out: W,
    config: &HashingConfig,
    rows: &[SparseVector],
    labels: &[usize],
) -> Result<()> {
    let io = |e| Error::io("<sparse>", e);
    writeln!(out, "{SPARSE_MAGIC} dims={} seed={}", config.dims, config.hash_seed).map_err(io)?;
    for (row, label) in rows.iter().zip(labels) {
        write!(out, "{label}").map_err(io)?;
        for (i, v) in row.iter() {
            write!(out, " {i}:{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

pub struct SparseFile {
    pub dims: usize,
    pub hash_seed: u64,
    pub rows: Vec<SparseVector>,
    pub labels: Vec<usize>,
}

pub fn read_sparse<R: BufRead>(input: R) -> Result<SparseFile> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty sparse file".into()))?
        .map_err(|e| Error::io("<sparse>", e))?;
    let rest = header
        .strip_prefix(SPARSE_MAGIC)
        .ok_or_else(|| Error::Format(format!("bad sparse header `{header}`")))?;
    let mut dims = None;
    let mut hash_seed = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("dims", v)) => dims = v.parse().ok(),
            Some(("seed", v)) => hash_seed = v.parse().ok(),
            _ => {}
        }
    }
    let (Some(dims), Some(hash_seed)) = (dims, hash_seed) else {
        return Err(Error::Format(format!("sparse header lacks dims/seed: `{header}`")));
    };
    let bad = |line: &str| Error::Format(format!("bad sparse row `{line}`"));
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<sparse>", e))?;
        let mut parts = line.split_whitespace();
        let label = parts.next().and_then(|l| l.parse().ok()).ok_or_else(|| bad(&line))?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for pair in parts {
            let (i, v) = pair.split_once(':').ok_or_else(|| bad(&line))?;
            let i: u32 = i.parse().map_err(|_| bad(&line))?;
            if i as usize >= dims {
                return Err(bad(&line));
            }
            indices.push(i);
            values.push(v.parse().map_err(|_| bad(&line))?);
        }
        rows.push(SparseVector::new(indices, values)?);
        labels.push(label);
    }
    Ok(SparseFile {
        dims,
        hash_seed,
        rows,
        labels,
    })
}
