//! Shortcut features: punctuation ratio (P), stopword ratio (S) and lexical overlap (O).
//!
//! Every feature is a count normalized by a token length, so all values lie in `[0, 1]`.
//! Pair samples are concatenated (`text_a + " " + text_b`) before P and S are computed.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dataset, TextSample};
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const DEFAULT_NEGATIONS: &str = include_str!("../data/negations_en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortcutFeature {
    PunctRatio,
    StopRatio,
    Overlap1,
    Overlap2,
}

impl ShortcutFeature {
    pub fn name(self) -> &'static str {
        match self {
            ShortcutFeature::PunctRatio => "punct_ratio",
            ShortcutFeature::StopRatio => "stop_ratio",
            ShortcutFeature::Overlap1 => "overlap_1",
            ShortcutFeature::Overlap2 => "overlap_2",
        }
    }
}

/// A subset of {P, S, O}. Written as `P+S+O` in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSet {
    pub punct: bool,
    pub stop: bool,
    pub overlap: bool,
}

impl FeatureSet {
    pub const P: FeatureSet = FeatureSet {
        punct: true,
        stop: false,
        overlap: false,
    };
    pub const PS: FeatureSet = FeatureSet {
        punct: true,
        stop: true,
        overlap: false,
    };
    pub const PSO: FeatureSet = FeatureSet {
        punct: true,
        stop: true,
        overlap: true,
    };

    /// The empty set. Only meaningful as the class-prior baseline; `extract` rejects it.
    pub const fn none() -> FeatureSet {
        FeatureSet {
            punct: false,
            stop: false,
            overlap: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.punct || self.stop || self.overlap)
    }

    pub fn schema(&self) -> Vec<ShortcutFeature> {
        let mut schema = Vec::with_capacity(4);
        if self.punct {
            schema.push(ShortcutFeature::PunctRatio);
        }
        if self.stop {
            schema.push(ShortcutFeature::StopRatio);
        }
        if self.overlap {
            schema.push(ShortcutFeature::Overlap1);
            schema.push(ShortcutFeature::Overlap2);
        }
        schema
    }

    pub fn dim(&self) -> usize {
        self.schema().len()
    }

    pub fn is_subset_of(&self, other: &FeatureSet) -> bool {
        (!self.punct || other.punct) && (!self.stop || other.stop) && (!self.overlap || other.overlap)
    }

    /// Rejects the empty set, and O on single-text data.
    pub fn check_applicable(&self, pair_dataset: bool) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("feature set must not be empty"));
        }
        if self.overlap && !pair_dataset {
            return Err(Error::NotPair);
        }
        Ok(())
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<&str> = [(self.punct, "P"), (self.stop, "S"), (self.overlap, "O")]
            .into_iter()
            .filter_map(|(on, s)| on.then_some(s))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// Accepts `P+S`, `P,S`, `PS`, `p s`. `none` parses to the empty set.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("none") {
            return Ok(FeatureSet::none());
        }
        let mut set = FeatureSet::none();
        for c in s.chars() {
            match c.to_ascii_uppercase() {
                'P' => set.punct = true,
                'S' => set.stop = true,
                'O' => set.overlap = true,
                '+' | ',' | ' ' => {}
                _ => return Err(Error::invalid(format!("unknown shortcut flag in `{s}`"))),
            }
        }
        if set.is_empty() {
            return Err(Error::invalid(format!("empty feature set `{s}`")));
        }
        Ok(set)
    }
}

impl TryFrom<String> for FeatureSet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSet> for String {
    fn from(f: FeatureSet) -> String {
        f.to_string()
    }
}

/// Stopword list with negation words removed from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordPolicy {
    effective: HashSet<String>,
    negations: BTreeSet<String>,
}

impl StopwordPolicy {
    /// Negation exclusions are the given words plus every list entry ending in `n't`.
    pub fn new<S: AsRef<str>>(
        stopwords: impl IntoIterator<Item = S>,
        negations: impl IntoIterator<Item = S>,
    ) -> Self {
        let stop: BTreeSet<String> = stopwords
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        let mut negations: BTreeSet<String> = negations
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        negations.extend(stop.iter().filter(|w| w.ends_with("n't")).cloned());
        let effective = stop.difference(&negations).cloned().collect();
        StopwordPolicy {
            effective,
            negations,
        }
    }

    /// The bundled English list (`data/stopwords_en.txt`, `data/negations_en.txt`).
    pub fn english() -> Self {
        StopwordPolicy::new(DEFAULT_STOPWORDS.lines(), DEFAULT_NEGATIONS.lines())
    }

    /// Reads one word per line; a missing path falls back to the bundled file.
    pub fn from_files(stopwords: Option<&Path>, negations: Option<&Path>) -> Result<Self> {
        let read = |p: Option<&Path>, fallback: &str| -> Result<String> {
            match p {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
                None => Ok(fallback.to_string()),
            }
        };
        let stop = read(stopwords, DEFAULT_STOPWORDS)?;
        let neg = read(negations, DEFAULT_NEGATIONS)?;
        Ok(StopwordPolicy::new(stop.lines(), neg.lines()))
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.effective.contains(&token.to_lowercase())
    }

    pub fn negations(&self) -> &BTreeSet<String> {
        &self.negations
    }

    pub fn len(&self) -> usize {
        self.effective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effective.is_empty()
    }
}

impl Default for StopwordPolicy {
    fn default() -> Self {
        StopwordPolicy::english()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutVector {
    pub values: Vec<f64>,
    pub schema: Vec<ShortcutFeature>,
    /// Set when some text tokenized to nothing; the affected ratios are 0.
    pub empty_text: bool,
}

pub fn is_punct_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation())
}

fn concatenated_tokens(sample: &TextSample) -> Vec<String> {
    match &sample.text_b {
        Some(b) => tokenize(&format!("{} {}", sample.text_a, b)).into_tokens(),
        None => tokenize(&sample.text_a).into_tokens(),
    }
}

fn ratio(count: usize, len: usize) -> f64 {
    if len == 0 {
        0.0
    } else {
        count as f64 / len as f64
    }
}

/// Fraction of tokens that are punctuation runs. 0 for empty text.
pub fn punct_ratio(sample: &TextSample) -> f64 {
    let tokens = concatenated_tokens(sample);
    ratio(tokens.iter().filter(|t| is_punct_token(t)).count(), tokens.len())
}

/// Fraction of tokens in the effective stopword set. 0 for empty text.
pub fn stop_ratio(sample: &TextSample, policy: &StopwordPolicy) -> f64 {
    let tokens = concatenated_tokens(sample);
    ratio(tokens.iter().filter(|t| policy.is_stopword(t)).count(), tokens.len())
}

/// `(overlap_1, overlap_2)`: occurrences in each sentence whose token appears anywhere
/// in the other sentence, divided by that sentence's length.
pub fn lexical_overlap(sample: &TextSample) -> Result<(f64, f64)> {
    let b = sample.text_b.as_deref().ok_or(Error::NotPair)?;
    let ta = tokenize(&sample.text_a);
    let tb = tokenize(b);
    Ok(overlap_tokens(&ta, &tb))
}

fn overlap_tokens(a: &[String], b: &[String]) -> (f64, f64) {
    let set_a: HashSet<&str> = a.iter().map(String::as_str).collect();
    let set_b: HashSet<&str> = b.iter().map(String::as_str).collect();
    let shared_a = a.iter().filter(|t| set_b.contains(t.as_str())).count();
    let shared_b = b.iter().filter(|t| set_a.contains(t.as_str())).count();
    (ratio(shared_a, a.len()), ratio(shared_b, b.len()))
}

/// Values in schema order P, S, O1, O2, restricted to the requested flags.
pub fn extract(
    sample: &TextSample,
    features: FeatureSet,
    policy: &StopwordPolicy,
) -> Result<ShortcutVector> {
    features.check_applicable(sample.is_pair())?;
    let tokens = concatenated_tokens(sample);
    let mut empty_text = tokens.is_empty();
    let mut values = Vec::with_capacity(4);
    if features.punct {
        values.push(ratio(tokens.iter().filter(|t| is_punct_token(t)).count(), tokens.len()));
    }
    if features.stop {
        values.push(ratio(tokens.iter().filter(|t| policy.is_stopword(t)).count(), tokens.len()));
    }
    if features.overlap {
        let ta = tokenize(&sample.text_a);
        let tb = tokenize(sample.text_b.as_deref().unwrap_or_default());
        empty_text |= ta.is_empty() || tb.is_empty();
        let (o1, o2) = overlap_tokens(&ta, &tb);
        values.push(o1);
        values.push(o2);
    }
    Ok(ShortcutVector {
        values,
        schema: features.schema(),
        empty_text,
    })
}

pub fn extract_all(
    dataset: &Dataset,
    features: FeatureSet,
    policy: &StopwordPolicy,
) -> Result<Vec<ShortcutVector>> {
    features.check_applicable(dataset.is_pair())?;
    dataset
        .samples()
        .par_iter()
        .map(|s| extract(s, features, policy))
        .collect()
}

/// CSV with header `id,<schema columns>` and one row per sample.
pub fn write_features_csv<W: Write>(
    out: W,
    dataset: &Dataset,
    features: FeatureSet,
    vectors: &[ShortcutVector],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(features.schema().iter().map(|f| f.name().to_string()));
    w.write_record(&header)?;
    for (sample, v) in dataset.samples().iter().zip(vectors) {
        let mut row = vec![sample.id.clone()];
        row.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
