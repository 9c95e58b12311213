//! Labeled text datasets: loading, tokenization, stratified sampling and splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Fingerprinter};

/// One labeled example. `text_b` is present for sentence-pair tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: usize,
}

impl TextSample {
    pub fn single(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        TextSample {
            id: id.into(),
            text_a: text.into(),
            text_b: None,
            label,
        }
    }

    pub fn pair(
        id: impl Into<String>,
        text_a: impl Into<String>,
        text_b: impl Into<String>,
        label: usize,
    ) -> Self {
        TextSample {
            id: id.into(),
            text_a: text_a.into(),
            text_b: Some(text_b.into()),
            label,
        }
    }

    pub fn is_pair(&self) -> bool {
        self.text_b.is_some()
    }
}

/// Label names in first-appearance order; a name's index is its class id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelVocab {
    names: Vec<String>,
}

impl LabelVocab {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut vocab = LabelVocab::default();
        for name in names {
            let name = name.into();
            if vocab.index_of(&name).is_some() {
                return Err(Error::invalid(format!("duplicate label name `{name}`")));
            }
            vocab.names.push(name);
        }
        if vocab.names.is_empty() {
            return Err(Error::invalid("label vocabulary is empty"));
        }
        Ok(vocab)
    }

    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn intern(&mut self, name: &str) -> usize {
        match self.index_of(name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }
}

/// Lowercased tokens; never contains an empty or whitespace-bearing token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [String];
    fn deref(&self) -> &[String] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<TextSample>,
    vocab: LabelVocab,
    split_tag: SplitTag,
}

impl Dataset {
    /// Checks label range, id uniqueness and non-empty `text_a`.
    pub fn new(samples: Vec<TextSample>, vocab: LabelVocab, split_tag: SplitTag) -> Result<Self> {
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.label >= vocab.m() {
                return Err(Error::invalid(format!(
                    "sample `{}` has label {} but only {} classes exist",
                    s.id,
                    s.label,
                    vocab.m()
                )));
            }
            if s.text_a.trim().is_empty() {
                return Err(Error::invalid(format!("sample `{}` has empty text", s.id)));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(Dataset {
            samples,
            vocab,
            split_tag,
        })
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn vocab(&self) -> &LabelVocab {
        &self.vocab
    }

    pub fn m(&self) -> usize {
        self.vocab.m()
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn with_split(mut self, tag: SplitTag) -> Self {
        self.split_tag = tag;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// True when every sample carries a second text.
    pub fn is_pair(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(TextSample::is_pair)
    }

    /// XXH64 over the samples sorted by id, each contributing `id 0x1f label 0x1f`.
    /// Two datasets with the same ids and labels share a fingerprint regardless of order.
    pub fn fingerprint(&self) -> String {
        let mut keyed: Vec<(&str, usize)> =
            self.samples.iter().map(|s| (s.id.as_str(), s.label)).collect();
        keyed.sort_unstable();
        let mut fp = Fingerprinter::new();
        for (id, label) in keyed {
            fp.field(id).field(&label.to_string());
        }
        fp.finish()
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.m()];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label].push(i);
        }
        by_class
    }

    fn select(&self, mut indices: Vec<usize>, tag: SplitTag) -> Dataset {
        indices.sort_unstable();
        Dataset {
            samples: indices.into_iter().map(|i| self.samples[i].clone()).collect(),
            vocab: self.vocab.clone(),
            split_tag: tag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
    Tsv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(DataFormat::Jsonl),
            "csv" => Some(DataFormat::Csv),
            "tsv" | "tab" => Some(DataFormat::Tsv),
            _ => None,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            "tsv" => Ok(DataFormat::Tsv),
            other => Err(Error::invalid(format!("unknown data format `{other}`"))),
        }
    }
}

/// Which columns (or JSON keys) hold each field.
///
/// `text_b` may be absent from a file entirely, in which case the dataset is single-text.
/// `text_a` and `label` must be present. Without an `id` column, ids are `row-<n>`
/// with `n` the zero-based data row number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: String,
    pub id: Option<String>,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            text_a: "text".into(),
            text_b: Some("text_pair".into()),
            label: "label".into(),
            id: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    /// Rows dropped for a missing label, empty text or a parse failure.
    pub skipped: usize,
}

pub fn load_dataset(path: &Path, format: DataFormat, fields: &FieldMap) -> Result<LoadOutcome> {
    let mut vocab = LabelVocab::default();
    let (samples, skipped) = read_rows(path, format, fields, &mut vocab)?;
    if vocab.m() < 2 {
        return Err(Error::invalid(format!(
            "{}: need at least two distinct labels, found {}",
            path.display(),
            vocab.m()
        )));
    }
    Ok(LoadOutcome {
        dataset: Dataset::new(samples, vocab, SplitTag::Train)?,
        skipped,
    })
}

/// Loads several files against one shared label vocabulary. Labels first seen in a
/// later file are appended, so indices assigned by earlier files never move.
pub fn load_splits(
    files: &[(&Path, SplitTag)],
    format: Option<DataFormat>,
    fields: &FieldMap,
) -> Result<Vec<LoadOutcome>> {
    let mut vocab = LabelVocab::default();
    let mut loaded = Vec::with_capacity(files.len());
    for (path, tag) in files {
        let fmt = match format {
            Some(f) => f,
            None => DataFormat::from_path(path).ok_or_else(|| {
                Error::invalid(format!("cannot infer format of {}", path.display()))
            })?,
        };
        let (samples, skipped) = read_rows(path, fmt, fields, &mut vocab)?;
        loaded.push((samples, skipped, *tag));
    }
    if vocab.m() < 2 {
        return Err(Error::invalid(format!(
            "need at least two distinct labels, found {}",
            vocab.m()
        )));
    }
    loaded
        .into_iter()
        .map(|(samples, skipped, tag)| {
            Ok(LoadOutcome {
                dataset: Dataset::new(samples, vocab.clone(), tag)?,
                skipped,
            })
        })
        .collect()
}

struct RawRow {
    id: Option<String>,
    text_a: Option<String>,
    text_b: Option<String>,
    label: Option<String>,
}

fn read_rows(
    path: &Path,
    format: DataFormat,
    fields: &FieldMap,
    vocab: &mut LabelVocab,
) -> Result<(Vec<TextSample>, usize)> {
    let (rows, mut skipped) = match format {
        DataFormat::Jsonl => read_jsonl(path, fields)?,
        DataFormat::Csv => read_delimited(path, b',', fields)?,
        DataFormat::Tsv => read_delimited(path, b'\t', fields)?,
    };
    let mut samples = Vec::with_capacity(rows.len());
    for (n, row) in rows.into_iter().enumerate() {
        let (Some(text_a), Some(label)) = (row.text_a, row.label) else {
            skipped += 1;
            continue;
        };
        let label = label.trim();
        if label.is_empty() || text_a.trim().is_empty() {
            skipped += 1;
            continue;
        }
        samples.push(TextSample {
            id: row.id.unwrap_or_else(|| format!("row-{n}")),
            text_a,
            text_b: row.text_b,
            label: vocab.intern(label),
        });
    }
    if samples.is_empty() {
        return Err(Error::NoUsableRows(path.to_path_buf()));
    }
    Ok((samples, skipped))
}

fn json_scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl(path: &Path, fields: &FieldMap) -> Result<(Vec<RawRow>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut malformed = 0;
    let (mut saw_text, mut saw_label) = (false, false);
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(obj)) => obj,
            _ => {
                malformed += 1;
                continue;
            }
        };
        saw_text |= obj.contains_key(&fields.text_a);
        saw_label |= obj.contains_key(&fields.label);
        let get = |key: &Option<String>| {
            key.as_ref()
                .and_then(|k| obj.get(k))
                .and_then(json_scalar)
        };
        rows.push(RawRow {
            id: get(&fields.id),
            text_a: obj.get(&fields.text_a).and_then(json_scalar),
            text_b: get(&fields.text_b),
            label: obj.get(&fields.label).and_then(json_scalar),
        });
    }
    if !rows.is_empty() {
        if !saw_text {
            return Err(Error::MissingColumn(fields.text_a.clone()));
        }
        if !saw_label {
            return Err(Error::MissingColumn(fields.label.clone()));
        }
    }
    Ok((rows, malformed))
}

fn read_delimited(path: &Path, delimiter: u8, fields: &FieldMap) -> Result<(Vec<RawRow>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_a = column(&fields.text_a).ok_or_else(|| Error::MissingColumn(fields.text_a.clone()))?;
    let label = column(&fields.label).ok_or_else(|| Error::MissingColumn(fields.label.clone()))?;
    let text_b = fields.text_b.as_deref().and_then(column);
    let id = match fields.id.as_deref() {
        Some(name) => Some(column(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?),
        None => None,
    };

    let mut rows = Vec::new();
    let mut malformed = 0;
    for record in reader.records() {
        let record = match record {
            Ok(r) if r.len() == headers.len() => r,
            Ok(_) | Err(_) => {
                malformed += 1;
                continue;
            }
        };
        let get = |i: Option<usize>| i.and_then(|i| record.get(i)).map(str::to_string);
        rows.push(RawRow {
            id: get(id).filter(|s| !s.is_empty()),
            text_a: get(Some(text_a)),
            text_b: get(text_b),
            label: get(Some(label)),
        });
    }
    Ok((rows, malformed))
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Lowercases, splits on whitespace, and breaks each chunk into maximal runs of
/// ASCII punctuation and of everything else. An apostrophe between two alphabetic
/// characters stays inside its word, so `don't` is one token.
pub fn tokenize(text: &str) -> TokenSeq {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lower.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut current = String::new();
        let mut current_punct = false;
        for (i, &c) in chars.iter().enumerate() {
            let inner_apostrophe = c == '\''
                && i > 0
                && i + 1 < chars.len()
                && chars[i - 1].is_alphabetic()
                && chars[i + 1].is_alphabetic();
            let punct = is_punct(c) && !inner_apostrophe;
            if !current.is_empty() && punct != current_punct {
                tokens.push(std::mem::take(&mut current));
            }
            current_punct = punct;
            current.push(c);
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    TokenSeq(tokens)
}

/// Keeps `round(fraction * n_c)` samples of every class `c`, chosen by a seeded
/// shuffle within the class. Output preserves the original sample order.
pub fn stratified_subsample(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let by_class = dataset.indices_by_class();
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && fraction * (members.len() as f64) < 1.0 {
            return Err(Error::ClassTooSmall {
                class: dataset.vocab.names[c].clone(),
                count: members.len(),
                what: format!("a stratified subsample at fraction {fraction}"),
            });
        }
    }
    let mut rng = seed::rng(seed);
    let mut keep = Vec::new();
    for mut members in by_class {
        let take = (fraction * members.len() as f64).round() as usize;
        seed::shuffle(&mut members, &mut rng);
        keep.extend_from_slice(&members[..take.min(members.len())]);
    }
    Ok(dataset.select(keep, dataset.split_tag))
}

/// Stratified three-way partition.
///
/// Each class is shuffled and divided by largest remainder, ties going to the earlier
/// split. A split left empty for a class with at least three members takes one sample
/// from the largest split of that class.
pub fn split(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("split ratios must be positive, got {r:?}")));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must sum to 1, got {r:?}")));
    }
    let mut rng = seed::rng(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (c, mut members) in dataset.indices_by_class().into_iter().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n < 3 {
            return Err(Error::ClassTooSmall {
                class: dataset.vocab.names[c].clone(),
                count: n,
                what: "a three-way split".into(),
            });
        }
        let sizes = allocate(n, &r);
        seed::shuffle(&mut members, &mut rng);
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    let [train, dev, test] = parts;
    Ok((
        dataset.select(train, SplitTag::Train),
        dataset.select(dev, SplitTag::Dev),
        dataset.select(test, SplitTag::Test),
    ))
}

fn allocate(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    // Stable sort keeps earlier splits first on equal remainders.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut remaining = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    for i in 0..3 {
        if sizes[i] == 0 {
            let largest = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[largest] -= 1;
            sizes[i] += 1;
        }
    }
    sizes
}

/// Plug-in entropy in nats of a vector of class counts.
pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn label_entropy(dataset: &Dataset) -> f64 {
    entropy_of_counts(&dataset.class_counts())
}

/// Class name to count, in vocabulary order.
pub fn class_balance(dataset: &Dataset) -> BTreeMap<String, usize> {
    dataset
        .vocab
        .names
        .iter()
        .cloned()
        .zip(dataset.class_counts())
        .collect()
}

/// Index samples by id.
pub fn id_index(dataset: &Dataset) -> HashMap<&str, usize> {
    dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect()
}
