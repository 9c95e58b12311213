//! Synthetic text corpus with a planted punctuation shortcut.
//!
//! Each sample draws a punctuation regime `a` and a content bit `b`. Sparse texts carry
//! at most one punctuation token, dense texts three to five, so the punctuation rate
//! falls on one side or the other of a gap and [`PUNCT_THRESHOLD`] (inside the gap) is a
//! median of the rate. `b` is spelled out by one sentiment word and also nudges the
//! share of stopwords. The label is `a XOR b`, flipped with probability `noise`.
//!
//! Because `b` is skewed, punctuation alone predicts the label better than the prior,
//! stopwords add a little more, and the full text (the sentiment word plus the commas)
//! leaves only the flip noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelVocab, SplitTag, TextSample};
use crate::error::{Error, Result};
use crate::seed::{self, derive_seed, SeededRng};
use crate::synthetic::binary_entropy;

const POSITIVE: &[&str] = &["great", "excellent", "wonderful", "superb", "delightful", "brilliant"];
const NEGATIVE: &[&str] = &["awful", "terrible", "dreadful", "horrible", "dismal", "mediocre"];
const CONTENT: &[&str] = &[
    "table", "river", "window", "garden", "music", "engine", "paper", "forest", "market", "letter",
    "station", "bridge", "winter", "coffee", "camera", "ticket", "island", "doctor", "teacher", "village",
    "kitchen", "season", "planet", "museum", "harbor", "library", "painting", "journey", "morning", "dinner",
];
const STOP: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "is", "it", "that", "was", "for", "on", "with", "as", "at", "by",
    "this", "be", "from", "we",
];

pub const MIN_WORDS: usize = 8;
pub const MAX_WORDS: usize = 14;

/// Midpoint of the gap between the sparse regime's largest rate, 1/(MIN_WORDS+1), and
/// the dense regime's smallest, 3/(MAX_WORDS+3).
pub const PUNCT_THRESHOLD: f64 = (1.0 / (MIN_WORDS as f64 + 1.0) + 3.0 / (MAX_WORDS as f64 + 3.0)) / 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_train: usize,
    pub n_dev: usize,
    /// Probability of flipping the label.
    pub noise: f64,
    /// P(b = 1).
    pub content_bias: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_train: 20_000,
            n_dev: 5_000,
            noise: 0.1,
            content_bias: 0.75,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_dev == 0 {
            return Err(Error::invalid("planted split sizes must be positive"));
        }
        if !(0.0..0.5).contains(&self.noise) || !(self.content_bias > 0.0 && self.content_bias < 1.0) {
            return Err(Error::invalid("planted noise must lie in [0, 0.5) and content bias in (0, 1)"));
        }
        Ok(())
    }

    /// `H(Y)`, which is the same for every punctuation regime mix since `a` is fair.
    pub fn label_entropy(&self) -> f64 {
        binary_entropy(0.5)
    }

    /// `H(Y | punctuation regime)`.
    pub fn entropy_given_punct(&self) -> f64 {
        let q = self.content_bias;
        binary_entropy(q * (1.0 - self.noise) + (1.0 - q) * self.noise)
    }

    /// `H(Y | text)`: only the flip noise remains.
    pub fn entropy_given_text(&self) -> f64 {
        binary_entropy(self.noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Latent {
    pub dense_punct: bool,
    pub content: bool,
}

fn sample_text(rng: &mut SeededRng, content_bias: f64) -> (String, Latent) {
    let dense_punct = rng.random_bool(0.5);
    let content = rng.random_bool(content_bias);
    let n_words = rng.random_range(MIN_WORDS..=MAX_WORDS);
    let signal_at = rng.random_range(0..n_words);
    let stop_p = 0.35 + 0.15 * f64::from(u8::from(content));
    let mut words: Vec<String> = (0..n_words)
        .map(|i| {
            let pool = if i == signal_at {
                if content {
                    POSITIVE
                } else {
                    NEGATIVE
                }
            } else if rng.random_bool(stop_p) {
                STOP
            } else {
                CONTENT
            };
            pool[rng.random_range(0..pool.len())].to_string()
        })
        .collect();
    if dense_punct {
        let commas = rng.random_range(2..=4);
        let mut slots: Vec<usize> = (0..n_words - 1).collect();
        seed::shuffle(&mut slots, rng);
        for &i in &slots[..commas] {
            words[i].push(',');
        }
        words[n_words - 1].push('.');
    } else if rng.random_bool(0.5) {
        words[n_words - 1].push('.');
    }
    (words.join(" "), Latent { dense_punct, content })
}

fn draw_split(spec: &PlantedSpec, n: usize, tag: SplitTag, vocab: &LabelVocab) -> Result<(Dataset, Vec<Latent>)> {
    let name = match tag {
        SplitTag::Train => "train",
        SplitTag::Dev => "dev",
        SplitTag::Test => "test",
    };
    let mut rng = seed::rng(derive_seed(spec.seed, name));
    let mut samples = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n);
    for i in 0..n {
        let (text, latent) = sample_text(&mut rng, spec.content_bias);
        let flip = rng.random_bool(spec.noise);
        let label = usize::from(latent.dense_punct ^ latent.content ^ flip);
        samples.push(TextSample::single(format!("{name}-{i}"), text, label));
        latents.push(latent);
    }
    Ok((Dataset::new(samples, vocab.clone(), tag)?, latents))
}

pub struct PlantedCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub train_latent: Vec<Latent>,
    pub dev_latent: Vec<Latent>,
}

pub fn generate(spec: &PlantedSpec) -> Result<PlantedCorpus> {
    spec.validate()?;
    let vocab = LabelVocab::new(["0", "1"])?;
    let (train, train_latent) = draw_split(spec, spec.n_train, SplitTag::Train, &vocab)?;
    let (dev, dev_latent) = draw_split(spec, spec.n_dev, SplitTag::Dev, &vocab)?;
    Ok(PlantedCorpus {
        train,
        dev,
        train_latent,
        dev_latent,
    })
}
