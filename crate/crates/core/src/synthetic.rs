//! Bernoulli toy problems with a closed-form conditional entropy, and the experiment
//! that measures how far a trained model's dev NLL lands from that floor.
//!
//! Each input bit is Bernoulli(p_x); the label is `g(x) + e` with `e ~ Bernoulli(p_y)`,
//! where `g` is either the bit count or the conjunction of all bits. Given `x` the only
//! randomness left is `e`, so `H(Y|X)` is the binary entropy of `p_y`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Examples, TrainConfig};
use crate::seed::{self, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GKind {
    Sum,
    And,
}

impl fmt::Display for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GKind::Sum => "sum",
            GKind::And => "and",
        })
    }
}

impl FromStr for GKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" => Ok(GKind::Sum),
            "and" => Ok(GKind::And),
            other => Err(Error::invalid(format!("unknown g kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    /// Number of input bits.
    pub m: usize,
    pub p_x: f64,
    pub p_y: f64,
    pub g_kind: GKind,
    pub n_train: usize,
    pub n_dev: usize,
    pub seed: u64,
}

impl ToySpec {
    pub fn new(m: usize, p_x: f64, p_y: f64, g_kind: GKind) -> Self {
        ToySpec {
            m,
            p_x,
            p_y,
            g_kind,
            n_train: 20_000,
            n_dev: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.m > 62 {
            return Err(Error::invalid(format!("toy m = {} must lie in 2..=62", self.m)));
        }
        for (name, p) in [("p_x", self.p_x), ("p_y", self.p_y)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("{name} = {p} must lie in (0, 1)")));
            }
        }
        if self.n_train == 0 || self.n_dev == 0 {
            return Err(Error::invalid("toy split sizes must be positive"));
        }
        Ok(())
    }

    /// Size of the label alphabet: `0..=m+1` for sum, `0..=2` for and.
    pub fn num_classes(&self) -> usize {
        match self.g_kind {
            GKind::Sum => self.m + 2,
            GKind::And => 3,
        }
    }

    fn g(&self, bits: &[bool]) -> usize {
        match self.g_kind {
            GKind::Sum => bits.iter().filter(|&&b| b).count(),
            GKind::And => usize::from(bits.iter().all(|&b| b)),
        }
    }

    /// Stable key used to derive the per-config seed.
    pub fn key(&self) -> String {
        format!("{}-m{}-px{}-py{}", self.g_kind, self.m, self.p_x, self.p_y)
    }
}

/// Bits stored as 0.0/1.0, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySplit {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl ToySplit {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub spec: ToySpec,
    pub train: ToySplit,
    pub dev: ToySplit,
}

impl ToyDataset {
    pub fn examples(&self, split: &ToySplit) -> Result<Examples> {
        Examples::dense(self.spec.m, split.x.clone(), split.y.clone(), self.spec.num_classes())
    }
}

fn draw(spec: &ToySpec, n: usize, rng: &mut seed::SeededRng) -> ToySplit {
    let mut x = Vec::with_capacity(n * spec.m);
    let mut y = Vec::with_capacity(n);
    let mut bits = vec![false; spec.m];
    for _ in 0..n {
        for b in bits.iter_mut() {
            *b = rng.random_bool(spec.p_x);
            x.push(if *b { 1.0 } else { 0.0 });
        }
        y.push(spec.g(&bits) + usize::from(rng.random_bool(spec.p_y)));
    }
    ToySplit { x, y }
}

pub fn generate(spec: &ToySpec) -> Result<ToyDataset> {
    spec.validate()?;
    let train = draw(spec, spec.n_train, &mut seed::rng(derive_seed(spec.seed, "train")));
    let dev = draw(spec, spec.n_dev, &mut seed::rng(derive_seed(spec.seed, "dev")));
    Ok(ToyDataset {
        spec: spec.clone(),
        train,
        dev,
    })
}

pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

pub fn exact_conditional_entropy(spec: &ToySpec) -> f64 {
    binary_entropy(spec.p_y)
}

/// Exact distribution of `Y` over `0..num_classes`.
pub fn exact_label_distribution(spec: &ToySpec) -> Vec<f64> {
    let g_dist: Vec<f64> = match spec.g_kind {
        GKind::Sum => {
            // Binomial(m, p_x) by repeated convolution with Bernoulli(p_x).
            let mut dist = vec![1.0];
            for _ in 0..spec.m {
                let mut next = vec![0.0; dist.len() + 1];
                for (k, &p) in dist.iter().enumerate() {
                    next[k] += p * (1.0 - spec.p_x);
                    next[k + 1] += p * spec.p_x;
                }
                dist = next;
            }
            dist
        }
        GKind::And => {
            let all = spec.p_x.powi(spec.m as i32);
            vec![1.0 - all, all]
        }
    };
    let mut y = vec![0.0; g_dist.len() + 1];
    for (k, &p) in g_dist.iter().enumerate() {
        y[k] += p * (1.0 - spec.p_y);
        y[k + 1] += p * spec.p_y;
    }
    y
}

pub fn exact_label_entropy(spec: &ToySpec) -> f64 {
    exact_label_distribution(spec)
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlGrid {
    pub ms: Vec<usize>,
    pub p_xs: Vec<f64>,
    pub p_ys: Vec<f64>,
    pub kinds: Vec<GKind>,
    pub n_train: usize,
    pub n_dev: usize,
    pub base_seed: u64,
}

impl Default for KlGrid {
    /// m in 2..=10, p_x and p_y in 0.1..=0.9 by 0.1, both kinds: 1458 configs.
    fn default() -> Self {
        let tenths: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        KlGrid {
            ms: (2..=10).collect(),
            p_xs: tenths.clone(),
            p_ys: tenths,
            kinds: vec![GKind::Sum, GKind::And],
            n_train: 20_000,
            n_dev: 10_000,
            base_seed: 0,
        }
    }
}

impl KlGrid {
    pub fn specs(&self) -> Vec<ToySpec> {
        let mut out = Vec::new();
        for &g_kind in &self.kinds {
            for &m in &self.ms {
                for &p_x in &self.p_xs {
                    for &p_y in &self.p_ys {
                        let mut spec = ToySpec {
                            m,
                            p_x,
                            p_y,
                            g_kind,
                            n_train: self.n_train,
                            n_dev: self.n_dev,
                            seed: 0,
                        };
                        spec.seed = derive_seed(self.base_seed, &spec.key());
                        out.push(spec);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlScaleResult {
    pub spec: ToySpec,
    /// `None` when training failed.
    pub nll_dev: Option<f64>,
    pub h_y_given_x: f64,
    pub abs_gap: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

pub fn run_config(spec: &ToySpec, config: &TrainConfig) -> Result<KlScaleResult> {
    let data = generate(spec)?;
    let train = data.examples(&data.train)?;
    let dev = data.examples(&data.dev)?;
    let h = exact_conditional_entropy(spec);
    let cfg = config.with_seed(derive_seed(spec.seed, "model"));
    Ok(match model::train(&train, &dev, &cfg) {
        Ok(out) => KlScaleResult {
            spec: spec.clone(),
            nll_dev: Some(out.dev.nll_nats),
            h_y_given_x: h,
            abs_gap: Some((out.dev.nll_nats - h).abs()),
            best_epoch: Some(out.best_epoch),
            error: None,
        },
        Err(e @ Error::Diverged { .. }) => KlScaleResult {
            spec: spec.clone(),
            nll_dev: None,
            h_y_given_x: h,
            abs_gap: None,
            best_epoch: None,
            error: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    })
}

pub const HIST_BIN_WIDTH: f64 = 0.005;
pub const HIST_BINS: usize = 20;

/// Twenty bins of width 0.005 covering [0, 0.1), then one overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub overflow: usize,
}

impl GapHistogram {
    pub fn from_gaps(gaps: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0; HIST_BINS];
        let mut overflow = 0;
        for g in gaps {
            let bin = (g / HIST_BIN_WIDTH).floor();
            if bin < HIST_BINS as f64 {
                counts[bin.max(0.0) as usize] += 1;
            } else {
                overflow += 1;
            }
        }
        GapHistogram {
            edges: (0..=HIST_BINS).map(|i| i as f64 * HIST_BIN_WIDTH).collect(),
            counts,
            overflow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub configs: usize,
    pub failed: usize,
    pub threshold: f64,
    /// Among non-failed configs.
    pub fraction_within: f64,
    pub median_gap: f64,
    pub max_gap: f64,
    pub histogram: GapHistogram,
}

impl GapSummary {
    pub fn new(results: &[&KlScaleResult], threshold: f64) -> Self {
        let mut gaps: Vec<f64> = results.iter().filter_map(|r| r.abs_gap).collect();
        gaps.sort_by(f64::total_cmp);
        let ok = gaps.len();
        let within = gaps.iter().filter(|&&g| g < threshold).count();
        GapSummary {
            configs: results.len(),
            failed: results.len() - ok,
            threshold,
            fraction_within: if ok == 0 { 0.0 } else { within as f64 / ok as f64 },
            median_gap: median(&gaps),
            max_gap: gaps.last().copied().unwrap_or(f64::NAN),
            histogram: GapHistogram::from_gaps(gaps.iter().copied()),
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlExperiment {
    pub results: Vec<KlScaleResult>,
    pub overall: GapSummary,
    pub by_kind: Vec<(GKind, GapSummary)>,
}

/// Trains one model per grid point; points run in parallel on the current rayon pool
/// and results come back in grid order.
pub fn kl_scale_experiment(grid: &KlGrid, config: &TrainConfig, threshold: f64) -> Result<KlExperiment> {
    let specs = grid.specs();
    if specs.is_empty() {
        return Err(Error::invalid("empty toy grid"));
    }
    let results = specs
        .par_iter()
        .map(|s| run_config(s, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(results, &grid.kinds, threshold))
}

pub fn summarize(results: Vec<KlScaleResult>, kinds: &[GKind], threshold: f64) -> KlExperiment {
    let all: Vec<&KlScaleResult> = results.iter().collect();
    let overall = GapSummary::new(&all, threshold);
    let by_kind = kinds
        .iter()
        .map(|&k| {
            let subset: Vec<&KlScaleResult> = results.iter().filter(|r| r.spec.g_kind == k).collect();
            (k, GapSummary::new(&subset, threshold))
        })
        .collect();
    KlExperiment {
        results,
        overall,
        by_kind,
    }
}

pub fn write_results_csv<W: Write>(out: W, results: &[KlScaleResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "g_kind", "m", "p_x", "p_y", "n_train", "n_dev", "seed", "nll_dev", "h_y_given_x", "abs_gap",
        "best_epoch", "status",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in results {
        let s = &r.spec;
        w.write_record([
            s.g_kind.to_string(),
            s.m.to_string(),
            s.p_x.to_string(),
            s.p_y.to_string(),
            s.n_train.to_string(),
            s.n_dev.to_string(),
            s.seed.to_string(),
            opt(r.nll_dev),
            r.h_y_given_x.to_string(),
            opt(r.abs_gap),
            r.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(m: usize, p_x: f64, p_y: f64, g: GKind) -> ToySpec {
        ToySpec {
            n_train: 2000,
            n_dev: 1000,
            ..ToySpec::new(m, p_x, p_y, g)
        }
    }

    #[test]
    fn label_ranges() {
        let d = generate(&small(3, 0.5, 0.5, GKind::Sum)).unwrap();
        assert!(d.train.y.iter().all(|&y| y <= 4));
        assert!(d.train.y.contains(&4) && d.train.y.contains(&0));
        let d = generate(&small(3, 0.5, 0.3, GKind::And)).unwrap();
        for (row, &y) in d.train.x.chunks(3).zip(&d.train.y) {
            let g = usize::from(row.iter().all(|&b| b == 1.0));
            assert!(y == g || y == g + 1);
        }
    }

    #[test]
    fn bit_frequency_within_three_standard_errors() {
        let spec = ToySpec {
            n_train: 100_000,
            n_dev: 1,
            ..ToySpec::new(2, 0.3, 0.5, GKind::Sum)
        };
        let d = generate(&spec).unwrap();
        let n = spec.n_train as f64;
        for j in 0..2 {
            let mean = d.train.x.iter().skip(j).step_by(2).sum::<f64>() / n;
            let se = (0.3f64 * 0.7 / n).sqrt();
            assert!((mean - 0.3).abs() < 3.0 * se, "{mean}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = small(4, 0.4, 0.2, GKind::Sum);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = ToySpec { seed: 9, ..s.clone() };
        assert_ne!(generate(&s).unwrap().train, generate(&other).unwrap().train);
    }

    #[test]
    fn conditional_entropy_values() {
        let h = |p| exact_conditional_entropy(&ToySpec::new(2, 0.5, p, GKind::Sum));
        assert!((h(0.5) - 2f64.ln()).abs() < 1e-12);
        let independent = -0.1 * 0.1f64.ln() - 0.9 * 0.9f64.ln();
        assert!((h(0.1) - independent).abs() < 1e-12);
        assert!((h(0.1) - 0.3251).abs() < 5e-5);
        assert_eq!(h(0.9), h(0.1));
    }

    #[test]
    fn conditional_entropy_ignores_everything_but_p_y() {
        let grid = KlGrid::default();
        for s in grid.specs() {
            assert_eq!(exact_conditional_entropy(&s), binary_entropy(s.p_y));
        }
        assert_eq!(grid.specs().len(), 1458);
    }

    #[test]
    fn label_entropy_hand_case() {
        let spec = ToySpec::new(2, 0.5, 0.5, GKind::Sum);
        let dist = exact_label_distribution(&spec);
        assert_eq!(dist, vec![0.125, 0.375, 0.375, 0.125]);
        let h = -2.0 * (0.125 * 0.125f64.ln() + 0.375 * 0.375f64.ln());
        assert!((exact_label_entropy(&spec) - h).abs() < 1e-12);
        assert!((h - 1.2555).abs() < 5e-5);
    }

    #[test]
    fn and_with_near_certain_bits_reduces_to_the_noise() {
        let spec = ToySpec::new(3, 1.0 - 1e-12, 0.3, GKind::And);
        assert!((exact_label_entropy(&spec) - binary_entropy(0.3)).abs() < 1e-9);
    }

    /// Enumerates all 2^m inputs rather than convolving.
    fn brute_force_label_entropy(spec: &ToySpec) -> f64 {
        let mut dist = vec![0.0; spec.num_classes()];
        for mask in 0u32..(1 << spec.m) {
            let bits: Vec<bool> = (0..spec.m).map(|j| mask >> j & 1 == 1).collect();
            let ones = bits.iter().filter(|&&b| b).count() as i32;
            let p = spec.p_x.powi(ones) * (1.0 - spec.p_x).powi(spec.m as i32 - ones);
            let g = spec.g(&bits);
            dist[g] += p * (1.0 - spec.p_y);
            dist[g + 1] += p * spec.p_y;
        }
        dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }

    #[test]
    fn label_entropy_matches_enumeration() {
        for m in 2..=10 {
            for kind in [GKind::Sum, GKind::And] {
                for (px, py) in [(0.1, 0.9), (0.5, 0.5), (0.7, 0.2)] {
                    let s = ToySpec::new(m, px, py, kind);
                    let h = exact_label_entropy(&s);
                    assert!((h - brute_force_label_entropy(&s)).abs() < 1e-10);
                    assert!(h >= exact_conditional_entropy(&s));
                }
            }
        }
    }

    #[test]
    fn empirical_label_frequencies_match_closed_form() {
        let spec = ToySpec {
            n_train: 50_000,
            n_dev: 1,
            ..ToySpec::new(3, 0.6, 0.3, GKind::Sum)
        };
        let exact = exact_label_distribution(&spec);
        for seed in [1, 2] {
            let d = generate(&ToySpec { seed, ..spec.clone() }).unwrap();
            let n = d.train.len() as f64;
            for (c, &p) in exact.iter().enumerate() {
                let freq = d.train.y.iter().filter(|&&y| y == c).count() as f64 / n;
                let se = (p * (1.0 - p) / n).sqrt();
                assert!((freq - p).abs() < 3.0 * se + 1e-12, "class {c}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn histogram_binning() {
        let h = GapHistogram::from_gaps([0.0, 0.0049, 0.005, 0.0999, 0.1, 3.0]);
        assert_eq!(h.edges.len(), 21);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[19], 1);
        assert_eq!(h.overflow, 2);
    }

    #[test]
    fn summary_counts_failures_separately() {
        let ok = KlScaleResult {
            spec: ToySpec::new(2, 0.5, 0.5, GKind::Sum),
            nll_dev: Some(0.7),
            h_y_given_x: 0.69,
            abs_gap: Some(0.01),
            best_epoch: Some(3),
            error: None,
        };
        let bad = KlScaleResult {
            nll_dev: None,
            abs_gap: None,
            error: Some("diverged".into()),
            ..ok.clone()
        };
        let s = GapSummary::new(&[&ok, &bad, &ok], 0.04);
        assert_eq!(s.failed, 1);
        assert_eq!(s.fraction_within, 1.0);
        assert_eq!(s.median_gap, 0.01);
    }

    #[test]
    fn validation() {
        assert!(ToySpec::new(1, 0.5, 0.5, GKind::Sum).validate().is_err());
        assert!(ToySpec::new(2, 0.0, 0.5, GKind::Sum).validate().is_err());
        assert!(ToySpec::new(2, 0.5, 1.0, GKind::And).validate().is_err());
        assert_eq!("AND".parse::<GKind>().unwrap(), GKind::And);
    }
}
