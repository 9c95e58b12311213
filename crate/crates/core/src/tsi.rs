//! Task-specific information: the dev NLL of a model that only sees shortcut features
//! minus the dev NLL of a model that sees the whole input, plus the sweeps built on it.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{label_entropy, stratified_subsample, Dataset};
use crate::error::{Error, Result};
use crate::features::{featurize_dataset, HashingConfig};
use crate::model::{self, ClassPrior, EvalResult, Examples, GridOutcome, TrainConfig};
use crate::seed::derive_seed;
use crate::shortcuts::{extract_all, FeatureSet, StopwordPolicy};

/// Attached to every report: the point estimate drops the two KL terms that cannot be
/// measured, which the toy-grid experiment (`synth-kl`) shows are small in practice.
pub const KL_NOTE: &str =
    "point estimate omits the intractable KL(p||q) terms; see the synth-kl experiment for their measured scale";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundFlags {
    pub negative_tsi: bool,
    pub exceeds_h_y: bool,
    pub exceeds_log_m: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiReport {
    pub feature_set: FeatureSet,
    pub nll_control: f64,
    pub nll_full: f64,
    pub tsi: f64,
    pub h_y: f64,
    pub m: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub control_accuracy: f64,
    pub full_accuracy: f64,
    pub dev_fingerprint: String,
    pub flags: BoundFlags,
    pub note: String,
}

/// Slack for comparisons between quantities that may be equal in exact arithmetic.
const EPS: f64 = 1e-12;

/// The flags are nested so that one violation is reported once: `exceeds_h_y` is only
/// raised while `tsi` is still within `ln m`.
pub fn bound_flags(tsi: f64, h_y: f64, m: usize) -> BoundFlags {
    let log_m = (m as f64).ln();
    BoundFlags {
        negative_tsi: tsi < 0.0,
        exceeds_log_m: tsi > log_m + EPS,
        exceeds_h_y: tsi > h_y && tsi <= log_m + EPS,
    }
}

/// Both evaluations must carry the same dev-set fingerprint and sample count.
pub fn compute_tsi(
    control: &EvalResult,
    full: &EvalResult,
    h_y: f64,
    m: usize,
    feature_set: FeatureSet,
) -> Result<TsiReport> {
    if control.n != full.n {
        return Err(Error::DevSetMismatch(format!(
            "control evaluated on {} samples, full on {}",
            control.n, full.n
        )));
    }
    let fingerprint = match (&control.fingerprint, &full.fingerprint) {
        (Some(a), Some(b)) if a == b => a.clone(),
        (Some(a), Some(b)) => {
            return Err(Error::DevSetMismatch(format!("dev fingerprints differ: {a} vs {b}")))
        }
        _ => return Err(Error::DevSetMismatch("evaluation lacks a dev-set fingerprint".into())),
    };
    if m < 2 {
        return Err(Error::invalid(format!("class count {m} below 2")));
    }
    let tsi = control.nll_nats - full.nll_nats;
    Ok(TsiReport {
        feature_set,
        nll_control: control.nll_nats,
        nll_full: full.nll_nats,
        tsi,
        h_y,
        m,
        n_train: 0,
        n_dev: control.n,
        control_accuracy: control.accuracy,
        full_accuracy: full.accuracy,
        dev_fingerprint: fingerprint,
        flags: bound_flags(tsi, h_y, m),
        note: KL_NOTE.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    NegativeTsi { tsi: f64 },
    ExceedsHY { tsi: f64, h_y: f64, excess: f64 },
    ExceedsLogM { tsi: f64, log_m: f64, excess: f64 },
    HYExceedsLogM { h_y: f64, log_m: f64, excess: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NegativeTsi { tsi } => write!(f, "tsi {tsi:.4} is negative"),
            Diagnostic::ExceedsHY { tsi, h_y, excess } => {
                write!(f, "tsi {tsi:.4} exceeds H(Y) = {h_y:.4} by {excess:.4}")
            }
            Diagnostic::ExceedsLogM { tsi, log_m, excess } => {
                write!(f, "tsi {tsi:.4} exceeds ln m = {log_m:.4} by {excess:.4}")
            }
            Diagnostic::HYExceedsLogM { h_y, log_m, excess } => {
                write!(f, "H(Y) {h_y:.4} exceeds ln m = {log_m:.4} by {excess:.4}")
            }
        }
    }
}

/// One diagnostic per violated bound. Values are never altered.
pub fn validate_bounds(report: &TsiReport) -> Vec<Diagnostic> {
    let log_m = (report.m as f64).ln();
    let flags = bound_flags(report.tsi, report.h_y, report.m);
    let mut out = Vec::new();
    if flags.negative_tsi {
        out.push(Diagnostic::NegativeTsi { tsi: report.tsi });
    }
    if flags.exceeds_h_y {
        out.push(Diagnostic::ExceedsHY {
            tsi: report.tsi,
            h_y: report.h_y,
            excess: report.tsi - report.h_y,
        });
    }
    if flags.exceeds_log_m {
        out.push(Diagnostic::ExceedsLogM {
            tsi: report.tsi,
            log_m,
            excess: report.tsi - log_m,
        });
    }
    if report.h_y > log_m + EPS {
        out.push(Diagnostic::HYExceedsLogM {
            h_y: report.h_y,
            log_m,
            excess: report.h_y - log_m,
        });
    }
    out
}

/// A hidden-size grid plus the optimizer settings shared by its candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden_grid: Vec<Vec<usize>>,
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn control_default() -> Self {
        ModelSpec {
            hidden_grid: model::default_hidden_grid(),
            train: TrainConfig::dense(),
        }
    }

    pub fn full_default() -> Self {
        ModelSpec {
            hidden_grid: vec![vec![32]],
            train: TrainConfig::sparse(),
        }
    }

    pub fn fit(&self, train: &Examples, dev: &Examples, seed: u64) -> Result<GridOutcome> {
        model::grid_search(train, dev, &self.hidden_grid, &self.train.with_seed(seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiConfig {
    pub hashing: HashingConfig,
    pub control: ModelSpec,
    pub full: ModelSpec,
    #[serde(skip)]
    pub stopwords: StopwordPolicy,
}

impl Default for TsiConfig {
    fn default() -> Self {
        TsiConfig {
            hashing: HashingConfig::default(),
            control: ModelSpec::control_default(),
            full: ModelSpec::full_default(),
            stopwords: StopwordPolicy::english(),
        }
    }
}

fn check_splits(train: &Dataset, dev: &Dataset) -> Result<()> {
    if train.vocab() != dev.vocab() {
        return Err(Error::invalid("train and dev use different label vocabularies"));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(Error::invalid("train and dev must both be non-empty"));
    }
    Ok(())
}

pub fn shortcut_examples(ds: &Dataset, features: FeatureSet, policy: &StopwordPolicy) -> Result<Examples> {
    let vectors = extract_all(ds, features, policy)?;
    let rows: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.values).collect();
    Examples::from_rows(&rows, ds.labels(), ds.m())
}

pub fn hashed_examples(ds: &Dataset, hashing: &HashingConfig) -> Result<Examples> {
    let set = featurize_dataset(ds, hashing)?;
    Examples::sparse(hashing.dims, set.rows, ds.labels(), ds.m())
}

/// Dev evaluation of a trained control or full model, tagged with the dev fingerprint.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub dev: EvalResult,
    /// `None` for the class-prior control.
    pub grid: Option<GridOutcome>,
}

/// With an empty feature set the control is the class prior of the dev set, whose NLL
/// is the plug-in `H(Y)` of the dev labels.
pub fn fit_control(
    train: &Dataset,
    dev: &Dataset,
    features: FeatureSet,
    config: &TsiConfig,
    seed: u64,
) -> Result<FittedModel> {
    check_splits(train, dev)?;
    if features.is_empty() {
        let prior = ClassPrior::fit(&dev.labels(), dev.m())?;
        return Ok(FittedModel {
            dev: prior.evaluate(&dev.labels())?.with_fingerprint(dev.fingerprint()),
            grid: None,
        });
    }
    features.check_applicable(train.is_pair() && dev.is_pair())?;
    let tr = shortcut_examples(train, features, &config.stopwords)?;
    let dv = shortcut_examples(dev, features, &config.stopwords)?;
    let grid = config.control.fit(&tr, &dv, derive_seed(seed, "control"))?;
    Ok(FittedModel {
        dev: grid.dev().clone().with_fingerprint(dev.fingerprint()),
        grid: Some(grid),
    })
}

pub fn fit_full(train: &Dataset, dev: &Dataset, config: &TsiConfig, seed: u64) -> Result<FittedModel> {
    check_splits(train, dev)?;
    let tr = hashed_examples(train, &config.hashing)?;
    let dv = hashed_examples(dev, &config.hashing)?;
    fit_full_examples(&tr, &dv, &dev.fingerprint(), config, seed)
}

/// Same as [`fit_full`] for callers that already hold hashed inputs.
pub fn fit_full_examples(
    train: &Examples,
    dev: &Examples,
    dev_fingerprint: &str,
    config: &TsiConfig,
    seed: u64,
) -> Result<FittedModel> {
    let grid = config.full.fit(train, dev, derive_seed(seed, "full"))?;
    Ok(FittedModel {
        dev: grid.dev().clone().with_fingerprint(dev_fingerprint),
        grid: Some(grid),
    })
}

fn report(control: &FittedModel, full: &FittedModel, train: &Dataset, dev: &Dataset, fs: FeatureSet) -> Result<TsiReport> {
    let mut r = compute_tsi(&control.dev, &full.dev, label_entropy(dev), dev.m(), fs)?;
    r.n_train = train.len();
    Ok(r)
}

pub fn run_tsi(train: &Dataset, dev: &Dataset, features: FeatureSet, config: &TsiConfig, seed: u64) -> Result<TsiReport> {
    let full = fit_full(train, dev, config, seed)?;
    let control = fit_control(train, dev, features, config, seed)?;
    report(&control, &full, train, dev, features)
}

/// The full model is trained once and shared; one control model per feature set.
pub fn shortcut_sweep(
    train: &Dataset,
    dev: &Dataset,
    feature_sets: &[FeatureSet],
    config: &TsiConfig,
    seed: u64,
) -> Result<Vec<TsiReport>> {
    for fs in feature_sets.iter().filter(|f| !f.is_empty()) {
        fs.check_applicable(train.is_pair() && dev.is_pair())?;
    }
    let full = fit_full(train, dev, config, seed)?;
    shortcut_sweep_with_full(train, dev, feature_sets, &full, config, seed)
}

pub fn shortcut_sweep_with_full(
    train: &Dataset,
    dev: &Dataset,
    feature_sets: &[FeatureSet],
    full: &FittedModel,
    config: &TsiConfig,
    seed: u64,
) -> Result<Vec<TsiReport>> {
    feature_sets
        .par_iter()
        .map(|&fs| {
            let control = fit_control(train, dev, fs, config, seed)?;
            report(&control, full, train, dev, fs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub fraction: f64,
    pub seed: u64,
    pub report: TsiReport,
}

/// Retrains both models on a stratified subsample of `train` for every
/// `(fraction, seed)`; the dev set is never subsampled. Rows are ordered by fraction as
/// given, then seed.
pub fn size_sweep(
    train: &Dataset,
    dev: &Dataset,
    features: FeatureSet,
    fractions: &[f64],
    seeds: &[u64],
    config: &TsiConfig,
) -> Result<Vec<SizePoint>> {
    if fractions.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("size sweep needs at least one fraction and one seed"));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid(format!("fraction {f} outside (0, 1]")));
    }
    let points: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    // Subsampling validates every fraction before any model is trained.
    let subsets = points
        .iter()
        .map(|&(f, s)| stratified_subsample(train, f, derive_seed(s, "subsample")))
        .collect::<Result<Vec<_>>>()?;
    points
        .par_iter()
        .zip(subsets.par_iter())
        .map(|(&(fraction, seed), sub)| {
            Ok(SizePoint {
                fraction,
                seed,
                report: run_tsi(sub, dev, features, config, seed)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares of accuracy on NLL.
pub fn acc_loss_trend(points: &[(f64, f64)]) -> Result<TrendFit> {
    let n = points.len() as f64;
    if points.len() < 2 || points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("trend fit needs at least two finite points"));
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("trend fit needs at least two distinct NLL values"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(TrendFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(nll: f64, n: usize, fp: &str) -> EvalResult {
        EvalResult {
            nll_nats: nll,
            accuracy: 0.5,
            n,
            fingerprint: Some(fp.into()),
        }
    }

    #[test]
    fn subtraction_and_sign() {
        let r = compute_tsi(&eval(0.65, 10, "d"), &eval(0.25, 10, "d"), 0.6931, 2, FeatureSet::P).unwrap();
        assert!((r.tsi - 0.40).abs() < 1e-12);
        assert_eq!(r.flags, BoundFlags::default());

        let same = compute_tsi(&eval(0.5, 10, "d"), &eval(0.5, 10, "d"), 0.6931, 2, FeatureSet::P).unwrap();
        assert_eq!(same.tsi, 0.0);
        assert!(validate_bounds(&same).is_empty());

        let neg = compute_tsi(&eval(0.30, 10, "d"), &eval(0.35, 10, "d"), 0.6931, 2, FeatureSet::P).unwrap();
        assert!((neg.tsi + 0.05).abs() < 1e-12);
        assert!(neg.flags.negative_tsi);
    }

    #[test]
    fn mismatched_dev_sets_are_rejected() {
        let p = FeatureSet::P;
        assert!(matches!(
            compute_tsi(&eval(0.6, 10, "a"), &eval(0.3, 11, "a"), 0.69, 2, p),
            Err(Error::DevSetMismatch(_))
        ));
        assert!(compute_tsi(&eval(0.6, 10, "a"), &eval(0.3, 10, "b"), 0.69, 2, p).is_err());
        let mut bare = eval(0.3, 10, "a");
        bare.fingerprint = None;
        assert!(compute_tsi(&eval(0.6, 10, "a"), &bare, 0.69, 2, p).is_err());
    }

    fn with_values(tsi: f64, h_y: f64, m: usize) -> TsiReport {
        let mut r = compute_tsi(&eval(tsi, 5, "d"), &eval(0.0, 5, "d"), h_y, m, FeatureSet::P).unwrap();
        r.tsi = tsi;
        r
    }

    #[test]
    fn bounds_diagnostics() {
        assert!(validate_bounds(&with_values(0.43, 2f64.ln(), 2)).is_empty());
        assert!(validate_bounds(&with_values(0.0, 0.5, 2)).is_empty());

        let d = validate_bounds(&with_values(1.2, 3f64.ln(), 3));
        assert_eq!(d.len(), 1);
        match &d[0] {
            Diagnostic::ExceedsLogM { log_m, excess, .. } => {
                assert!((log_m - 1.0986).abs() < 5e-5);
                assert!((excess - (1.2 - 3f64.ln())).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }

        let d = validate_bounds(&with_values(0.5, 0.4, 2));
        assert!(matches!(d.as_slice(), [Diagnostic::ExceedsHY { .. }]));
        let d = validate_bounds(&with_values(-0.1, 0.4, 2));
        assert!(matches!(d.as_slice(), [Diagnostic::NegativeTsi { .. }]));
        let d = validate_bounds(&with_values(0.1, 0.9, 2));
        assert!(matches!(d.as_slice(), [Diagnostic::HYExceedsLogM { .. }]));
    }

    #[test]
    fn trend_fits() {
        let t = acc_loss_trend(&[(0.2, 0.9), (0.4, 0.8)]).unwrap();
        assert!((t.slope + 0.5).abs() < 1e-12);
        assert!((t.intercept - 1.0).abs() < 1e-12);
        assert!((t.r_squared - 1.0).abs() < 1e-12);
        let line: Vec<(f64, f64)> = (0..7).map(|i| (i as f64 * 0.1, 1.0 - i as f64 * 0.1)).collect();
        assert!((acc_loss_trend(&line).unwrap().slope + 1.0).abs() < 1e-9);
        assert!(acc_loss_trend(&[(0.3, 0.5), (0.3, 0.5)]).is_err());
        assert!(acc_loss_trend(&[(0.3, 0.5)]).is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let fwd = compute_tsi(&eval(a, 3, "d"), &eval(b, 3, "d"), 1.0, 4, FeatureSet::P).unwrap();
            let back = compute_tsi(&eval(b, 3, "d"), &eval(a, 3, "d"), 1.0, 4, FeatureSet::P).unwrap();
            prop_assert_eq!(fwd.tsi, -back.tsi);
        }

        #[test]
        fn offset_cancels(a in 0.0f64..3.0, b in 0.0f64..3.0, c in 0.0f64..3.0) {
            let base = compute_tsi(&eval(a, 3, "d"), &eval(b, 3, "d"), 1.0, 4, FeatureSet::P).unwrap();
            let shifted = compute_tsi(&eval(a + c, 3, "d"), &eval(b + c, 3, "d"), 1.0, 4, FeatureSet::P).unwrap();
            prop_assert!((base.tsi - shifted.tsi).abs() < 1e-12);
        }

        #[test]
        fn flags_match_diagnostics(tsi in -1.0f64..2.0, h_y in 0.0f64..1.2, m in 2usize..5) {
            let r = with_values(tsi, h_y, m);
            let d = validate_bounds(&r);
            let f = bound_flags(tsi, h_y, m);
            prop_assert_eq!(f.negative_tsi, d.iter().any(|x| matches!(x, Diagnostic::NegativeTsi { .. })));
            prop_assert_eq!(f.exceeds_h_y, d.iter().any(|x| matches!(x, Diagnostic::ExceedsHY { .. })));
            prop_assert_eq!(f.exceeds_log_m, d.iter().any(|x| matches!(x, Diagnostic::ExceedsLogM { .. })));
            prop_assert_eq!(r.tsi, tsi);
        }
    }
}
