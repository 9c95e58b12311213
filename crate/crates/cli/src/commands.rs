use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tsi_core::corpus::{class_balance, label_entropy, load_splits, Dataset, SplitTag};
use tsi_core::features::{featurize_dataset, write_sparse};
use tsi_core::knn_entropy::{mc_compare, write_mc_csv, McComparison};
use tsi_core::model::{write_checkpoint, write_history_csv, CheckpointMeta, EvalResult, GridCandidate};
use tsi_core::planted;
use tsi_core::seed::{derive_seed, Fingerprinter};
use tsi_core::shortcuts::{extract_all, write_features_csv, FeatureSet};
use tsi_core::synthetic::{kl_scale_experiment, write_results_csv, KlExperiment};
use tsi_core::tsi::{
    acc_loss_trend, compute_tsi, fit_control, fit_full, size_sweep, validate_bounds, Diagnostic, FittedModel,
    SizePoint, TrendFit, TsiConfig, TsiReport,
};

use crate::config::RunConfig;
use crate::error::{io_error, CliError, StageExt};
use crate::external::external_eval;
use crate::output::{OutDir, SOFTWARE_VERSION};

pub struct Splits {
    pub train: Dataset,
    pub dev: Option<Dataset>,
    pub skipped: Vec<(SplitTag, usize)>,
    /// Hash over every field of every sample, used in cache keys.
    pub content: String,
}

impl Splits {
    pub fn dev(&self) -> Result<&Dataset, CliError> {
        self.dev
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a dev set ([data] dev)".into()))
    }

    pub fn is_pair(&self) -> bool {
        self.train.is_pair() && self.dev.as_ref().is_none_or(Dataset::is_pair)
    }
}

fn content_fingerprint<'a>(sets: impl IntoIterator<Item = &'a Dataset>) -> String {
    let mut fp = Fingerprinter::new();
    for ds in sets {
        fp.field(&format!("{:?}", ds.split_tag()));
        for s in ds.samples() {
            fp.field(&s.id)
                .field(&s.text_a)
                .field(s.text_b.as_deref().unwrap_or("\u{0}"))
                .field(ds.vocab().name(s.label).unwrap_or_default());
        }
    }
    fp.finish()
}

pub fn load_data(cfg: &RunConfig) -> Result<Splits, CliError> {
    if let Some(spec) = &cfg.data.planted {
        let corpus = planted::generate(spec).invalid()?;
        let content = content_fingerprint([&corpus.train, &corpus.dev]);
        return Ok(Splits {
            train: corpus.train,
            dev: Some(corpus.dev),
            skipped: vec![(SplitTag::Train, 0), (SplitTag::Dev, 0)],
            content,
        });
    }
    let train = cfg
        .data
        .train
        .as_deref()
        .ok_or_else(|| CliError::Config("no data configured: set [data] train/dev, [data.planted], or --train".into()))?;
    let mut files = vec![(train, SplitTag::Train)];
    if let Some(dev) = cfg.data.dev.as_deref() {
        files.push((dev, SplitTag::Dev));
    }
    for (p, _) in &files {
        if !p.exists() {
            return Err(CliError::Config(format!("data file `{}` does not exist", p.display())));
        }
    }
    let mut loaded = load_splits(&files, cfg.data.format, &cfg.data.fields).invalid()?.into_iter();
    let train = loaded.next().unwrap();
    let dev = loaded.next();
    let mut skipped = vec![(SplitTag::Train, train.skipped)];
    if let Some(d) = &dev {
        skipped.push((SplitTag::Dev, d.skipped));
    }
    let dev = dev.map(|d| d.dataset);
    let content = content_fingerprint(std::iter::once(&train.dataset).chain(dev.as_ref()));
    Ok(Splits {
        train: train.dataset,
        dev,
        skipped,
        content,
    })
}

fn check_features(fs: FeatureSet, splits: &Splits) -> Result<(), CliError> {
    fs.check_applicable(splits.is_pair()).invalid()
}

/// Batch sizes and the like are request errors; catch them before any training starts.
fn check_models(tsi: &TsiConfig, n_train: usize) -> Result<(), CliError> {
    for spec in [&tsi.control, &tsi.full] {
        if spec.hidden_grid.is_empty() {
            return Err(CliError::Config("hidden_grid must not be empty".into()));
        }
        for hidden in &spec.hidden_grid {
            spec.train.with_hidden(hidden).validate(n_train).invalid()?;
        }
    }
    Ok(())
}

fn cache_key(parts: &[&str]) -> String {
    let mut fp = Fingerprinter::new();
    fp.field(SOFTWARE_VERSION);
    for p in parts {
        fp.field(p);
    }
    fp.finish()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// What is kept of a trained model selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub source: String,
    pub dev: EvalResult,
    pub hidden: Option<Vec<usize>>,
    pub best_epoch: Option<usize>,
    pub candidates: Vec<GridCandidate>,
}

impl FitRecord {
    fn from_fit(fit: &FittedModel, source: &str) -> Self {
        FitRecord {
            source: source.into(),
            dev: fit.dev.clone(),
            hidden: fit.grid.as_ref().map(|g| g.candidates[g.best_index].hidden.clone()),
            best_epoch: fit.grid.as_ref().map(|g| g.best.best_epoch),
            candidates: fit.grid.as_ref().map(|g| g.candidates.clone()).unwrap_or_default(),
        }
    }
}

fn cached_full(out: &OutDir, splits: &Splits, tsi: &TsiConfig, seed: u64) -> Result<FitRecord, CliError> {
    let key = cache_key(&["full", &splits.content, &json(&tsi.hashing), &json(&tsi.full), &seed.to_string()]);
    if let Some(hit) = out.cache_get::<FitRecord>("full", &key) {
        return Ok(hit);
    }
    let fit = fit_full(&splits.train, splits.dev()?, tsi, seed).stage("train full model")?;
    let record = FitRecord::from_fit(&fit, "trained");
    if let Some(grid) = &fit.grid {
        let bin = out.cache_file("full", &key, "bin");
        let file = std::fs::File::create(&bin).map_err(|e| io_error(&bin, e))?;
        write_checkpoint(std::io::BufWriter::new(file), grid.params()).stage("write checkpoint")?;
        let train_cfg = tsi.full.train.with_hidden(&grid.candidates[grid.best_index].hidden);
        out.cache_put("full-meta", &key, &CheckpointMeta::new(&grid.best, &train_cfg))?;
        let hist = out.cache_file("full-history", &key, "csv");
        let file = std::fs::File::create(&hist).map_err(|e| io_error(&hist, e))?;
        write_history_csv(file, &grid.best.history).stage("write history")?;
    }
    out.cache_put("full", &key, &record)?;
    Ok(record)
}

fn cached_control(
    out: &OutDir,
    cfg: &RunConfig,
    splits: &Splits,
    fs: FeatureSet,
    tsi: &TsiConfig,
    seed: u64,
) -> Result<FitRecord, CliError> {
    let key = cache_key(&[
        "control",
        &splits.content,
        &fs.to_string(),
        &json(&cfg.shortcuts),
        &json(&tsi.control),
        &seed.to_string(),
    ]);
    if let Some(hit) = out.cache_get::<FitRecord>("control", &key) {
        return Ok(hit);
    }
    let fit = fit_control(&splits.train, splits.dev()?, fs, tsi, seed).stage("train control model")?;
    let source = if fs.is_empty() { "class prior" } else { "trained" };
    let record = FitRecord::from_fit(&fit, source);
    out.cache_put("control", &key, &record)?;
    Ok(record)
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub split: String,
    pub n: usize,
    pub skipped: usize,
    pub class_balance: BTreeMap<String, usize>,
    pub h_y: f64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InspectSummary {
    pub pair: bool,
    pub m: usize,
    pub labels: Vec<String>,
    pub splits: Vec<SplitSummary>,
}

pub fn inspect(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let splits = load_data(cfg)?;
    let mut rows = vec![(&splits.train, "train")];
    if let Some(d) = &splits.dev {
        rows.push((d, "dev"));
    }
    let summary = InspectSummary {
        pair: splits.is_pair(),
        m: splits.train.m(),
        labels: splits.train.vocab().names().to_vec(),
        splits: rows
            .iter()
            .zip(&splits.skipped)
            .map(|((ds, name), (_, skipped))| SplitSummary {
                split: name.to_string(),
                n: ds.len(),
                skipped: *skipped,
                class_balance: class_balance(ds),
                h_y: label_entropy(ds),
                fingerprint: ds.fingerprint(),
            })
            .collect(),
    };
    out.write_json("inspect.json", "inspect", &summary)?;
    let mut text = format!("pair={} m={} labels={:?}\n", summary.pair, summary.m, summary.labels);
    for s in &summary.splits {
        writeln!(
            text,
            "{}: n={} skipped={} h_y={:.4} balance={:?}",
            s.split, s.n, s.skipped, s.h_y, s.class_balance
        )
        .unwrap();
    }
    out.write_text("inspect.txt", &text)?;
    Ok(text)
}

pub fn extract(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let splits = load_data(cfg)?;
    let fs = cfg.shortcuts.features;
    check_features(fs, &splits)?;
    let tsi = cfg.tsi_config()?;
    let mut text = String::new();
    let mut sets = vec![(&splits.train, "train")];
    if let Some(d) = &splits.dev {
        sets.push((d, "dev"));
    }
    for (ds, name) in sets {
        let vectors = extract_all(ds, fs, &tsi.stopwords).stage("extract shortcuts")?;
        let empty = vectors.iter().filter(|v| v.empty_text).count();
        out.write_csv(&format!("shortcuts_{name}.csv"), |w| write_features_csv(w, ds, fs, &vectors))?;
        let hashed = featurize_dataset(ds, &tsi.hashing).stage("featurize")?;
        let mut buf = Vec::new();
        write_sparse(&mut buf, &tsi.hashing, &hashed.rows, &ds.labels()).stage("featurize")?;
        // Tag the header line with the config fingerprint; readers ignore unknown keys.
        let newline = buf.iter().position(|&b| b == b'\n').unwrap();
        let tag = format!(" config={}", out.fingerprint());
        buf.splice(newline..newline, tag.bytes());
        let path = out.path(&format!("hashed_{name}.sparse"));
        std::fs::write(&path, buf).map_err(|e| io_error(&path, e))?;
        writeln!(
            text,
            "{name}: {} samples, {fs} features ({empty} with empty text), {} with no n-grams",
            ds.len(),
            hashed.empty
        )
        .unwrap();
    }
    out.write_text("extract.txt", &text)?;
    Ok(text)
}

#[derive(Debug, Clone, Serialize)]
pub struct TsiOutput {
    pub report: TsiReport,
    pub diagnostics: Vec<Diagnostic>,
    pub control: FitRecord,
    pub full: FitRecord,
}

fn finish_report(report: &mut TsiReport, train: &Dataset) -> Vec<Diagnostic> {
    report.n_train = train.len();
    validate_bounds(report)
}

fn report_line(r: &TsiReport) -> String {
    format!(
        "{:<8} nll_control={:.4} nll_full={:.4} tsi={:.4} h_y={:.4} m={}",
        r.feature_set.to_string(),
        r.nll_control,
        r.nll_full,
        r.tsi,
        r.h_y,
        r.m
    )
}

pub fn tsi(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let splits = load_data(cfg)?;
    let dev = splits.dev()?;
    let fs = cfg.shortcuts.features;
    if !fs.is_empty() {
        check_features(fs, &splits)?;
    }
    let tsi_cfg = cfg.tsi_config()?;
    if cfg.external.is_none() {
        check_models(&tsi_cfg, splits.train.len())?;
    }
    let (control, full) = match &cfg.external {
        Some(ext) => {
            let record = |path| -> Result<FitRecord, CliError> {
                Ok(FitRecord {
                    source: "external".into(),
                    dev: external_eval(path, dev)?,
                    hidden: None,
                    best_epoch: None,
                    candidates: Vec::new(),
                })
            };
            (record(&ext.control_nll)?, record(&ext.full_nll)?)
        }
        None => (
            cached_control(out, cfg, &splits, fs, &tsi_cfg, cfg.seed)?,
            cached_full(out, &splits, &tsi_cfg, cfg.seed)?,
        ),
    };
    let mut report = compute_tsi(&control.dev, &full.dev, label_entropy(dev), dev.m(), fs).stage("compute tsi")?;
    let diagnostics = finish_report(&mut report, &splits.train);
    let mut text = report_line(&report) + "\n";
    for d in &diagnostics {
        writeln!(text, "diagnostic: {d}").unwrap();
    }
    writeln!(text, "note: {}", report.note).unwrap();
    out.write_json(
        "tsi_report.json",
        "tsi",
        &TsiOutput {
            report,
            diagnostics,
            control,
            full,
        },
    )?;
    out.write_text("tsi_summary.txt", &text)?;
    Ok(text)
}

fn report_csv(w: &mut Vec<u8>, rows: &[(String, &TsiReport)], lead: &str) -> tsi_core::Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        lead,
        "feature_set",
        "nll_control",
        "nll_full",
        "tsi",
        "h_y",
        "m",
        "n_train",
        "n_dev",
        "control_accuracy",
        "full_accuracy",
        "negative_tsi",
        "exceeds_h_y",
        "exceeds_log_m",
    ])?;
    for (key, r) in rows {
        c.write_record([
            key.clone(),
            r.feature_set.to_string(),
            r.nll_control.to_string(),
            r.nll_full.to_string(),
            r.tsi.to_string(),
            r.h_y.to_string(),
            r.m.to_string(),
            r.n_train.to_string(),
            r.n_dev.to_string(),
            r.control_accuracy.to_string(),
            r.full_accuracy.to_string(),
            r.flags.negative_tsi.to_string(),
            r.flags.exceeds_h_y.to_string(),
            r.flags.exceeds_log_m.to_string(),
        ])?;
    }
    c.flush().map_err(|e| tsi_core::Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

pub fn sweep_features(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let splits = load_data(cfg)?;
    let dev = splits.dev()?;
    let sets = match &cfg.sweep.feature_sets {
        Some(s) if s.is_empty() => return Err(CliError::Config("[sweep] feature_sets is empty".into())),
        Some(s) => s.clone(),
        None if splits.is_pair() => vec![FeatureSet::P, FeatureSet::PS, FeatureSet::PSO],
        None => vec![FeatureSet::P, FeatureSet::PS],
    };
    for fs in sets.iter().filter(|f| !f.is_empty()) {
        check_features(*fs, &splits)?;
    }
    let tsi_cfg = cfg.tsi_config()?;
    check_models(&tsi_cfg, splits.train.len())?;
    let full = cached_full(out, &splits, &tsi_cfg, cfg.seed)?;
    let controls = sets
        .iter()
        .map(|&fs| cached_control(out, cfg, &splits, fs, &tsi_cfg, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::new();
    let mut text = String::new();
    for (fs, control) in sets.iter().zip(&controls) {
        let mut r = compute_tsi(&control.dev, &full.dev, label_entropy(dev), dev.m(), *fs).stage("compute tsi")?;
        let diags = finish_report(&mut r, &splits.train);
        writeln!(text, "{}", report_line(&r)).unwrap();
        for d in &diags {
            writeln!(text, "  diagnostic: {d}").unwrap();
        }
        reports.push(r);
    }
    let rows: Vec<(String, &TsiReport)> = reports.iter().enumerate().map(|(i, r)| (i.to_string(), r)).collect();
    out.write_csv("sweep_features.csv", |w| report_csv(w, &rows, "index"))?;
    out.write_jsonl("sweep_features.jsonl", &reports)?;
    out.write_json("sweep_features.json", "sweep-features", &reports)?;
    out.write_text("sweep_features_summary.txt", &text)?;
    Ok(text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FractionSpread {
    pub fraction: f64,
    pub mean_tsi: f64,
    pub min_tsi: f64,
    pub max_tsi: f64,
    pub spread: f64,
}

pub fn spreads(points: &[SizePoint]) -> Vec<FractionSpread> {
    let mut fractions: Vec<f64> = Vec::new();
    for p in points {
        if !fractions.contains(&p.fraction) {
            fractions.push(p.fraction);
        }
    }
    fractions
        .into_iter()
        .map(|f| {
            let t: Vec<f64> = points.iter().filter(|p| p.fraction == f).map(|p| p.report.tsi).collect();
            let min = t.iter().copied().fold(f64::INFINITY, f64::min);
            let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            FractionSpread {
                fraction: f,
                mean_tsi: t.iter().sum::<f64>() / t.len() as f64,
                min_tsi: min,
                max_tsi: max,
                spread: max - min,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeOutput {
    pub points: Vec<SizePoint>,
    pub spreads: Vec<FractionSpread>,
    /// Accuracy against NLL over every control and full model in the sweep.
    pub trend: Option<TrendFit>,
    pub trend_error: Option<String>,
}

pub fn sweep_size(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let splits = load_data(cfg)?;
    let dev = splits.dev()?;
    let fs = cfg.shortcuts.features;
    if !fs.is_empty() {
        check_features(fs, &splits)?;
    }
    let tsi_cfg = cfg.tsi_config()?;
    let (fractions, seeds) = (&cfg.sweep.fractions, &cfg.sweep.seeds);
    if fractions.is_empty() || seeds.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(CliError::Config("[sweep] needs fractions in (0, 1] and at least one seed".into()));
    }
    for &f in fractions {
        for &s in seeds {
            let sub = tsi_core::corpus::stratified_subsample(&splits.train, f, derive_seed(s, "subsample")).invalid()?;
            check_models(&tsi_cfg, sub.len())?;
        }
    }
    let key = cache_key(&[
        "size",
        &splits.content,
        &fs.to_string(),
        &json(&cfg.shortcuts),
        &json(&tsi_cfg),
        &json(fractions),
        &json(seeds),
    ]);
    let points: Vec<SizePoint> = match out.cache_get("size", &key) {
        Some(hit) => hit,
        None => {
            let p = size_sweep(&splits.train, dev, fs, fractions, seeds, &tsi_cfg).stage("size sweep")?;
            out.cache_put("size", &key, &p)?;
            p
        }
    };
    let mut trend_points: Vec<(f64, f64)> = Vec::new();
    for p in &points {
        trend_points.push((p.report.nll_full, p.report.full_accuracy));
        trend_points.push((p.report.nll_control, p.report.control_accuracy));
    }
    let (trend, trend_error) = match acc_loss_trend(&trend_points) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let spreads = spreads(&points);
    let mut text = String::new();
    for p in &points {
        writeln!(text, "fraction={} seed={} {}", p.fraction, p.seed, report_line(&p.report)).unwrap();
        for d in validate_bounds(&p.report) {
            writeln!(text, "  diagnostic: {d}").unwrap();
        }
    }
    for s in &spreads {
        writeln!(
            text,
            "fraction {}: mean tsi {:.4}, spread {:.4} ({:.4}..{:.4})",
            s.fraction, s.mean_tsi, s.spread, s.min_tsi, s.max_tsi
        )
        .unwrap();
    }
    match &trend {
        Some(t) => writeln!(
            text,
            "accuracy ~ {:.4} * nll + {:.4} (r^2 = {:.4})",
            t.slope, t.intercept, t.r_squared
        )
        .unwrap(),
        None => writeln!(text, "accuracy trend unavailable: {}", trend_error.as_deref().unwrap_or("")).unwrap(),
    }
    let rows: Vec<(String, &TsiReport)> = points
        .iter()
        .map(|p| (format!("{}:{}", p.fraction, p.seed), &p.report))
        .collect();
    out.write_csv("sweep_size.csv", |w| report_csv(w, &rows, "fraction:seed"))?;
    out.write_jsonl("sweep_size.jsonl", &points)?;
    out.write_json(
        "sweep_size.json",
        "sweep-size",
        &SizeOutput {
            points,
            spreads,
            trend,
            trend_error,
        },
    )?;
    out.write_text("sweep_size_summary.txt", &text)?;
    Ok(text)
}

pub fn synth_kl(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let grid = cfg.kl_grid();
    if grid.specs().is_empty() {
        return Err(CliError::Config("[synth] grid is empty".into()));
    }
    for s in grid.specs() {
        s.validate().invalid()?;
    }
    let train_cfg = cfg.synth_train_config();
    train_cfg.validate(cfg.synth.n_train).invalid()?;
    let threshold = cfg.synth.threshold;
    let key = cache_key(&["synth", &json(&grid), &json(&train_cfg), &threshold.to_string()]);
    let exp: KlExperiment = match out.cache_get("synth", &key) {
        Some(hit) => hit,
        None => {
            let e = kl_scale_experiment(&grid, &train_cfg, threshold).stage("kl-scale experiment")?;
            out.cache_put("synth", &key, &e)?;
            e
        }
    };
    let o = &exp.overall;
    let mut text = format!(
        "fraction within {threshold} nats: {:.1}%\n",
        100.0 * o.fraction_within
    );
    writeln!(
        text,
        "configs: {} ({} failed), median gap {:.4}, max gap {:.4}",
        o.configs, o.failed, o.median_gap, o.max_gap
    )
    .unwrap();
    for (kind, s) in &exp.by_kind {
        writeln!(
            text,
            "{kind}: within {:.1}%, median gap {:.4}",
            100.0 * s.fraction_within,
            s.median_gap
        )
        .unwrap();
    }
    out.write_csv("synth_kl.csv", |w| write_results_csv(w, &exp.results))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        overall: &'a tsi_core::synthetic::GapSummary,
        by_kind: &'a [(tsi_core::synthetic::GKind, tsi_core::synthetic::GapSummary)],
    }
    out.write_json(
        "synth_kl.json",
        "synth-kl",
        &Summary {
            overall: &exp.overall,
            by_kind: &exp.by_kind,
        },
    )?;
    out.write_text("synth_kl_summary.txt", &text)?;
    Ok(text)
}

pub fn knn_compare(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let splits = load_data(cfg)?;
    let dev = splits.dev()?;
    let fs = cfg.shortcuts.features;
    check_features(fs, &splits)?;
    let mc = cfg.mc_config();
    if mc.subset_size == 0 || mc.subset_size > splits.train.len() || mc.seeds.is_empty() {
        return Err(CliError::Config(format!(
            "[knn] subset_size must lie in 1..={} and seeds must be non-empty",
            splits.train.len()
        )));
    }
    let tsi_cfg = cfg.tsi_config()?;
    tsi_cfg.control.train.validate(mc.subset_size).invalid()?;
    let key = cache_key(&[
        "knn",
        &splits.content,
        &fs.to_string(),
        &json(&cfg.shortcuts),
        &json(&tsi_cfg),
        &json(&mc),
    ]);
    let cmp: McComparison = match out.cache_get("knn", &key) {
        Some(hit) => hit,
        None => {
            let c = mc_compare(&splits.train, dev, fs, &mc, &tsi_cfg).stage("knn comparison")?;
            out.cache_put("knn", &key, &c)?;
            c
        }
    };
    let s = &cmp.summary;
    let mut text = String::new();
    for r in &cmp.rows {
        writeln!(
            text,
            "seed={} n={} knn H(Y|Xs)={:.4} nll_control={:.4} gap={:+.4}{}",
            r.seed,
            r.n,
            r.h_y_given_xs_knn,
            r.nll_control,
            r.gap,
            if r.negative_flag { " NEGATIVE" } else { "" }
        )
        .unwrap();
    }
    writeln!(
        text,
        "summary: knn {:.4} +- {:.4}, nll_control {:.4} +- {:.4}, mean gap {:+.4}, mean |gap| {:.4}, negative estimates {}",
        s.mean_knn, s.std_knn, s.mean_nll_control, s.std_nll_control, s.mean_gap, s.mean_abs_gap, s.negative_count
    )
    .unwrap();
    writeln!(text, "full-input side: {}", s.x_side).unwrap();
    out.write_csv("knn_compare.csv", |w| write_mc_csv(w, &cmp))?;
    out.write_json("knn_compare.json", "knn-compare", &cmp)?;
    out.write_text("knn_compare_summary.txt", &text)?;
    Ok(text)
}
