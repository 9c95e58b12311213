//! The TOML run configuration. Every section is optional; missing keys take the
//! documented defaults. Relative paths are resolved against the config file's
//! directory, and every referenced file must exist when the config is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsi_core::corpus::{DataFormat, FieldMap};
use tsi_core::features::HashingConfig;
use tsi_core::knn_entropy::{KnnOptions, McConfig};
use tsi_core::model::TrainConfig;
use tsi_core::planted::PlantedSpec;
use tsi_core::seed::fingerprint_bytes;
use tsi_core::shortcuts::{FeatureSet, StopwordPolicy};
use tsi_core::synthetic::{GKind, KlGrid};
use tsi_core::tsi::{ModelSpec, TsiConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub shortcuts: ShortcutSection,
    pub hashing: HashingConfig,
    pub control: ModelSection,
    pub full: ModelSection,
    pub external: Option<ExternalSection>,
    pub sweep: SweepSection,
    pub synth: SynthSection,
    pub knn: KnnSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub format: Option<DataFormat>,
    pub fields: FieldMap,
    /// Generate the planted-shortcut corpus instead of reading files.
    pub planted: Option<PlantedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShortcutSection {
    pub features: FeatureSet,
    pub stopwords: Option<PathBuf>,
    pub negations: Option<PathBuf>,
}

impl Default for ShortcutSection {
    fn default() -> Self {
        ShortcutSection {
            features: FeatureSet::PS,
            stopwords: None,
            negations: None,
        }
    }
}

/// Overrides applied on top of the control or full model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_grid: Option<Vec<Vec<usize>>>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
}

impl ModelSection {
    fn apply(&self, mut spec: ModelSpec) -> ModelSpec {
        if let Some(g) = &self.hidden_grid {
            spec.hidden_grid = g.clone();
        }
        let t: &mut TrainConfig = &mut spec.train;
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.patience {
            t.early_stop_patience = v;
        }
        spec
    }
}

/// Per-sample dev NLLs produced elsewhere, used in place of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSection {
    pub control_nll: PathBuf,
    pub full_nll: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Defaults to P, P+S and, for pair data, P+S+O.
    pub feature_sets: Option<Vec<FeatureSet>>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            feature_sets: None,
            fractions: vec![1.0, 0.5, 0.25, 0.05],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub ms: Vec<usize>,
    pub p_xs: Vec<f64>,
    pub p_ys: Vec<f64>,
    pub kinds: Vec<GKind>,
    pub n_train: usize,
    pub n_dev: usize,
    pub threshold: f64,
    pub hidden: Vec<usize>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let g = KlGrid::default();
        SynthSection {
            ms: g.ms,
            p_xs: g.p_xs,
            p_ys: g.p_ys,
            kinds: g.kinds,
            n_train: g.n_train,
            n_dev: g.n_dev,
            threshold: 0.04,
            hidden: vec![30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSection {
    pub k: usize,
    pub jitter: f64,
    pub use_tree: bool,
    pub subset_size: usize,
    pub seeds: Vec<u64>,
    pub x_dim_cap: usize,
}

impl Default for KnnSection {
    fn default() -> Self {
        let mc = McConfig::default();
        KnnSection {
            k: mc.knn.k,
            jitter: mc.knn.jitter,
            use_tree: mc.knn.use_tree,
            subset_size: mc.subset_size,
            seeds: mc.seeds,
            x_dim_cap: mc.x_dim_cap,
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn require_exists(what: &str, p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} `{}` does not exist", p.display())))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        resolve(base, &mut self.data.train);
        resolve(base, &mut self.data.dev);
        resolve(base, &mut self.shortcuts.stopwords);
        resolve(base, &mut self.shortcuts.negations);
        if let Some(ext) = &mut self.external {
            for p in [&mut ext.control_nll, &mut ext.full_nll] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn check_paths(&self) -> Result<(), CliError> {
        for (what, p) in [
            ("train file", &self.data.train),
            ("dev file", &self.data.dev),
            ("stopword list", &self.shortcuts.stopwords),
            ("negation list", &self.shortcuts.negations),
        ] {
            if let Some(p) = p {
                require_exists(what, p)?;
            }
        }
        if let Some(ext) = &self.external {
            require_exists("external control NLL file", &ext.control_nll)?;
            require_exists("external full NLL file", &ext.full_nll)?;
        }
        Ok(())
    }

    /// Hash of the canonical JSON rendering, minus the output directory; embedded in
    /// every output file.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(&RunConfig { out: None, ..self.clone() }).expect("config serializes");
        fingerprint_bytes(&json)
    }

    pub fn stopwords(&self) -> Result<StopwordPolicy, CliError> {
        StopwordPolicy::from_files(self.shortcuts.stopwords.as_deref(), self.shortcuts.negations.as_deref())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn tsi_config(&self) -> Result<TsiConfig, CliError> {
        self.hashing.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(TsiConfig {
            hashing: self.hashing.clone(),
            control: self.control.apply(ModelSpec::control_default()),
            full: self.full.apply(ModelSpec::full_default()),
            stopwords: self.stopwords()?,
        })
    }

    pub fn kl_grid(&self) -> KlGrid {
        KlGrid {
            ms: self.synth.ms.clone(),
            p_xs: self.synth.p_xs.clone(),
            p_ys: self.synth.p_ys.clone(),
            kinds: self.synth.kinds.clone(),
            n_train: self.synth.n_train,
            n_dev: self.synth.n_dev,
            base_seed: self.seed,
        }
    }

    pub fn synth_train_config(&self) -> TrainConfig {
        TrainConfig::dense().with_hidden(&self.synth.hidden)
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            subset_size: self.knn.subset_size,
            seeds: self.knn.seeds.clone(),
            knn: KnnOptions {
                k: self.knn.k,
                jitter: self.knn.jitter,
                seed: self.seed,
                use_tree: self.knn.use_tree,
            },
            x_dim_cap: self.knn.x_dim_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.shortcuts.features, FeatureSet::PS);
        assert_eq!(cfg.synth.threshold, 0.04);
        assert_eq!(cfg.kl_grid().specs().len(), 1458);
    }

    #[test]
    fn sections_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            [data]
            format = "csv"
            [data.fields]
            text_a = "premise"
            text_b = "hypothesis"
            [data.planted]
            n_train = 100
            [shortcuts]
            features = "P+S+O"
            [hashing]
            dims = 1024
            [control]
            hidden_grid = [[10], [10, 10]]
            max_epochs = 3
            [sweep]
            feature_sets = ["P", "P+S"]
            [synth]
            kinds = ["and"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.data.planted.as_ref().unwrap().n_train, 100);
        assert_eq!(cfg.data.planted.as_ref().unwrap().n_dev, 5000);
        assert_eq!(cfg.shortcuts.features, FeatureSet::PSO);
        let t = cfg.tsi_config().unwrap();
        assert_eq!(t.control.hidden_grid, vec![vec![10], vec![10, 10]]);
        assert_eq!(t.control.train.max_epochs, 3);
        assert_eq!(t.full.train.batch_size, 64);
        assert_eq!(cfg.synth.kinds, vec![GKind::And]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[data]\ntrian = 'x'").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.out = Some("elsewhere".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
