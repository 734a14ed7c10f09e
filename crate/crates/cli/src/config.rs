//! Run configuration: a sectioned TOML file whose omitted keys take the
//! reference defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ptg_core::assignment::PtgConfig;
use ptg_core::data::LoadOptions;
use ptg_core::evaluation::{CvConfig, EnrichmentThresholds, ForestParams};
use ptg_core::kernels::{JitterPolicy, StationaryKernelParams};
use ptg_core::layouts::LayoutSpec;
use ptg_core::sampler::Priors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub layout: LayoutSpec,
    pub priors: PriorConfig,
    pub jitter: JitterPolicy,
    pub chain: ChainSection,
    pub fine_tune: FineTuneSection,
    pub run: RunSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub elements: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compounds: Option<PathBuf>,
    pub max_atomic_number: u32,
    pub atomic_number_as_feature: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// `[variance, length_scale]` of the prior on `g`.
    pub xi_g: [f64; 2],
    /// `[variance, length_scale]` of the prior on `r`.
    pub xi_r: [f64; 2],
    pub beta_shape: f64,
    /// Gamma rate; `2 D` when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sweeps between chain checkpoints; 0 writes only at the end or on failure.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneSection {
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub restarts: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub n_trees: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub enrichment_low: f64,
    pub enrichment_gap: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let o = LoadOptions::default();
        Self {
            elements: PathBuf::from("data/elements.csv"),
            compounds: None,
            max_atomic_number: o.max_atomic_number,
            atomic_number_as_feature: o.atomic_number_as_feature,
            features: None,
        }
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            xi_g: [1.0 / 3.0, 3.0],
            xi_r: [1.0 / 3.0, 3.0],
            beta_shape: 2.0,
            beta_rate: None,
        }
    }
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 5,
            seed: 0,
            checkpoint_every: 1_000,
        }
    }
}

impl Default for FineTuneSection {
    fn default() -> Self {
        Self { iterations: 10 }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            restarts: 10,
            out: PathBuf::from("ptg_run"),
        }
    }
}

impl Default for EvaluateSection {
    fn default() -> Self {
        let cv = CvConfig::default();
        let t = EnrichmentThresholds::default();
        Self {
            folds: cv.folds,
            repeats: cv.repeats,
            seed: cv.seed,
            n_trees: cv.forest.n_trees,
            max_features: cv.forest.max_features,
            min_leaf: cv.forest.min_leaf,
            max_depth: cv.forest.max_depth,
            enrichment_low: t.low,
            enrichment_gap: t.gap,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            layout: LayoutSpec::reference_square(),
            priors: PriorConfig::default(),
            jitter: JitterPolicy::default(),
            chain: ChainSection::default(),
            fine_tune: FineTuneSection::default(),
            run: RunSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical serialization, ignoring the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.run.out = PathBuf::new();
        Ok(hex::encode(Sha256::digest(c.to_toml()?.as_bytes())))
    }

    /// Value checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        for (name, [v, l]) in [("xi_g", self.priors.xi_g), ("xi_r", self.priors.xi_r)] {
            StationaryKernelParams::new(v, l).with_context(|| format!("priors.{name}"))?;
        }
        if !(self.priors.beta_shape > 0.0 && self.priors.beta_shape.is_finite()) {
            bail!("priors.beta_shape must be positive");
        }
        if let Some(r) = self.priors.beta_rate {
            if !(r > 0.0 && r.is_finite()) {
                bail!("priors.beta_rate must be positive");
            }
        }
        let j = &self.jitter;
        if !(j.initial > 0.0 && j.max >= j.initial && j.factor > 1.0) {
            bail!("jitter needs 0 < initial <= max and factor > 1");
        }
        if self.chain.burn_in >= self.chain.iterations {
            bail!(
                "chain.burn_in ({}) must be below chain.iterations ({})",
                self.chain.burn_in,
                self.chain.iterations
            );
        }
        if self.chain.thin == 0 {
            bail!("chain.thin must be at least 1");
        }
        if self.run.restarts == 0 {
            bail!("run.restarts must be at least 1");
        }
        let e = &self.evaluate;
        if e.folds < 2 || e.repeats == 0 || e.n_trees == 0 || e.min_leaf == 0 {
            bail!("evaluate needs folds >= 2 and positive repeats, n_trees and min_leaf");
        }
        if e.max_features == Some(0) || e.max_depth == Some(0) {
            bail!("evaluate.max_features and evaluate.max_depth must be positive when set");
        }
        match &self.layout {
            LayoutSpec::Square { side, bounds } => {
                if *side < 2 || !(bounds.0 < bounds.1) {
                    bail!("square layout needs side >= 2 and increasing bounds");
                }
            }
            LayoutSpec::Cone {
                coarse_rings,
                fine_rings,
                bounds,
            } => {
                if coarse_rings.first() != Some(&1) || fine_rings.first() != Some(&1) {
                    bail!("cone ring schedules must start with the single apex node");
                }
                if !(bounds.0 < bounds.1) {
                    bail!("cone layout needs increasing bounds");
                }
            }
            LayoutSpec::Custom { .. } => {}
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            max_atomic_number: self.data.max_atomic_number,
            atomic_number_as_feature: self.data.atomic_number_as_feature,
            features: self.data.features.clone(),
            ..LoadOptions::default()
        }
    }

    pub fn priors(&self, n_features: usize) -> Priors {
        let p = &self.priors;
        Priors {
            xi_g: StationaryKernelParams::new(p.xi_g[0], p.xi_g[1]).expect("validated"),
            xi_r: StationaryKernelParams::new(p.xi_r[0], p.xi_r[1]).expect("validated"),
            beta_shape: p.beta_shape,
            beta_rate: p.beta_rate.unwrap_or(2.0 * n_features as f64),
        }
    }

    pub fn ptg_config(&self, n_features: usize, checkpoint_dir: Option<PathBuf>) -> PtgConfig {
        PtgConfig {
            priors: self.priors(n_features),
            jitter: self.jitter,
            iterations: self.chain.iterations,
            burn_in: self.chain.burn_in,
            thin: self.chain.thin,
            fine_tune_iterations: self.fine_tune.iterations,
            restarts: self.run.restarts,
            seed: self.chain.seed,
            checkpoint_dir,
            checkpoint_every: self.chain.checkpoint_every,
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        let e = &self.evaluate;
        CvConfig {
            folds: e.folds,
            repeats: e.repeats,
            seed: e.seed,
            forest: ForestParams {
                n_trees: e.n_trees,
                max_features: e.max_features,
                min_leaf: e.min_leaf,
                max_depth: e.max_depth,
            },
        }
    }

    pub fn thresholds(&self) -> EnrichmentThresholds {
        EnrichmentThresholds {
            low: self.evaluate.enrichment_low,
            gap: self.evaluate.enrichment_gap,
        }
    }
}
