//! Experiment configuration: a TOML file describing the dataset, the
//! basis, the (ρ, λ) grid, training settings, seeds and the output
//! directory. Penalty levels may be absolute numbers or the relative form
//! `"norm_y / 2^k"`, which resolves to ‖Ỹ‖ₙ/2ᵏ against the centered
//! training response after the data is loaded.

use anyhow::{bail, Context, Result};
use dpam::single_block::StepSizes;
use dpam::{ModelFamily, SolverKind, SyntheticFamily, TrainConfig};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub penalty: PenaltyConfig,
    pub train: TrainSection,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// "generate" for a synthetic family, "csv" for a file.
    pub source: String,
    pub family: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub noise_sd: Option<f64>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    pub response: Option<String>,
    pub standardize: Option<bool>,
    /// Training fraction in (0,1); the rest is the validation set.
    pub split: Option<f64>,
    pub split_seed: Option<u64>,
    pub strict: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "linear" or "logistic".
    pub family: Option<String>,
    pub m: Option<usize>,
    pub knots: Option<usize>,
    pub interaction_k: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub rho: Vec<f64>,
    pub lam: Vec<LamSpec>,
}

/// A penalty level: a plain number or the string `"norm_y / 2^k"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum LamSpec {
    Absolute(f64),
    Relative(String),
}

impl LamSpec {
    /// Resolve against ‖Ỹ‖ₙ of the centered training response.
    pub fn resolve(&self, norm_y: f64) -> Result<f64> {
        match self {
            LamSpec::Absolute(v) => {
                if !v.is_finite() || *v < 0.0 {
                    bail!("lam must be a nonnegative finite number, got {v}");
                }
                Ok(*v)
            }
            LamSpec::Relative(text) => Ok(norm_y / parse_pow2_divisor(text)?),
        }
    }

    /// The text form used in reports: numbers verbatim, expressions as
    /// written (normalized spacing).
    pub fn display(&self) -> String {
        match self {
            LamSpec::Absolute(v) => format!("{v}"),
            LamSpec::Relative(text) => text.split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }
}

/// Parse a `--lam` flag value: a plain nonnegative number, or the
/// relative form `"norm_y / 2^k"`.
pub fn parse_lam_flag(text: &str) -> Result<LamSpec> {
    if let Ok(v) = text.trim().parse::<f64>() {
        if !v.is_finite() || v < 0.0 {
            bail!("lam must be a nonnegative finite number, got {v}");
        }
        return Ok(LamSpec::Absolute(v));
    }
    parse_pow2_divisor(text)?;
    Ok(LamSpec::Relative(text.to_string()))
}

/// Parse `"norm_y / 2^k"` (whitespace optional) and return 2ᵏ.
fn parse_pow2_divisor(text: &str) -> Result<f64> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let rest = compact
        .strip_prefix("norm_y/2^")
        .with_context(|| format!("cannot parse {text:?}: expected the form \"norm_y / 2^k\""))?;
    let k: i32 = rest
        .parse()
        .with_context(|| format!("cannot parse exponent {rest:?} in {text:?}"))?;
    if !(-1000..=1000).contains(&k) {
        bail!("exponent {k} out of range in {text:?}");
    }
    Ok(2.0_f64.powi(k))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub solver: String,
    pub batch_steps: Option<usize>,
    pub max_epochs: Option<f64>,
    pub tolerance: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub recovery: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .with_context(|| format!("cannot read {}", path.as_ref().display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse {}", path.as_ref().display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset.source.as_str() {
            "generate" => {
                let family = self
                    .dataset
                    .family
                    .as_deref()
                    .context("dataset.family is required when source = \"generate\"")?;
                SyntheticFamily::from_str(family).map_err(anyhow::Error::msg)?;
                self.dataset.n.context("dataset.n is required when source = \"generate\"")?;
            }
            "csv" => {
                self.dataset
                    .path
                    .as_ref()
                    .context("dataset.path is required when source = \"csv\"")?;
            }
            other => bail!("dataset.source must be \"generate\" or \"csv\", got {other:?}"),
        }
        if let Some(split) = self.dataset.split {
            if !(split > 0.0 && split < 1.0) {
                bail!("dataset.split must lie strictly between 0 and 1, got {split}");
            }
        }
        if self.penalty.rho.is_empty() || self.penalty.lam.is_empty() {
            bail!("penalty.rho and penalty.lam must be non-empty lists");
        }
        for &rho in &self.penalty.rho {
            if !(rho.is_finite() && rho >= 0.0) {
                bail!("rho values must be nonnegative finite numbers, got {rho}");
            }
        }
        for lam in &self.penalty.lam {
            if let LamSpec::Relative(text) = lam {
                parse_pow2_divisor(text)?;
            } else {
                lam.resolve(1.0)?;
            }
        }
        self.model_family()?;
        let basis = self.basis_spec();
        if !(basis.m == 1 || basis.m == 2) {
            bail!("model.m must be 1 or 2, got {}", basis.m);
        }
        if basis.num_knots < 2 {
            bail!("model.knots must be at least 2, got {}", basis.num_knots);
        }
        if basis.k_max < 1 {
            bail!("model.interaction_k must be at least 1");
        }
        SolverKind::from_str(&self.train.solver).map_err(anyhow::Error::msg)?;
        if let Some(seeds) = &self.train.seeds {
            if seeds.is_empty() {
                bail!("train.seeds must be non-empty when present");
            }
        }
        if self.train.tau.is_none() && self.train.alpha.is_some() {
            bail!("train.alpha without train.tau; give both or neither");
        }
        Ok(())
    }

    pub fn model_family(&self) -> Result<ModelFamily> {
        match self.model.family.as_deref().unwrap_or("linear") {
            "linear" => Ok(ModelFamily::Linear),
            "logistic" => Ok(ModelFamily::Logistic),
            other => bail!("model.family must be \"linear\" or \"logistic\", got {other:?}"),
        }
    }

    pub fn solver(&self) -> SolverKind {
        SolverKind::from_str(&self.train.solver).expect("validated")
    }

    pub fn basis_spec(&self) -> dpam::BasisSpec {
        dpam::BasisSpec {
            m: self.model.m.unwrap_or(2),
            num_knots: self.model.knots.unwrap_or(6),
            k_max: self.model.interaction_k.unwrap_or(2),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.train.seeds.clone().unwrap_or_else(|| vec![0])
    }

    /// Training settings for one run: family defaults overridden by the
    /// explicit fields, with the given seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut cfg = match self.model_family()? {
            ModelFamily::Linear => TrainConfig::linear_default(self.solver()),
            ModelFamily::Logistic => TrainConfig::logistic_default(self.solver()),
        };
        if let Some(steps) = self.train.batch_steps {
            cfg.batch_steps_per_block = steps;
        }
        if let Some(epochs) = self.train.max_epochs {
            cfg.max_epochs = epochs;
        }
        if let Some(tol) = self.train.tolerance {
            cfg.obj_tolerance = tol;
        }
        if let Some(tau) = self.train.tau {
            cfg.sizes = Some(StepSizes::new(tau, self.train.alpha.unwrap_or(1.0)));
        }
        if let Some(delta) = self.train.delta {
            cfg.delta = delta;
        }
        if let Some(recovery) = self.train.recovery {
            cfg.recovery_enabled = recovery;
        }
        cfg.seed = seed;
        Ok(cfg)
    }
}
