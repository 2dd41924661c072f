//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cluster::{Hyperparameters, Setting};
use crate::validation::{IterationPolicy, MpiMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub disclosures: PathBuf,
    #[serde(default)]
    pub externals: Option<PathBuf>,
    pub model: PathBuf,
    pub dictionary: PathBuf,
    pub pi_mapping: PathBuf,
    #[serde(default)]
    pub cem: Option<PathBuf>,
}

/// Fixed hyperparameters; anything left out is discovered or defaulted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterOverrides {
    pub tuple_size: Option<usize>,
    pub threshold: Option<f64>,
    pub discriminator_limit: Option<usize>,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub near_best_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfiguration {
    pub config_id: String,
    #[serde(default)]
    pub filter: Option<String>,
    #[serde(default = "defaults::base_year")]
    pub base_year: i32,
    #[serde(default = "defaults::max_dist")]
    pub max_dist: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::promotion_bar")]
    pub promotion_bar: f64,
    #[serde(default = "defaults::agreement_margin")]
    pub agreement_margin: f64,
    #[serde(default)]
    pub mpi_mode: MpiMode,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "defaults::grounded_fraction")]
    pub grounded_fraction: f64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub hyperparameters: HyperparameterOverrides,
    /// Directory that relative input paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod defaults {
    use std::path::PathBuf;

    pub fn base_year() -> i32 {
        2019
    }
    pub fn max_dist() -> usize {
        3
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn promotion_bar() -> f64 {
        0.8
    }
    pub fn agreement_margin() -> f64 {
        0.1
    }
    pub fn max_iterations() -> usize {
        10
    }
    pub fn grounded_fraction() -> f64 {
        0.2
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub filter: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub max_iterations: Option<usize>,
}

impl RunConfiguration {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut cfg: RunConfiguration = toml::from_str(text)
            .map_err(|e| PipelineError::Config(format!("run configuration: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(f) = &o.filter {
            self.filter = Some(f.clone());
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(m) = o.max_iterations {
            self.max_iterations = m;
        }
    }

    /// Input path resolved against the configuration file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output root of this configuration.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.config_id)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let id = &self.config_id;
        if id.is_empty()
            || id == "."
            || id == ".."
            || !id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return bad(format!("config_id `{id}` is not filesystem-safe"));
        }
        let i = &self.inputs;
        let mut paths = vec![&i.disclosures, &i.model, &i.dictionary, &i.pi_mapping];
        paths.extend(i.externals.iter());
        paths.extend(i.cem.iter());
        for p in paths {
            let full = self.resolve(p);
            if !full.is_file() {
                return bad(format!("input {} does not exist", full.display()));
            }
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.promotion_bar > 0.0 && self.promotion_bar <= 1.0) {
            return bad("promotion_bar must be in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.agreement_margin) {
            return bad("agreement_margin must be in [0, 1)".into());
        }
        if !(self.grounded_fraction > 0.0 && self.grounded_fraction <= 1.0) {
            return bad("grounded_fraction must be in (0, 1]".into());
        }
        self.hyperparameters()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Starting hyperparameters; unset threshold and limit stay `Auto`.
    pub fn hyperparameters(&self) -> Hyperparameters {
        let o = &self.hyperparameters;
        let d = Hyperparameters::default();
        Hyperparameters {
            tuple_size: o.tuple_size.unwrap_or(d.tuple_size),
            threshold: o.threshold.map_or(Setting::Auto, Setting::Value),
            discriminator_limit: o.discriminator_limit.map_or(Setting::Auto, Setting::Value),
            seed: self.seed,
            k: o.k,
            eps: o.eps,
            min_pts: o.min_pts.unwrap_or(d.min_pts),
            near_best_delta: o.near_best_delta.unwrap_or(d.near_best_delta),
        }
    }

    pub fn policy(&self) -> IterationPolicy {
        IterationPolicy {
            promotion_bar: self.promotion_bar,
            agreement_margin: self.agreement_margin,
        }
    }

    /// Effective configuration as recorded in the manifest. The output
    /// directory is left out so that runs into different directories
    /// compare equal.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("configuration serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }
}
