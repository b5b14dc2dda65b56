//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdegan::gan::TrainConfig;
use sdegan::{GanVariant, PairingMode, SdeModel, TestFunction, TransformKind};

use crate::error::CliError;

pub const DEFAULT_DT_GRID: [f64; 8] = [0.05, 0.1, 0.2, 0.4, 0.5, 0.67, 1.0, 2.0];
pub const DEFAULT_S_T_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.15, 0.2, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Gbm,
    Cir,
}

/// Model parameters; anything left out takes the model's default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn positive(key: &str, v: Option<f64>, default: f64) -> Result<f64, CliError> {
    let v = v.unwrap_or(default);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be a positive number, got {v}")))
    }
}

impl ModelConfig {
    pub fn resolve(&self) -> Result<SdeModel, CliError> {
        match self.kind {
            ModelKind::Gbm => {
                for (key, v) in [("model.kappa", self.kappa), ("model.s_bar", self.s_bar), ("model.gamma", self.gamma)] {
                    if v.is_some() {
                        return Err(CliError::config(key, "is not a GBM parameter"));
                    }
                }
                let mu = self.mu.unwrap_or(0.05);
                if !mu.is_finite() {
                    return Err(CliError::config("model.mu", "must be finite"));
                }
                Ok(SdeModel::Gbm { mu, sigma: positive("model.sigma", self.sigma, 0.2)? })
            }
            ModelKind::Cir => {
                for (key, v) in [("model.mu", self.mu), ("model.sigma", self.sigma)] {
                    if v.is_some() {
                        return Err(CliError::config(key, "is not a CIR parameter"));
                    }
                }
                Ok(SdeModel::Cir {
                    kappa: positive("model.kappa", self.kappa, 0.1)?,
                    s_bar: positive("model.s_bar", self.s_bar, 0.1)?,
                    gamma: positive("model.gamma", self.gamma, 0.1)?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformChoice {
    /// Log-returns for GBM, mean-scaling for CIR.
    #[default]
    Auto,
    LogReturn,
    MeanScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dt_grid: Vec<f64>,
    /// Ignored for GBM.
    pub s_t_grid: Vec<f64>,
    pub n_train: usize,
    pub pairing: PairingMode,
    pub transform: TransformChoice,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dt_grid: DEFAULT_DT_GRID.to_vec(),
            s_t_grid: DEFAULT_S_T_GRID.to_vec(),
            n_train: 100_000,
            pairing: PairingMode::default(),
            transform: TransformChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Sample sizes of the distance sweep.
    pub n_list: Vec<usize>,
    pub repeats: usize,
    /// Horizon of the error-versus-step experiment.
    pub t_end: f64,
    pub step_counts: Vec<usize>,
    pub test_function: TestFunction,
    pub mean_revert_reps: usize,
    pub z_points: usize,
    pub path_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_list: vec![100, 1_000, 10_000, 100_000],
            repeats: 10,
            t_end: 2.0,
            step_counts: sdegan::paths::ERROR_STEP_COUNTS.to_vec(),
            test_function: TestFunction::Identity,
            mean_revert_reps: 100,
            z_points: 100,
            path_steps: 10,
        }
    }
}

fn default_variant() -> GanVariant {
    GanVariant::Supervised
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_variant")]
    pub variant: GanVariant,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            variant: default_variant(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn model(&self) -> Result<SdeModel, CliError> {
        self.model.resolve()
    }

    pub fn transform(&self) -> Result<TransformKind, CliError> {
        let model = self.model()?;
        Ok(match self.data.transform {
            TransformChoice::Auto => TransformKind::default_for(&model),
            TransformChoice::LogReturn => TransformKind::LogReturn,
            TransformChoice::MeanScale => match model {
                SdeModel::Cir { s_bar, .. } => TransformKind::MeanScale { s_bar },
                SdeModel::Gbm { .. } => {
                    return Err(CliError::config("data.transform", "mean-scale needs a CIR model"))
                }
            },
        })
    }

    /// The training section with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.model()?;
        self.transform()?;
        if self.data.dt_grid.is_empty() {
            return Err(CliError::config("data.dt_grid", "must not be empty"));
        }
        if self.data.dt_grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(CliError::config("data.dt_grid", "values must be positive"));
        }
        if model.is_cir() {
            if self.data.s_t_grid.is_empty() {
                return Err(CliError::config("data.s_t_grid", "must not be empty"));
            }
            if self.data.s_t_grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(CliError::config("data.s_t_grid", "values must be positive"));
            }
        }
        if self.data.n_train == 0 {
            return Err(CliError::config("data.n_train", "must be positive"));
        }
        self.train.validate().map_err(|e| match e {
            sdegan::Error::InvalidArgument { name, reason } => CliError::config(&format!("train.{name}"), reason),
            other => CliError::config("train", other.to_string()),
        })?;
        let e = &self.eval;
        if e.n_list.is_empty() || e.n_list.contains(&0) {
            return Err(CliError::config("eval.n_list", "needs positive sizes"));
        }
        if e.repeats < 2 {
            return Err(CliError::config("eval.repeats", "must be at least 2"));
        }
        if !(e.t_end.is_finite() && e.t_end > 0.0) {
            return Err(CliError::config("eval.t_end", "must be positive"));
        }
        if e.step_counts.is_empty() || e.step_counts.contains(&0) {
            return Err(CliError::config("eval.step_counts", "needs positive step counts"));
        }
        for (key, v) in [
            ("eval.mean_revert_reps", e.mean_revert_reps),
            ("eval.z_points", e.z_points),
            ("eval.path_steps", e.path_steps),
        ] {
            if v == 0 {
                return Err(CliError::config(key, "must be positive"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration, without the output directory.
    pub fn hash(&self) -> Result<String, CliError> {
        let canonical = RunConfig { out: None, ..self.clone() };
        let json = serde_json::to_string(&(canonical, self.model()?, self.transform()?))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }
}
