use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use latinv_core::maddpg::TrainerConfig;
use latinv_core::metrics::{EvalConfig, DEFAULT_ACCURACY_SAMPLES, DEFAULT_THRESHOLDS, DEFAULT_TOPK_SAMPLES};
use latinv_core::oracle::{
    connect_external, make_linear_oracle, make_prototype_oracle, synthetic_testbed, Endpoint,
    LinearOracleSpec, OracleHandle, PrototypeOracleSpec,
};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SWEEP_DIMS: [usize; 5] = [4, 8, 16, 32, 64];
pub const DEFAULT_BENCH_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Where probabilities come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Seeded prototype testbed.
    Testbed { latent_dim: usize, num_classes: usize },
    Prototype(PrototypeOracleSpec),
    Linear(LinearOracleSpec),
    External { endpoint: Endpoint },
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::Testbed {
            latent_dim: 8,
            num_classes: 5,
        }
    }
}

impl OracleSpec {
    /// `(latent_dim, num_classes)` when known without contacting anything.
    pub fn shape(&self) -> Option<(usize, usize)> {
        match self {
            OracleSpec::Testbed {
                latent_dim,
                num_classes,
            } => Some((*latent_dim, *num_classes)),
            OracleSpec::Prototype(p) => Some((p.latent_dim(), p.num_classes())),
            OracleSpec::Linear(l) => Some((l.weights.first().map_or(0, Vec::len), l.weights.len())),
            OracleSpec::External { .. } => None,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let invalid = |e: latinv_core::Error| CliError::Config(format!("oracle: {e}"));
        match self {
            OracleSpec::Testbed {
                latent_dim,
                num_classes,
            } => {
                if *latent_dim == 0 || *num_classes < 2 {
                    return Err(CliError::Config(format!(
                        "oracle: testbed needs latent_dim ≥ 1 and num_classes ≥ 2, got {latent_dim} / {num_classes}"
                    )));
                }
                Ok(())
            }
            OracleSpec::Prototype(p) => p.validate().map_err(invalid),
            OracleSpec::Linear(l) => l.validate().map_err(invalid),
            OracleSpec::External { .. } => Ok(()),
        }
    }

    /// Prototype coordinates used as private features by KNN and PSNR.
    pub fn private_features(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            OracleSpec::Testbed {
                latent_dim,
                num_classes,
            } => Some(synthetic_testbed(*latent_dim, *num_classes).prototypes),
            OracleSpec::Prototype(p) => Some(p.prototypes.clone()),
            _ => None,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, OracleSpec::External { .. })
    }

    pub fn open(&self) -> CliResult<OracleHandle> {
        match self {
            OracleSpec::Testbed {
                latent_dim,
                num_classes,
            } => Ok(make_prototype_oracle(synthetic_testbed(*latent_dim, *num_classes))?),
            OracleSpec::Prototype(p) => Ok(make_prototype_oracle(p.clone())?),
            OracleSpec::Linear(l) => Ok(make_linear_oracle(l.clone())?),
            OracleSpec::External { endpoint } => {
                connect_external(endpoint).map_err(|e| CliError::OracleUnreachable(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub accuracy_samples: usize,
    pub topk_samples: usize,
    pub thresholds: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            accuracy_samples: DEFAULT_ACCURACY_SAMPLES,
            topk_samples: DEFAULT_TOPK_SAMPLES,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

impl EvalSettings {
    pub fn to_eval_config(&self) -> EvalConfig {
        EvalConfig {
            accuracy_samples: self.accuracy_samples,
            topk_samples: self.topk_samples,
            thresholds: self.thresholds.clone(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.accuracy_samples == 0 || self.topk_samples == 0 {
            return Err(CliError::Config("eval: sample counts must be ≥ 1".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] > w[1])
            || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(CliError::Config(
                "eval: thresholds must be ascending and within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Everything one invocation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub oracle: OracleSpec,
    /// Target labels; absent means every class.
    pub labels: Option<Vec<usize>>,
    /// Seeds for `bench-agents`.
    pub seeds: Vec<u64>,
    /// Dimensions for `sweep-dims`.
    pub dims: Vec<usize>,
    pub out_dir: PathBuf,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerConfig::default(),
            oracle: OracleSpec::default(),
            labels: None,
            seeds: DEFAULT_BENCH_SEEDS.to_vec(),
            dims: DEFAULT_SWEEP_DIMS.to_vec(),
            out_dir: PathBuf::from("out"),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks everything that can be checked without an oracle.
    pub fn validate(&self) -> CliResult<()> {
        self.trainer
            .validate()
            .map_err(|e| CliError::Config(format!("trainer: {e}")))?;
        self.oracle.validate()?;
        self.eval.validate()?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(CliError::Config("dims must be a non-empty list of positive sizes".into()));
        }
        if matches!(&self.labels, Some(l) if l.is_empty()) {
            return Err(CliError::Config("labels must not be empty".into()));
        }
        if let Some((n, k)) = self.oracle.shape() {
            check_labels(self.labels.as_deref(), k)?;
            if n != self.trainer.latent_dim {
                return Err(CliError::DimensionMismatch(format!(
                    "oracle latent_dim {n} vs trainer latent_dim {}",
                    self.trainer.latent_dim
                )));
            }
        }
        Ok(())
    }

    pub fn resolve_labels(&self, num_classes: usize) -> CliResult<Vec<usize>> {
        check_labels(self.labels.as_deref(), num_classes)?;
        Ok(self
            .labels
            .clone()
            .unwrap_or_else(|| (0..num_classes).collect()))
    }
}

fn check_labels(labels: Option<&[usize]>, num_classes: usize) -> CliResult<()> {
    if let Some(bad) = labels.into_iter().flatten().find(|&&l| l >= num_classes) {
        return Err(CliError::Config(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// `--label` value; `None` selects every class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSelection(pub Option<Vec<usize>>);

/// Parses `all` or a comma-separated list of labels.
pub fn parse_labels(text: &str) -> Result<LabelSelection, String> {
    if text.trim() == "all" {
        return Ok(LabelSelection(None));
    }
    parse_list(text).map(|l| LabelSelection(Some(l)))
}

/// A comma-separated list of latent dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimList(pub Vec<usize>);

pub fn parse_dims(text: &str) -> Result<DimList, String> {
    parse_list(text).map(DimList)
}

pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("bad list entry {:?} in {text:?}", p.trim()))
        })
        .collect()
}

/// Seed for evaluation sampling, kept apart from the training stream.
pub fn eval_seed(train_seed: u64, label: usize) -> u64 {
    const SALT: u64 = 0x9e37_79b9_7f4a_7c15;
    (train_seed ^ SALT).wrapping_add(label as u64)
}
