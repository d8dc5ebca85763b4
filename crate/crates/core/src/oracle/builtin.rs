use serde::{Deserialize, Serialize};

use super::{softmax, OracleBackend, OracleHandle, OracleKind};
use crate::error::{check_len, Error, Result};
use crate::rng::{seeded, standard_normal};

/// Seed of the default synthetic testbed's prototype draw.
pub const TESTBED_SEED: u64 = 4761;

/// Class centers in latent space; `probs(z) = softmax_j(−‖z − c_j‖² / T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeOracleSpec {
    pub prototypes: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl PrototypeOracleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.prototypes.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "prototype oracle needs ≥ 2 classes, got {}",
                self.prototypes.len()
            )));
        }
        let n = self.prototypes[0].len();
        if n == 0 {
            return Err(Error::InvalidInput("prototype dimension must be ≥ 1".into()));
        }
        for p in &self.prototypes {
            check_len("prototype", n, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("prototype coordinate".into()));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.prototypes.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    /// Softmax of negative scaled squared distances for one code.
    pub fn probabilities(&self, code: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .prototypes
            .iter()
            .map(|c| {
                let d2: f64 = c.iter().zip(code).map(|(ci, zi)| (zi - ci) * (zi - ci)).sum();
                -d2 / self.temperature
            })
            .collect();
        softmax(&logits)
    }
}

/// Prototypes drawn once from `N(0, 2·I)` with seed [`TESTBED_SEED`],
/// temperature 2.
pub fn synthetic_testbed(latent_dim: usize, num_classes: usize) -> PrototypeOracleSpec {
    let mut rng = seeded(TESTBED_SEED);
    let scale = 2.0f64.sqrt();
    let prototypes = (0..num_classes)
        .map(|_| {
            (0..latent_dim)
                .map(|_| scale * standard_normal(&mut rng))
                .collect()
        })
        .collect();
    PrototypeOracleSpec {
        prototypes,
        temperature: 2.0,
    }
}

#[derive(Debug, Clone)]
pub struct PrototypeOracle {
    spec: PrototypeOracleSpec,
}

impl PrototypeOracle {
    pub fn new(spec: PrototypeOracleSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &PrototypeOracleSpec {
        &self.spec
    }
}

impl OracleBackend for PrototypeOracle {
    fn latent_dim(&self) -> usize {
        self.spec.latent_dim()
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    fn evaluate(&mut self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(codes.iter().map(|c| self.spec.probabilities(c)).collect())
    }
}

pub fn make_prototype_oracle(spec: PrototypeOracleSpec) -> Result<OracleHandle> {
    OracleHandle::new(
        OracleKind::GaussianPrototype,
        Box::new(PrototypeOracle::new(spec)?),
    )
}

/// `probs(z) = softmax(W z + b)` with `W` of shape `k × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearOracleSpec {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearOracleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() < 2 {
            return Err(Error::InvalidInput("linear oracle needs ≥ 2 classes".into()));
        }
        check_len("linear oracle bias", self.weights.len(), self.bias.len())?;
        let n = self.weights[0].len();
        if n == 0 {
            return Err(Error::InvalidInput("linear oracle input dimension must be ≥ 1".into()));
        }
        for row in &self.weights {
            check_len("linear oracle weight row", n, row.len())?;
        }
        let all = self.weights.iter().flatten().chain(&self.bias);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear oracle parameter".into()));
        }
        Ok(())
    }

    pub fn probabilities(&self, code: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(code).map(|(w, z)| w * z).sum::<f64>() + b)
            .collect();
        softmax(&logits)
    }
}

#[derive(Debug, Clone)]
pub struct LinearSoftmaxOracle {
    spec: LinearOracleSpec,
}

impl LinearSoftmaxOracle {
    pub fn new(spec: LinearOracleSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &LinearOracleSpec {
        &self.spec
    }
}

impl OracleBackend for LinearSoftmaxOracle {
    fn latent_dim(&self) -> usize {
        self.spec.weights[0].len()
    }

    fn num_classes(&self) -> usize {
        self.spec.weights.len()
    }

    fn evaluate(&mut self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(codes.iter().map(|c| self.spec.probabilities(c)).collect())
    }
}

pub fn make_linear_oracle(spec: LinearOracleSpec) -> Result<OracleHandle> {
    spec.validate()?;
    OracleHandle::new(
        OracleKind::LinearSoftmax,
        Box::new(LinearSoftmaxOracle { spec }),
    )
}
