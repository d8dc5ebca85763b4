//! The black-box boundary: latent codes in, class probabilities out.
//!
//! Every evaluation goes through an [`OracleHandle`], which checks code
//! dimensions, validates returned probability vectors and counts scored
//! codes in its [`QueryLedger`].

mod builtin;
mod external;
pub mod wire;

use serde::{Deserialize, Serialize};

pub use builtin::{
    make_linear_oracle, make_prototype_oracle, synthetic_testbed, LinearOracleSpec,
    LinearSoftmaxOracle, PrototypeOracle, PrototypeOracleSpec, TESTBED_SEED,
};
pub use external::{connect_external, Endpoint, ExternalOracle, HANDSHAKE_TIMEOUT};

use crate::error::{check_len, Error, Result};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Allowed deviation of a probability vector's sum from one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Class-probability output for one code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    /// Entries must be finite, lie in `[0, 1]` and sum to one within
    /// [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "probability vector needs ≥ 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Zero-based rank of `label` when classes are sorted by descending
    /// probability, lower index first among equals.
    pub fn rank_of(&self, label: usize) -> usize {
        let p = self.probs[label];
        self.probs
            .iter()
            .enumerate()
            .filter(|&(i, &q)| q > p || (q == p && i < label))
            .count()
    }
}

/// `ln(max(p[label], 1e-12))`.
pub fn log_target_prob(p: &ProbVector, label: usize) -> Result<f64> {
    let prob = p.probs.get(label).ok_or_else(|| {
        Error::InvalidInput(format!("label {label} out of range for {} classes", p.len()))
    })?;
    Ok(prob.max(PROB_FLOOR).ln())
}

/// Source of probabilities behind a handle.
pub trait OracleBackend: Send {
    fn latent_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Scores a batch of codes whose lengths have already been checked.
    fn evaluate(&mut self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    GaussianPrototype,
    LinearSoftmax,
    External,
}

/// Count of codes scored through a handle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    total_codes_scored: u64,
}

impl QueryLedger {
    pub fn total(&self) -> u64 {
        self.total_codes_scored
    }

    fn record(&mut self, codes: usize) {
        self.total_codes_scored += codes as u64;
    }
}

pub struct OracleHandle {
    kind: OracleKind,
    latent_dim: usize,
    num_classes: usize,
    ledger: QueryLedger,
    backend: Box<dyn OracleBackend>,
}

impl std::fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleHandle")
            .field("kind", &self.kind)
            .field("latent_dim", &self.latent_dim)
            .field("num_classes", &self.num_classes)
            .field("ledger", &self.ledger)
            .finish_non_exhaustive()
    }
}

impl OracleHandle {
    pub fn new(kind: OracleKind, backend: Box<dyn OracleBackend>) -> Result<Self> {
        let latent_dim = backend.latent_dim();
        let num_classes = backend.num_classes();
        if latent_dim == 0 {
            return Err(Error::InvalidInput("oracle latent_dim must be ≥ 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidInput("oracle num_classes must be ≥ 2".into()));
        }
        Ok(Self {
            kind,
            latent_dim,
            num_classes,
            ledger: QueryLedger::default(),
            backend,
        })
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ledger(&self) -> QueryLedger {
        self.ledger
    }

    pub fn queries(&self) -> u64 {
        self.ledger.total()
    }

    /// Scores `codes` in one batch. The ledger advances only when the whole
    /// batch succeeds.
    pub fn query(&mut self, codes: &[Vec<f64>]) -> Result<Vec<ProbVector>> {
        for code in codes {
            check_len("oracle code", self.latent_dim, code.len())?;
        }
        if codes.is_empty() {
            return Ok(Vec::new());
        }
        let rows = self.backend.evaluate(codes)?;
        check_len("oracle response rows", codes.len(), rows.len())?;
        let probs = rows
            .into_iter()
            .map(|row| {
                check_len("oracle response classes", self.num_classes, row.len())?;
                ProbVector::new(row)
            })
            .collect::<Result<Vec<_>>>()?;
        self.ledger.record(codes.len());
        Ok(probs)
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
