//! Evaluation of an optimized distribution against the oracle.
//!
//! Argmax and ranking ties are broken toward the lower class index.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_len, Error, Result};
use crate::latent::{sample_codes, LatentDistribution};
use crate::oracle::{OracleHandle, ProbVector};
use crate::rng::RunRng;

pub const DEFAULT_ACCURACY_SAMPLES: usize = 500;
pub const DEFAULT_TOPK_SAMPLES: usize = 10_000;
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.5, 0.75, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub thresholds: Vec<f64>,
    /// Fraction of samples whose target confidence exceeds each threshold.
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub distributional_accuracy: usize,
    pub topk: usize,
    pub histogram: usize,
}

/// Peak signal-to-noise ratio in dB; identical inputs give `+∞`, written as
/// the string `"inf"` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Psnr(pub f64);

impl Psnr {
    pub fn is_infinite(&self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Psnr(v)),
            Raw::Text(t) if t == "inf" => Ok(Psnr(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub distributional_accuracy: f64,
    pub top1: f64,
    pub top5: f64,
    pub histogram: ConfidenceHistogram,
    pub samples_used: SampleCounts,
    /// Mean distance from sampled codes to the nearest private feature, when
    /// private features are known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_feature_distance: Option<f64>,
    /// PSNR between the distribution mean and the nearest private feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr: Option<Psnr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub accuracy_samples: usize,
    pub topk_samples: usize,
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            accuracy_samples: DEFAULT_ACCURACY_SAMPLES,
            topk_samples: DEFAULT_TOPK_SAMPLES,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

fn check_label(label: usize, num_classes: usize) -> Result<()> {
    if label < num_classes {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "label {label} out of range for {num_classes} classes"
        )))
    }
}

fn score(
    dist: &LatentDistribution,
    oracle: &mut OracleHandle,
    label: usize,
    n_samples: usize,
    rng: &mut RunRng,
) -> Result<Vec<ProbVector>> {
    check_label(label, oracle.num_classes())?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("sample count must be ≥ 1".into()));
    }
    let codes = sample_codes(dist, n_samples, rng)?;
    oracle.query(&codes)
}

/// Fraction of `probs` whose argmax is `label`.
pub fn accuracy_of(probs: &[ProbVector], label: usize) -> f64 {
    topk_of(probs, label, 1)
}

/// Fraction of `probs` ranking `label` within the `k_rank` largest.
pub fn topk_of(probs: &[ProbVector], label: usize, k_rank: usize) -> f64 {
    let hits = probs.iter().filter(|p| p.rank_of(label) < k_rank).count();
    hits as f64 / probs.len() as f64
}

pub fn histogram_of(probs: &[ProbVector], label: usize, thresholds: &[f64]) -> Result<ConfidenceHistogram> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("thresholds must be sorted ascending".into()));
    }
    let n = probs.len() as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| probs.iter().filter(|p| p.as_slice()[label] > t).count() as f64 / n)
        .collect();
    Ok(ConfidenceHistogram {
        thresholds: thresholds.to_vec(),
        fractions,
    })
}

pub fn distributional_accuracy(
    dist: &LatentDistribution,
    oracle: &mut OracleHandle,
    label: usize,
    n_samples: usize,
    rng: &mut RunRng,
) -> Result<f64> {
    Ok(accuracy_of(&score(dist, oracle, label, n_samples, rng)?, label))
}

pub fn topk_accuracy(
    dist: &LatentDistribution,
    oracle: &mut OracleHandle,
    label: usize,
    k_rank: usize,
    n_samples: usize,
    rng: &mut RunRng,
) -> Result<f64> {
    if k_rank == 0 || k_rank > oracle.num_classes() {
        return Err(Error::InvalidInput(format!(
            "k_rank {k_rank} outside 1..={}",
            oracle.num_classes()
        )));
    }
    Ok(topk_of(&score(dist, oracle, label, n_samples, rng)?, label, k_rank))
}

pub fn confidence_histogram(
    dist: &LatentDistribution,
    oracle: &mut OracleHandle,
    label: usize,
    thresholds: &[f64],
    n_samples: usize,
    rng: &mut RunRng,
) -> Result<ConfidenceHistogram> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("thresholds must be sorted ascending".into()));
    }
    histogram_of(&score(dist, oracle, label, n_samples, rng)?, label, thresholds)
}

/// `10 · log10(max_val² / MSE)`.
pub fn psnr(a: &[f64], b: &[f64], max_val: f64) -> Result<Psnr> {
    check_len("psnr operands", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::InvalidInput("psnr of empty inputs".into()));
    }
    if max_val.is_nan() || max_val <= 0.0 {
        return Err(Error::InvalidInput(format!("max_val must be positive, got {max_val}")));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr(f64::INFINITY));
    }
    Ok(Psnr(10.0 * (max_val * max_val / mse).log10()))
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean over `generated` of the L2 distance to the nearest entry of
/// `private`.
pub fn knn_feature_distance<G: AsRef<[f64]>, P: AsRef<[f64]>>(generated: &[G], private: &[P]) -> Result<f64> {
    if generated.is_empty() || private.is_empty() {
        return Err(Error::InvalidInput("feature sets must be non-empty".into()));
    }
    let dim = generated[0].as_ref().len();
    for f in generated.iter().map(AsRef::as_ref).chain(private.iter().map(AsRef::as_ref)) {
        check_len("feature dimension", dim, f.len())?;
    }
    let total: f64 = generated
        .iter()
        .map(|g| {
            private
                .iter()
                .map(|p| l2(g.as_ref(), p.as_ref()))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / generated.len() as f64)
}

/// Full summary: accuracy on its own sample set, then top-1/top-5 and the
/// histogram on one shared larger set. With `private_features`, also the
/// KNN distance of the shared set and the PSNR of the mean against its
/// nearest private feature (peak value = largest absolute private
/// coordinate).
pub fn evaluate(
    dist: &LatentDistribution,
    oracle: &mut OracleHandle,
    label: usize,
    config: &EvalConfig,
    private_features: Option<&[Vec<f64>]>,
    rng: &mut RunRng,
) -> Result<EvalSummary> {
    let distributional_accuracy =
        distributional_accuracy(dist, oracle, label, config.accuracy_samples, rng)?;
    let codes = sample_codes(dist, config.topk_samples, rng)?;
    let probs = oracle.query(&codes)?;
    let top5_rank = 5.min(oracle.num_classes());
    let histogram = histogram_of(&probs, label, &config.thresholds)?;

    let (knn_feature_distance, psnr_value) = match private_features {
        Some(private) if !private.is_empty() => {
            let knn = knn_feature_distance(&codes, private)?;
            let nearest = private
                .iter()
                .min_by(|a, b| l2(dist.mu(), a).total_cmp(&l2(dist.mu(), b)))
                .expect("non-empty");
            let peak = private
                .iter()
                .flatten()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            (Some(knn), Some(psnr(dist.mu(), nearest, peak)?))
        }
        _ => (None, None),
    };

    Ok(EvalSummary {
        distributional_accuracy,
        top1: accuracy_of(&probs, label),
        top5: topk_of(&probs, label, top5_rank),
        histogram,
        samples_used: SampleCounts {
            distributional_accuracy: config.accuracy_samples,
            topk: config.topk_samples,
            histogram: config.topk_samples,
        },
        knn_feature_distance,
        psnr: psnr_value,
    })
}
