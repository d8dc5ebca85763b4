//! Central finite-difference verification of [`Mlp::backward`].
//!
//! The scalar probed is `L(θ) = upstream · forward(input; θ)`. Coordinates
//! whose perturbation flips any rectifier unit are skipped, since the
//! difference quotient straddles a kink there.

use rand::Rng;
use serde::Serialize;

use super::mlp::{Gradients, Mlp, OutputActivation};
use crate::error::Result;
use crate::rng::{seeded, RunRng};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const DENOMINATOR_GUARD: f64 = 1e-8;

/// Backward routine under test; the stock one is [`stock_backward`].
pub type BackwardFn<'a> = dyn Fn(&Mlp, &[f64], &[f64]) -> Result<Gradients> + 'a;

pub fn stock_backward(net: &Mlp, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
    net.backward(input, upstream).map(|(g, _)| g)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(DENOMINATOR_GUARD);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WorstCoordinate {
    pub net: usize,
    pub layer: usize,
    /// `"weight"` or `"bias"`.
    pub kind: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckReport {
    pub nets_checked: usize,
    pub coordinates_checked: usize,
    pub coordinates_skipped: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub worst: Option<WorstCoordinate>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub nets: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub max_hidden_layers: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            nets: 24,
            seed: 7,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            max_hidden_layers: 3,
        }
    }
}

fn scalar_loss(net: &Mlp, input: &[f64], upstream: &[f64]) -> Result<f64> {
    let out = net.forward(input)?;
    Ok(out.iter().zip(upstream).map(|(o, u)| o * u).sum())
}

fn rectifier_pattern(net: &Mlp, input: &[f64]) -> Result<Vec<bool>> {
    let x = super::DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
    Ok(net.forward_batch(&x)?.rectifier_pattern())
}

/// Compares every parameter gradient of one net against central differences.
pub fn check_net(
    net: &Mlp,
    input: &[f64],
    upstream: &[f64],
    step: f64,
    backward: &BackwardFn<'_>,
    net_index: usize,
    report: &mut GradCheckReport,
) -> Result<()> {
    let analytic = backward(net, input, upstream)?;
    let base_pattern = rectifier_pattern(net, input)?;
    let mut probe = net.clone();
    for layer in 0..net.num_layers() {
        for (kind, group) in [("weight", 2 * layer), ("bias", 2 * layer + 1)] {
            let len = net.params()[group].len();
            for index in 0..len {
                let original = net.params()[group][index];

                probe.params_mut()[group][index] = original + step;
                let plus = scalar_loss(&probe, input, upstream)?;
                let plus_pattern = rectifier_pattern(&probe, input)?;
                probe.params_mut()[group][index] = original - step;
                let minus = scalar_loss(&probe, input, upstream)?;
                let minus_pattern = rectifier_pattern(&probe, input)?;
                probe.params_mut()[group][index] = original;

                if plus_pattern != base_pattern || minus_pattern != base_pattern {
                    report.coordinates_skipped += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic.slices()[group][index];
                let err = relative_error(a, numeric);
                report.coordinates_checked += 1;
                if err > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = report.max_relative_error.max(err);
                    report.worst = Some(WorstCoordinate {
                        net: net_index,
                        layer,
                        kind,
                        index,
                        analytic: a,
                        numeric,
                        relative_error: err,
                    });
                }
            }
        }
    }
    report.nets_checked += 1;
    Ok(())
}

/// Draws a random architecture with up to `max_hidden_layers` hidden layers.
pub fn random_net(rng: &mut RunRng, max_hidden_layers: usize) -> Result<Mlp> {
    let hidden = rng.random_range(0..=max_hidden_layers);
    let mut sizes = vec![rng.random_range(1..=6)];
    for _ in 0..hidden {
        sizes.push(rng.random_range(2..=12));
    }
    sizes.push(rng.random_range(1..=4));
    let output = if rng.random_bool(0.5) {
        OutputActivation::Identity
    } else {
        OutputActivation::BoundedTanh {
            scale: rng.random_range(0.5..3.0),
        }
    };
    Mlp::new_seeded(&sizes, output, rng)
}

/// Runs the randomized suite against `backward`.
pub fn run_suite(config: &GradCheckConfig, backward: &BackwardFn<'_>) -> Result<GradCheckReport> {
    let mut rng = seeded(config.seed);
    let mut report = GradCheckReport {
        nets_checked: 0,
        coordinates_checked: 0,
        coordinates_skipped: 0,
        max_relative_error: 0.0,
        tolerance: config.tolerance,
        worst: None,
    };
    for net_index in 0..config.nets {
        let net = random_net(&mut rng, config.max_hidden_layers)?;
        let input: Vec<f64> = (0..net.input_dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let upstream: Vec<f64> = (0..net.output_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        check_net(&net, &input, &upstream, config.step, backward, net_index, &mut report)?;
    }
    Ok(report)
}
