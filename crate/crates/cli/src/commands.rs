use std::io::BufReader;
use std::net::TcpListener;
use std::path::Path;

use serde::{Deserialize, Serialize};

use latinv_core::latent::LatentDistribution;
use latinv_core::maddpg::{run_attack, AttackReport, CriticMode, FailureKind, ReportEvaluation, RunStatus, TrainerConfig};
use latinv_core::metrics::{evaluate, EvalSummary};
use latinv_core::ndmath::gradcheck::{self, GradCheckConfig};
use latinv_core::ndmath::{Gradients, Mlp};
use latinv_core::oracle::{wire, OracleBackend, OracleHandle, PrototypeOracle, LinearSoftmaxOracle};
use latinv_core::rng::seeded;

use crate::config::{eval_seed, OracleSpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, rewards_csv, write_atomic, write_json};

/// Episodes averaged for the "mean final reward" column.
pub const FINAL_REWARD_WINDOW: usize = 100;

/// Connects to the configured oracle and checks it against the trainer.
fn open_checked(config: &RunConfig) -> CliResult<OracleHandle> {
    let oracle = config.oracle.open()?;
    if oracle.latent_dim() != config.trainer.latent_dim {
        return Err(CliError::DimensionMismatch(format!(
            "oracle latent_dim {} vs trainer latent_dim {}",
            oracle.latent_dim(),
            config.trainer.latent_dim
        )));
    }
    Ok(oracle)
}

fn summarize(
    dist: Option<&LatentDistribution>,
    oracle: &mut OracleHandle,
    label: usize,
    config: &RunConfig,
    private: Option<&[Vec<f64>]>,
    seed: u64,
) -> CliResult<Option<EvalSummary>> {
    let Some(dist) = dist else { return Ok(None) };
    let mut rng = seeded(seed);
    Ok(Some(evaluate(dist, oracle, label, &config.eval.to_eval_config(), private, &mut rng)?))
}

/// One trained and evaluated run.
pub struct AttackOutcome {
    pub report: AttackReport,
    pub final_eval: Option<EvalSummary>,
}

/// Trains on `label`, then evaluates the best and final distributions.
/// Evaluation uses its own seed and is skipped for failed runs.
pub fn attack_one(
    trainer: &TrainerConfig,
    config: &RunConfig,
    oracle: &mut OracleHandle,
    label: usize,
) -> CliResult<AttackOutcome> {
    let mut report = run_attack(trainer, oracle, label)?;
    if !report.is_completed() {
        return Ok(AttackOutcome {
            report,
            final_eval: None,
        });
    }
    let private = config.oracle.private_features();
    let seed = eval_seed(trainer.seed, label);
    let base = oracle.queries();
    let best = summarize(
        report.best.as_ref().map(|b| &b.distribution),
        oracle,
        label,
        config,
        private.as_deref(),
        seed,
    )?;
    let final_eval = summarize(
        report.final_distribution.as_ref(),
        oracle,
        label,
        config,
        private.as_deref(),
        seed,
    )?;
    let policy = summarize(
        report
            .extraction
            .as_ref()
            .and_then(|e| e.rollout_best.as_ref())
            .map(|r| &r.distribution),
        oracle,
        label,
        config,
        private.as_deref(),
        seed,
    )?;
    report.evaluation = Some(ReportEvaluation {
        best,
        final_distribution: final_eval.clone(),
        policy,
        queries: oracle.queries() - base,
    });
    Ok(AttackOutcome { report, final_eval })
}

/// `report.json`, `rewards.csv` and `eval.json` under `dir`.
pub fn write_run(dir: &Path, outcome: &AttackOutcome) -> CliResult<()> {
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_atomic(&dir.join("rewards.csv"), &rewards_csv(&outcome.report.episodes)?)?;
    write_json(&dir.join("eval.json"), &outcome.final_eval)?;
    Ok(())
}

fn failure_error(report: &AttackReport) -> Option<CliError> {
    match &report.status {
        RunStatus::Completed => None,
        RunStatus::Failed { kind, message } => Some(match kind {
            FailureKind::Oracle => CliError::OracleUnreachable(format!("label {}: {message}", report.label)),
            _ => CliError::Internal(format!("label {}: {message}", report.label)),
        }),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

pub fn cmd_attack(config: &RunConfig) -> CliResult<()> {
    config.validate()?;
    let mut oracle = open_checked(config)?;
    let labels = config.resolve_labels(oracle.num_classes())?;
    let mut first_failure = None;
    for label in labels {
        let outcome = attack_one(&config.trainer, config, &mut oracle, label)?;
        write_run(&config.out_dir.join(label.to_string()), &outcome)?;
        let r = &outcome.report;
        let best_acc = r
            .evaluation
            .as_ref()
            .and_then(|e| e.best.as_ref())
            .map(|s| s.distributional_accuracy);
        println!(
            "label {label}: episodes {} queries {} best_acc {} final_acc {}",
            r.episodes.len(),
            r.total_queries,
            fmt_opt(best_acc),
            fmt_opt(outcome.final_eval.as_ref().map(|s| s.distributional_accuracy)),
        );
        if first_failure.is_none() {
            first_failure = failure_error(r);
        }
    }
    first_failure.map_or(Ok(()), Err)
}

/// One line of `eval` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledSummary {
    pub label: usize,
    pub summary: EvalSummary,
}

pub fn cmd_eval(config: &RunConfig, dist_path: &Path, out: Option<&Path>) -> CliResult<Vec<LabelledSummary>> {
    config.validate()?;
    let text = std::fs::read_to_string(dist_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", dist_path.display())))?;
    let dist: LatentDistribution = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", dist_path.display())))?;
    dist.validate(&config.trainer.sigma_bounds)
        .map_err(|e| CliError::Config(format!("{}: {e}", dist_path.display())))?;
    if let Some((n, _)) = config.oracle.shape() {
        if n != dist.dim() {
            return Err(CliError::DimensionMismatch(format!(
                "distribution dimension {} vs oracle latent_dim {n}",
                dist.dim()
            )));
        }
    }
    let mut oracle = config.oracle.open()?;
    if oracle.latent_dim() != dist.dim() {
        return Err(CliError::DimensionMismatch(format!(
            "distribution dimension {} vs oracle latent_dim {}",
            dist.dim(),
            oracle.latent_dim()
        )));
    }
    let labels = config.resolve_labels(oracle.num_classes())?;
    let private = config.oracle.private_features();
    let mut results = Vec::new();
    for label in labels {
        let summary = summarize(
            Some(&dist),
            &mut oracle,
            label,
            config,
            private.as_deref(),
            eval_seed(config.trainer.seed, label),
        )?
        .expect("distribution given");
        println!(
            "{}",
            serde_json::to_string(&LabelledSummary {
                label,
                summary: summary.clone()
            })
            .map_err(|e| CliError::Internal(e.to_string()))?
        );
        if let Some(out) = out {
            write_json(&out.join(label.to_string()).join("eval.json"), &Some(&summary))?;
        }
        results.push(LabelledSummary { label, summary });
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: CriticMode,
    pub seed: u64,
    pub label: usize,
    /// Accuracy of the trained actors' own rollout distribution.
    pub accuracy: f64,
    /// Accuracy of the reported final distribution, which may come from
    /// training-time exploration rather than the policy.
    pub final_accuracy: f64,
    pub mean_final_reward: f64,
    pub total_queries: u64,
}

pub const BENCH_CSV_HEADER: [&str; 7] = [
    "mode",
    "seed",
    "label",
    "accuracy",
    "final_accuracy",
    "mean_final_reward",
    "total_queries",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub maddpg: f64,
    pub independent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub maddpg_mean_accuracy: f64,
    pub independent_mean_accuracy: f64,
    pub maddpg_mean_final_accuracy: f64,
    pub independent_mean_final_accuracy: f64,
    pub per_seed: Vec<SeedComparison>,
    /// Seeds where the centralized critic scores strictly higher.
    pub seeds_favouring_maddpg: usize,
    pub rows: Vec<BenchRow>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn cmd_bench_agents(config: &RunConfig) -> CliResult<BenchSummary> {
    config.validate()?;
    let mut oracle = open_checked(config)?;
    let labels = config.resolve_labels(oracle.num_classes())?;
    let root = config.out_dir.join("bench");
    let mut rows = Vec::new();
    for mode in [CriticMode::Maddpg, CriticMode::Independent] {
        for &seed in &config.seeds {
            for &label in &labels {
                let trainer = TrainerConfig {
                    seed,
                    critic_mode: mode,
                    ..config.trainer.clone()
                };
                let outcome = attack_one(&trainer, config, &mut oracle, label)?;
                if let Some(e) = failure_error(&outcome.report) {
                    return Err(e);
                }
                write_run(
                    &root.join(mode.to_string()).join(format!("seed-{seed}")).join(label.to_string()),
                    &outcome,
                )?;
                let accuracy_of = |s: Option<&EvalSummary>| s.map_or(0.0, |s| s.distributional_accuracy);
                let evaluation = outcome.report.evaluation.as_ref();
                let final_accuracy = accuracy_of(outcome.final_eval.as_ref());
                let row = BenchRow {
                    mode,
                    seed,
                    label,
                    accuracy: evaluation
                        .and_then(|e| e.policy.as_ref())
                        .map_or(final_accuracy, |s| s.distributional_accuracy),
                    final_accuracy,
                    mean_final_reward: outcome.report.mean_final_reward(FINAL_REWARD_WINDOW).unwrap_or(f64::NAN),
                    total_queries: outcome.report.total_queries,
                };
                println!(
                    "{:<11} seed {:>3} label {:>3} accuracy {:.4} final_accuracy {:.4} mean_final_reward {:.4}",
                    mode.to_string(),
                    seed,
                    label,
                    row.accuracy,
                    row.final_accuracy,
                    row.mean_final_reward
                );
                rows.push(row);
            }
        }
    }
    let acc = |mode: CriticMode, seed: Option<u64>| {
        mean(
            rows.iter()
                .filter(|r| r.mode == mode && seed.is_none_or(|s| r.seed == s))
                .map(|r| r.accuracy),
        )
    };
    let final_acc = |mode: CriticMode| mean(rows.iter().filter(|r| r.mode == mode).map(|r| r.final_accuracy));
    let per_seed: Vec<SeedComparison> = config
        .seeds
        .iter()
        .map(|&seed| SeedComparison {
            seed,
            maddpg: acc(CriticMode::Maddpg, Some(seed)),
            independent: acc(CriticMode::Independent, Some(seed)),
        })
        .collect();
    let summary = BenchSummary {
        maddpg_mean_accuracy: acc(CriticMode::Maddpg, None),
        independent_mean_accuracy: acc(CriticMode::Independent, None),
        maddpg_mean_final_accuracy: final_acc(CriticMode::Maddpg),
        independent_mean_final_accuracy: final_acc(CriticMode::Independent),
        seeds_favouring_maddpg: per_seed.iter().filter(|s| s.maddpg > s.independent).count(),
        per_seed,
        rows,
    };
    write_atomic(&root.join("bench.csv"), &csv_bytes(&BENCH_CSV_HEADER, &summary.rows)?)?;
    write_json(&root.join("summary.json"), &summary)?;
    println!(
        "mean accuracy: maddpg {:.4} independent {:.4}; seeds favouring maddpg {}/{}",
        summary.maddpg_mean_accuracy,
        summary.independent_mean_accuracy,
        summary.seeds_favouring_maddpg,
        summary.per_seed.len()
    );
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dim: usize,
    pub seed: u64,
    pub labels: usize,
    pub accuracy: f64,
    pub top1: f64,
    pub top5: f64,
    pub total_queries: u64,
}

pub const SWEEP_CSV_HEADER: [&str; 7] = ["dim", "seed", "labels", "accuracy", "top1", "top5", "total_queries"];

/// Repeats the attack on a testbed of each dimension. Accuracy columns are
/// means over labels of the final distribution's metrics.
pub fn cmd_sweep_dims(config: &RunConfig) -> CliResult<Vec<SweepRow>> {
    let OracleSpec::Testbed { num_classes, .. } = config.oracle else {
        return Err(CliError::Config("sweep-dims needs a testbed oracle".into()));
    };
    let variant = |dim: usize| RunConfig {
        trainer: TrainerConfig {
            latent_dim: dim,
            ..config.trainer.clone()
        },
        oracle: OracleSpec::Testbed {
            latent_dim: dim,
            num_classes,
        },
        ..config.clone()
    };
    for &dim in &config.dims {
        variant(dim).validate()?;
    }
    let root = config.out_dir.join("sweep");
    let mut rows = Vec::new();
    for &dim in &config.dims {
        let cfg = variant(dim);
        let mut oracle = open_checked(&cfg)?;
        let labels = cfg.resolve_labels(oracle.num_classes())?;
        let mut evals = Vec::new();
        let mut queries = 0;
        for &label in &labels {
            let outcome = attack_one(&cfg.trainer, &cfg, &mut oracle, label)?;
            if let Some(e) = failure_error(&outcome.report) {
                return Err(e);
            }
            write_run(&root.join(format!("dim-{dim}")).join(label.to_string()), &outcome)?;
            queries += outcome.report.total_queries;
            evals.push(outcome.final_eval.unwrap_or_else(|| empty_summary(&cfg)));
        }
        let row = SweepRow {
            dim,
            seed: cfg.trainer.seed,
            labels: labels.len(),
            accuracy: mean(evals.iter().map(|s| s.distributional_accuracy)),
            top1: mean(evals.iter().map(|s| s.top1)),
            top5: mean(evals.iter().map(|s| s.top5)),
            total_queries: queries,
        };
        println!("dim {:>3} accuracy {:.4} top1 {:.4} top5 {:.4}", dim, row.accuracy, row.top1, row.top5);
        rows.push(row);
    }
    write_atomic(&config.out_dir.join("sweep.csv"), &csv_bytes(&SWEEP_CSV_HEADER, &rows)?)?;
    Ok(rows)
}

/// Zero scores for a run that produced no distribution.
fn empty_summary(config: &RunConfig) -> EvalSummary {
    EvalSummary {
        distributional_accuracy: 0.0,
        top1: 0.0,
        top5: 0.0,
        histogram: latinv_core::metrics::ConfidenceHistogram {
            thresholds: config.eval.thresholds.clone(),
            fractions: vec![0.0; config.eval.thresholds.len()],
        },
        samples_used: latinv_core::metrics::SampleCounts {
            distributional_accuracy: 0,
            topk: 0,
            histogram: 0,
        },
        knn_feature_distance: None,
        psnr: None,
    }
}

fn builtin_backend(spec: &OracleSpec) -> CliResult<Box<dyn OracleBackend>> {
    spec.validate()?;
    Ok(match spec {
        OracleSpec::Testbed {
            latent_dim,
            num_classes,
        } => Box::new(PrototypeOracle::new(latinv_core::oracle::synthetic_testbed(*latent_dim, *num_classes))?),
        OracleSpec::Prototype(p) => Box::new(PrototypeOracle::new(p.clone())?),
        OracleSpec::Linear(l) => Box::new(LinearSoftmaxOracle::new(l.clone())?),
        OracleSpec::External { .. } => {
            return Err(CliError::Config("oracle-serve needs a builtin oracle spec".into()))
        }
    })
}

/// Serves the wire protocol on stdin/stdout, or on each accepted TCP
/// connection in turn when `listen` is given.
pub fn cmd_oracle_serve(spec: &OracleSpec, listen: Option<&str>) -> CliResult<()> {
    let mut backend = builtin_backend(spec)?;
    match listen {
        None => {
            let stdin = std::io::stdin();
            wire::serve(backend.as_mut(), stdin.lock(), std::io::stdout().lock())?;
        }
        Some(addr) => {
            let listener =
                TcpListener::bind(addr).map_err(|e| CliError::Config(format!("cannot listen on {addr}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                if let Err(e) = wire::serve(backend.as_mut(), reader, stream) {
                    eprintln!("connection closed: {e}");
                }
            }
        }
    }
    Ok(())
}

/// Backward pass with the first layer's weight gradient negated.
fn sign_flipped_backward(net: &Mlp, input: &[f64], upstream: &[f64]) -> latinv_core::Result<Gradients> {
    let mut g = gradcheck::stock_backward(net, input, upstream)?;
    for v in g.slices_mut()[0].iter_mut() {
        *v = -*v;
    }
    Ok(g)
}

pub fn cmd_gradcheck(nets: usize, seed: u64, inject_sign_flip: bool) -> CliResult<gradcheck::GradCheckReport> {
    if nets == 0 {
        return Err(CliError::Config("nets must be ≥ 1".into()));
    }
    let config = GradCheckConfig {
        nets,
        seed,
        ..GradCheckConfig::default()
    };
    let report = if inject_sign_flip {
        gradcheck::run_suite(&config, &sign_flipped_backward)?
    } else {
        gradcheck::run_suite(&config, &gradcheck::stock_backward)?
    };
    println!(
        "{}",
        serde_json::to_string(&report).map_err(|e| CliError::Internal(e.to_string()))?
    );
    if !report.passed() {
        if let Some(w) = &report.worst {
            eprintln!(
                "gradient check failed: net {} layer {} {} index {}: analytic {} numeric {} relative error {:e}",
                w.net, w.layer, w.kind, w.index, w.analytic, w.numeric, w.relative_error
            );
        }
        return Err(CliError::Internal(format!(
            "max relative error {:e} exceeds {:e}",
            report.max_relative_error, report.tolerance
        )));
    }
    Ok(report)
}
