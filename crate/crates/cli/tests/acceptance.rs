//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. The end-to-end and ordering criteria train 50 default-size runs
//! and take several minutes.

use std::path::Path;
use std::time::{Duration, Instant};

use latinv_cli::commands::{cmd_attack, cmd_bench_agents, cmd_gradcheck, BenchSummary};
use latinv_cli::config::{eval_seed, RunConfig};
use latinv_cli::output::read_json;
use latinv_core::latent::{blend, init_distribution, SigmaBounds};
use latinv_core::maddpg::{
    extract_distribution, soft_update, AgentPair, AttackReport, CriticMode, ReplayBuffer, Transition,
};
use latinv_core::metrics::{distributional_accuracy, knn_feature_distance, psnr, topk_accuracy, EvalConfig};
use latinv_core::ndmath::{Mlp, OutputActivation};
use latinv_core::oracle::{make_prototype_oracle, synthetic_testbed};
use latinv_core::reward::penalty;
use latinv_core::rng::seeded;

const GRADCHECK_MIN_NETS: usize = 20;
const GRADCHECK_MAX_REL_ERR: f64 = 1e-4;
const GRADCHECK_MAX_TIME: Duration = Duration::from_secs(10);

const BUFFER_DRAWS: usize = 10_000;
const BUFFER_REL_TOL: f64 = 0.05;

const DEFAULT_RUN_MAX_TIME: Duration = Duration::from_secs(5 * 60);

// Pilot thresholds; generating seeds are the default config's seeds 1..=5.
const E2E_MIN_ACCURACY: f64 = 0.8;
const E2E_MIN_TOP5: f64 = 0.95;
const E2E_MAX_TIME: Duration = Duration::from_secs(30 * 60);

const NULL_SEEDS: u64 = 20;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli<T>(r: latinv_cli::error::CliResult<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let report = cli(cmd_gradcheck(24, 7, false))?;
    let took = start.elapsed();
    check(
        report.passed()
            && report.nets_checked >= GRADCHECK_MIN_NETS
            && report.max_relative_error <= GRADCHECK_MAX_REL_ERR
            && took < GRADCHECK_MAX_TIME,
        format!(
            "{} nets, max relative error {:.3e}, {:.2?}",
            report.nets_checked, report.max_relative_error, took
        ),
    )
}

fn exact_update_math() -> Outcome {
    let mut rng = seeded(31);
    let act = OutputActivation::Identity;
    let online = Mlp::new_seeded(&[5, 7, 3], act, &mut rng).map_err(|e| e.to_string())?;
    let target0 = Mlp::new_seeded(&[5, 7, 3], act, &mut rng).map_err(|e| e.to_string())?;
    for tau in [0.0, 5e-3, 1.0] {
        let mut target = target0.clone();
        soft_update(&online, &mut target, tau).map_err(|e| e.to_string())?;
        for ((got, on), old) in target.params().iter().zip(online.params()).zip(target0.params()) {
            for ((g, o), t) in got.iter().zip(on).zip(old) {
                if *g != tau * o + (1.0 - tau) * t {
                    return Err(format!("soft update tau {tau}: {g} vs {o}, {t}"));
                }
            }
        }
    }

    let current = [0.3, -1.7, 2.0 / 3.0, 1e-9];
    let action = [-4.0, 0.1, 1.0 / 7.0, 3.5];
    let keep = blend(&current, &action, 1.0).map_err(|e| e.to_string())?;
    let take = blend(&current, &action, 0.0).map_err(|e| e.to_string())?;
    if keep != current || take != action {
        return Err(format!("blend endpoints: {keep:?} {take:?}"));
    }

    let table = [(0.0, 0.2), (-3.0, 3.0), (-0.1, 0.2)];
    for (p, want) in table {
        let got = penalty(p, 0.2);
        if got != want {
            return Err(format!("penalty({p}, 0.2) = {got}, want {want}"));
        }
    }
    Ok("soft update tau {0, 5e-3, 1}, blend alpha {0, 1}, 3 penalty cases exact".into())
}

fn transition(tag: f64) -> Transition {
    Transition {
        mu_t: vec![tag],
        mu_a: vec![tag],
        mu_next: vec![tag],
        reward_mu: tag,
        sigma_t: vec![1.0],
        sigma_a: vec![1.0],
        sigma_next: vec![1.0],
        reward_sigma: tag,
    }
}

fn replay_buffer() -> Outcome {
    let mut buffer = ReplayBuffer::new(4).map_err(|e| e.to_string())?;
    for i in 0..6 {
        buffer.store(transition(i as f64));
    }
    let kept: Vec<f64> = buffer.iter().map(|t| t.reward_mu).collect();
    if kept != [2.0, 3.0, 4.0, 5.0] {
        return Err(format!("FIFO eviction kept {kept:?}"));
    }

    let mut rng = seeded(99);
    let mut counts = [0usize; 4];
    for _ in 0..BUFFER_DRAWS / 4 {
        for i in buffer.sample_indices(4, &mut rng).map_err(|e| e.to_string())? {
            counts[i] += 1;
        }
    }
    let expected = BUFFER_DRAWS as f64 / 4.0;
    let worst = counts
        .iter()
        .map(|&c| (c as f64 - expected).abs() / expected)
        .fold(0.0, f64::max);
    check(
        worst <= BUFFER_REL_TOL,
        format!("FIFO ok; counts {counts:?} over {BUFFER_DRAWS} draws, worst deviation {:.2}%", worst * 100.0),
    )
}

fn run_files(dir: &Path, labels: usize) -> Result<Vec<Vec<u8>>, String> {
    let mut files = Vec::new();
    for label in 0..labels {
        for f in ["report.json", "rewards.csv"] {
            files.push(std::fs::read(dir.join(label.to_string()).join(f)).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

/// Runs the default attack twice; returns the first run's reports too.
fn determinism_and_accounting(root: &Path) -> (Outcome, Outcome) {
    let inner = || -> Result<(String, Vec<AttackReport>, RunConfig), String> {
        let mut times = Vec::new();
        for name in ["a", "b"] {
            let config = RunConfig {
                out_dir: root.join(name),
                ..RunConfig::default()
            };
            let start = Instant::now();
            cli(cmd_attack(&config))?;
            times.push(start.elapsed());
        }
        let config = RunConfig::default();
        let k = config.oracle.shape().map_or(0, |s| s.1);
        let a = run_files(&root.join("a"), k)?;
        let b = run_files(&root.join("b"), k)?;
        if a != b {
            return Err("report.json or rewards.csv differ between identical runs".into());
        }
        let slowest = times.iter().max().copied().unwrap_or_default();
        if slowest >= DEFAULT_RUN_MAX_TIME {
            return Err(format!("default run took {slowest:.1?}"));
        }
        let reports = (0..k)
            .map(|l| read_json::<AttackReport>(&root.join("a").join(l.to_string()).join("report.json")))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok((
            format!("{k} labels byte-identical across two runs; slowest run {slowest:.1?}"),
            reports,
            config,
        ))
    };
    match inner() {
        Err(e) => (Err(e.clone()), Err(format!("no reports: {e}"))),
        Ok((detail, reports, config)) => {
            let t = &config.trainer;
            let per_round = 4 * t.reward.samples_per_term as u64;
            let mut accounting = Ok(format!(
                "total = {per_round} x {} rounds + rollout queries on {} reports",
                t.max_rounds,
                reports.len()
            ));
            for r in &reports {
                let extraction = r.extraction.as_ref().map_or(0, |e| e.queries);
                let rollout = t.rollout_steps as u64 * t.reward.samples_per_term as u64;
                // Episode records carry the running count.
                let running_ok = r
                    .episodes
                    .iter()
                    .enumerate()
                    .all(|(i, e)| e.queries == per_round * (i as u64 + 1));
                if r.total_queries != per_round * t.max_rounds + extraction
                    || extraction != rollout
                    || r.training_queries != per_round * t.max_rounds
                    || !running_ok
                {
                    accounting = Err(format!(
                        "label {}: total {} training {} extraction {extraction}",
                        r.label, r.total_queries, r.training_queries
                    ));
                    break;
                }
            }
            (Ok(detail), accounting)
        }
    }
}

/// Runs the default bench; the MADDPG half doubles as the end-to-end run.
fn end_to_end_and_ordering(root: &Path) -> (Outcome, Outcome) {
    let config = RunConfig {
        out_dir: root.to_path_buf(),
        ..RunConfig::default()
    };
    let start = Instant::now();
    let summary: BenchSummary = match cli(cmd_bench_agents(&config)) {
        Ok(s) => s,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let took = start.elapsed();

    let e2e = (|| {
        let mut worst_acc = f64::INFINITY;
        let mut worst_top5 = f64::INFINITY;
        let mut failures = Vec::new();
        let mut runs = 0;
        for row in summary.rows.iter().filter(|r| r.mode == CriticMode::Maddpg) {
            let path = root
                .join("bench/maddpg")
                .join(format!("seed-{}", row.seed))
                .join(row.label.to_string())
                .join("report.json");
            let report: AttackReport = read_json(&path).map_err(|e| e.to_string())?;
            let best = report
                .evaluation
                .as_ref()
                .and_then(|e| e.best.clone())
                .ok_or_else(|| format!("seed {} label {}: no best evaluation", row.seed, row.label))?;
            runs += 1;
            worst_acc = worst_acc.min(best.distributional_accuracy);
            worst_top5 = worst_top5.min(best.top5);
            if best.distributional_accuracy < E2E_MIN_ACCURACY || best.top5 < E2E_MIN_TOP5 {
                failures.push(format!(
                    "seed {} label {}: acc {:.3} top5 {:.3}",
                    row.seed, row.label, best.distributional_accuracy, best.top5
                ));
            }
        }
        let detail = format!(
            "{runs} (seed, label) runs; min best accuracy {worst_acc:.3}, min top-5 {worst_top5:.4}; \
             bench of both modes took {took:.1?}"
        );
        if !failures.is_empty() {
            return Err(format!("{detail}; below threshold: {}", failures.join(", ")));
        }
        check(runs == 25 && took < E2E_MAX_TIME, detail)
    })();

    let seeds = summary.per_seed.len();
    let ordering = check(
        seeds >= 5
            && summary.maddpg_mean_accuracy > summary.independent_mean_accuracy
            && 2 * summary.seeds_favouring_maddpg > seeds,
        format!(
            "mean accuracy maddpg {:.4} vs independent {:.4}; {}/{seeds} seeds favour maddpg \
             (final-distribution means {:.4} vs {:.4})",
            summary.maddpg_mean_accuracy,
            summary.independent_mean_accuracy,
            summary.seeds_favouring_maddpg,
            summary.maddpg_mean_final_accuracy,
            summary.independent_mean_final_accuracy,
        ),
    );
    (e2e, ordering)
}

fn null_model() -> Outcome {
    let config = RunConfig::default();
    let spec = synthetic_testbed(config.trainer.latent_dim, 5);
    let k = spec.num_classes();
    let chance = 1.0 / k as f64;
    // Worst-case spread of a [0, 1] score with mean `chance`.
    let sigma = (chance * (1.0 - chance) / NULL_SEEDS as f64).sqrt();
    let limit = chance + 3.0 * sigma;
    let mut oracle = make_prototype_oracle(spec).map_err(|e| e.to_string())?;
    let eval = EvalConfig::default();
    let mut total = 0.0;
    for seed in 1..=NULL_SEEDS {
        let label = (seed as usize) % k;
        let trainer = latinv_core::maddpg::TrainerConfig {
            seed,
            ..config.trainer.clone()
        };
        let mut rng = seeded(seed);
        let agents = AgentPair::new(&trainer, &mut rng).map_err(|e| e.to_string())?;
        let extraction =
            extract_distribution(&agents, &trainer, trainer.rollout_steps, &mut oracle, label, None, &mut rng)
                .map_err(|e| e.to_string())?;
        let dist = extraction.distribution.ok_or("no extracted distribution")?;
        let acc = distributional_accuracy(
            &dist,
            &mut oracle,
            label,
            eval.accuracy_samples,
            &mut seeded(eval_seed(seed, label)),
        )
        .map_err(|e| e.to_string())?;
        total += acc;
    }
    let mean = total / NULL_SEEDS as f64;
    check(
        mean <= limit,
        format!("mean accuracy {mean:.4} over {NULL_SEEDS} untrained seeds; chance + 3 sigma = {limit:.4}"),
    )
}

fn metric_identities() -> Outcome {
    let x = [0.25, -1.5, 3.0];
    let same = psnr(&x, &x, 1.0).map_err(|e| e.to_string())?;
    if !same.is_infinite() || serde_json::to_string(&same).map_err(|e| e.to_string())? != "\"inf\"" {
        return Err(format!("psnr(x, x) = {same:?}"));
    }
    let p = psnr(&[0.0; 4], &[0.1, -0.1, 0.1, -0.1], 1.0).map_err(|e| e.to_string())?;
    if p.0 != 20.0 {
        return Err(format!("psnr at MSE 0.01 = {}", p.0));
    }
    let knn = knn_feature_distance(&[[0.0, 0.0]], &[[3.0, 4.0], [6.0, 8.0]]).map_err(|e| e.to_string())?;
    if knn != 5.0 {
        return Err(format!("knn hand case = {knn}"));
    }

    let spec = synthetic_testbed(8, 5);
    let mut oracle = make_prototype_oracle(spec).map_err(|e| e.to_string())?;
    let dist = init_distribution(8, &SigmaBounds::default(), &mut seeded(12)).map_err(|e| e.to_string())?;
    for label in 0..5 {
        let top1 = topk_accuracy(&dist, &mut oracle, label, 1, 2000, &mut seeded(40 + label as u64))
            .map_err(|e| e.to_string())?;
        let acc = distributional_accuracy(&dist, &mut oracle, label, 2000, &mut seeded(40 + label as u64))
            .map_err(|e| e.to_string())?;
        if top1 != acc {
            return Err(format!("label {label}: top1 {top1} vs accuracy {acc}"));
        }
    }
    Ok("psnr(x, x) = inf; psnr at MSE 0.01 = 20 dB; knn = 5; top1 equals accuracy on shared samples".into())
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => println!("FAIL {name}: {d}"),
        }
        results.push((name, outcome));
    };

    report("gradient-correctness", gradient_correctness());
    report("exact-update-math", exact_update_math());
    report("replay-buffer", replay_buffer());
    let (det, acct) = determinism_and_accounting(&scratch.path().join("attack"));
    report("determinism", det);
    report("query-accounting", acct);
    report("null-model", null_model());
    report("metric-identities", metric_identities());
    let (e2e, ordering) = end_to_end_and_ordering(&scratch.path().join("bench"));
    report("end-to-end-synthetic-inversion", e2e);
    report("agent-ordering", ordering);

    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
