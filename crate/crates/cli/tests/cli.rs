use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use latinv_cli::commands::{BenchRow, BenchSummary, LabelledSummary, SweepRow};
use latinv_cli::config::RunConfig;
use latinv_cli::output::{read_csv, read_json, read_rewards_csv, write_json};
use latinv_core::latent::{init_distribution, LatentDistribution, SigmaBounds};
use latinv_core::maddpg::{AttackReport, RunStatus};
use latinv_core::metrics::EvalSummary;
use latinv_core::rng::seeded;

const BIN: &str = env!("CARGO_BIN_EXE_latinv");

fn latinv(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn latinv")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn small_config(dir: &Path, rounds: u64) -> PathBuf {
    let mut cfg = RunConfig::default();
    cfg.trainer.max_rounds = rounds;
    cfg.trainer.hidden = vec![16];
    cfg.trainer.batch_size = 8;
    cfg.trainer.warmup_min_buffer = 8;
    cfg.trainer.rollout_steps = 5;
    cfg.eval.topk_samples = 1000;
    cfg.out_dir = dir.join("out");
    let path = dir.join("config.json");
    write_json(&path, &cfg).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_round_attack_writes_empty_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0);
    let out = latinv(&["attack", "--config", s(&cfg), "--label", "0,3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["0", "3"] {
        let run = dir.path().join("out").join(label);
        let report: AttackReport = read_json(&run.join("report.json")).unwrap();
        assert!(report.episodes.is_empty());
        assert_eq!(report.total_queries, 0);
        assert_eq!(report.status, RunStatus::Completed);
        assert!(read_rewards_csv(&run.join("rewards.csv")).unwrap().is_empty());
        let eval: Option<EvalSummary> = read_json(&run.join("eval.json")).unwrap();
        assert!(eval.is_none());
    }
    assert!(!dir.path().join("out/1").exists());
}

#[test]
fn attack_is_byte_reproducible_and_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 60);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = latinv(&["attack", "--config", s(&cfg), "--label", "2", "--out", s(out), "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "rewards.csv", "eval.json"] {
        assert_eq!(
            std::fs::read(a.join("2").join(f)).unwrap(),
            std::fs::read(b.join("2").join(f)).unwrap(),
            "{f}"
        );
    }
    let report: AttackReport = read_json(&a.join("2/report.json")).unwrap();
    assert_eq!(report.config.seed, 7);
    assert_eq!(report.episodes.len(), 60);
    assert_eq!(read_rewards_csv(&a.join("2/rewards.csv")).unwrap(), report.episodes);
    let eval: Option<EvalSummary> = read_json(&a.join("2/eval.json")).unwrap();
    let evaluation = report.evaluation.as_ref().unwrap();
    assert_eq!(eval.as_ref(), evaluation.final_distribution.as_ref());
    assert!(evaluation.best.is_some() && evaluation.policy.is_some());
    assert_eq!(report.total_queries, 4 * 60 + 5);
    let reread = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(reread.as_bytes(), std::fs::read(a.join("2/report.json")).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"trainer\": {\"max_round\": 3}}").unwrap();
    let o = latinv(&["attack", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_round"));

    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(latinv(&["attack", "--config", s(&bad)]).status.code(), Some(2));
    assert_eq!(latinv(&["attack", "--config", s(&dir.path().join("missing.json"))]).status.code(), Some(2));

    let cfg = small_config(dir.path(), 0);
    assert_eq!(latinv(&["attack", "--config", s(&cfg), "--label", "9"]).status.code(), Some(2));
    assert_eq!(latinv(&["attack", "--config", s(&cfg), "--mode", "vdn"]).status.code(), Some(2));
    assert_eq!(latinv(&["attack", "--config", s(&cfg), "--oracle", "http://x"]).status.code(), Some(2));
    assert_eq!(latinv(&["no-such-command"]).status.code(), Some(2));
    // Nothing written for rejected configs.
    assert!(!dir.path().join("out").exists());
}

#[test]
fn dimension_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.trainer.latent_dim = 4;
    cfg.out_dir = dir.path().join("out");
    let path = dir.path().join("c.json");
    write_json(&path, &cfg).unwrap();
    assert_eq!(latinv(&["attack", "--config", s(&path)]).status.code(), Some(4));

    // Against a served oracle the mismatch is found after the handshake.
    let cmd = format!("cmd:{BIN} oracle-serve");
    assert_eq!(latinv(&["attack", "--config", s(&path), "--oracle", &cmd]).status.code(), Some(4));
}

#[test]
fn unreachable_oracle_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 5);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let tcp = format!("tcp:{addr}");
    assert_eq!(latinv(&["attack", "--config", s(&cfg), "--oracle", &tcp]).status.code(), Some(3));
    let missing = "cmd:/nonexistent/oracle-binary";
    assert_eq!(latinv(&["attack", "--config", s(&cfg), "--oracle", missing]).status.code(), Some(3));
    let silent = "cmd:/bin/false";
    assert_eq!(latinv(&["attack", "--config", s(&cfg), "--oracle", silent]).status.code(), Some(3));
}

#[test]
fn attack_through_served_oracle_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 40);
    let inproc = dir.path().join("in");
    let served = dir.path().join("served");
    let cmd = format!("cmd:{BIN} oracle-serve --config {}", s(&repo_file("configs/testbed-oracle.json")));
    let o = latinv(&["attack", "--config", s(&cfg), "--label", "1", "--out", s(&inproc)]);
    assert_eq!(o.status.code(), Some(0));
    let o = latinv(&["attack", "--config", s(&cfg), "--label", "1", "--out", s(&served), "--oracle", &cmd]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(
        std::fs::read(inproc.join("1/rewards.csv")).unwrap(),
        std::fs::read(served.join("1/rewards.csv")).unwrap()
    );
    let mut a: AttackReport = read_json(&inproc.join("1/report.json")).unwrap();
    let mut b: AttackReport = read_json(&served.join("1/report.json")).unwrap();
    // Private features (KNN, PSNR) are only known for builtin oracles.
    let ea = a.evaluation.take().unwrap();
    let eb = b.evaluation.take().unwrap();
    assert_eq!(a, b);
    let strip = |e: Option<EvalSummary>| {
        e.map(|mut e| {
            e.knn_feature_distance = None;
            e.psnr = None;
            e
        })
    };
    assert_eq!(strip(ea.final_distribution), strip(eb.final_distribution));
    assert_eq!(strip(ea.best), strip(eb.best));
}

#[test]
fn oracle_serve_speaks_the_protocol() {
    let mut child = Command::new(BIN)
        .arg("oracle-serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let mut ask = |req: &str| -> serde_json::Value {
        writeln!(stdin, "{req}").unwrap();
        stdin.flush().unwrap();
        serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap()
    };

    let meta = ask(r#"{"id":0,"op":"meta"}"#);
    assert_eq!(meta["latent_dim"], 8);
    assert_eq!(meta["num_classes"], 5);

    let q = ask(r#"{"id":1,"op":"query","codes":[[0,0,0,0,0,0,0,0],[1,-1,0.5,2,0,0,0,3]]}"#);
    assert_eq!(q["id"], 1);
    let probs = q["probs"].as_array().unwrap();
    assert_eq!(probs.len(), 2);
    for row in probs {
        let sum: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }

    let err = ask(r#"{"id":2,"op":"query","codes":[[1,2]]}"#);
    assert_eq!(err["id"], 2);
    assert!(err["error"].is_string());
    let err = ask(r#"{"id":3,"op":"launch"}"#);
    assert_eq!(err["id"], 3);
    assert!(err["error"].is_string());
    let again = ask(r#"{"id":4,"op":"meta"}"#);
    assert_eq!(again["id"], 4);

    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn oracle_serve_rejects_external_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"kind":"external","endpoint":"tcp:127.0.0.1:1"}"#).unwrap();
    assert_eq!(latinv(&["oracle-serve", "--config", s(&spec)]).status.code(), Some(2));
}

fn write_dist(dir: &Path, name: &str, d: &LatentDistribution) -> PathBuf {
    let p = dir.join(name);
    write_json(&p, d).unwrap();
    p
}

fn eval_lines(out: &Output) -> Vec<LabelledSummary> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn eval_point_mass_fixture_is_fully_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = repo_file("fixtures/point_mass_label0.json");
    let out = latinv(&["eval", "--dist", s(&fixture), "--label", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = eval_lines(&out);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0].summary.top1, 1.0);
    assert_eq!(lines[0].summary.distributional_accuracy, 1.0);
    let written: Option<EvalSummary> = read_json(&dir.path().join("0/eval.json")).unwrap();
    assert_eq!(written.as_ref(), Some(&lines[0].summary));
}

#[test]
fn eval_rejects_bad_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"mu": [0.0], "sigma": []}"#).unwrap();
    assert_eq!(latinv(&["eval", "--dist", s(&bad)]).status.code(), Some(2));
    std::fs::write(&bad, r#"{"mu": [0.0], "sigma": [-1.0]}"#).unwrap();
    assert_eq!(latinv(&["eval", "--dist", s(&bad)]).status.code(), Some(2));
    std::fs::write(&bad, "[1, 2").unwrap();
    assert_eq!(latinv(&["eval", "--dist", s(&bad)]).status.code(), Some(2));

    let d4 = LatentDistribution::new(vec![0.0; 4], vec![1.0; 4], &SigmaBounds::default()).unwrap();
    let p = write_dist(dir.path(), "d4.json", &d4);
    assert_eq!(latinv(&["eval", "--dist", s(&p)]).status.code(), Some(4));
}

#[test]
fn fresh_random_distributions_score_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let k = 5;
    let draws = 40;
    let mut per_label = vec![0.0; k];
    for seed in 0..draws {
        let d = init_distribution(8, &SigmaBounds::default(), &mut seeded(10_000 + seed)).unwrap();
        let p = write_dist(dir.path(), &format!("d{seed}.json"), &d);
        let cfg = {
            let mut c = RunConfig::default();
            c.eval.topk_samples = 2000;
            c.eval.accuracy_samples = 100;
            let path = dir.path().join("c.json");
            write_json(&path, &c).unwrap();
            path
        };
        let out = latinv(&["eval", "--dist", s(&p), "--config", s(&cfg)]);
        assert_eq!(out.status.code(), Some(0));
        let lines = eval_lines(&out);
        assert_eq!(lines.len(), k);
        for l in lines {
            per_label[l.label] += l.summary.top1 / draws as f64;
        }
    }
    for (label, m) in per_label.iter().enumerate() {
        assert!((m - 1.0 / k as f64).abs() <= 0.05, "label {label}: mean top1 {m}");
    }
}

#[test]
fn gradcheck_passes_and_catches_sign_flip() {
    let out = latinv(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["nets_checked"].as_u64().unwrap() >= 20);
    assert!(report["max_relative_error"].as_f64().unwrap() <= 1e-4);

    let out = latinv(&["gradcheck", "--inject-sign-flip"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("layer 0") && stderr.contains("analytic"), "{stderr}");
    assert!(!String::from_utf8_lossy(&latinv(&["gradcheck", "--help"]).stdout).contains("sign"));
}

#[test]
fn bench_agents_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 30);
    let out = latinv(&["bench-agents", "--config", s(&cfg), "--label", "0,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out/bench");
    let rows: Vec<BenchRow> = read_csv(&root.join("bench.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 5 * 2);
    let summary: BenchSummary = read_json(&root.join("summary.json")).unwrap();
    assert_eq!(summary.rows, rows);
    assert_eq!(summary.per_seed.len(), 5);
    for mode in ["maddpg", "independent"] {
        for seed in 1..=5 {
            for label in [0, 4] {
                assert_eq!(
                    rows.iter()
                        .filter(|r| r.mode.to_string() == mode && r.seed == seed && r.label == label)
                        .count(),
                    1
                );
                let csv = root.join(mode).join(format!("seed-{seed}")).join(label.to_string()).join("rewards.csv");
                let eps = read_rewards_csv(&csv).unwrap();
                assert_eq!(eps.len(), 30);
                assert!(eps.windows(2).all(|w| w[1].episode > w[0].episode));
            }
        }
    }
}

#[test]
fn sweep_dims_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 20);
    let out = latinv(&["sweep-dims", "--config", s(&cfg), "--dims", "4,8,16", "--label", "1", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<SweepRow> = read_csv(&dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.dim).collect::<Vec<_>>(), vec![4, 8, 16]);
    assert!(rows.iter().all(|r| r.seed == 3 && r.labels == 1));
    let best = rows.iter().map(|r| r.accuracy).fold(f64::NEG_INFINITY, f64::max);
    assert!(best >= rows[0].accuracy);
    for d in [4, 8, 16] {
        let report: AttackReport = read_json(&dir.path().join(format!("out/sweep/dim-{d}/1/report.json"))).unwrap();
        assert_eq!(report.config.latent_dim, d);
    }

    let mut ext = RunConfig::load(&cfg).unwrap();
    ext.oracle = latinv_cli::config::OracleSpec::External {
        endpoint: "tcp:127.0.0.1:1".parse().unwrap(),
    };
    let p = dir.path().join("ext.json");
    write_json(&p, &ext).unwrap();
    assert_eq!(latinv(&["sweep-dims", "--config", s(&p)]).status.code(), Some(2));
}
