//! End-to-end tests of the `entfact` binary: every subcommand, the
//! determinism contract (same config + seed gives byte-identical
//! outputs), and the exit-code split between validation and runtime
//! failures.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use entfact::corpus::{noise_split, save_dataset, Dataset};
use entfact::synth::{corpus_pair, generate_world, SynthConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entfact"))
}

fn run_ok(args: &[&str]) -> String {
    let output = bin().args(args).output().expect("spawn entfact");
    assert!(
        output.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn run_code(args: &[&str]) -> (i32, String) {
    let output = bin().args(args).output().expect("spawn entfact");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("read {}: {e}", path.as_ref().display()))
}

/// Small synthetic workspace shared by the pipeline tests.
struct Workspace {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    root: PathBuf,
    train: PathBuf,
    clean: PathBuf,
    eval: PathBuf,
    labeled: PathBuf,
    unlabeled: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let world = generate_world(&SynthConfig {
        train_pairs: 300,
        eval_pairs: 40,
        labeled_records: 120,
        ..SynthConfig::default()
    });
    let (clean, _) = noise_split(&world.train);
    let train = root.join("train.jsonl");
    save_dataset(&world.train, &train).unwrap();
    let clean_path = root.join("clean.jsonl");
    save_dataset(&clean, &clean_path).unwrap();
    let eval = root.join("eval.jsonl");
    save_dataset(&world.eval, &eval).unwrap();
    let labeled = root.join("labeled.jsonl");
    save_dataset(&world.labeled, &labeled).unwrap();
    // Entity-free copy for the extract command.
    let mut stripped = world.labeled.clone();
    for record in &mut stripped.records {
        record.summary.entities.clear();
    }
    let unlabeled = root.join("unlabeled.jsonl");
    save_dataset(&stripped, &unlabeled).unwrap();
    Workspace {
        dir,
        root,
        train,
        clean: clean_path,
        eval,
        labeled,
        unlabeled,
    }
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn classification_pipeline_is_deterministic() {
    let ws = workspace();

    // extract tags mentions and is idempotent byte-for-byte.
    let ex1 = ws.root.join("extract1");
    let ex2 = ws.root.join("extract2");
    for out in [&ex1, &ex2] {
        run_ok(&[
            "extract",
            "--input",
            &p(&ws.unlabeled),
            "--out-dir",
            &p(out),
        ]);
    }
    assert_eq!(
        read(ex1.join("dataset.jsonl")),
        read(ex2.join("dataset.jsonl"))
    );
    assert!(read(ex1.join("dataset.jsonl")).contains("\"start\""));
    assert!(read(ex1.join("manifest.json")).contains("\"command\": \"extract\""));

    // score with the toy scorers, twice, byte-identical.
    let score1 = ws.root.join("score1");
    let score2 = ws.root.join("score2");
    for out in [&score1, &score2] {
        run_ok(&[
            "score",
            "--dataset",
            &p(&ws.labeled),
            "--scorer",
            "toy",
            "--train-corpus",
            &p(&ws.clean),
            "--out-dir",
            &p(out),
        ]);
    }
    assert_eq!(
        read(score1.join("features.csv")),
        read(score2.join("features.csv"))
    );
    assert_eq!(
        read(score1.join("scores.jsonl")),
        read(score2.join("scores.jsonl"))
    );
    let features = score1.join("features.csv");

    // file-backed rescoring reproduces the feature table exactly.
    let refile = ws.root.join("refile");
    run_ok(&[
        "score",
        "--dataset",
        &p(&ws.labeled),
        "--scorer",
        "file",
        "--scores",
        &p(&score1.join("scores.jsonl")),
        "--out-dir",
        &p(&refile),
    ]);
    assert_eq!(read(&features), read(refile.join("features.csv")));

    // train-knn persists a model.
    let knn = ws.root.join("knn");
    run_ok(&[
        "train-knn",
        "--features",
        &p(&features),
        "--k",
        "20",
        "--task",
        "factuality",
        "--out-dir",
        &p(&knn),
    ]);
    assert!(knn.join("model.json").exists());

    // classify fits both binary models and writes predictions; the same
    // invocation is byte-identical.
    let cls1 = ws.root.join("classify1");
    let cls2 = ws.root.join("classify2");
    for out in [&cls1, &cls2] {
        run_ok(&[
            "classify",
            "--features",
            &p(&features),
            "--k",
            "20",
            "--out-dir",
            &p(out),
        ]);
    }
    assert_eq!(
        read(cls1.join("predictions.csv")),
        read(cls2.join("predictions.csv"))
    );
    let predictions = cls1.join("predictions.csv");
    let pred_text = read(&predictions);
    assert!(pred_text.starts_with("doc_id,entity_index,task,label,confidence"));
    assert!(pred_text.contains("factuality"));
    assert!(pred_text.contains("hallucination"));

    // classify again from the persisted models: same predictions.
    let cls3 = ws.root.join("classify3");
    run_ok(&[
        "classify",
        "--features",
        &p(&features),
        "--model-h",
        &p(&cls1.join("model_h.json")),
        "--model-f",
        &p(&cls1.join("model_f.json")),
        "--out-dir",
        &p(&cls3),
    ]);
    assert_eq!(pred_text, read(cls3.join("predictions.csv")));

    // eval emits accuracy and macro-F1 keys.
    let eval_dir = ws.root.join("eval");
    let stdout = run_ok(&[
        "eval",
        "--features",
        &p(&features),
        "--k",
        "20",
        "--task",
        "factuality",
        "--out-dir",
        &p(&eval_dir),
    ]);
    assert!(stdout.contains("accuracy"));
    assert!(stdout.contains("macro_f1"));
    let report = read(eval_dir.join("report.csv"));
    assert!(report.contains("accuracy,"));
    assert!(report.contains("macro_f1,"));

    // the ablation grid covers the four subsets.
    let grid_dir = ws.root.join("grid");
    run_ok(&[
        "eval",
        "--features",
        &p(&features),
        "--k",
        "5",
        "--task",
        "factuality",
        "--grid",
        "--out-dir",
        &p(&grid_dir),
    ]);
    let grid = read(grid_dir.join("report.csv"));
    for subset in ["all/", "no-overlap/", "no-prior/", "no-posterior/"] {
        assert!(grid.contains(subset), "missing {subset} in grid report");
    }

    // export-dist joins features with predictions.
    let dist = ws.root.join("dist");
    run_ok(&[
        "export-dist",
        "--features",
        &p(&features),
        "--predictions",
        &p(&predictions),
        "--out-dir",
        &p(&dist),
    ]);
    let dist_text = read(dist.join("distribution.csv"));
    assert_eq!(dist_text.lines().count(), read(&features).lines().count());
}

#[test]
fn rl_pipeline_runs_and_logs() {
    let ws = workspace();
    // features for the reward classifier
    let score = ws.root.join("score");
    run_ok(&[
        "score",
        "--dataset",
        &p(&ws.labeled),
        "--scorer",
        "toy",
        "--train-corpus",
        &p(&ws.clean),
        "--out-dir",
        &p(&score),
    ]);
    let features = score.join("features.csv");

    let mle = ws.root.join("mle");
    run_ok(&[
        "mle-train",
        "--dataset",
        &p(&ws.train),
        "--steps",
        "200",
        "--lr",
        "0.5",
        "--seed",
        "3",
        "--out-dir",
        &p(&mle),
    ]);
    assert!(mle.join("policy.json").exists());
    assert!(mle.join("mle_log.jsonl").exists());

    // config file supplies r_nfe; the flag overrides gamma.
    let conf = ws.root.join("run.conf");
    std::fs::write(&conf, "r_nfe=2.0\ngamma=0.5\n").unwrap();
    let rewards = ws.root.join("rewards");
    run_ok(&[
        "label-rewards",
        "--dataset",
        &p(&ws.train),
        "--knn-features",
        &p(&features),
        "--k",
        "20",
        "--mle-policy",
        &p(&mle.join("policy.json")),
        "--config",
        &p(&conf),
        "--gamma",
        "1.0",
        "--out-dir",
        &p(&rewards),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(rewards.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["r_nfe"], 2.0);
    assert_eq!(manifest["config"]["gamma"], 1.0);
    let penalized = manifest["config"]["penalized_tokens"].as_u64().unwrap();
    assert!(penalized > 0, "the noisy corpus should earn penalties");
    let trajectories = rewards.join("trajectories.jsonl");
    assert!(read(&trajectories).contains("\"rewards\""));

    let rl = ws.root.join("rl");
    run_ok(&[
        "rl-train",
        "--trajectories",
        &p(&trajectories),
        "--init",
        &p(&mle.join("policy.json")),
        "--eval-dataset",
        &p(&ws.eval),
        "--steps",
        "150",
        "--seed",
        "4",
        "--out-dir",
        &p(&rl),
    ]);
    assert!(rl.join("policy.json").exists());
    // Training log rows carry the full schema.
    for line in read(rl.join("train_log.jsonl")).lines() {
        let entry: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["step", "mean_return", "loss_surrogate", "enfs_eval", "seed"] {
            assert!(entry.get(key).is_some(), "missing {key} in {line}");
        }
    }
}

#[test]
fn noise_experiment_command() {
    let ws = workspace();
    let score = ws.root.join("score");
    run_ok(&[
        "score",
        "--dataset",
        &p(&ws.labeled),
        "--scorer",
        "toy",
        "--train-corpus",
        &p(&ws.clean),
        "--out-dir",
        &p(&score),
    ]);
    let out = ws.root.join("noise");
    let stdout = run_ok(&[
        "noise-exp",
        "--train",
        &p(&ws.train),
        "--eval",
        &p(&ws.eval),
        "--knn-features",
        &p(&score.join("features.csv")),
        "--k",
        "20",
        "--ratios",
        "0,1.0",
        "--size",
        "60",
        "--steps",
        "150",
        "--seed",
        "2",
        "--out-dir",
        &p(&out),
    ]);
    assert!(stdout.contains("ratio 0.00"));
    let csv = read(out.join("noise_experiment.csv"));
    assert_eq!(csv.lines().count(), 3); // header + 2 ratios
    assert!(csv.starts_with("ratio,knn_factual_pct,overlap_factual_pct,rouge1"));
}

#[test]
fn correlate_command() {
    let dir = tempfile::tempdir().unwrap();
    // Factuality predictions for five summaries; s0 has two entities, so
    // its summary score is the minimum confidence (0.55), and s9 has no
    // predictions at all, scoring 1.0.
    let predictions = dir.path().join("predictions.csv");
    std::fs::write(
        &predictions,
        "doc_id,entity_index,task,label,confidence\n\
         s0,0,factuality,factual,0.9\n\
         s0,1,factuality,factual,0.55\n\
         s1,0,factuality,non_factual,0.2\n\
         s2,0,factuality,factual,0.7\n\
         s3,0,factuality,factual,0.85\n\
         s4,0,factuality,non_factual,0.35\n\
         s0,0,hallucination,hallucinated,1.0\n",
    )
    .unwrap();
    let mut human = String::from("summary_id,human_score,length\n");
    for (id, score, len) in [
        ("s0", 0.6, 12),
        ("s1", 0.1, 9),
        ("s2", 0.8, 14),
        ("s3", 0.9, 11),
        ("s4", 0.3, 16),
        ("s9", 0.95, 10),
    ] {
        human.push_str(&format!("{id},{score},{len}\n"));
    }
    let human_path = dir.path().join("human.csv");
    std::fs::write(&human_path, human).unwrap();

    let out = dir.path().join("corr");
    let stdout = run_ok(&[
        "correlate",
        "--predictions",
        &p(&predictions),
        "--human",
        &p(&human_path),
        "--covariates",
        "length",
        "--out-dir",
        &p(&out),
    ]);
    assert!(stdout.contains("pearson"));
    let report = read(out.join("report.csv"));
    assert!(report.contains("n,6"));
    assert!(report.contains("pearson,"));
    assert!(report.contains("partial_pearson,"));
    // Unknown covariate names are a validation error.
    let (code, stderr) = run_code(&[
        "correlate",
        "--predictions",
        &p(&predictions),
        "--human",
        &p(&human_path),
        "--covariates",
        "ghost",
        "--out-dir",
        &p(&out),
    ]);
    assert_eq!(code, 1, "{stderr}");
}

#[test]
fn convert_ment_command() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(
        &docs,
        concat!(
            r#"{"doc_id":"m0","document_tokens":["officials","in","Cardiff","said","more"],"summary_tokens":[],"kind":"reference","entities":[]}"#,
            "\n",
            r#"{"doc_id":"m1","document_tokens":["a","plan","for","Cardiff","was","agreed"],"summary_tokens":[],"kind":"reference","entities":[]}"#,
            "\n"
        ),
    )
    .unwrap();
    let anns = dir.path().join("ment.jsonl");
    std::fs::write(
        &anns,
        concat!(
            r#"{"doc_id":"m0","summary_tokens":["a","festival","in","Swansea","was","announced"],"extrinsic_spans":[[2,2]],"summary_factual":false}"#,
            "\n",
            r#"{"doc_id":"m1","summary_tokens":["a","riot","in","Cardiff","last","night"],"extrinsic_spans":[[0,6]],"summary_factual":false}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "convert-ment",
        "--annotations",
        &p(&anns),
        "--docs",
        &p(&docs),
        "--out-dir",
        &p(&out),
    ]);
    let text = read(out.join("dataset.jsonl"));
    assert!(text.contains("non_factual_hallucination")); // Swansea inside the span
                                                         // Cardiff sat inside a span but occurs in the source: dropped.
    let second = text.lines().nth(1).unwrap();
    assert!(second.contains("\"entities\":[]"), "{second}");
}

#[test]
fn analyze_sigma_command() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = corpus_pair(150, 9);
    let a_path = dir.path().join("a.jsonl");
    let b_path = dir.path().join("b.jsonl");
    save_dataset(&a, &a_path).unwrap();
    save_dataset(&b, &b_path).unwrap();
    // Analyze the entities of a slice of corpus A itself.
    let sample = Dataset {
        records: a.records[..25].to_vec(),
    };
    let sample_path = dir.path().join("sample.jsonl");
    save_dataset(&sample, &sample_path).unwrap();

    let out = dir.path().join("sigma");
    let stdout = run_ok(&[
        "analyze-sigma",
        "--dataset",
        &p(&sample_path),
        "--corpus-a",
        &p(&a_path),
        "--corpus-b",
        &p(&b_path),
        "--topk",
        "5",
        "--out-dir",
        &p(&out),
    ]);
    assert!(stdout.contains("entities"));
    let sigma = read(out.join("sigma.csv"));
    assert!(sigma.starts_with("doc_id,entity_index,entity,sigma,bucket,count_a,count_b"));
    assert!(read(out.join("report.csv")).contains("count_high"));
}

#[test]
fn remote_scorer_via_cli() {
    let ws = workspace();
    let endpoint = common::spawn_score_server();
    // Slice the dataset to keep the request count small.
    let world = generate_world(&SynthConfig {
        train_pairs: 5,
        eval_pairs: 2,
        labeled_records: 6,
        ..SynthConfig::default()
    });
    let small = ws.root.join("small.jsonl");
    save_dataset(&world.labeled, &small).unwrap();

    let out = ws.root.join("remote");
    run_ok(&[
        "score",
        "--dataset",
        &p(&small),
        "--scorer",
        "remote",
        "--endpoint",
        &endpoint,
        "--out-dir",
        &p(&out),
    ]);
    let features = read(out.join("features.csv"));
    // Every span token scored -0.25: a 1-token entity gets exp(-0.25).
    assert!(features.contains(&(-0.25f64).exp().to_string()));

    // The endpoint environment variable works as the fallback.
    let out_env = ws.root.join("remote-env");
    let output = bin()
        .args([
            "score",
            "--dataset",
            &p(&small),
            "--scorer",
            "remote",
            "--out-dir",
            &p(&out_env),
        ])
        .env("ENTFACT_SCORER_ENDPOINT", &endpoint)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert_eq!(
        read(out.join("features.csv")),
        read(out_env.join("features.csv"))
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // Unknown subcommand and unknown flag are validation errors.
    let (code, _) = run_code(&["frobnicate"]);
    assert_eq!(code, 1);
    let (code, _) = run_code(&["extract", "--nope", "x"]);
    assert_eq!(code, 1);

    // Missing input file: validation.
    let (code, stderr) = run_code(&[
        "extract",
        "--input",
        "/nonexistent.jsonl",
        "--out-dir",
        &p(&out),
    ]);
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("does not exist"));

    // Malformed dataset: runtime, and the message carries the line.
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"doc_id\": oops\n").unwrap();
    let (code, stderr) = run_code(&["extract", "--input", &p(&bad), "--out-dir", &p(&out)]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("line 1"), "{stderr}");

    // k larger than the table: runtime.
    let features = dir.path().join("features.csv");
    std::fs::write(
        &features,
        "doc_id,entity_index,prior,posterior,overlap,label\n\
         d0,0,0.5,0.5,1,non_hallucinated\n\
         d1,0,0.1,0.1,0,non_factual_hallucination\n",
    )
    .unwrap();
    let (code, stderr) = run_code(&[
        "eval",
        "--features",
        &p(&features),
        "--k",
        "20",
        "--task",
        "factuality",
        "--out-dir",
        &p(&out),
    ]);
    assert_eq!(code, 2, "{stderr}");

    // Help and version exit zero.
    let (code, _) = run_code(&["--help"]);
    assert_eq!(code, 0);
}
