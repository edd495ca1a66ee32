use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prompt_slu::backend::stub::{Behavior, StubServer};
use prompt_slu::backend::{GenerationBackend, OracleBackend};
use prompt_slu::dataset::{register_corpus_labels, CorpusSplits, Split};
use prompt_slu::LabelLexicon;
use serde_json::Value;

fn mini() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/mini")
}

fn lexicon_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/lexicon/mixatis.tsv")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prompt-slu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn build_dataset_reports_counts_and_expands_three_fold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let output = run(&["build-dataset", "--corpus", s(&mini()), "--out", s(&out)]);
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stats = stdout_json(&output);
    assert_eq!(stats["samples"]["train"], 12);
    assert_eq!(stats["samples"]["dev"], 4);
    assert_eq!(stats["samples"]["test"], 4);
    let on_disk: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(on_disk, stats);

    let split = lines(&out.join("train.split.jsonl"));
    assert_eq!(split.len(), 36);
    let weighted = lines(&out.join("train.weighted.jsonl"));
    assert_eq!(weighted.len(), 36);
    for group in weighted.chunks(3) {
        let tasks: Vec<&str> = group.iter().map(|r| r["task"].as_str().unwrap()).collect();
        assert_eq!(tasks, ["ID", "SF", "SP"]);
        assert!(group
            .iter()
            .all(|r| r["sample_id"] == group[0]["sample_id"]));
    }
    let keys: Vec<&String> = split[0].as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 4);
}

#[test]
fn seed_determines_dataset_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let build = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let output = run(&[
            "build-dataset",
            "--corpus",
            s(&mini()),
            "--out",
            s(&out),
            "--layout",
            "split",
            "--split",
            "train",
            "--seed",
            seed,
        ]);
        assert_eq!(code(&output), 0);
        std::fs::read(out.join("train.split.jsonl")).unwrap()
    };
    let a = build("a", "2");
    let b = build("b", "2");
    let c = build("c", "3");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(!dir.path().join("a/train.weighted.jsonl").exists());
    assert!(!dir.path().join("a/dev.split.jsonl").exists());
}

#[test]
fn missing_lexicon_falls_back_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "build-dataset",
        "--corpus",
        s(&mini()),
        "--out",
        s(dir.path()),
        "--lexicon",
        s(&dir.path().join("absent.tsv")),
    ]);
    assert_eq!(code(&output), 0);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("not found"), "{stderr}");
}

#[test]
fn oracle_inference_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    for split in ["train", "dev", "test"] {
        let out = dir.path().join(split);
        let infer = run(&[
            "infer",
            "--corpus",
            s(&mini()),
            "--split",
            split,
            "--lexicon",
            s(&lexicon_file()),
            "--backend",
            "oracle",
            "--run-sp",
            "--out",
            s(&out),
        ]);
        assert_eq!(
            code(&infer),
            0,
            "{}",
            String::from_utf8_lossy(&infer.stderr)
        );
        let eval = run(&[
            "evaluate",
            "--corpus",
            s(&mini()),
            "--split",
            split,
            "--lexicon",
            s(&lexicon_file()),
            "--predictions",
            s(&out.join("predictions.jsonl")),
        ]);
        assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
        let report = stdout_json(&eval);
        assert_eq!(report["slot_f1"], 100.0);
        assert_eq!(report["intent_acc"], 100.0);
        assert_eq!(report["overall_acc"], 100.0);
        assert!(out.join("metrics.csv").is_file());
        assert!(out.join("per_sample.csv").is_file());
    }
}

#[test]
fn dry_run_prints_prompts_without_a_backend() {
    let guided = run(&[
        "infer",
        "--corpus",
        s(&mini()),
        "--split",
        "train",
        "--dry-run",
        "--backend",
        "http:http://127.0.0.1:1",
    ]);
    assert_eq!(
        code(&guided),
        0,
        "{}",
        String::from_utf8_lossy(&guided.stderr)
    );
    let text = String::from_utf8(guided.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 24);
    assert_eq!(
        rows[1],
        "train-0\tSF\ttransfer sentence to pairs with airport, flight : describe pittsburgh airport and then list flights from denver to san francisco no denver to philadelphia"
    );

    let ablated = run(&[
        "infer",
        "--corpus",
        s(&mini()),
        "--split",
        "train",
        "--dry-run",
        "--no-sig",
        "--run-sp",
    ]);
    let text = String::from_utf8(ablated.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 36);
    assert!(rows.iter().all(|r| !r.contains(" with ")));
    assert!(rows[2].starts_with("train-0\tSP\ttransfer sentence to slots : "));
}

#[test]
fn evaluate_rejects_empty_and_mismatched_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let output = run(&[
        "evaluate",
        "--corpus",
        s(&mini()),
        "--predictions",
        s(&empty),
    ]);
    assert_eq!(code(&output), 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("empty"));

    let out = dir.path().join("run");
    assert_eq!(
        code(&run(&["infer", "--corpus", s(&mini()), "--out", s(&out)])),
        0
    );
    let dump = std::fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    let partial = dir.path().join("partial.jsonl");
    std::fs::write(
        &partial,
        dump.lines().skip(1).collect::<Vec<_>>().join("\n"),
    )
    .unwrap();
    let output = run(&[
        "evaluate",
        "--corpus",
        s(&mini()),
        "--predictions",
        s(&partial),
    ]);
    assert_eq!(code(&output), 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("test-0"));
}

#[test]
fn adversarial_dump_separates_overall_from_intent_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let infer = run(&[
        "infer",
        "--corpus",
        s(&mini()),
        "--split",
        "train",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&infer), 0);
    let mut records = lines(&out.join("predictions.jsonl"));
    let pairs: Vec<Value> = records.iter().map(|r| r["pairs"].clone()).collect();
    for (i, record) in records.iter_mut().enumerate() {
        record["pairs"] = pairs[(i + 1) % pairs.len()].clone();
    }
    let shuffled = dir.path().join("shuffled.jsonl");
    std::fs::write(
        &shuffled,
        records
            .iter()
            .map(Value::to_string)
            .collect::<Vec<_>>()
            .join("\n"),
    )
    .unwrap();
    let eval = run(&[
        "evaluate",
        "--corpus",
        s(&mini()),
        "--split",
        "train",
        "--predictions",
        s(&shuffled),
        "--out",
        s(&dir.path().join("report")),
    ]);
    assert_eq!(code(&eval), 0);
    let report = stdout_json(&eval);
    let (intent, overall) = (
        report["intent_acc"].as_f64().unwrap(),
        report["overall_acc"].as_f64().unwrap(),
    );
    assert_eq!(intent, 100.0);
    assert!(overall < intent);

    let per_sample = std::fs::read_to_string(dir.path().join("report/per_sample.csv")).unwrap();
    for row in per_sample.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(cols[3] == "false" || cols[1] == "true", "{row}");
    }
}

#[test]
fn http_backend_through_the_cli() {
    let corpus = CorpusSplits::load_dir(mini()).unwrap();
    let mut lexicon = LabelLexicon::empty();
    register_corpus_labels(&mut lexicon, corpus.all_samples()).unwrap();
    let oracle = OracleBackend::new(corpus.get(Split::Dev).unwrap(), &lexicon).unwrap();
    let server = StubServer::start(Behavior::Conformant, move |req| {
        oracle.generate(req).map(|r| r.text).unwrap_or_default()
    })
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let backend = format!("http:{}", server.base_url());
    let infer = run(&[
        "infer",
        "--corpus",
        s(&mini()),
        "--split",
        "dev",
        "--backend",
        &backend,
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        code(&infer),
        0,
        "{}",
        String::from_utf8_lossy(&infer.stderr)
    );
    let eval = run(&[
        "evaluate",
        "--corpus",
        s(&mini()),
        "--split",
        "dev",
        "--predictions",
        s(&dir.path().join("predictions.jsonl")),
    ]);
    assert_eq!(stdout_json(&eval)["overall_acc"], 100.0);

    let broken = StubServer::echo(Behavior::RenamedField).unwrap();
    let output = run(&[
        "infer",
        "--corpus",
        s(&mini()),
        "--backend",
        &format!("http:{}", broken.base_url()),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&output), 3);
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "corpus = {:?}\nsplit = \"dev\"\nseed = 5\nlayout = \"split\"\nout = \"ds\"\n",
            mini().to_str().unwrap()
        ),
    )
    .unwrap();
    let output = run(&["build-dataset", "--config", s(&config)]);
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stats = stdout_json(&output);
    assert_eq!(stats["seed"], 5);
    assert_eq!(stats["samples"].as_object().unwrap().len(), 1);
    assert!(dir.path().join("ds/dev.split.jsonl").is_file());

    let output = run(&[
        "build-dataset",
        "--config",
        s(&config),
        "--seed",
        "9",
        "--split",
        "test",
    ]);
    let stats = stdout_json(&output);
    assert_eq!(stats["seed"], 9);
    assert_eq!(stats["samples"]["test"], 4);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = mini();
    let cases: [&[&str]; 5] = [
        &[
            "build-dataset",
            "--corpus",
            s(&corpus),
            "--out",
            s(dir.path()),
            "--layout",
            "both",
        ],
        &[
            "infer",
            "--corpus",
            s(&corpus),
            "--out",
            s(dir.path()),
            "--backend",
            "grpc:x",
        ],
        &["infer", "--corpus", s(&corpus)],
        &["evaluate", "--corpus", s(&corpus)],
        &["build-dataset", "--seed", "-1"],
    ];
    for args in cases {
        assert_eq!(code(&run(args)), 1, "{args:?}");
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("corpus");
    std::fs::create_dir(&broken).unwrap();
    std::fs::write(broken.join("test.txt"), "a O B\natis_flight\n").unwrap();
    let output = run(&["infer", "--corpus", s(&broken), "--out", s(dir.path())]);
    assert_eq!(code(&output), 2);
    let output = run(&[
        "infer",
        "--corpus",
        s(&broken),
        "--split",
        "train",
        "--dry-run",
    ]);
    assert_eq!(code(&output), 2);
}

#[test]
fn evaluation_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(
        code(&run(&["infer", "--corpus", s(&mini()), "--out", s(&out)])),
        0
    );
    let eval = || {
        let output = run(&[
            "evaluate",
            "--corpus",
            s(&mini()),
            "--predictions",
            s(&out.join("predictions.jsonl")),
        ]);
        assert_eq!(code(&output), 0);
        (
            output.stdout,
            std::fs::read(out.join("metrics.csv")).unwrap(),
            std::fs::read(out.join("per_sample.csv")).unwrap(),
        )
    };
    assert_eq!(eval(), eval());
}
