use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_prefix-global");
const TASKS: [&str; 3] = ["page-desc", "section-summ", "image-caption"];

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

fn run(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("PREFIX_GLOBAL_THREADS", n.to_string()),
        None => cmd.env_remove("PREFIX_GLOBAL_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args, None);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn mask_examples() {
    assert_eq!(ok(&["mask", "full", "--l", "3", "--format", "csv"]), "1,1,1\n1,1,1\n1,1,1\n");

    let pgm = ok(&["mask", "prefix-global", "--l", "16", "--k", "4", "--r", "2"]);
    assert_eq!(pgm.as_bytes(), read(&data("golden/mask_prefix_16_4_2.pgm")));
    let body: Vec<&str> = pgm.lines().skip(3).collect();
    assert_eq!(body.len(), 16);
    assert_eq!(body.iter().map(|l| l.split(' ').filter(|&c| c == "1").count()).sum::<usize>(), 166);

    let tg = ok(&["mask", "tglobal", "--l", "32", "--r", "1", "--format", "csv"]);
    let rows: Vec<&str> = tg.lines().collect();
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r.split(',').count() == 34));
    assert_eq!(rows[0], format!("1,1{},1,1", ",0".repeat(30)));
}

#[test]
fn mask_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    ok(&["mask", "local", "--l", "5", "--r", "0", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(read(&path), b"1,0,0,0,0\n0,1,0,0,0\n0,0,1,0,0\n0,0,0,1,0\n0,0,0,0,1\n");
}

#[test]
fn flops_examples() {
    let table = ok(&["flops", "--l", "1024,2048,4096", "--patterns", "tglobal,prefix-global,full", "--table"]);
    assert_eq!(table.as_bytes(), read(&data("golden/flops_table.txt")));
    assert!(ok(&["flops", "--l", "1024", "--patterns", "full"]).contains("1,048,576"));
    let v = json(&["flops", "--l", "8", "--patterns", "prefix-global", "--k", "8", "--json"]);
    assert_eq!(v["groups"][0]["reports"][0]["accounted_pairs"], 64);
    assert_eq!(v["config"]["k"], 8);
    assert!(v["toolkit_version"].as_str().unwrap().starts_with("prefix-global "));
}

#[test]
fn flops_mixed_lengths_are_grouped() {
    let v = json(&["flops", "--l", "2048,4096", "--patterns", "prefix-global,full", "--json"]);
    assert_eq!(v["multi_length"], true);
    assert_eq!(v["groups"].as_array().unwrap().len(), 2);
}

#[test]
fn attend_examples() {
    let args = ["attend", "--l", "64", "--d", "8", "--pattern", "prefix-global", "--k", "8", "--r", "3", "--check-oracle"];
    let first = ok(&args);
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["oracle"]["pass"], true);
    assert!(v["oracle"]["max_abs_diff"].as_f64().unwrap() <= 1e-9);
    assert_eq!(first, ok(&args));
    for threads in [1, 5] {
        let out = run(&args, Some(threads));
        assert_eq!(String::from_utf8(out.stdout).unwrap(), first);
    }

    let v = json(&["attend", "--l", "40", "--d", "4", "--pattern", "local", "--r", "0"]);
    assert_eq!(v["output_equals_v"], true);

    let v = json(&["attend", "--l", "48", "--d", "6", "--pattern", "tglobal", "--r", "2", "--check-oracle", "--seed", "7"]);
    assert_eq!(v["pattern"]["side_keys"], 3);
    assert_eq!(v["oracle"]["pass"], true);
    assert_eq!(v["config"]["seed"], 7);

    let scaled = json(&["attend", "--l", "20", "--d", "4", "--pattern", "full"]);
    let unscaled = json(&["attend", "--l", "20", "--d", "4", "--pattern", "full", "--no-scale"]);
    assert_ne!(scaled["output_sha256"], unscaled["output_sha256"]);
    assert_eq!(unscaled["config"]["scale_by_sqrt_d"], false);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args, None).status.code().unwrap();
    assert_eq!(code(&["mask", "diagonal", "--l", "4"]), 2);
    assert_eq!(code(&["mask", "full"]), 2);
    assert_eq!(code(&["mask", "local", "--l", "4", "--r", "-1"]), 2);
    assert_eq!(code(&["mask", "prefix-global", "--l", "4", "--k", "5"]), 2);
    assert_eq!(code(&["attend", "--l", "100000", "--pattern", "full"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["build", "--task", "page-desc", "--corpus", "/nonexistent/c.jsonl", "--out", "/tmp/x"]), 1);
    assert_eq!(code(&["stats", "--corpus", "/nonexistent/c.jsonl"]), 1);
    let dir = tempfile::tempdir().unwrap();
    let blocked = dir.path().join("missing-dir/out.pgm");
    assert_eq!(code(&["mask", "full", "--l", "2", "--out", blocked.to_str().unwrap()]), 1);
}

fn build(task: &str, corpus: &Path, out: &Path, threads: usize, extra: &[&str]) {
    let mut args = vec!["build", "--task", task, "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let res = run(&args, Some(threads));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
}

const OUTPUT_FILES: [&str; 4] = ["train.jsonl", "val.jsonl", "test.jsonl", "report.json"];

#[test]
fn build_matches_golden_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    for task in TASKS {
        for threads in [1, 2, 8] {
            let out = dir.path().join(format!("{task}-{threads}"));
            build(task, &data("corpus.jsonl"), &out, threads, &[]);
            for f in OUTPUT_FILES {
                assert_eq!(read(&out.join(f)), read(&data(&format!("golden/{task}/{f}"))), "{task} {f} threads={threads}");
            }
        }
    }
}

#[test]
fn build_on_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.jsonl");
    std::fs::write(&corpus, "").unwrap();
    let out = dir.path().join("out");
    build("section-summ", &corpus, &out, 2, &[]);
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        assert!(read(&out.join(f)).is_empty());
    }
    let report: serde_json::Value = serde_json::from_slice(&read(&out.join("report.json"))).unwrap();
    assert_eq!(report["pages_in"], 0);
    assert_eq!(report["examples_out"], 0);
    assert_eq!(report["rejections"], serde_json::json!({}));
}

#[test]
fn content_threshold_never_adds_pages() {
    let dir = tempfile::tempdir().unwrap();
    let mut last = u64::MAX;
    for min in ["1", "2", "3", "4"] {
        let out = dir.path().join(min);
        build("page-desc", &data("corpus.jsonl"), &out, 2, &["--min-content-sections", min]);
        let report: serde_json::Value = serde_json::from_slice(&read(&out.join("report.json"))).unwrap();
        let n = report["examples_out"].as_u64().unwrap();
        assert!(n <= last, "threshold {min} gave {n} > {last}");
        assert_eq!(report["min_content_sections"], min.parse::<u64>().unwrap());
        last = n;
    }
}

#[test]
fn page_prefix_variants_differ() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for variant in ["titles-first-sentences", "in-order", "titles-only"] {
        let out = dir.path().join(variant);
        build("page-desc", &data("corpus.jsonl"), &out, 1, &["--page-prefix", variant]);
        let report: serde_json::Value = serde_json::from_slice(&read(&out.join("report.json"))).unwrap();
        assert_eq!(report["page_prefix"], variant);
        assert_eq!(report["examples_out"], 12);
        seen.push(read(&out.join("train.jsonl")));
    }
    assert_ne!(seen[0], seen[1]);
    assert_ne!(seen[0], seen[2]);
}

#[test]
fn stats_match_golden() {
    let corpus = data("corpus.jsonl");
    let text = ok(&["stats", "--corpus", corpus.to_str().unwrap()]);
    assert_eq!(text.as_bytes(), read(&data("golden/stats.json")));
}

#[test]
fn generated_corpus_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("gen.jsonl");
    ok(&["gen-corpus", "--pages", "700", "--seed", "11", "--out", corpus.to_str().unwrap()]);
    assert_eq!(ok(&["gen-corpus", "--pages", "700", "--seed", "11"]).as_bytes(), read(&corpus));
    for task in TASKS {
        let one = dir.path().join(format!("{task}-1"));
        let many = dir.path().join(format!("{task}-6"));
        build(task, &corpus, &one, 1, &[]);
        build(task, &corpus, &many, 6, &[]);
        for f in OUTPUT_FILES {
            assert_eq!(read(&one.join(f)), read(&many.join(f)), "{task} {f}");
        }
    }
}
