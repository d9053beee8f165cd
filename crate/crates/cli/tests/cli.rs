use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn beliefmap(workspace: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beliefmap"))
        .arg("--workspace")
        .arg(workspace)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn script() -> String {
    core_fixture("four_room_script.json").display().to_string()
}

#[test]
fn run_all_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = beliefmap(dir.path(), &["run-all", "--generate", &script()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for artifact in [
        "corpus.jsonl",
        "stopwords.json",
        "markers.json",
        "sections.json",
        "terms.json",
        "map.json",
        "map.dot",
        "convergence.csv",
        "convergence_summary.json",
        "manifest.json",
    ] {
        assert!(dir.path().join(artifact).is_file(), "{artifact}");
    }
    let terms: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("terms.json")).unwrap()).unwrap();
    let labels: Vec<String> = terms
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let words: Vec<&str> = t["label"].as_array().unwrap().iter().map(|w| w.as_str().unwrap()).collect();
            words.join("-")
        })
        .collect();
    assert_eq!(labels, ["goblin-orc-stairs", "rope-gate-orb", "troll-grogg-box", "coins-dragon-barrier"]);
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = beliefmap(dir.path(), &["align"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("align: missing corpus.jsonl"), "{}", stderr(&out));

    let out = beliefmap(dir.path(), &["run-all"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("stopwords: missing corpus.jsonl"), "{}", stderr(&out));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&beliefmap(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&beliefmap(dir.path(), &["align", "--theta", "high"])), 2);
    let out = beliefmap(dir.path(), &["ingest", "--format", "bbs-csv", &core_fixture("bbs_thread.csv").display().to_string()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--group"));
}

#[test]
fn invalid_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "thread_id,post_id,author,role,timestamp,body_html\n1,1,Morwen,gm,2017-01-01,hello\n",
    )
    .unwrap();
    let out = beliefmap(dir.path(), &["ingest", "--format", "bbs-csv", "--group", "g", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("unknown role gm"), "{}", stderr(&out));

    // A run without any DM post.
    let corpus = "{\"author\":\"Pip\",\"group_id\":\"g\",\"role\":\"player\",\"seq\":0,\"text\":\"hello\"}\n";
    fs::write(dir.path().join("corpus.jsonl"), corpus).unwrap();
    let out = beliefmap(dir.path(), &["validate"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no-dm"));

    let script = dir.path().join("script.json");
    let mut bad: serde_json::Value = serde_json::from_str(&fs::read_to_string(core_fixture("four_room_script.json")).unwrap()).unwrap();
    bad["final_marker_text"] = "too short".into();
    fs::write(&script, bad.to_string()).unwrap();
    let out = beliefmap(dir.path(), &["validate", "--script", script.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("marker-too-short"), "{}", stderr(&out));
}

#[test]
fn unwritable_workspace_is_internal() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    fs::write(&file, "").unwrap();
    let out = beliefmap(&file, &["generate", "--script", &script()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn stage_by_stage_with_ingested_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    let users = core_fixture("chat_users.jsonl").display().to_string();
    let chat = core_fixture("chat_export").display().to_string();
    let bbs = core_fixture("bbs_thread.csv").display().to_string();

    let out = beliefmap(ws, &["ingest", "--format", "chat-export", "--group", "slack-1", "--user-map", &users, &chat]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = beliefmap(ws, &["ingest", "--format", "bbs-csv", "--group", "php-1", "--append", &bbs]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let corpus = fs::read_to_string(ws.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 60);

    let out = beliefmap(ws, &["ingest", "--format", "bbs-csv", "--group", "php-1", "--append", &bbs]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("duplicate group php-1"));

    let out = beliefmap(ws, &["validate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    assert_eq!(code(&beliefmap(ws, &["stopwords", "--n-per-player", "2"])), 0);
    let stop: serde_json::Value = serde_json::from_slice(&fs::read(ws.join("stopwords.json")).unwrap()).unwrap();
    assert_eq!(stop["n_per_player"], 2);
    assert!(stop["per_player"]["Cricket"].as_array().unwrap().iter().any(|t| t == "cricket"));

    // Two real play sessions share no pasted marker text.
    let out = beliefmap(ws, &["align"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("align: no common markers"), "{}", stderr(&out));
    assert!(!ws.join("markers.json").exists());
}

#[test]
fn stages_honour_config_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    let config = ws.join("beliefmap.toml");
    fs::write(&config, "seed = 5\n[extract]\nlabel_k = 2\n[map]\nsnippet_len = 100\n").unwrap();
    let cfg = config.to_str().unwrap();

    let out = beliefmap(ws, &["--config", cfg, "generate", "--script", &script()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for stage in [&["stopwords"][..], &["align", "--theta", "0.85", "--dm-only"], &["extract", "--depth", "15"], &["map"], &["converge", "--pairwise"]] {
        let mut args = vec!["--config", cfg];
        args.extend_from_slice(stage);
        let out = beliefmap(ws, &args);
        assert_eq!(code(&out), 0, "{stage:?}: {}", stderr(&out));
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(ws.join("manifest.json")).unwrap()).unwrap();
    let stages = &manifest["stages"];
    assert_eq!(stages["generate"]["params"]["seed"], 5);
    assert_eq!(stages["align"]["params"]["theta"], 0.85);
    assert_eq!(stages["extract"]["params"]["depth"], 15);
    assert_eq!(stages["extract"]["params"]["label_k"], 2);
    assert_eq!(stages["map"]["params"]["snippet_len"], 100);
    assert_eq!(stages["converge"]["params"]["mode"], "pairwise");

    let map: serde_json::Value = serde_json::from_slice(&fs::read(ws.join("map.json")).unwrap()).unwrap();
    for place in map["places"].as_array().unwrap() {
        assert_eq!(place["label"].as_array().unwrap().len(), 2);
        assert!(place["snippet"].as_str().map_or(0, |s| s.chars().count()) <= 100);
    }
    let csv = fs::read_to_string(ws.join("convergence.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("1,php-1|php-2,"), "{csv}");
}

#[test]
fn generate_to_explicit_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("elsewhere.jsonl");
    let truth = dir.path().join("truth-elsewhere.json");
    let out = beliefmap(
        dir.path(),
        &["--seed", "3", "generate", "--script", &script(), "--out", out_path.to_str().unwrap(), "--truth", truth.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_path.is_file() && truth.is_file());
    assert!(!dir.path().join("corpus.jsonl").exists());
    let out = beliefmap(dir.path(), &["validate", "--corpus", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn single_thread_output_matches() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&beliefmap(a.path(), &["run-all", "--generate", &script()])), 0);
    assert_eq!(code(&beliefmap(b.path(), &["--threads", "1", "run-all", "--generate", &script()])), 0);
    assert_eq!(code(&beliefmap(a.path(), &["run-all"])), 0);
    for artifact in ["map.json", "map.dot", "terms.json", "convergence.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(artifact)).unwrap(),
            fs::read(b.path().join(artifact)).unwrap(),
            "{artifact}"
        );
    }
}
