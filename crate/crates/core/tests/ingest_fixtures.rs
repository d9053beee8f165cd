use std::fs;
use std::path::PathBuf;

use beliefmap_core::corpus::{normalize_text, validate_corpus, Role};
use beliefmap_core::ingest::{
    emit_canonical, ingest_bbs_csv_file, ingest_canonical, ingest_chat_export, UserMap,
};
use beliefmap_core::lexicon::tokenize;
use beliefmap_core::syngen::{generate, four_room_script, ScriptGroup};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Rows of a tab-separated expectation file, header skipped.
fn expected_rows(name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn chat_export_fixture() {
    let users = UserMap::load(&fixture("chat_users.jsonl")).unwrap();
    let run = ingest_chat_export(&fixture("chat_export"), &users, "slack-1").unwrap();
    let expected = expected_rows("chat_export_expected.tsv");
    assert_eq!(run.len(), 30);
    assert_eq!(run.len(), expected.len());
    for (post, row) in run.posts.iter().zip(&expected) {
        assert_eq!(post.seq.to_string(), row[0]);
        assert_eq!(post.author, row[1], "seq {}", post.seq);
        assert_eq!(post.role.as_str(), row[2], "seq {}", post.seq);
        assert_eq!(post.raw_text, row[3], "seq {}", post.seq);
        assert_eq!(post.group_id, "slack-1");
    }
    assert_eq!(run.dm_name, "Ysolde");
    assert_eq!(run.posts.iter().filter(|p| p.role == Role::Bot).count(), 4);
    // Timestamps are non-decreasing once merged.
    let ts: Vec<&str> = run.posts.iter().map(|p| p.timestamp.as_deref().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(ts[0], "2018-03-01T16:00:00.000100Z");
}

#[test]
fn bbs_fixture() {
    let run = ingest_bbs_csv_file(&fixture("bbs_thread.csv"), "php-1").unwrap();
    let expected = expected_rows("bbs_thread_expected.tsv");
    assert_eq!(run.len(), 30);
    for (post, row) in run.posts.iter().zip(&expected) {
        assert_eq!(post.seq.to_string(), row[0]);
        assert_eq!(post.author, row[2], "post_id {}", row[1]);
        assert_eq!(post.role.as_str(), row[3], "post_id {}", row[1]);
    }
    let with_links: Vec<_> = run.posts.iter().filter(|p| p.raw_text.contains("href=")).collect();
    assert_eq!(with_links.len(), 5);
    for post in with_links {
        assert!(post.raw_text.contains("http://dice.example.net"));
        assert!(!post.norm_text.contains("http"), "{}", post.norm_text);
        assert!(!post.norm_text.contains('<'), "{}", post.norm_text);
    }
    let first = &run.posts[0];
    assert_eq!(first.norm_text, "the road ends at a cave mouth. torchlight flickers deep inside.");
    assert!(validate_corpus(&beliefmap_core::corpus::Corpus::from_runs([run]).unwrap()).is_empty());
}

#[test]
fn normalization_cases() {
    let text = fs::read_to_string(fixture("normalize_cases.jsonl")).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let case: serde_json::Value = serde_json::from_str(line).unwrap();
        let raw = case["raw"].as_str().unwrap();
        let norm = case["norm"].as_str().unwrap();
        assert_eq!(normalize_text(raw), norm, "raw {raw:?}");
        assert_eq!(normalize_text(norm), norm, "not idempotent on {norm:?}");
        n += 1;
    }
    assert_eq!(n, 20);
}

/// Character-class oracle: maximal runs of alphanumerics, then the length
/// and all-digit filters.
fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() {
            current.push(c);
            continue;
        }
        if current.chars().count() >= 2 && current.chars().any(|c| !c.is_numeric()) {
            out.push(current.clone());
        }
        current.clear();
    }
    out
}

#[test]
fn tokenize_paragraph_matches_oracle() {
    let paragraph = fs::read_to_string(fixture("tokenize_paragraph.txt")).unwrap();
    assert_eq!(paragraph.split_whitespace().count(), 100);
    let norm = normalize_text(&paragraph);
    let tokens = tokenize(&norm);
    assert_eq!(tokens, oracle_tokens(&norm));
    assert!(tokens.contains(&"d20"));
    assert!(tokens.contains(&"x2"));
    assert!(!tokens.contains(&"12"));
    assert!(!tokens.contains(&"s"));
    assert_eq!(&tokens[..4], ["the", "party", "gathered", "at"]);
}

#[test]
fn canonical_round_trip_on_generator_corpora() {
    let mut script = four_room_script();
    script.sections.iter_mut().for_each(|s| s.posts_per_bucket = 12);
    for seed in 0..50 {
        let (corpus, truth) = generate(&script.clone().with_seed(seed)).unwrap();
        let text = emit_canonical(&corpus);
        let back = ingest_canonical(text.as_bytes()).unwrap();
        assert_eq!(back, corpus, "seed {seed}");
        assert_eq!(emit_canonical(&back), text);
        assert_eq!(back.post_count(), truth.total_posts);
    }
}

#[test]
fn six_run_corpus_of_ten_thousand_posts() {
    let mut script = four_room_script();
    script.groups.push(ScriptGroup {
        group_id: "php-3".into(),
        dm_name: "Galen".into(),
        player_names: vec!["Perrin".into(), "Odile".into(), "Sorrel".into()],
    });
    script.sections.iter_mut().for_each(|s| s.posts_per_bucket = 365);
    let (corpus, truth) = generate(&script).unwrap();
    let back = ingest_canonical(emit_canonical(&corpus).as_bytes()).unwrap();
    assert_eq!(back.runs.len(), 6);
    assert_eq!(back.post_count(), truth.total_posts);
    assert!((9_000..10_500).contains(&truth.total_posts), "{}", truth.total_posts);
    for (group, run) in &back.runs {
        assert_eq!(run.len(), truth.post_counts[group]);
    }
}
