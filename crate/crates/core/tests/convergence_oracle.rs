use std::collections::{BTreeMap, BTreeSet};

use beliefmap_core::alignment::{detect_markers, AlignParams};
use beliefmap_core::convergence::{convergence_report, subset_map_terms, CompareMode};
use beliefmap_core::corpus::{Corpus, GroupRun, Post};
use beliefmap_core::extraction::ExtractParams;
use beliefmap_core::lexicon::{assemble_config, parse_word_list, StopFilter, ENGLISH_STOPWORDS, GAME_TERMS};
use beliefmap_core::syngen::{generate, four_room_script, GroundTruth};

fn filter_for(corpus: &Corpus) -> StopFilter {
    assemble_config(parse_word_list(ENGLISH_STOPWORDS), parse_word_list(GAME_TERMS), corpus, 1)
        .unwrap()
        .filter()
        .unwrap()
}

/// Recounts from the generator's recorded buckets, splitting words by hand.
fn recount(corpus: &Corpus, truth: &GroundTruth, filter: &StopFilter, subset: &[&str]) -> Vec<BTreeSet<String>> {
    truth
        .buckets
        .iter()
        .map(|buckets| {
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for group in subset {
                let run = &corpus.runs[*group];
                for seq in &buckets[*group] {
                    let text = &run.post(*seq).unwrap().norm_text;
                    let words = text
                        .split(|c: char| !c.is_alphanumeric())
                        .filter(|w| w.chars().count() > 1 && !w.chars().all(|c| c.is_numeric()));
                    for w in words.filter(|w| !filter.is_stopped(w)) {
                        *counts.entry(w.to_string()).or_insert(0) += 1;
                    }
                }
            }
            let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.into_iter().take(3).map(|(t, _)| t).collect()
        })
        .collect()
}

#[test]
fn subset_labels_equal_bucket_recount() {
    let mut script = four_room_script();
    script.sections.iter_mut().for_each(|s| s.posts_per_bucket = 10);
    script.options.group_jitter = 0.2;
    for seed in [1, 2, 3] {
        let (corpus, truth) = generate(&script.clone().with_seed(seed)).unwrap();
        let filter = filter_for(&corpus);
        let markers = detect_markers(&corpus, &AlignParams::default()).unwrap();
        let groups: Vec<&str> = corpus.group_ids().collect();
        for mask in 1u32..(1 << groups.len()) {
            let subset: Vec<&str> = (0..groups.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| groups[i])
                .collect();
            let got = subset_map_terms(&corpus, &markers, &filter, &subset, &ExtractParams::default()).unwrap();
            assert_eq!(got, recount(&corpus, &truth, &filter, &subset), "seed {seed} {subset:?}");
        }
    }
}

#[test]
fn duplicated_groups_never_differ() {
    let mut script = four_room_script();
    script.sections.iter_mut().for_each(|s| s.posts_per_bucket = 15);
    let (corpus, _) = generate(&script).unwrap();
    let source = &corpus.runs["php-1"];
    let copies = (0..4).map(|i| {
        let id = format!("copy-{i}");
        let posts = source
            .posts
            .iter()
            .map(|p| Post::new(id.clone(), p.seq, p.timestamp.clone(), p.author.clone(), p.role, p.raw_text.clone()))
            .collect();
        GroupRun::from_posts(id, posts)
    });
    let copied = Corpus::from_runs(copies).unwrap();
    let filter = filter_for(&copied);
    let markers = detect_markers(&copied, &AlignParams::default()).unwrap();
    let report = convergence_report(&copied, &markers, &filter, &ExtractParams::default(), CompareMode::Reference).unwrap();
    assert_eq!(report.rows.len(), 15);
    assert!(report.rows.iter().all(|r| r.difference == 0));
    let pairwise = convergence_report(&copied, &markers, &filter, &ExtractParams::default(), CompareMode::Pairwise).unwrap();
    // C(4,2) + C(6,2) + C(4,2) same-size pairs; k = 4 has only one subset.
    assert_eq!(pairwise.rows.len(), 6 + 15 + 6);
    assert!(pairwise.rows.iter().all(|r| r.difference == 0));
}

#[test]
fn report_rows_cover_every_subset_in_order() {
    let mut script = four_room_script();
    script.sections.iter_mut().for_each(|s| s.posts_per_bucket = 8);
    let (corpus, _) = generate(&script).unwrap();
    let filter = filter_for(&corpus);
    let markers = detect_markers(&corpus, &AlignParams::default()).unwrap();
    let report = convergence_report(&corpus, &markers, &filter, &ExtractParams::default(), CompareMode::Reference).unwrap();
    assert_eq!(report.rows.len(), 31);
    let keys: Vec<(usize, Vec<String>)> = report.rows.iter().map(|r| (r.k, r.subset.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let full = report.rows.last().unwrap();
    assert_eq!((full.k, full.difference), (5, 0));
    let csv = report.to_csv();
    assert!(csv.starts_with("k,subset,difference\n1,php-1,"));
    assert_eq!(csv.lines().count(), 32);
    let agg = report.aggregate(5).unwrap();
    assert_eq!((agg.count, agg.min, agg.max), (1, 0, 0));
}
