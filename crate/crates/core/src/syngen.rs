//! Seeded synthetic corpora with planted answers.
//!
//! A [`DungeonScript`] describes a linear dungeon: one pasted marker text per
//! room, weighted vocabularies for each room (shared) and for each group's
//! approach to it, plus filler. [`generate`] plays the script once per group
//! and returns the corpus together with the [`GroundTruth`] the analysis is
//! expected to recover.
//!
//! All randomness comes from [`SplitMix64`] so a corpus is a pure function
//! of the script and its seed, on any platform.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use crate::alignment::{post_similarity, DEFAULT_MIN_TOKENS, DEFAULT_THETA};
use crate::corpus::{normalize_text, Corpus, GroupRun, Post, Role};
use crate::error::{Error, Result};
use crate::extraction::{SectionTerms, DEFAULT_LABEL_K, DEFAULT_SPACE_K};
use crate::lexicon::tokenize;

/// SplitMix64 (Steele, Lea & Flood). Each call advances the state by the
/// golden-ratio increment `0x9E3779B97F4A7C15` and returns the mixed value:
///
/// ```text
/// z = state += 0x9E3779B97F4A7C15
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// return z ^ (z >> 31)
/// ```
///
/// Derived draws: `unit() = (next >> 11) * 2^-53` and `below(n) = next % n`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        self.next_u64() % n
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

pub type Vocab = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSection {
    pub marker_text: String,
    pub place_vocab: Vocab,
    #[serde(default)]
    pub per_group_space_vocab: BTreeMap<String, Vocab>,
    pub posts_per_bucket: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptGroup {
    pub group_id: String,
    pub dm_name: String,
    pub player_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptOptions {
    /// Inclusive range of sampled tokens per player post.
    pub tokens_per_post: (usize, usize),
    /// Plant one near-copy of the opening marker (similarity about 0.6) in
    /// every bucket.
    pub decoys: bool,
    /// Chance of a dice-bot post after each player post.
    pub dice_rate: f64,
    /// Per-group multiplicative noise on place weights, in [0, 1).
    pub group_jitter: f64,
    /// Chatter before the first marker.
    pub pregame_posts: usize,
}

impl Default for ScriptOptions {
    fn default() -> Self {
        ScriptOptions {
            tokens_per_post: (20, 30),
            decoys: true,
            dice_rate: 0.1,
            group_jitter: 0.0,
            pregame_posts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DungeonScript {
    pub sections: Vec<ScriptSection>,
    /// Pasted after the last room; closes the last section.
    pub final_marker_text: String,
    pub groups: Vec<ScriptGroup>,
    pub filler_vocab: Vocab,
    pub seed: u64,
    #[serde(default)]
    pub options: ScriptOptions,
}

pub const FOUR_ROOM_SCRIPT: &str = include_str!("../fixtures/four_room_script.json");

/// The bundled four-room, five-group fixture.
pub fn four_room_script() -> DungeonScript {
    serde_json::from_str(FOUR_ROOM_SCRIPT).expect("bundled script parses")
}

impl DungeonScript {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::bad_file(path, e))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn marker_texts(&self) -> impl Iterator<Item = &str> {
        self.sections
            .iter()
            .map(|s| s.marker_text.as_str())
            .chain(std::iter::once(self.final_marker_text.as_str()))
    }

    fn max_filler(&self) -> f64 {
        self.filler_vocab.values().copied().fold(0.0, f64::max)
    }

    /// Checks every script rule, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let fail = |rule: &str, detail: String| Err(Error::Script(format!("{rule}: {detail}")));
        if self.groups.is_empty() {
            return fail("no-groups", "script has no groups".into());
        }
        if self.sections.is_empty() {
            return fail("no-sections", "script has no sections".into());
        }
        let mut ids = BTreeSet::new();
        for g in &self.groups {
            if !ids.insert(g.group_id.as_str()) {
                return fail("duplicate-group", g.group_id.clone());
            }
            if g.dm_name.trim().is_empty() {
                return fail("group-without-dm", g.group_id.clone());
            }
            if g.player_names.is_empty() {
                return fail("group-without-players", g.group_id.clone());
            }
        }
        let (lo, hi) = self.options.tokens_per_post;
        if lo == 0 || lo > hi {
            return fail("post-length", format!("{lo}..={hi}"));
        }
        if !(0.0..1.0).contains(&self.options.group_jitter) {
            return fail("jitter-range", self.options.group_jitter.to_string());
        }

        let markers: Vec<Post> = self
            .marker_texts()
            .enumerate()
            .map(|(i, t)| Post::new("script", i as u64, None, "dm", Role::Dm, t))
            .collect();
        for m in &markers {
            let n = tokenize(&m.norm_text).len();
            if n < DEFAULT_MIN_TOKENS {
                return fail("marker-too-short", format!("marker {} has {n} tokens", m.seq));
            }
        }
        for (i, a) in markers.iter().enumerate() {
            for b in &markers[i + 1..] {
                if post_similarity(a, b) >= DEFAULT_THETA {
                    return fail("marker-similarity", format!("markers {} and {}", a.seq, b.seq));
                }
            }
        }

        let all_vocabs = self.sections.iter().flat_map(|s| {
            std::iter::once(&s.place_vocab).chain(s.per_group_space_vocab.values())
        });
        for vocab in all_vocabs.chain(std::iter::once(&self.filler_vocab)) {
            for (token, weight) in vocab {
                if !(*weight > 0.0 && weight.is_finite()) {
                    return fail("non-positive-weight", token.clone());
                }
                if tokenize(&normalize_text(token)) != [token.as_str()] {
                    return fail("bad-token", token.clone());
                }
            }
        }

        let max_filler = self.max_filler();
        let min_jitter = 1.0 - self.options.group_jitter;
        for (i, s) in self.sections.iter().enumerate() {
            if s.place_vocab.is_empty() {
                return fail("empty-place-vocab", format!("section {i}"));
            }
            for (token, w) in &s.place_vocab {
                if w * min_jitter < 2.0 * max_filler {
                    return fail("place-dominance", format!("section {i} {token}"));
                }
                if self.filler_vocab.contains_key(token) {
                    return fail("vocab-overlap", format!("section {i} {token}"));
                }
            }
            for (group, vocab) in &s.per_group_space_vocab {
                if !ids.contains(group.as_str()) {
                    return fail("unknown-space-group", format!("section {i} {group}"));
                }
                for (token, w) in vocab {
                    if *w < 2.0 * max_filler {
                        return fail("space-dominance", format!("section {i} {group} {token}"));
                    }
                    if s.place_vocab.contains_key(token) || self.filler_vocab.contains_key(token) {
                        return fail("vocab-overlap", format!("section {i} {group} {token}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// What the pipeline should find in a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per marker index: group → anchor seq.
    pub markers: Vec<BTreeMap<String, u64>>,
    /// Per section: group → decoy seq.
    pub decoys: Vec<BTreeMap<String, u64>>,
    /// Per section: group → bucket seqs (non-bot posts between anchors).
    pub buckets: Vec<BTreeMap<String, Vec<u64>>>,
    /// Per section: top label terms by planted weight.
    pub place_labels: Vec<Vec<String>>,
    /// Per section: group → top space terms by planted weight.
    pub space_terms: Vec<BTreeMap<String, Vec<String>>>,
    pub post_counts: BTreeMap<String, usize>,
    pub total_posts: usize,
}

impl GroundTruth {
    /// Mismatches between extracted terms and the planted ones. Place labels
    /// must match in order; space terms as sets.
    pub fn check_terms(&self, extracted: &[SectionTerms]) -> Vec<String> {
        let mut problems = Vec::new();
        if extracted.len() != self.place_labels.len() {
            problems.push(format!(
                "section count {} != {}",
                extracted.len(),
                self.place_labels.len()
            ));
            return problems;
        }
        for (i, section) in extracted.iter().enumerate() {
            if section.label != self.place_labels[i] {
                problems.push(format!(
                    "section {i}: label {} != {}",
                    section.label.join("-"),
                    self.place_labels[i].join("-")
                ));
            }
            for (group, expected) in &self.space_terms[i] {
                let got: BTreeSet<&str> = section
                    .spaces
                    .get(group)
                    .map(|t| t.iter().map(|r| r.term.as_str()).collect())
                    .unwrap_or_default();
                let want: BTreeSet<&str> = expected.iter().map(String::as_str).collect();
                if got != want {
                    problems.push(format!("section {i} {group}: space {got:?} != {want:?}"));
                }
            }
        }
        problems
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("truth serializes");
        text.push('\n');
        text
    }
}

fn top_by_weight(vocab: &Vocab, k: usize) -> Vec<String> {
    let mut items: Vec<(&String, f64)> = vocab.iter().map(|(t, w)| (t, *w)).collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    items.into_iter().take(k).map(|(t, _)| t.clone()).collect()
}

struct WeightedVocab {
    tokens: Vec<String>,
    cumulative: Vec<f64>,
}

impl WeightedVocab {
    fn new<'a>(parts: impl IntoIterator<Item = (&'a String, f64)>) -> Self {
        let mut tokens = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (token, weight) in parts {
            total += weight;
            tokens.push(token.clone());
            cumulative.push(total);
        }
        WeightedVocab { tokens, cumulative }
    }

    fn sample(&self, rng: &mut SplitMix64) -> &str {
        let total = *self.cumulative.last().expect("vocab not empty");
        let x = rng.unit() * total;
        let i = self.cumulative.partition_point(|&c| c <= x);
        &self.tokens[i.min(self.tokens.len() - 1)]
    }
}

const DECOY_FILLERS: [&str; 8] = ["just", "very", "again", "then", "now", "here", "there", "once"];

/// A near-copy of a marker: `r ≈ S/20` tokens replaced at positions at least
/// five apart, so about a quarter of the `S` shingles change (Jaccard ≈ 0.6).
fn decoy_text(marker: &str, group_index: usize, rng: &mut SplitMix64) -> String {
    let norm = normalize_text(marker);
    let mut tokens: Vec<String> = tokenize(&norm).into_iter().map(str::to_string).collect();
    let n = tokens.len();
    let shingles = n.saturating_sub(4);
    let r = ((shingles as f64 / 20.0).round() as usize).max(1);
    let step = (n.saturating_sub(8) / r).max(5);
    let offset = rng.below((step - 4) as u64) as usize;
    for j in 0..r {
        let pos = 4 + j * step + offset;
        if pos + 4 >= n {
            break;
        }
        let mut k = group_index + j;
        while DECOY_FILLERS[k % DECOY_FILLERS.len()] == tokens[pos] {
            k += 1;
        }
        tokens[pos] = DECOY_FILLERS[k % DECOY_FILLERS.len()].to_string();
    }
    tokens.join(" ")
}

const BASE_EPOCH: i64 = 1_515_261_600; // 2018-01-06T18:00:00Z

struct RunBuilder {
    group_id: String,
    posts: Vec<Post>,
    clock: i64,
}

impl RunBuilder {
    fn push(&mut self, author: &str, role: Role, text: String) -> u64 {
        let seq = self.posts.len() as u64;
        self.clock += 60;
        let timestamp = DateTime::from_timestamp(self.clock, 0).map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string());
        self.posts
            .push(Post::new(self.group_id.clone(), seq, timestamp, author, role, text));
        seq
    }
}

/// Players name themselves and sign off, so a player's own name is their
/// most frequent token unless they post almost only in one room.
fn player_post(name: &str, vocab: &WeightedVocab, len: usize, rng: &mut SplitMix64) -> String {
    let body: Vec<&str> = (0..len).map(|_| vocab.sample(rng)).collect();
    let body = body.join(" ");
    match rng.below(3) {
        0 => format!("*{name} {body}*\n-- {name}"),
        1 => format!("{name}: \"{body}\"\n-- {name}"),
        _ => format!("{name} {body}.\n-- {name}"),
    }
}

/// Plays the script for every group. A pure function of the script.
pub fn generate(script: &DungeonScript) -> Result<(Corpus, GroundTruth)> {
    script.validate()?;
    let mut rng = SplitMix64::new(script.seed);
    let opts = &script.options;
    let n_sections = script.sections.len();

    let mut truth = GroundTruth {
        markers: vec![BTreeMap::new(); n_sections + 1],
        decoys: vec![BTreeMap::new(); n_sections],
        buckets: vec![BTreeMap::new(); n_sections],
        place_labels: script
            .sections
            .iter()
            .map(|s| top_by_weight(&s.place_vocab, DEFAULT_LABEL_K))
            .collect(),
        space_terms: script
            .sections
            .iter()
            .map(|s| {
                script
                    .groups
                    .iter()
                    .map(|g| {
                        let vocab = s.per_group_space_vocab.get(&g.group_id);
                        let terms = vocab.map(|v| top_by_weight(v, DEFAULT_SPACE_K)).unwrap_or_default();
                        (g.group_id.clone(), terms)
                    })
                    .collect()
            })
            .collect(),
        post_counts: BTreeMap::new(),
        total_posts: 0,
    };

    let empty = Vocab::new();
    let mut runs = Vec::new();
    for (gi, group) in script.groups.iter().enumerate() {
        let mut run = RunBuilder {
            group_id: group.group_id.clone(),
            posts: Vec::new(),
            clock: BASE_EPOCH + 86_400 * gi as i64,
        };
        let pick_player = |rng: &mut SplitMix64| -> &str {
            &group.player_names[rng.below(group.player_names.len() as u64) as usize]
        };

        for i in 0..opts.pregame_posts {
            if i == 0 {
                run.push(&group.dm_name, Role::Dm, "((OOC: welcome all, grab a character sheet))".into());
            } else {
                let name = pick_player(&mut rng);
                run.push(name, Role::Player, format!("Hi all, {name} here"));
            }
        }

        for (si, section) in script.sections.iter().enumerate() {
            let anchor = run.push(&group.dm_name, Role::Dm, section.marker_text.clone());
            truth.markers[si].insert(group.group_id.clone(), anchor);

            let jittered: Vec<(&String, f64)> = section
                .place_vocab
                .iter()
                .map(|(t, w)| {
                    let factor = 1.0 + opts.group_jitter * (2.0 * rng.unit() - 1.0);
                    (t, w * factor)
                })
                .collect();
            let space = section.per_group_space_vocab.get(&group.group_id).unwrap_or(&empty);
            let vocab = WeightedVocab::new(
                jittered
                    .into_iter()
                    .chain(space.iter().map(|(t, w)| (t, *w)))
                    .chain(script.filler_vocab.iter().map(|(t, w)| (t, *w))),
            );

            let decoy_at = opts
                .decoys
                .then(|| rng.below(section.posts_per_bucket as u64 + 1) as usize);
            let mut bucket = Vec::new();
            for p in 0..=section.posts_per_bucket {
                if decoy_at == Some(p) {
                    let text = decoy_text(&section.marker_text, gi, &mut rng);
                    let seq = run.push(&group.dm_name, Role::Dm, text);
                    truth.decoys[si].insert(group.group_id.clone(), seq);
                    bucket.push(seq);
                }
                if p == section.posts_per_bucket {
                    break;
                }
                let name = pick_player(&mut rng);
                let (lo, hi) = opts.tokens_per_post;
                let len = lo + rng.below((hi - lo + 1) as u64) as usize;
                let text = player_post(name, &vocab, len, &mut rng);
                bucket.push(run.push(name, Role::Player, text));
                if rng.chance(opts.dice_rate) {
                    let roll = 1 + rng.below(20);
                    run.push("Dicebot", Role::Bot, format!("{name} rolls d20: {roll}"));
                }
            }
            truth.buckets[si].insert(group.group_id.clone(), bucket);
        }

        let last = run.push(&group.dm_name, Role::Dm, script.final_marker_text.clone());
        truth.markers[n_sections].insert(group.group_id.clone(), last);
        let name = pick_player(&mut rng);
        run.push(name, Role::Player, "gg everyone, that was a blast".into());

        truth.post_counts.insert(group.group_id.clone(), run.posts.len());
        runs.push(GroupRun::from_posts(run.group_id, run.posts));
    }
    truth.total_posts = truth.post_counts.values().sum();
    Ok((Corpus::from_runs(runs)?, truth))
}
