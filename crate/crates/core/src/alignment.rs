//! Cross-group marker detection and sectioning.
//!
//! A marker is a post that every group's DM pasted with (nearly) the same
//! text, such as a room introduction. Consecutive markers bound one
//! section, and each group contributes one bucket of posts per section.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GroupRun, Post, Role};
use crate::error::{Error, Result};
use crate::lexicon::tokenize;

pub const SHINGLE_SIZE: usize = 5;
pub const DEFAULT_THETA: f64 = 0.8;
pub const DEFAULT_MIN_TOKENS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    pub theta: f64,
    pub min_tokens: usize,
    pub dm_only: bool,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            theta: DEFAULT_THETA,
            min_tokens: DEFAULT_MIN_TOKENS,
            dm_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub index: usize,
    pub anchors: BTreeMap<String, u64>,
    pub canonical_text: String,
    pub min_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub index: usize,
    /// Seqs strictly between this section's bounding anchors, bots excluded.
    pub buckets: BTreeMap<String, Vec<u64>>,
}

/// Where a post falls relative to the marker chain of its group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    BeforeFirst,
    Anchor(usize),
    Section(usize),
    AfterLast,
}

/// Shingle set of a post, or the raw normalized text when the post is too
/// short to shingle.
struct Fingerprint<'a> {
    norm: &'a str,
    shingles: Option<HashSet<String>>,
}

impl<'a> Fingerprint<'a> {
    fn new(post: &'a Post) -> Self {
        Self::from_tokens(&post.norm_text, &tokenize(&post.norm_text))
    }

    fn from_tokens(norm: &'a str, tokens: &[&str]) -> Self {
        let shingles = (tokens.len() >= SHINGLE_SIZE)
            .then(|| tokens.windows(SHINGLE_SIZE).map(|w| w.join(" ")).collect());
        Fingerprint { norm, shingles }
    }

    fn similarity(&self, other: &Fingerprint<'_>) -> f64 {
        match (&self.shingles, &other.shingles) {
            (Some(a), Some(b)) => {
                let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
                let shared = small.iter().filter(|s| large.contains(*s)).count();
                let union = a.len() + b.len() - shared;
                shared as f64 / union as f64
            }
            _ => {
                if self.norm == other.norm {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Jaccard similarity of 5-token shingle sets. Posts with fewer than five
/// tokens score 1 when their normalized text is equal and 0 otherwise.
pub fn post_similarity(a: &Post, b: &Post) -> f64 {
    Fingerprint::new(a).similarity(&Fingerprint::new(b))
}

struct Candidate<'a> {
    seq: u64,
    fingerprint: Fingerprint<'a>,
}

fn candidates<'a>(run: &'a GroupRun, params: &AlignParams) -> Vec<Candidate<'a>> {
    run.posts
        .iter()
        .filter(|p| p.role != Role::Bot && (!params.dm_only || p.role == Role::Dm))
        .filter_map(|p| {
            let tokens = tokenize(&p.norm_text);
            (tokens.len() >= params.min_tokens).then(|| Candidate {
                seq: p.seq,
                fingerprint: Fingerprint::from_tokens(&p.norm_text, &tokens),
            })
        })
        .collect()
}

struct Cluster {
    /// One seq per group, in group-id order.
    anchors: Vec<u64>,
    min_similarity: f64,
}

fn build_cluster(lead: &Candidate<'_>, others: &[Vec<Candidate<'_>>], theta: f64) -> Option<Cluster> {
    let mut members: Vec<&Candidate<'_>> = vec![lead];
    let mut min_similarity: f64 = 1.0;
    for group in others {
        let mut best: Option<(&Candidate<'_>, f64)> = None;
        for cand in group {
            let sim = lead.fingerprint.similarity(&cand.fingerprint);
            if sim >= theta && best.is_none_or(|(_, b)| sim > b) {
                best = Some((cand, sim));
            }
        }
        let (cand, sim) = best?;
        min_similarity = min_similarity.min(sim);
        members.push(cand);
    }
    for (i, a) in members.iter().enumerate().skip(1) {
        for b in &members[i + 1..] {
            let sim = a.fingerprint.similarity(&b.fingerprint);
            if sim < theta {
                return None;
            }
            min_similarity = min_similarity.min(sim);
        }
    }
    Some(Cluster {
        anchors: members.iter().map(|m| m.seq).collect(),
        min_similarity,
    })
}

/// Longest chain of clusters whose anchors increase in every group. Ties go
/// to the chain with the smallest anchors in the first group.
fn longest_consistent_chain(clusters: &[Cluster]) -> Vec<usize> {
    let n = clusters.len();
    let precedes = |i: usize, j: usize| {
        clusters[i]
            .anchors
            .iter()
            .zip(&clusters[j].anchors)
            .all(|(a, b)| a < b)
    };
    // Clusters are ordered by first-group seq, so among equal-length
    // continuations the lowest index is the lexicographically smallest.
    let mut length = vec![1usize; n];
    let mut next: Vec<Option<usize>> = vec![None; n];
    for i in (0..n).rev() {
        for j in i + 1..n {
            if precedes(i, j) && 1 + length[j] > length[i] {
                length[i] = 1 + length[j];
                next[i] = Some(j);
            }
        }
    }
    let Some(start) = (0..n).max_by(|&a, &b| length[a].cmp(&length[b]).then(b.cmp(&a))) else {
        return Vec::new();
    };
    let mut chain = vec![start];
    while let Some(j) = next[*chain.last().unwrap()] {
        chain.push(j);
    }
    chain
}

/// Finds the maximal ordered list of posts shared by every group.
pub fn detect_markers(corpus: &Corpus, params: &AlignParams) -> Result<Vec<Marker>> {
    let groups: Vec<&GroupRun> = corpus.runs.values().collect();
    if groups.len() < 2 {
        return Err(Error::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    let lead_candidates = candidates(groups[0], params);
    let other_candidates: Vec<Vec<Candidate<'_>>> =
        groups[1..].iter().map(|run| candidates(run, params)).collect();

    let clusters: Vec<Cluster> = lead_candidates
        .par_iter()
        .map(|lead| build_cluster(lead, &other_candidates, params.theta))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let chain = longest_consistent_chain(&clusters);
    if chain.is_empty() {
        return Err(Error::NoCommonMarkers);
    }
    let lead = groups[0];
    Ok(chain
        .into_iter()
        .enumerate()
        .map(|(index, c)| {
            let cluster = &clusters[c];
            let anchors = groups
                .iter()
                .zip(&cluster.anchors)
                .map(|(run, seq)| (run.group_id.clone(), *seq))
                .collect();
            Marker {
                index,
                anchors,
                canonical_text: lead
                    .post(cluster.anchors[0])
                    .map(|p| p.raw_text.clone())
                    .unwrap_or_default(),
                min_similarity: cluster.min_similarity,
            }
        })
        .collect())
}

/// Keeps only the anchors of the given groups.
pub fn restrict_markers(markers: &[Marker], groups: &[&str]) -> Vec<Marker> {
    markers
        .iter()
        .map(|m| Marker {
            anchors: m
                .anchors
                .iter()
                .filter(|(g, _)| groups.contains(&g.as_str()))
                .map(|(g, s)| (g.clone(), *s))
                .collect(),
            ..m.clone()
        })
        .collect()
}

/// One bucket per group between each pair of consecutive markers.
pub fn section_corpus(corpus: &Corpus, markers: &[Marker]) -> Result<Vec<Section>> {
    if markers.len() < 2 {
        return Err(Error::TooFewMarkers(markers.len()));
    }
    markers
        .windows(2)
        .enumerate()
        .map(|(index, pair)| {
            let mut buckets = BTreeMap::new();
            for (group_id, &lo) in &pair[0].anchors {
                let Some(&hi) = pair[1].anchors.get(group_id) else {
                    continue;
                };
                let run = corpus.run(group_id)?;
                let seqs = run
                    .posts
                    .iter()
                    .filter(|p| p.seq > lo && p.seq < hi && p.role != Role::Bot)
                    .map(|p| p.seq)
                    .collect();
                buckets.insert(group_id.clone(), seqs);
            }
            Ok(Section { index, buckets })
        })
        .collect()
}

/// Places a post of `group_id` relative to the markers.
pub fn region_of(markers: &[Marker], group_id: &str, seq: u64) -> Option<Region> {
    let anchors: Vec<u64> = markers
        .iter()
        .map(|m| m.anchors.get(group_id).copied())
        .collect::<Option<_>>()?;
    let (first, last) = (*anchors.first()?, *anchors.last()?);
    if seq < first {
        return Some(Region::BeforeFirst);
    }
    if seq > last {
        return Some(Region::AfterLast);
    }
    if let Some(i) = anchors.iter().position(|&a| a == seq) {
        return Some(Region::Anchor(i));
    }
    let section = anchors.iter().rposition(|&a| a < seq)?;
    Some(Region::Section(section))
}
