//! How quickly place labels stabilize as more groups are pooled.
//!
//! Every non-empty subset of groups gets its own place labels (markers are
//! the full-corpus ones, restricted to the subset) and is compared against
//! the labels of the full corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{restrict_markers, section_corpus, Marker};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::extraction::{place_from_counts, section_counts, ExtractParams, TermCount};
use crate::lexicon::StopFilter;

/// One label set per section.
pub type LabelSets = Vec<BTreeSet<String>>;

/// Label replacements needed to turn `a` into `b`: per section
/// `ceil(|a Δ b| / 2)`, summed.
pub fn map_difference(a: &[BTreeSet<String>], b: &[BTreeSet<String>]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::SectionCountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x.symmetric_difference(y).count() as u64).div_ceil(2))
        .sum())
}

/// Per-section, per-group term counts over the full marker chain.
#[derive(Debug, Clone)]
pub struct SectionCounts {
    sections: Vec<BTreeMap<String, TermCount>>,
}

impl SectionCounts {
    pub fn compute(
        corpus: &Corpus,
        markers: &[Marker],
        filter: &StopFilter,
        players_only: bool,
    ) -> Result<Self> {
        let sections = section_corpus(corpus, markers)?;
        let sections = sections
            .iter()
            .map(|s| section_counts(corpus, s, filter, players_only))
            .collect::<Result<_>>()?;
        Ok(SectionCounts { sections })
    }

    pub fn labels(&self, subset: &[&str], params: &ExtractParams) -> LabelSets {
        self.sections
            .iter()
            .enumerate()
            .map(|(i, per_group)| {
                let chosen = per_group
                    .iter()
                    .filter(|(g, _)| subset.contains(&g.as_str()))
                    .map(|(_, c)| c);
                place_from_counts(i, chosen, params).label.into_iter().collect()
            })
            .collect()
    }
}

/// Place labels recomputed from the subset's buckets only.
pub fn subset_map_terms(
    corpus: &Corpus,
    markers: &[Marker],
    filter: &StopFilter,
    subset: &[&str],
    params: &ExtractParams,
) -> Result<LabelSets> {
    for g in subset {
        corpus.run(g)?;
    }
    let restricted = restrict_markers(markers, subset);
    let counts = SectionCounts::compute(corpus, &restricted, filter, params.players_only)?;
    Ok(counts.labels(subset, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareMode {
    /// Each subset against the full corpus.
    #[default]
    Reference,
    /// Every pair of distinct same-size subsets against each other.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub subset: Vec<String>,
    /// The other side of a pairwise comparison.
    pub other: Option<Vec<String>>,
    pub difference: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub k: usize,
    pub count: usize,
    pub min: u64,
    pub mean: f64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mode: CompareMode,
    pub rows: Vec<ConvergenceRow>,
    pub aggregates: Vec<Aggregate>,
}

fn all_subsets(groups: &[String]) -> Vec<Vec<String>> {
    let mut subsets: Vec<Vec<String>> = (1u64..1 << groups.len())
        .map(|mask| {
            groups
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, g)| g.clone())
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

pub const MAX_GROUPS: usize = 20;

/// Differences for every non-empty subset of groups, with per-size aggregates.
pub fn convergence_report(
    corpus: &Corpus,
    markers: &[Marker],
    filter: &StopFilter,
    params: &ExtractParams,
    mode: CompareMode,
) -> Result<ConvergenceReport> {
    let groups: Vec<String> = corpus.group_ids().map(str::to_string).collect();
    if groups.len() < 2 {
        return Err(Error::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    if groups.len() > MAX_GROUPS {
        return Err(Error::TooManyGroups {
            max: MAX_GROUPS,
            found: groups.len(),
        });
    }
    let counts = SectionCounts::compute(corpus, markers, filter, params.players_only)?;
    let subsets = all_subsets(&groups);
    let labels: Vec<LabelSets> = subsets
        .par_iter()
        .map(|s| counts.labels(&as_strs(s), params))
        .collect();

    let mut rows = Vec::new();
    match mode {
        CompareMode::Reference => {
            let full = counts.labels(&as_strs(&groups), params);
            for (subset, l) in subsets.iter().zip(&labels) {
                rows.push(ConvergenceRow {
                    k: subset.len(),
                    subset: subset.clone(),
                    other: None,
                    difference: map_difference(l, &full)?,
                });
            }
        }
        CompareMode::Pairwise => {
            for i in 0..subsets.len() {
                for j in i + 1..subsets.len() {
                    if subsets[i].len() != subsets[j].len() {
                        continue;
                    }
                    rows.push(ConvergenceRow {
                        k: subsets[i].len(),
                        subset: subsets[i].clone(),
                        other: Some(subsets[j].clone()),
                        difference: map_difference(&labels[i], &labels[j])?,
                    });
                }
            }
        }
    }

    let mut by_k: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for row in &rows {
        by_k.entry(row.k).or_default().push(row.difference);
    }
    let aggregates = by_k
        .into_iter()
        .map(|(k, diffs)| Aggregate {
            k,
            count: diffs.len(),
            min: *diffs.iter().min().unwrap(),
            mean: diffs.iter().sum::<u64>() as f64 / diffs.len() as f64,
            max: *diffs.iter().max().unwrap(),
        })
        .collect();
    Ok(ConvergenceReport {
        mode,
        rows,
        aggregates,
    })
}

impl ConvergenceReport {
    pub fn aggregate(&self, k: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.k == k)
    }

    /// `k,subset,difference`; subset members joined by `;`, pairwise sides by `|`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,subset,difference\n");
        for row in &self.rows {
            let mut subset = row.subset.join(";");
            if let Some(other) = &row.other {
                subset.push('|');
                subset.push_str(&other.join(";"));
            }
            let _ = writeln!(out, "{},{},{}", row.k, subset, row.difference);
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let value = serde_json::json!({
            "mode": self.mode,
            "aggregates": self.aggregates,
        });
        let mut text = serde_json::to_string_pretty(&value).expect("summary serializes");
        text.push('\n');
        text
    }
}
