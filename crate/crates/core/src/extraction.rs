//! Sequential bag-of-words counting per section.
//!
//! Place terms rank the summed counts of every group's bucket in a section;
//! space terms rank one group's bucket with the place terms removed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::Section;
use crate::corpus::{Corpus, Role};
use crate::error::{Error, Result};
use crate::lexicon::{tokenize, top_terms, StopFilter};

pub const DEFAULT_DEPTH: usize = 20;
pub const DEFAULT_LABEL_K: usize = 3;
pub const DEFAULT_SPACE_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractParams {
    pub depth: usize,
    pub label_k: usize,
    pub space_k: usize,
    /// Skip DM narration when counting.
    pub players_only: bool,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            depth: DEFAULT_DEPTH,
            label_k: DEFAULT_LABEL_K,
            space_k: DEFAULT_SPACE_K,
            players_only: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub counts: BTreeMap<String, u64>,
}

impl TermCount {
    pub fn merge(&mut self, other: &TermCount) {
        for (term, n) in &other.counts {
            *self.counts.entry(term.clone()).or_default() += n;
        }
    }

    pub fn ranked(&self, n: usize) -> Vec<RankedTerm> {
        top_terms(&self.counts, n)
            .into_iter()
            .map(|(term, count)| RankedTerm { term, count })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceProfile {
    pub section: usize,
    pub ranked_terms: Vec<RankedTerm>,
    pub label: Vec<String>,
}

impl PlaceProfile {
    pub fn contains(&self, term: &str) -> bool {
        self.ranked_terms.iter().any(|t| t.term == term)
    }

    pub fn label_string(&self) -> String {
        self.label.join("-")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceProfile {
    pub section: usize,
    pub group_id: String,
    pub terms: Vec<RankedTerm>,
}

impl SpaceProfile {
    pub fn term_list(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.term.clone()).collect()
    }
}

/// Counts unstopped tokens over the given posts of one group. Bots never
/// count; DM posts count unless `players_only`.
pub fn count_terms(
    corpus: &Corpus,
    group_id: &str,
    bucket: &[u64],
    filter: &StopFilter,
    players_only: bool,
) -> Result<TermCount> {
    let run = corpus.run(group_id)?;
    let mut counts = TermCount::default();
    for &seq in bucket {
        let post = run.post(seq).ok_or_else(|| Error::UnknownPost {
            group_id: group_id.to_string(),
            seq,
        })?;
        if post.role == Role::Bot || (players_only && post.role != Role::Player) {
            continue;
        }
        for token in tokenize(&post.norm_text) {
            if !filter.is_stopped(token) {
                *counts.counts.entry(token.to_string()).or_default() += 1;
            }
        }
    }
    Ok(counts)
}

/// Per-group counts for one section, computed in parallel.
pub fn section_counts(
    corpus: &Corpus,
    section: &Section,
    filter: &StopFilter,
    players_only: bool,
) -> Result<BTreeMap<String, TermCount>> {
    section
        .buckets
        .par_iter()
        .map(|(group, bucket)| Ok((group.clone(), count_terms(corpus, group, bucket, filter, players_only)?)))
        .collect()
}

pub fn place_from_counts<'a>(
    section: usize,
    per_group: impl IntoIterator<Item = &'a TermCount>,
    params: &ExtractParams,
) -> PlaceProfile {
    let mut total = TermCount::default();
    for counts in per_group {
        total.merge(counts);
    }
    let ranked_terms = total.ranked(params.depth);
    let label = ranked_terms
        .iter()
        .take(params.label_k)
        .map(|t| t.term.clone())
        .collect();
    PlaceProfile {
        section,
        ranked_terms,
        label,
    }
}

pub fn space_from_counts(
    group_id: &str,
    counts: &TermCount,
    place: &PlaceProfile,
    k: usize,
) -> SpaceProfile {
    let remaining: BTreeMap<String, u64> = counts
        .counts
        .iter()
        .filter(|(term, _)| !place.contains(term))
        .map(|(t, n)| (t.clone(), *n))
        .collect();
    SpaceProfile {
        section: place.section,
        group_id: group_id.to_string(),
        terms: TermCount { counts: remaining }.ranked(k),
    }
}

fn section_at(sections: &[Section], index: usize) -> Result<&Section> {
    sections
        .iter()
        .find(|s| s.index == index)
        .ok_or(Error::UnknownSection(index))
}

/// Top `depth` terms over every group's bucket for the section.
pub fn place_profile(
    sections: &[Section],
    corpus: &Corpus,
    filter: &StopFilter,
    section_index: usize,
    params: &ExtractParams,
) -> Result<PlaceProfile> {
    let section = section_at(sections, section_index)?;
    let counts = section_counts(corpus, section, filter, params.players_only)?;
    Ok(place_from_counts(section_index, counts.values(), params))
}

/// Top `k` terms of one group's bucket, excluding the full place list.
pub fn space_profile(
    sections: &[Section],
    corpus: &Corpus,
    filter: &StopFilter,
    section_index: usize,
    group_id: &str,
    place: &PlaceProfile,
    params: &ExtractParams,
) -> Result<SpaceProfile> {
    let section = section_at(sections, section_index)?;
    let bucket = section
        .buckets
        .get(group_id)
        .ok_or_else(|| Error::UnknownGroup(group_id.to_string()))?;
    let counts = count_terms(corpus, group_id, bucket, filter, params.players_only)?;
    Ok(space_from_counts(group_id, &counts, place, params.space_k))
}

/// Everything extracted for one section; the `terms.json` record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTerms {
    pub index: usize,
    pub label: Vec<String>,
    pub place_terms: Vec<RankedTerm>,
    pub spaces: BTreeMap<String, Vec<RankedTerm>>,
}

impl SectionTerms {
    pub fn place(&self) -> PlaceProfile {
        PlaceProfile {
            section: self.index,
            ranked_terms: self.place_terms.clone(),
            label: self.label.clone(),
        }
    }

    pub fn space(&self, group_id: &str) -> Option<SpaceProfile> {
        self.spaces.get(group_id).map(|terms| SpaceProfile {
            section: self.index,
            group_id: group_id.to_string(),
            terms: terms.clone(),
        })
    }
}

/// Place and space profiles for every section.
pub fn extract_terms(
    corpus: &Corpus,
    sections: &[Section],
    filter: &StopFilter,
    params: &ExtractParams,
) -> Result<Vec<SectionTerms>> {
    let per_section: Vec<BTreeMap<String, TermCount>> = sections
        .par_iter()
        .map(|s| section_counts(corpus, s, filter, params.players_only))
        .collect::<Result<_>>()?;
    Ok(sections
        .iter()
        .zip(&per_section)
        .map(|(section, counts)| {
            let place = place_from_counts(section.index, counts.values(), params);
            let spaces = counts
                .iter()
                .map(|(g, c)| (g.clone(), space_from_counts(g, c, &place, params.space_k).terms))
                .collect();
            SectionTerms {
                index: section.index,
                label: place.label,
                place_terms: place.ranked_terms,
                spaces,
            }
        })
        .collect())
}
