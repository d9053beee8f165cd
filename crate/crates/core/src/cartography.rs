//! Belief map assembly and emission.
//!
//! Places form a directed chain in section order. Each place carries one
//! satellite per group holding that group's space terms. Both kinds of node
//! may carry a short evidence snippet: the first post of the section that
//! mentions all of the node's terms.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::alignment::Section;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::extraction::{PlaceProfile, SpaceProfile};

pub const DEFAULT_SNIPPET_LEN: usize = 160;
const ELLIPSIS: &str = "...";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceNode {
    pub section: usize,
    pub label: Vec<String>,
    pub snippet: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Satellite {
    pub section: usize,
    pub group_id: String,
    pub terms: Vec<String>,
    pub snippet: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefMap {
    pub places: Vec<PlaceNode>,
    pub satellites: Vec<Satellite>,
}

impl BeliefMap {
    /// Directed chain edges between consecutive places.
    pub fn chain_edges(&self) -> Vec<(usize, usize)> {
        self.places
            .windows(2)
            .map(|w| (w[0].section, w[1].section))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SnippetScope<'a> {
    AllGroups,
    Group(&'a str),
}

/// Lowercased alphanumeric tokens that end within the first `limit` chars.
fn tokens_within(chars: &[char], limit: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut current = String::new();
    for (i, c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            if i <= limit {
                out.insert(std::mem::take(&mut current));
            } else {
                current.clear();
            }
        }
    }
    if !current.is_empty() && chars.len() <= limit {
        out.insert(current);
    }
    out
}

/// Returns `text` if it fits in `max_len` chars and mentions every term as a
/// whole token; otherwise the first `max_len - 3` chars plus "..." if that
/// prefix still mentions every term.
pub fn snippet_from(text: &str, terms: &[String], max_len: usize) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let fits = chars.len() <= max_len;
    let keep = if fits {
        chars.len()
    } else {
        max_len.saturating_sub(ELLIPSIS.len())
    };
    let tokens = tokens_within(&chars, keep);
    if !terms.iter().all(|t| tokens.contains(&t.to_lowercase())) {
        return None;
    }
    if fits {
        Some(text.to_string())
    } else {
        let mut out: String = chars[..keep].iter().collect();
        out.push_str(ELLIPSIS);
        Some(out)
    }
}

/// Scans the section's buckets in (group id, seq) order for the first post
/// containing all `terms`.
pub fn find_snippet(
    corpus: &Corpus,
    section: &Section,
    scope: SnippetScope<'_>,
    terms: &[String],
    max_len: usize,
) -> Option<String> {
    if terms.is_empty() {
        return None;
    }
    section
        .buckets
        .iter()
        .filter(|(g, _)| match scope {
            SnippetScope::AllGroups => true,
            SnippetScope::Group(only) => g.as_str() == only,
        })
        .flat_map(|(g, seqs)| {
            let run = corpus.runs.get(g);
            seqs.iter().filter_map(move |s| run.and_then(|r| r.post(*s)))
        })
        .find_map(|post| snippet_from(&post.raw_text, terms, max_len))
}

pub fn build_map(
    corpus: &Corpus,
    sections: &[Section],
    places: &[PlaceProfile],
    spaces: &[SpaceProfile],
    snippet_len: usize,
) -> Result<BeliefMap> {
    let mut map = BeliefMap::default();
    for section in sections {
        let place = places
            .iter()
            .find(|p| p.section == section.index)
            .ok_or(Error::UnknownSection(section.index))?;
        map.places.push(PlaceNode {
            section: section.index,
            label: place.label.clone(),
            snippet: find_snippet(corpus, section, SnippetScope::AllGroups, &place.label, snippet_len),
        });
        for group_id in section.buckets.keys() {
            let terms = spaces
                .iter()
                .find(|s| s.section == section.index && &s.group_id == group_id)
                .map(SpaceProfile::term_list)
                .unwrap_or_default();
            let snippet = find_snippet(corpus, section, SnippetScope::Group(group_id), &terms, snippet_len);
            map.satellites.push(Satellite {
                section: section.index,
                group_id: group_id.clone(),
                terms,
                snippet,
            });
        }
    }
    Ok(map)
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

pub fn place_id(section: usize) -> String {
    format!("p{section}")
}

pub fn satellite_id(section: usize, group_id: &str) -> String {
    format!("s{section}_{group_id}")
}

/// Graphviz rendering: boxed places chained by directed edges, ellipse
/// satellites attached with undirected (`dir=none`) edges.
pub fn emit_dot(map: &BeliefMap) -> String {
    let mut out = String::from("// belief map\n");
    if map.places.is_empty() && map.satellites.is_empty() {
        out.push_str("digraph beliefmap { }\n");
        return out;
    }
    out.push_str("digraph beliefmap {\n");
    for place in &map.places {
        let _ = write!(
            out,
            "  \"{}\" [shape=box, label=\"{}\"",
            place_id(place.section),
            dot_escape(&place.label.join("-"))
        );
        if let Some(snippet) = &place.snippet {
            let _ = write!(out, ", tooltip=\"{}\"", dot_escape(snippet));
        }
        out.push_str("];\n");
    }
    for (from, to) in map.chain_edges() {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", place_id(from), place_id(to));
    }
    for sat in &map.satellites {
        let id = satellite_id(sat.section, &sat.group_id);
        let label = format!("{}: {}", sat.group_id, sat.terms.join(", "));
        let _ = write!(out, "  \"{}\" [shape=ellipse, label=\"{}\"", dot_escape(&id), dot_escape(&label));
        if let Some(snippet) = &sat.snippet {
            let _ = write!(out, ", tooltip=\"{}\"", dot_escape(snippet));
        }
        out.push_str("];\n");
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [dir=none];",
            dot_escape(&id),
            place_id(sat.section)
        );
    }
    out.push_str("}\n");
    out
}

/// Pretty JSON with object keys sorted, so output is byte-stable.
pub fn emit_json(map: &BeliefMap) -> String {
    let value = serde_json::to_value(map).expect("map serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

pub fn load_json(text: &str) -> Result<BeliefMap> {
    Ok(serde_json::from_str(text)?)
}
