//! Transcript data model shared by every pipeline stage.
//!
//! A [`Corpus`] holds one [`GroupRun`] per playing group. Runs iterate in
//! lexicographic `group_id` order, which is what makes every downstream
//! artifact reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Dm,
    Player,
    /// Dice mechanics; never counted.
    Bot,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Dm => "dm",
            Role::Player => "player",
            Role::Bot => "bot",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dm" => Ok(Role::Dm),
            "player" => Ok(Role::Player),
            "bot" => Ok(Role::Bot),
            other => Err(Error::UnknownRole(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub group_id: String,
    pub seq: u64,
    pub timestamp: Option<String>,
    pub author: String,
    pub role: Role,
    pub raw_text: String,
    pub norm_text: String,
}

impl Post {
    pub fn new(
        group_id: impl Into<String>,
        seq: u64,
        timestamp: Option<String>,
        author: impl Into<String>,
        role: Role,
        raw_text: impl Into<String>,
    ) -> Self {
        let raw_text = raw_text.into();
        let norm_text = normalize_text(&raw_text);
        Post {
            group_id: group_id.into(),
            seq,
            timestamp,
            author: author.into(),
            role,
            raw_text,
            norm_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRun {
    pub group_id: String,
    pub posts: Vec<Post>,
    pub dm_name: String,
    pub player_names: BTreeSet<String>,
}

impl GroupRun {
    /// Builds a run, deriving the DM (first dm-role author) and the player set.
    pub fn from_posts(group_id: impl Into<String>, posts: Vec<Post>) -> Self {
        let dm_name = posts
            .iter()
            .find(|p| p.role == Role::Dm)
            .map(|p| p.author.clone())
            .unwrap_or_default();
        let player_names = posts
            .iter()
            .filter(|p| p.role == Role::Player)
            .map(|p| p.author.clone())
            .collect();
        GroupRun {
            group_id: group_id.into(),
            posts,
            dm_name,
            player_names,
        }
    }

    /// Looks up a post by seq. Posts are kept sorted by seq.
    pub fn post(&self, seq: u64) -> Option<&Post> {
        self.posts
            .binary_search_by_key(&seq, |p| p.seq)
            .ok()
            .map(|i| &self.posts[i])
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

/// All runs, keyed (and therefore iterated) by `group_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub runs: BTreeMap<String, GroupRun>,
    pub meta: BTreeMap<String, String>,
}

impl Corpus {
    pub fn from_runs(runs: impl IntoIterator<Item = GroupRun>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for run in runs {
            corpus.insert_run(run)?;
        }
        Ok(corpus)
    }

    pub fn insert_run(&mut self, run: GroupRun) -> Result<()> {
        if self.runs.contains_key(&run.group_id) {
            return Err(Error::DuplicateGroup(run.group_id));
        }
        self.runs.insert(run.group_id.clone(), run);
        Ok(())
    }

    pub fn run(&self, group_id: &str) -> Result<&GroupRun> {
        self.runs
            .get(group_id)
            .ok_or_else(|| Error::UnknownGroup(group_id.to_string()))
    }

    pub fn group_ids(&self) -> impl Iterator<Item = &str> {
        self.runs.keys().map(String::as_str)
    }

    pub fn post_count(&self) -> usize {
        self.runs.values().map(GroupRun::len).sum()
    }

    pub fn posts(&self) -> impl Iterator<Item = &Post> {
        self.runs.values().flat_map(|r| r.posts.iter())
    }
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<(/?)([A-Za-z0-9]*)[^<>]*>").unwrap());
static ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(#[xX][0-9a-fA-F]{1,6}|#[0-9]{1,7}|[a-zA-Z]{2,6});").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static BBCODE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\[/?(?:b|i|u|s|em|color|size|font|url|quote|spoiler|dialog|action)(?:=[^\]]*)?\]")
        .unwrap()
});
static OOC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\[/?ooc\]|\(\(|\)\)|\booc\s*:").unwrap());

const BLOCK_TAGS: &[&str] = &["br", "p", "div", "li", "ul", "ol", "tr", "td", "table", "hr", "blockquote"];
const MARKUP_WRAPPERS: &[&str] = &["*", "_", "~"];

fn decode_entity(caps: &Captures<'_>) -> String {
    let body = &caps[1];
    let decoded = if let Some(hex) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X")) {
        u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
    } else if let Some(dec) = body.strip_prefix('#') {
        dec.parse::<u32>().ok().and_then(char::from_u32)
    } else {
        match body {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            _ => None,
        }
    };
    match decoded {
        Some(c) => c.to_string(),
        None => caps[0].to_string(),
    }
}

fn strip_wrappers(word: &str) -> &str {
    let graphemes: Vec<(usize, &str)> = word.grapheme_indices(true).collect();
    let start = graphemes
        .iter()
        .position(|(_, g)| !MARKUP_WRAPPERS.contains(g));
    let Some(start) = start else {
        return "";
    };
    let end = graphemes
        .iter()
        .rposition(|(_, g)| !MARKUP_WRAPPERS.contains(g))
        .unwrap_or(start);
    let from = graphemes[start].0;
    let to = graphemes[end].0 + graphemes[end].1.len();
    &word[from..to]
}

fn normalize_pass(raw: &str) -> String {
    let text = HTML_TAG.replace_all(raw, |caps: &Captures<'_>| {
        let name = caps[2].to_ascii_lowercase();
        if BLOCK_TAGS.contains(&name.as_str()) {
            " "
        } else {
            ""
        }
    });
    let text = ENTITY.replace_all(&text, decode_entity);
    let text = URL.replace_all(&text, " ");
    let text = BBCODE.replace_all(&text, "");
    let text = OOC.replace_all(&text, " ");
    let text = text.to_lowercase();

    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace().map(strip_wrappers) {
        if word.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Lowercases and strips HTML, links, dialog/action/OOC markup, and
/// collapses whitespace. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    // A pass can expose new markup (decoded entities, nested tags), so run
    // to a fixed point. Every pass after the first only removes text.
    let mut current = normalize_pass(raw);
    loop {
        let next = normalize_pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub group_id: Option<String>,
    pub seq: Option<u64>,
    pub rule: String,
}

impl Violation {
    fn new(group_id: Option<&str>, seq: Option<u64>, rule: &str) -> Self {
        Violation {
            group_id: group_id.map(str::to_string),
            seq,
            rule: rule.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let group = self.group_id.as_deref().unwrap_or("-");
        match self.seq {
            Some(seq) => write!(f, "violation({group}, {seq}, {})", self.rule),
            None => write!(f, "violation({group}, -, {})", self.rule),
        }
    }
}

/// Checks every model invariant. An empty result means the corpus is well formed.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    if corpus.runs.is_empty() {
        out.push(Violation::new(None, None, "no-runs"));
    }
    for (key, run) in &corpus.runs {
        let gid = Some(key.as_str());
        if key != &run.group_id {
            out.push(Violation::new(gid, None, "group-key-mismatch"));
        }
        let mut prev: Option<u64> = None;
        for post in &run.posts {
            if post.group_id != run.group_id {
                out.push(Violation::new(gid, Some(post.seq), "group-mismatch"));
            }
            match prev {
                Some(p) if p == post.seq => {
                    out.push(Violation::new(gid, Some(post.seq), "duplicate-seq"))
                }
                Some(p) if p > post.seq => {
                    out.push(Violation::new(gid, Some(post.seq), "seq-order"))
                }
                _ => {}
            }
            prev = Some(prev.map_or(post.seq, |p| p.max(post.seq)));
            if post.norm_text != normalize_text(&post.raw_text) {
                out.push(Violation::new(gid, Some(post.seq), "stale-norm-text"));
            }
        }

        let dm_authors: BTreeSet<&str> = run
            .posts
            .iter()
            .filter(|p| p.role == Role::Dm)
            .map(|p| p.author.as_str())
            .collect();
        if dm_authors.is_empty() {
            out.push(Violation::new(gid, None, "no-dm"));
        } else if !dm_authors.contains(run.dm_name.as_str()) {
            out.push(Violation::new(gid, None, "dm-name-mismatch"));
        }
        for name in &run.player_names {
            let plays = run
                .posts
                .iter()
                .any(|p| p.role == Role::Player && &p.author == name);
            if !plays {
                out.push(Violation::new(gid, None, "unknown-player"));
            }
        }
    }
    out
}
