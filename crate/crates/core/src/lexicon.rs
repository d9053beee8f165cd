//! Tokenization and the layered stop-word configuration.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::RegexSet;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, Corpus, Role};
use crate::error::{Error, Result};

pub const ENGLISH_STOPWORDS: &str = include_str!("../data/english_stopwords.txt");
pub const GAME_TERMS: &str = include_str!("../data/game_terms.txt");

/// Hex runs of 8+ characters, and alphanumeric tokens with at least one
/// letter and four or more digits (split by where the first letter falls).
pub const DEFAULT_GUID_PATTERNS: [&str; 2] = [
    r"^[0-9a-f]{8,}$",
    r"^(?:[0-9]{4,}\pL|[0-9]{3}\pL(?:\pL*[0-9]){1,}|[0-9]{2}\pL(?:\pL*[0-9]){2,}|[0-9]\pL(?:\pL*[0-9]){3,}|\pL(?:\pL*[0-9]){4,})[\pL0-9]*$",
];

pub const DEFAULT_N_PER_PLAYER: usize = 1;

/// Splits normalized text on non-alphanumerics, dropping one-character and
/// all-digit pieces. Order is preserved.
pub fn tokenize(norm_text: &str) -> Vec<&str> {
    norm_text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some() && !t.chars().all(char::is_numeric))
        .collect()
}

/// Sorts by count descending, then token ascending, and keeps the first `n`.
pub fn top_terms<'a, I>(counts: I, n: usize) -> Vec<(String, u64)>
where
    I: IntoIterator<Item = (&'a String, &'a u64)>,
{
    let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(t, c)| (t.clone(), *c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn read_word_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopWordConfig {
    pub base: BTreeSet<String>,
    pub game_terms: BTreeSet<String>,
    pub guid_patterns: Vec<String>,
    pub per_player: BTreeMap<String, BTreeSet<String>>,
    pub n_per_player: usize,
}

impl StopWordConfig {
    /// Config without any per-player layer.
    pub fn new(base: BTreeSet<String>, game_terms: BTreeSet<String>) -> Self {
        StopWordConfig {
            base,
            game_terms,
            guid_patterns: DEFAULT_GUID_PATTERNS.iter().map(|p| p.to_string()).collect(),
            per_player: BTreeMap::new(),
            n_per_player: DEFAULT_N_PER_PLAYER,
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(parse_word_list(ENGLISH_STOPWORDS), parse_word_list(GAME_TERMS))
    }

    /// base ∪ game_terms ∪ every per-player set.
    pub fn effective_set(&self) -> BTreeSet<&str> {
        self.base
            .iter()
            .chain(&self.game_terms)
            .chain(self.per_player.values().flatten())
            .map(String::as_str)
            .collect()
    }

    pub fn filter(&self) -> Result<StopFilter> {
        let patterns = RegexSet::new(&self.guid_patterns).map_err(|source| Error::Pattern {
            pattern: self.guid_patterns.join(" | "),
            source,
        })?;
        Ok(StopFilter {
            words: self.effective_set().into_iter().map(str::to_string).collect(),
            patterns,
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::bad_file(path, e))
    }
}

/// Compiled form of a [`StopWordConfig`].
#[derive(Debug, Clone)]
pub struct StopFilter {
    words: HashSet<String>,
    patterns: RegexSet,
}

impl StopFilter {
    pub fn is_guid(&self, token: &str) -> bool {
        self.patterns.is_match(token)
    }

    pub fn is_stopped(&self, token: &str) -> bool {
        self.words.contains(token) || self.is_guid(token)
    }
}

/// For each player author: the `n` most frequent unstopped tokens across
/// their posts, plus the tokens of their display name.
pub fn build_player_stopwords(
    corpus: &Corpus,
    filter: &StopFilter,
    n: usize,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut counts: BTreeMap<&str, HashMap<String, u64>> = BTreeMap::new();
    for post in corpus.posts().filter(|p| p.role == Role::Player) {
        let player = counts.entry(post.author.as_str()).or_default();
        for token in tokenize(&post.norm_text) {
            if !filter.is_stopped(token) {
                *player.entry(token.to_string()).or_default() += 1;
            }
        }
    }

    counts
        .into_iter()
        .map(|(name, tokens)| {
            let mut stopped: BTreeSet<String> =
                top_terms(&tokens, n).into_iter().map(|(t, _)| t).collect();
            stopped.extend(tokenize(&normalize_text(name)).into_iter().map(str::to_string));
            (name.to_string(), stopped)
        })
        .collect()
}

/// Assembles the full configuration. Player sets are computed once here and
/// reused by every later stage.
pub fn assemble_config(
    base: BTreeSet<String>,
    game_terms: BTreeSet<String>,
    corpus: &Corpus,
    n: usize,
) -> Result<StopWordConfig> {
    let mut config = StopWordConfig::new(base, game_terms);
    config.n_per_player = n;
    let filter = config.filter()?;
    config.per_player = build_player_stopwords(corpus, &filter, n);
    Ok(config)
}

/// Same as [`assemble_config`] with the word lists read from disk. A missing
/// `game_file` falls back to the bundled game-term list.
pub fn build_stopword_config(
    base_file: &Path,
    game_file: Option<&Path>,
    corpus: &Corpus,
    n: usize,
) -> Result<StopWordConfig> {
    let base = read_word_list(base_file)?;
    let game = match game_file {
        Some(path) => read_word_list(path)?,
        None => parse_word_list(GAME_TERMS),
    };
    assemble_config(base, game, corpus, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GroupRun, Post};
    use proptest::prelude::*;

    fn corpus(posts: &[(&str, Role, &str)]) -> Corpus {
        let posts = posts
            .iter()
            .enumerate()
            .map(|(i, (author, role, text))| Post::new("g", i as u64, None, *author, *role, *text))
            .collect();
        Corpus::from_runs([GroupRun::from_posts("g", posts)]).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("the goblin's 2 axes"), ["the", "goblin", "axes"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("d20 1d6 42 x-ray né"), ["d20", "1d6", "ray", "né"]);
    }

    #[test]
    fn bundled_lists() {
        let config = StopWordConfig::with_defaults();
        assert_eq!(config.base.len(), 179);
        assert!(config.base.contains("the"));
        assert!(config.game_terms.contains("d20"));
        assert!(config.effective_set().iter().all(|w| w.to_lowercase() == *w));
    }

    #[test]
    fn guid_patterns() {
        let filter = StopWordConfig::with_defaults().filter().unwrap();
        assert!(filter.is_guid("a3f9c2d817"));
        assert!(filter.is_guid("deadbeef"));
        assert!(filter.is_guid("u0123abc"));
        assert!(filter.is_guid("1a2b3c4d5z"));
        assert!(!filter.is_guid("d20"));
        assert!(!filter.is_guid("abcdef1"));
        assert!(!filter.is_guid("goblin"));
        assert!(filter.is_stopped("d20"));
        assert!(!filter.is_stopped("dragon"));
    }

    #[test]
    fn player_name_dominates_top_token() {
        let c = corpus(&[
            (
                "Cricket",
                Role::Player,
                "Cricket sneaks. Cricket hides. Cricket waits by the goblin",
            ),
            ("Ann", Role::Dm, "the goblin goblin goblin goblin growls"),
        ]);
        let filter = StopWordConfig::with_defaults().filter().unwrap();
        let sets = build_player_stopwords(&c, &filter, 1);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets["Cricket"], BTreeSet::from(["cricket".to_string()]));
    }

    #[test]
    fn n_zero_keeps_only_name_tokens() {
        let c = corpus(&[("Shelton Herrington", Role::Player, "rope rope rope")]);
        let filter = StopWordConfig::with_defaults().filter().unwrap();
        let sets = build_player_stopwords(&c, &filter, 0);
        assert_eq!(
            sets["Shelton Herrington"],
            BTreeSet::from(["shelton".to_string(), "herrington".to_string()])
        );
        let sets = build_player_stopwords(&c, &filter, 1);
        assert!(sets["Shelton Herrington"].contains("rope"));
    }

    #[test]
    fn config_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("base.txt");
        let game = dir.path().join("game.txt");
        fs::write(&base, "the\nand\nof\n").unwrap();
        fs::write(&game, "d20\n").unwrap();
        let config = build_stopword_config(&base, Some(&game), &Corpus::default(), 1).unwrap();
        assert_eq!(config.effective_set().len(), 4);

        let config = build_stopword_config(&base, Some(&base), &Corpus::default(), 1).unwrap();
        assert_eq!(config.effective_set(), BTreeSet::from(["the", "and", "of"]));

        let missing = build_stopword_config(&dir.path().join("nope"), None, &Corpus::default(), 1);
        assert!(matches!(missing, Err(Error::Io { .. })));
    }

    #[test]
    fn json_reload_is_byte_identical() {
        let c = corpus(&[("Cricket", Role::Player, "Cricket opens the gate")]);
        let config = assemble_config(
            parse_word_list(ENGLISH_STOPWORDS),
            parse_word_list(GAME_TERMS),
            &c,
            1,
        )
        .unwrap();
        let text = config.to_json();
        let reloaded = StopWordConfig::from_json(&text).unwrap();
        assert_eq!(reloaded, config);
        assert_eq!(reloaded.to_json(), text);
    }

    /// Independent oracle: ≥4 ASCII digits and ≥1 ASCII letter, or a pure
    /// lowercase-hex run of 8+.
    fn guid_oracle(token: &str) -> bool {
        let digits = token.chars().filter(|c| c.is_ascii_digit()).count();
        let letters = token.chars().filter(|c| c.is_ascii_alphabetic()).count();
        let hex = token.len() >= 8 && token.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f'));
        hex || (digits >= 4 && letters >= 1)
    }

    #[test]
    fn guid_pattern_matches_oracle_on_random_hex() {
        // 50 fixed pseudo-random hex strings of length 8..=16.
        let filter = StopWordConfig::with_defaults().filter().unwrap();
        let mut state: u64 = 0x5eed;
        for _ in 0..50 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let len = 8 + (state >> 60) as usize;
            let token: String = (0..len)
                .map(|i| {
                    let nibble = (state.rotate_left(4 * i as u32) & 0xf) as u32;
                    char::from_digit(nibble, 16).unwrap()
                })
                .collect();
            assert!(filter.is_guid(&token), "{token}");
            assert_eq!(filter.is_guid(&token), guid_oracle(&token));
        }
    }

    proptest! {
        #[test]
        fn guid_pattern_agrees_with_oracle(token in "[a-z0-9]{2,14}") {
            static FILTER: std::sync::OnceLock<StopFilter> = std::sync::OnceLock::new();
            let filter = FILTER.get_or_init(|| StopWordConfig::with_defaults().filter().unwrap());
            prop_assert_eq!(filter.is_guid(&token), guid_oracle(&token));
        }

        #[test]
        fn tokens_are_alphanumeric_and_long_enough(s in "\\PC{0,60}") {
            for t in tokenize(&s) {
                prop_assert!(t.chars().count() >= 2);
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert!(!t.chars().all(char::is_numeric));
            }
        }
    }
}
