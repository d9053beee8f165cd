//! Readers for the canonical line-delimited corpus format and the two
//! legacy transcript sources: hosted-chat JSON exports and bulletin-board
//! CSV dumps.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Corpus, GroupRun, Post, Role};
use crate::error::{Error, Result};

const CANONICAL_FIELDS: [&str; 5] = ["group_id", "seq", "author", "role", "text"];

#[derive(Debug, Serialize)]
struct CanonicalOut<'a> {
    group_id: &'a str,
    seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<&'a str>,
    author: &'a str,
    role: Role,
    text: &'a str,
}

#[derive(Debug, Deserialize)]
struct CanonicalIn {
    group_id: String,
    seq: u64,
    #[serde(default)]
    timestamp: Option<String>,
    author: String,
    role: String,
    text: String,
}

/// Parses canonical `.jsonl` records into a corpus. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn ingest_canonical(reader: impl BufRead) -> Result<Corpus> {
    let mut by_group: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_canonical_line(&line).map_err(|message| Error::Line {
            line: line_no,
            message,
        })?;
        let role: Role = record.role.parse().map_err(|e: Error| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        by_group.entry(record.group_id.clone()).or_default().push(Post::new(
            record.group_id,
            record.seq,
            record.timestamp,
            record.author,
            role,
            record.text,
        ));
    }

    let mut corpus = Corpus::default();
    for (group_id, mut posts) in by_group {
        posts.sort_by_key(|p| p.seq);
        if let Some(dup) = posts.windows(2).find(|w| w[0].seq == w[1].seq) {
            return Err(Error::DuplicatePost {
                group_id,
                seq: dup[0].seq,
            });
        }
        corpus.insert_run(GroupRun::from_posts(group_id, posts))?;
    }
    Ok(corpus)
}

fn parse_canonical_line(line: &str) -> std::result::Result<CanonicalIn, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let Some(object) = value.as_object() else {
        return Err("record is not an object".to_string());
    };
    if let Some(field) = CANONICAL_FIELDS.iter().find(|f| !object.contains_key(**f)) {
        return Err(format!("missing field {field}"));
    }
    serde_json::from_value(value).map_err(|e| format!("invalid record: {e}"))
}

pub fn read_canonical_file(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_canonical(BufReader::new(file))
}

/// Writes one record per post, groups in id order, posts in seq order.
pub fn write_canonical(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for post in corpus.posts() {
        let record = CanonicalOut {
            group_id: &post.group_id,
            seq: post.seq,
            timestamp: post.timestamp.as_deref(),
            author: &post.author,
            role: post.role,
            text: &post.raw_text,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn emit_canonical(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    write_canonical(corpus, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UserRecord {
    id: String,
    name: String,
    role: String,
}

/// Platform user id to (display name, role).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserMap {
    pub entries: BTreeMap<String, (String, Role)>,
}

impl UserMap {
    pub fn insert(&mut self, id: impl Into<String>, name: impl Into<String>, role: Role) {
        self.entries.insert(id.into(), (name.into(), role));
    }

    /// Reads line-delimited `{id, name, role}` records.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut map = UserMap::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Line {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: UserRecord = serde_json::from_str(&line).map_err(|e| Error::Line {
                line: line_no,
                message: e.to_string(),
            })?;
            let role = record.role.parse()?;
            map.insert(record.id, record.name, role);
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    /// Unknown users become players named by their id; never the DM.
    pub fn resolve(&self, user: &str) -> (String, Role) {
        self.entries
            .get(user)
            .cloned()
            .unwrap_or_else(|| (user.to_string(), Role::Player))
    }
}

#[derive(Debug)]
struct ChatMessage {
    ts_secs: i64,
    ts_micros: u32,
    user: String,
    text: String,
}

fn parse_ts(value: &Value) -> Option<(i64, u32)> {
    let text = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let (secs, frac) = text.split_once('.').unwrap_or((&text, ""));
    let secs: i64 = secs.parse().ok()?;
    if frac.len() > 6 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let micros = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<6}").parse().ok()?
    };
    Some((secs, micros))
}

fn read_chat_file(path: &Path) -> Result<Vec<ChatMessage>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&body).map_err(|e| Error::bad_file(path, e))?;
    let Value::Array(items) = value else {
        return Err(Error::bad_file(path, "expected an array of messages"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let (ts_secs, ts_micros) = item
                .get("ts")
                .and_then(parse_ts)
                .ok_or_else(|| Error::bad_file(path, format!("message {i}: missing or invalid ts")))?;
            let user = ["user", "bot_id", "username"]
                .iter()
                .find_map(|k| item.get(*k).and_then(Value::as_str))
                .ok_or_else(|| Error::bad_file(path, format!("message {i}: missing user")))?
                .to_string();
            let text = item
                .get("text")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            Ok(ChatMessage {
                ts_secs,
                ts_micros,
                user,
                text,
            })
        })
        .collect()
}

/// Reads every `*.json` per-day file in `dir` (file-name order) and merges
/// the messages by timestamp. Equal timestamps keep file order.
pub fn ingest_chat_export(dir: &Path, user_map: &UserMap, group_id: &str) -> Result<GroupRun> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|ext| ext == "json") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyExport(dir.to_path_buf()));
    }
    files.sort();

    let mut messages = Vec::new();
    for file in &files {
        messages.extend(read_chat_file(file)?);
    }
    messages.sort_by_key(|m| (m.ts_secs, m.ts_micros));

    let posts = messages
        .into_iter()
        .enumerate()
        .map(|(seq, m)| {
            let (author, role) = user_map.resolve(&m.user);
            let timestamp = DateTime::from_timestamp(m.ts_secs, m.ts_micros * 1000)
                .map(|t| t.to_rfc3339_opts(SecondsFormat::Micros, true));
            Post::new(group_id, seq as u64, timestamp, author, role, m.text)
        })
        .collect();
    Ok(GroupRun::from_posts(group_id, posts))
}

const BBS_COLUMNS: [&str; 6] = ["thread_id", "post_id", "author", "role", "timestamp", "body_html"];

/// Reads a bulletin-board post dump with header
/// `thread_id,post_id,author,role,timestamp,body_html`, ordered by `post_id`.
pub fn ingest_bbs_csv(reader: impl Read, group_id: &str) -> Result<GroupRun> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::Line {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut index = BTreeMap::new();
    for column in BBS_COLUMNS {
        let pos = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| Error::MissingColumn(column.to_string()))?;
        index.insert(column, pos);
    }

    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Line {
            line,
            message: e.to_string(),
        })?;
        let field = |name: &str| record.get(index[name]).unwrap_or_default();
        let post_id: u64 = field("post_id").trim().parse().map_err(|_| Error::Line {
            line,
            message: format!("invalid post_id {:?}", field("post_id")),
        })?;
        let role: Role = field("role").trim().parse()?;
        let timestamp = Some(field("timestamp").trim())
            .filter(|t| !t.is_empty())
            .map(str::to_string);
        rows.push((
            post_id,
            field("author").to_string(),
            role,
            timestamp,
            field("body_html").to_string(),
        ));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(dup) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicatePost {
            group_id: group_id.to_string(),
            seq: dup[0].0,
        });
    }

    let posts = rows
        .into_iter()
        .enumerate()
        .map(|(seq, (_, author, role, timestamp, body))| {
            Post::new(group_id, seq as u64, timestamp, author, role, body)
        })
        .collect();
    Ok(GroupRun::from_posts(group_id, posts))
}

pub fn ingest_bbs_csv_file(path: &Path, group_id: &str) -> Result<GroupRun> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_bbs_csv(file, group_id).map_err(|e| match e {
        Error::Line { line, message } => Error::bad_file(path, format!("line {line}: {message}")),
        other => other,
    })
}
