//! Stage orchestration over a workspace directory.
//!
//! Each stage declares the artifacts it reads and writes. Inputs are checked
//! before any work starts, reads of undeclared artifacts are refused, and
//! outputs are held in memory until the stage succeeds, then written through
//! a temporary file and renamed into place. `manifest.json` records every
//! stage's parameters and the SHA-256 of what it read and wrote.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{detect_markers, section_corpus, AlignParams, Marker, Section};
use crate::cartography::{build_map, emit_dot, emit_json, DEFAULT_SNIPPET_LEN};
use crate::convergence::{convergence_report, CompareMode};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::extraction::{extract_terms, ExtractParams, SectionTerms};
use crate::ingest::{emit_canonical, ingest_canonical};
use crate::lexicon::{assemble_config, parse_word_list, read_word_list, StopWordConfig, DEFAULT_N_PER_PLAYER, ENGLISH_STOPWORDS, GAME_TERMS};
use crate::syngen::{generate, DungeonScript};

pub const CORPUS: &str = "corpus.jsonl";
pub const STOPWORDS: &str = "stopwords.json";
pub const MARKERS: &str = "markers.json";
pub const SECTIONS: &str = "sections.json";
pub const TERMS: &str = "terms.json";
pub const MAP_JSON: &str = "map.json";
pub const MAP_DOT: &str = "map.dot";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const CONVERGENCE_SUMMARY: &str = "convergence_summary.json";
pub const MANIFEST: &str = "manifest.json";
pub const TRUTH: &str = "truth.json";

/// A pipeline stage with its declared artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Generate,
    Stopwords,
    Align,
    Extract,
    Map,
    Converge,
}

impl Stage {
    /// The analysis stages, in `run-all` order.
    pub const ANALYSIS: [Stage; 5] = [
        Stage::Stopwords,
        Stage::Align,
        Stage::Extract,
        Stage::Map,
        Stage::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Stopwords => "stopwords",
            Stage::Align => "align",
            Stage::Extract => "extract",
            Stage::Map => "map",
            Stage::Converge => "converge",
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest | Stage::Generate => &[],
            Stage::Stopwords | Stage::Align => &[CORPUS],
            Stage::Extract => &[CORPUS, STOPWORDS, SECTIONS],
            Stage::Map => &[CORPUS, SECTIONS, TERMS],
            Stage::Converge => &[CORPUS, STOPWORDS, MARKERS],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[CORPUS],
            Stage::Generate => &[CORPUS, TRUTH],
            Stage::Stopwords => &[STOPWORDS],
            Stage::Align => &[MARKERS, SECTIONS],
            Stage::Extract => &[TERMS],
            Stage::Map => &[MAP_JSON, MAP_DOT],
            Stage::Converge => &[CONVERGENCE_CSV, CONVERGENCE_SUMMARY],
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.root.join(artifact)
    }

    pub fn exists(&self, artifact: &str) -> bool {
        self.path(artifact).is_file()
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::bad_file(&path, e)),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// Starts a stage, failing with [`Error::MissingArtifact`] if any
    /// declared input is absent.
    pub fn begin(&self, stage: Stage) -> Result<StageIo<'_>> {
        for input in stage.inputs() {
            if !self.exists(input) {
                return Err(Error::MissingArtifact(input.to_string()).in_stage(stage.name()));
            }
        }
        Ok(StageIo {
            ws: self,
            stage,
            record: StageRecord::default(),
            pending: Vec::new(),
        })
    }
}

/// Artifact access for one running stage.
pub struct StageIo<'a> {
    ws: &'a Workspace,
    stage: Stage,
    record: StageRecord,
    pending: Vec<(String, Vec<u8>)>,
}

impl StageIo<'_> {
    fn undeclared(&self, artifact: &str) -> Error {
        Error::UndeclaredArtifact {
            stage: self.stage.name().to_string(),
            artifact: artifact.to_string(),
        }
    }

    pub fn read(&mut self, artifact: &str) -> Result<Vec<u8>> {
        if !self.stage.inputs().contains(&artifact) {
            return Err(self.undeclared(artifact));
        }
        let path = self.ws.path(artifact);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::MissingArtifact(artifact.to_string())),
            Err(e) => return Err(Error::io(&path, e)),
        };
        self.record.inputs.insert(artifact.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, artifact: &str) -> Result<T> {
        let bytes = self.read(artifact)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::bad_file(self.ws.path(artifact), e))
    }

    pub fn read_corpus(&mut self) -> Result<Corpus> {
        let bytes = self.read(CORPUS)?;
        ingest_canonical(bytes.as_slice())
    }

    /// Reads and hashes a file from outside the workspace (word lists,
    /// scripts), recording it under its path.
    pub fn read_external(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.record
            .inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, artifact: &str, bytes: impl Into<Vec<u8>>) -> Result<()> {
        if !self.stage.outputs().contains(&artifact) {
            return Err(self.undeclared(artifact));
        }
        self.pending.push((artifact.to_string(), bytes.into()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, artifact: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(artifact, text)
    }

    /// Writes all pending outputs and the manifest entry.
    pub fn commit(mut self, params: impl Serialize) -> Result<()> {
        self.record.params = serde_json::to_value(params)?;
        fs::create_dir_all(&self.ws.root).map_err(|e| Error::io(&self.ws.root, e))?;
        for (artifact, bytes) in &self.pending {
            self.record.outputs.insert(artifact.clone(), sha256_hex(bytes));
            write_atomic(&self.ws.path(artifact), bytes)?;
        }
        let mut manifest = self.ws.manifest()?;
        manifest
            .stages
            .insert(self.stage.name().to_string(), self.record);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.ws.path(MANIFEST), text.as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopwordsConfig {
    /// Base word list; the bundled English list when absent.
    pub base: Option<PathBuf>,
    /// Game-term list; the bundled list when absent.
    pub game: Option<PathBuf>,
    pub n_per_player: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub snippet_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub pairwise: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the script seed when generating.
    pub seed: Option<u64>,
    /// Worker threads for intra-stage parallelism; 0 means rayon's default.
    pub threads: usize,
    pub stopwords: StopwordsConfig,
    pub align: AlignParams,
    pub extract: ExtractParams,
    pub map: MapConfig,
    pub converge: ConvergeConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::bad_file(path, e))
    }

    pub fn snippet_len(&self) -> usize {
        self.map.snippet_len.unwrap_or(DEFAULT_SNIPPET_LEN)
    }

    pub fn compare_mode(&self) -> CompareMode {
        if self.converge.pairwise {
            CompareMode::Pairwise
        } else {
            CompareMode::Reference
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (`0`: rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn staged<T>(stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(stage.name()))
}

/// Writes a corpus as the workspace's `corpus.jsonl`, or with `append` adds
/// its groups to the existing one.
pub fn store_corpus(ws: &Workspace, mut corpus: Corpus, append: bool) -> Result<()> {
    staged(Stage::Ingest, || {
        let mut io = ws.begin(Stage::Ingest)?;
        let existing = ws.path(CORPUS);
        if append && existing.is_file() {
            let bytes = io.read_external(&existing)?;
            let mut merged = ingest_canonical(bytes.as_slice())?;
            for run in std::mem::take(&mut corpus.runs).into_values() {
                merged.insert_run(run)?;
            }
            corpus = merged;
        }
        let groups: Vec<&str> = corpus.group_ids().collect();
        let params = serde_json::json!({ "append": append, "groups": groups });
        io.write(CORPUS, emit_canonical(&corpus))?;
        io.commit(params)
    })
}

/// Generates a corpus from a script into the workspace, with its ground truth.
pub fn run_generate(ws: &Workspace, script_path: &Path, seed: Option<u64>) -> Result<()> {
    staged(Stage::Generate, || {
        let mut io = ws.begin(Stage::Generate)?;
        let bytes = io.read_external(script_path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::bad_file(script_path, e))?;
        let mut script = DungeonScript::from_json(&text).map_err(|e| Error::bad_file(script_path, e))?;
        if let Some(seed) = seed {
            script.seed = seed;
        }
        let (corpus, truth) = generate(&script)?;
        io.write(CORPUS, emit_canonical(&corpus))?;
        io.write(TRUTH, truth.to_json())?;
        io.commit(serde_json::json!({ "seed": script.seed }))
    })
}

pub fn run_stopwords(ws: &Workspace, config: &PipelineConfig) -> Result<()> {
    staged(Stage::Stopwords, || {
        let mut io = ws.begin(Stage::Stopwords)?;
        let corpus = io.read_corpus()?;
        let cfg = &config.stopwords;
        let base = match &cfg.base {
            Some(path) => {
                io.read_external(path)?;
                read_word_list(path)?
            }
            None => parse_word_list(ENGLISH_STOPWORDS),
        };
        let game = match &cfg.game {
            Some(path) => {
                io.read_external(path)?;
                read_word_list(path)?
            }
            None => parse_word_list(GAME_TERMS),
        };
        let n = cfg.n_per_player.unwrap_or(DEFAULT_N_PER_PLAYER);
        let stop = assemble_config(base, game, &corpus, n)?;
        io.write(STOPWORDS, stop.to_json())?;
        io.commit(serde_json::json!({ "n_per_player": n }))
    })
}

pub fn run_align(ws: &Workspace, config: &PipelineConfig) -> Result<()> {
    staged(Stage::Align, || {
        let mut io = ws.begin(Stage::Align)?;
        let corpus = io.read_corpus()?;
        let markers = detect_markers(&corpus, &config.align)?;
        let sections = section_corpus(&corpus, &markers)?;
        io.write_json(MARKERS, &markers)?;
        io.write_json(SECTIONS, &sections)?;
        io.commit(config.align)
    })
}

fn read_stop_config(io: &mut StageIo<'_>) -> Result<StopWordConfig> {
    io.read_json(STOPWORDS)
}

pub fn run_extract(ws: &Workspace, config: &PipelineConfig) -> Result<()> {
    staged(Stage::Extract, || {
        let mut io = ws.begin(Stage::Extract)?;
        let corpus = io.read_corpus()?;
        let filter = read_stop_config(&mut io)?.filter()?;
        let sections: Vec<Section> = io.read_json(SECTIONS)?;
        let terms = extract_terms(&corpus, &sections, &filter, &config.extract)?;
        io.write_json(TERMS, &terms)?;
        io.commit(config.extract)
    })
}

pub fn run_map(ws: &Workspace, config: &PipelineConfig) -> Result<()> {
    staged(Stage::Map, || {
        let mut io = ws.begin(Stage::Map)?;
        let corpus = io.read_corpus()?;
        let sections: Vec<Section> = io.read_json(SECTIONS)?;
        let terms: Vec<SectionTerms> = io.read_json(TERMS)?;
        let places: Vec<_> = terms.iter().map(SectionTerms::place).collect();
        let spaces: Vec<_> = terms
            .iter()
            .flat_map(|t| t.spaces.keys().filter_map(|g| t.space(g)))
            .collect();
        let map = build_map(&corpus, &sections, &places, &spaces, config.snippet_len())?;
        io.write(MAP_JSON, emit_json(&map))?;
        io.write(MAP_DOT, emit_dot(&map))?;
        io.commit(serde_json::json!({ "snippet_len": config.snippet_len() }))
    })
}

pub fn run_converge(ws: &Workspace, config: &PipelineConfig) -> Result<()> {
    staged(Stage::Converge, || {
        let mut io = ws.begin(Stage::Converge)?;
        let corpus = io.read_corpus()?;
        let filter = read_stop_config(&mut io)?.filter()?;
        let markers: Vec<Marker> = io.read_json(MARKERS)?;
        let mode = config.compare_mode();
        let report = convergence_report(&corpus, &markers, &filter, &config.extract, mode)?;
        io.write(CONVERGENCE_CSV, report.to_csv())?;
        io.write(CONVERGENCE_SUMMARY, report.summary_json())?;
        io.commit(serde_json::json!({ "mode": mode, "extract": config.extract }))
    })
}

pub fn run_stage(ws: &Workspace, stage: Stage, config: &PipelineConfig) -> Result<()> {
    match stage {
        Stage::Stopwords => run_stopwords(ws, config),
        Stage::Align => run_align(ws, config),
        Stage::Extract => run_extract(ws, config),
        Stage::Map => run_map(ws, config),
        Stage::Converge => run_converge(ws, config),
        Stage::Ingest | Stage::Generate => Err(Error::Config(format!(
            "{} is not an analysis stage",
            stage.name()
        ))),
    }
}

/// stopwords → align → extract → map → converge, stopping at the first
/// failure. With a script, the corpus is generated first.
pub fn run_all(ws: &Workspace, config: &PipelineConfig, script: Option<&Path>) -> Result<()> {
    if let Some(script) = script {
        run_generate(ws, script, config.seed)?;
    }
    for stage in Stage::ANALYSIS {
        run_stage(ws, stage, config)?;
    }
    Ok(())
}
