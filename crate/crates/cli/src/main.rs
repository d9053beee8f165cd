use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beliefmap_core::corpus::{validate_corpus, Corpus};
use beliefmap_core::ingest::{emit_canonical, ingest_bbs_csv_file, ingest_chat_export, read_canonical_file, UserMap};
use beliefmap_core::pipeline::{self, PipelineConfig, Stage, Workspace, CORPUS};
use beliefmap_core::syngen::{generate, DungeonScript};
use beliefmap_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Belief maps from multi-group role-playing transcripts.
#[derive(Debug, Parser)]
#[command(name = "beliefmap", version)]
struct Cli {
    /// Workspace directory holding the pipeline artifacts.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// TOML file with parameters for every stage; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Generator seed, overriding the script's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 disables intra-stage parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    ChatExport,
    BbsCsv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a transcript into canonical form.
    Ingest(IngestArgs),
    /// Build stopwords.json.
    Stopwords(StopwordsArgs),
    /// Detect markers and cut sections.
    Align(AlignArgs),
    /// Rank place and space terms per section.
    Extract(ExtractArgs),
    /// Emit map.json and map.dot.
    Map(MapArgs),
    /// Label differences over all group subsets.
    Converge(ConvergeArgs),
    /// Generate a synthetic corpus from a script.
    Generate(GenerateArgs),
    /// stopwords, align, extract, map and converge in order.
    RunAll(RunAllArgs),
    /// Check a corpus (or a script) and report every violation.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_enum)]
    format: Format,
    /// Group id for chat-export and bbs-csv input.
    #[arg(long)]
    group: Option<String>,
    /// JSONL records {id, name, role} for chat exports.
    #[arg(long)]
    user_map: Option<PathBuf>,
    /// Add to the workspace corpus instead of replacing it.
    #[arg(long)]
    append: bool,
    /// Write here instead of the workspace corpus.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export directory (chat-export) or file.
    input: PathBuf,
}

#[derive(Debug, Args)]
struct StopwordsArgs {
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    game: Option<PathBuf>,
    #[arg(long)]
    n_per_player: Option<usize>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    min_tokens: Option<usize>,
    /// Only DM posts can be markers (`--dm-only=false` to allow players).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dm_only: Option<bool>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    label_k: Option<usize>,
    #[arg(long)]
    space_k: Option<usize>,
    #[arg(long)]
    players_only: bool,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[arg(long)]
    snippet_len: Option<usize>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    /// Compare same-size subsets with each other instead of the full corpus.
    #[arg(long)]
    pairwise: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    script: PathBuf,
    /// Corpus destination; the workspace corpus when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth destination; truth.json in the workspace when absent.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunAllArgs {
    /// Generate the corpus from this script first.
    #[arg(long)]
    generate: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Corpus file; the workspace corpus when absent.
    #[arg(long, conflicts_with = "script")]
    corpus: Option<PathBuf>,
    /// Validate a generator script instead.
    #[arg(long)]
    script: Option<PathBuf>,
}

const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INVALID: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::MissingArtifact(_) | Error::Config(_) => EXIT_USAGE,
        Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => EXIT_USAGE,
        Error::Io { .. } | Error::UndeclaredArtifact { .. } | Error::Stage { .. } => EXIT_INTERNAL,
        _ => EXIT_INVALID,
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    Ok(config)
}

fn ingest(ws: &Workspace, args: &IngestArgs) -> Result<(), Error> {
    let need_group = || {
        args.group
            .clone()
            .ok_or_else(|| Error::Config("--group is required for this format".into()))
    };
    let corpus = match args.format {
        Format::Canonical => read_canonical_file(&args.input)?,
        Format::ChatExport => {
            let users = match &args.user_map {
                Some(path) => UserMap::load(path)?,
                None => UserMap::default(),
            };
            Corpus::from_runs([ingest_chat_export(&args.input, &users, &need_group()?)?])?
        }
        Format::BbsCsv => Corpus::from_runs([ingest_bbs_csv_file(&args.input, &need_group()?)?])?,
    };
    match &args.out {
        Some(out) => pipeline::write_atomic(out, emit_canonical(&corpus).as_bytes()),
        None => pipeline::store_corpus(ws, corpus, args.append),
    }
}

fn run_generate(ws: &Workspace, config: &PipelineConfig, args: &GenerateArgs) -> Result<(), Error> {
    if args.out.is_none() && args.truth.is_none() {
        return pipeline::run_generate(ws, &args.script, config.seed);
    }
    let mut script = DungeonScript::load(&args.script)?;
    if let Some(seed) = config.seed {
        script.seed = seed;
    }
    let (corpus, truth) = generate(&script)?;
    let out = args.out.clone().unwrap_or_else(|| ws.path(CORPUS));
    let truth_path = args.truth.clone().unwrap_or_else(|| ws.path(pipeline::TRUTH));
    pipeline::write_atomic(&out, emit_canonical(&corpus).as_bytes())?;
    pipeline::write_atomic(&truth_path, truth.to_json().as_bytes())
}

/// Returns the number of violations found.
fn validate(ws: &Workspace, args: &ValidateArgs) -> Result<usize, Error> {
    if let Some(script) = &args.script {
        DungeonScript::load(script)?.validate()?;
        println!("{}: ok", script.display());
        return Ok(0);
    }
    let path = args.corpus.clone().unwrap_or_else(|| ws.path(CORPUS));
    if !path.is_file() {
        return Err(Error::MissingArtifact(display_name(&path)));
    }
    let corpus = read_canonical_file(&path)?;
    let violations = validate_corpus(&corpus);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!(
            "{}: ok ({} groups, {} posts)",
            path.display(),
            corpus.runs.len(),
            corpus.post_count()
        );
    }
    Ok(violations.len())
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn execute(cli: &Cli, mut config: PipelineConfig) -> Result<u8, Error> {
    let ws = Workspace::new(&cli.workspace);
    let stage = match &cli.command {
        Command::Ingest(args) => return ingest(&ws, args).map(|_| 0),
        Command::Generate(args) => return run_generate(&ws, &config, args).map(|_| 0),
        Command::RunAll(args) => {
            return pipeline::run_all(&ws, &config, args.generate.as_deref()).map(|_| 0)
        }
        Command::Validate(args) => {
            let found = validate(&ws, args).map_err(|e| e.in_stage("validate"))?;
            return Ok(if found == 0 { 0 } else { EXIT_INVALID });
        }
        Command::Stopwords(a) => {
            let s = &mut config.stopwords;
            s.base = a.base.clone().or(s.base.take());
            s.game = a.game.clone().or(s.game.take());
            s.n_per_player = a.n_per_player.or(s.n_per_player);
            Stage::Stopwords
        }
        Command::Align(a) => {
            let p = &mut config.align;
            p.theta = a.theta.unwrap_or(p.theta);
            p.min_tokens = a.min_tokens.unwrap_or(p.min_tokens);
            p.dm_only = a.dm_only.unwrap_or(p.dm_only);
            Stage::Align
        }
        Command::Extract(a) => {
            let p = &mut config.extract;
            p.depth = a.depth.unwrap_or(p.depth);
            p.label_k = a.label_k.unwrap_or(p.label_k);
            p.space_k = a.space_k.unwrap_or(p.space_k);
            p.players_only |= a.players_only;
            Stage::Extract
        }
        Command::Map(a) => {
            config.map.snippet_len = a.snippet_len.or(config.map.snippet_len);
            Stage::Map
        }
        Command::Converge(a) => {
            config.converge.pairwise |= a.pairwise;
            Stage::Converge
        }
    };
    pipeline::run_stage(&ws, stage, &config).map(|_| 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|config| {
        let threads = config.threads;
        pipeline::with_threads(threads, || execute(&cli, config)).and_then(|r| r)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
