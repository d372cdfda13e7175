//! `trake`: build indexes, search them, serve them, and re-run the oracle checks.

mod table;

use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use trake_core::ingest::{ingest_all, IngestManifest, DEFAULT_IMAGE_TEMPLATE};
use trake_core::synthetic::{planted_corpus, quest_corpus, PlantedSpec};
use trake_core::trke;
use trake_core::verify::{self, Fault, VerifyConfig};
use trake_core::TrakeIndex;
use trake_server::api::{DanteRequest, EventQuery, OcrRequest, SemanticRequest};
use trake_server::service::DEFAULT_PLAYER_BASE;
use trake_server::{ApiError, RewriterSettings, Service};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "trake", version, about = "Known-item video search over keyframe indexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build catalog, vector and text indexes from scene, embedding and OCR files.
    Ingest(IngestArgs),
    /// Run one search against an index directory.
    Search(SearchArgs),
    /// Cross-check the fast algorithms against brute-force oracles.
    Verify(VerifyArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
    /// Write a deterministic synthetic corpus as ingest inputs.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Semantic,
    Ocr,
    Dante,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectedFault {
    TieRule,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Planted,
    Quest,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    ocr: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Expected embedding dimension; defaults to the embeddings file header.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value = DEFAULT_IMAGE_TEMPLATE)]
    image_template: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct RewriterArgs {
    #[arg(long, env = "TRAKE_REWRITER_URL")]
    rewriter_url: Option<String>,
    #[arg(long, env = "TRAKE_REWRITER_KEY", hide_env_values = true)]
    rewriter_key: Option<String>,
    #[arg(long, env = "TRAKE_REWRITER_MODEL")]
    rewriter_model: Option<String>,
    /// JSON object mapping queries to recorded rewrites.
    #[arg(long)]
    rewrites: Option<PathBuf>,
}

impl RewriterArgs {
    fn settings(&self) -> RewriterSettings {
        RewriterSettings {
            endpoint: self.rewriter_url.clone(),
            api_key: self.rewriter_key.clone(),
            model: self.rewriter_model.clone(),
            fixture: self.rewrites.clone(),
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, env = "TRAKE_INDEX_DIR")]
    index: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Query text; repeat once per event in dante mode.
    #[arg(long)]
    query: Vec<String>,
    /// Anchor keyframe for semantic image-to-image search.
    #[arg(long)]
    keyframe_id: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    threshold: Option<f64>,
    /// Restrict to these videos (repeatable).
    #[arg(long = "video")]
    videos: Vec<String>,
    /// Restrict to these groups (repeatable).
    #[arg(long = "group")]
    groups: Vec<String>,
    /// Rewrite text queries before embedding them.
    #[arg(long)]
    enhance: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    rewriter: RewriterArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Also check top-k against an argsort over this index's vectors.
    #[arg(long, env = "TRAKE_INDEX_DIR")]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<InjectedFault>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "TRAKE_INDEX_DIR")]
    index: PathBuf,
    #[arg(long, env = "TRAKE_ADDR", default_value = "127.0.0.1:8080")]
    addr: String,
    /// Base of the external player URL in keyframe details.
    #[arg(long, default_value = DEFAULT_PLAYER_BASE)]
    player_base: String,
    #[command(flatten)]
    rewriter: RewriterArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "planted")]
    kind: SynthKind,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

struct Failure {
    class: String,
    message: String,
}

impl Failure {
    fn new(class: impl Into<String>, message: impl ToString) -> Self {
        Failure {
            class: class.into(),
            message: message.to_string(),
        }
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::new(format!("{:?}", e.code), e.message)
    }
}

fn emit(line: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| Failure::new("Io", e))
}

fn load_index(dir: &Path) -> Result<TrakeIndex, Failure> {
    TrakeIndex::load(dir).map_err(|e| Failure::new("IndexLoad", e))
}

fn require_file(path: &Path, class: &str, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::new(class, format!("{what} file {} does not exist", path.display())))
    }
}

fn cmd_ingest(args: &IngestArgs) -> Result<(), Failure> {
    require_file(&args.scenes, "MissingScenes", "scenes")?;
    require_file(&args.embeddings, "MissingEmbedding", "embeddings")?;
    require_file(&args.ocr, "MissingOcr", "OCR")?;
    let dim = match args.dim {
        Some(d) => d,
        None => {
            let mut f = File::open(&args.embeddings).map_err(|e| Failure::new("Io", e))?;
            trke::read_header(&mut f).map_err(|e| Failure::new("Embeddings", e))?.dim as usize
        }
    };
    let mut manifest = IngestManifest::new(&args.scenes, &args.embeddings, &args.ocr, dim);
    manifest.image_path_template = args.image_template.clone();
    let index = ingest_all(&manifest).map_err(|e| Failure::new(e.class(), e))?;
    index.save(&args.out).map_err(|e| Failure::new("IndexSave", e))?;
    let summary = json!({
        "videos": index.catalog.spans().len(),
        "keyframes": index.catalog.len(),
        "dim": index.dim(),
        "out": args.out.display().to_string(),
    });
    match args.format {
        Format::Json => emit(&summary.to_string()),
        Format::Table => emit(&format!(
            "videos     {}\nkeyframes  {}\ndim        {}\nout        {}",
            summary["videos"], summary["keyframes"], summary["dim"], args.out.display()
        )),
    }
}

fn cmd_search(args: &SearchArgs) -> Result<(), Failure> {
    let index = load_index(&args.index)?;
    let rewriter = args.rewriter.settings().build().map_err(|e| Failure::new("Rewriter", e))?;
    let svc = Service::new(index, rewriter);
    let filter = |v: &Vec<String>| (!v.is_empty()).then(|| v.clone());
    let response = match args.mode {
        Mode::Semantic => {
            if args.query.len() > 1 {
                return Err(Failure::new("InvalidRequest", "semantic mode takes at most one --query"));
            }
            svc.semantic(&SemanticRequest {
                query: args.query.first().cloned(),
                keyframe_id: args.keyframe_id,
                exemplar_id: None,
                top_k: args.top_k,
                threshold: args.threshold,
                video_filter: filter(&args.videos),
                group_filter: filter(&args.groups),
                enhance: args.enhance,
            })?
        }
        Mode::Ocr => {
            if args.query.len() != 1 {
                return Err(Failure::new("InvalidRequest", "ocr mode takes exactly one --query"));
            }
            svc.ocr(&OcrRequest {
                query: args.query[0].clone(),
                top_k: args.top_k,
                video_filter: filter(&args.videos),
                group_filter: filter(&args.groups),
            })?
        }
        Mode::Dante => svc.dante(&DanteRequest {
            queries: args.query.iter().cloned().map(EventQuery::Text).collect(),
            lambda: args.lambda,
            top_k: args.top_k,
            video_filter: filter(&args.videos),
            group_filter: filter(&args.groups),
            enhance: args.enhance,
        })?,
    };
    match args.format {
        Format::Json => emit(&serde_json::to_string(&response).map_err(|e| Failure::new("Internal", e))?),
        Format::Table => emit(table::search(&response).trim_end()),
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode, Failure> {
    let index = args.index.as_deref().map(load_index).transpose()?;
    let cfg = VerifyConfig {
        trials: args.trials,
        seed: args.seed,
        fault: args.inject_fault.map(|InjectedFault::TieRule| Fault::FlipTieRule),
    };
    let report = verify::run(&cfg, index.as_ref());
    match args.format {
        Format::Json => emit(&serde_json::to_string(&report).map_err(|e| Failure::new("Internal", e))?)?,
        Format::Table => emit(&report.to_string())?,
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY_FAILED)
    })
}

fn cmd_serve(args: &ServeArgs) -> Result<(), Failure> {
    let addr: SocketAddr = args
        .addr
        .parse()
        .map_err(|e| Failure::new("BadAddress", format!("`{}`: {e}", args.addr)))?;
    let index = load_index(&args.index)?;
    let rewriter = args.rewriter.settings().build().map_err(|e| Failure::new("Rewriter", e))?;
    let svc = Arc::new(Service::new(index, rewriter).with_player_base(args.player_base.clone()));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new("Runtime", e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::new("Bind", format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::new("Bind", e))?;
        eprintln!("listening on http://{local}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        trake_server::serve(listener, svc, shutdown)
            .await
            .map_err(|e| Failure::new("Serve", e))
    })
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::new("Io", e);
    let info = match args.kind {
        SynthKind::Planted => {
            let spec = PlantedSpec {
                seed: args.seed,
                ..PlantedSpec::default()
            };
            let (corpus, planted) = planted_corpus(&spec);
            corpus.write_inputs(&args.out).map_err(io_err)?;
            json!({
                "kind": "planted",
                "dim": corpus.dim,
                "video_id": planted.video_id,
                "events": planted.events,
                "keyframes": planted.keyframes,
            })
        }
        SynthKind::Quest => {
            let scenario = quest_corpus(args.seed);
            scenario.corpus.write_inputs(&args.out).map_err(io_err)?;
            json!({
                "kind": "quest",
                "dim": scenario.corpus.dim,
                "original_query": scenario.original_query,
                "rewritten_query": scenario.rewritten_query,
                "target": scenario.target,
            })
        }
    };
    emit(&info.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a).map(|_| ExitCode::SUCCESS),
        Command::Search(a) => cmd_search(a).map(|_| ExitCode::SUCCESS),
        Command::Verify(a) => cmd_verify(a),
        Command::Serve(a) => cmd_serve(a).map(|_| ExitCode::SUCCESS),
        Command::Synth(a) => cmd_synth(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error[{}]: {}", f.class, f.message);
            ExitCode::from(EXIT_ERROR)
        }
    }
}
