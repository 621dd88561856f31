//! Argument handling and dispatch for the `cuegraph` binary.
//!
//! `run` writes the requested artifact to `out` and diagnostics to `err`, and
//! returns the process exit code: 0 on success, 1 for domain errors and 2 for
//! usage errors.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cuegraph_core::annotation::{parse_annotation, to_graph};
use cuegraph_core::engine::ExplorationSession;
use cuegraph_core::export::{graph_dot, graph_json};
use cuegraph_core::graph::ConceptGraph;
use cuegraph_core::metrics::{analyze, AnalogyMap, AnalysisOptions, MetricsReport, PolarityLexicon, DEFAULT_FLOW_THRESHOLD};
use cuegraph_core::policy::{explore, Policy, DEFAULT_BUDGET, DEFAULT_K};
use cuegraph_core::provider::{LiveConfig, LiveProvider, Provider, RecordingProvider, ReplayProvider, ScriptedProvider};
use cuegraph_service::{AppState, SessionStore};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cuegraph", version, about = "Concept graphs, cue exploration and write-up metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the metrics report for an annotation file.
    Analyze(AnalyzeArgs),
    /// Run an exploration session headlessly and print the session document.
    Explore(ExploreArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Export a graph or trace from a session document.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Annotation file (.cga).
    pub file: PathBuf,
    /// Annotation files merged onto the first, in order.
    #[arg(long = "merge", value_name = "FILE")]
    pub merge: Vec<PathBuf>,
    /// Analogy map (JSON) to check for polarity mismatches.
    #[arg(long, value_name = "FILE")]
    pub analogy: Option<PathBuf>,
    /// Polarity lexicon (attribute<TAB>polarity per line); defaults to the builtin one.
    #[arg(long, value_name = "FILE", requires = "analogy")]
    pub lexicon: Option<PathBuf>,
    /// Minimum causal chain length that is flagged.
    #[arg(long, default_value_t = DEFAULT_FLOW_THRESHOLD)]
    pub flow_threshold: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
}

/// Where prompt answers come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Replay(PathBuf),
    Scripted(PathBuf),
    Live,
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            _ if s == "live" => Ok(ProviderSpec::Live),
            Some(("replay", path)) if !path.is_empty() => Ok(ProviderSpec::Replay(path.into())),
            Some(("scripted", path)) if !path.is_empty() => Ok(ProviderSpec::Scripted(path.into())),
            _ => Err("expected replay:<fixture>, scripted:<file> or live".into()),
        }
    }
}

/// Who makes the author's decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Replay(PathBuf),
    AutoOverlap(usize),
    Random,
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "auto_overlap" => Ok(PolicySpec::AutoOverlap(DEFAULT_K)),
            None if s == "random" => Ok(PolicySpec::Random),
            Some(("replay", path)) if !path.is_empty() => Ok(PolicySpec::Replay(path.into())),
            Some(("auto_overlap", k)) => k
                .parse()
                .map(PolicySpec::AutoOverlap)
                .map_err(|_| format!("auto_overlap takes a number, got `{k}`")),
            _ => Err("expected replay:<trace>, auto_overlap[:k] or random".into()),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    /// Text file holding the opening paragraph.
    #[arg(long, value_name = "FILE")]
    pub paragraph: PathBuf,
    /// replay:<fixture.json>, scripted:<responses.json> or live.
    #[arg(long, value_name = "SPEC")]
    pub provider: ProviderSpec,
    /// replay:<trace.json>, auto_overlap[:k] or random.
    #[arg(long, value_name = "SPEC")]
    pub policy: PolicySpec,
    /// Seed for the random policy.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loop passes before automatic policies terminate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    /// Attach an annotation file to a revision, as REV=FILE.
    #[arg(long = "annotate", value_name = "REV=FILE")]
    pub annotate: Vec<String>,
    /// Also write every prompt and response to a replay fixture.
    #[arg(long, value_name = "FILE")]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory where session documents are kept across restarts.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// replay:<fixture.json>, scripted:<responses.json> or live; without it
    /// responses can only be pasted in.
    #[arg(long, value_name = "SPEC")]
    pub provider: Option<ProviderSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Dot,
    Json,
    /// The event log, replayable with `--policy replay:`.
    Trace,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Session document (JSON).
    #[arg(long, value_name = "FILE")]
    pub session: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportFormat::Dot)]
    pub format: ExportFormat,
    /// Revision whose annotation graph is exported; defaults to the latest annotated one.
    #[arg(long)]
    pub revision: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("error[{name}]: {message}")]
    Domain { name: String, message: String },
}

impl CliError {
    fn domain(name: &str, message: impl ToString) -> Self {
        let message = message.to_string();
        let message = match message.strip_prefix(name).and_then(|m| m.strip_prefix(": ")) {
            Some(rest) => rest.to_string(),
            None => message,
        };
        CliError::Domain {
            name: name.to_string(),
            message,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain { .. } => EXIT_DOMAIN,
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::domain(e.name(), e)
            }
        }
    )*};
}

domain_from!(
    cuegraph_core::engine::EngineError,
    cuegraph_core::metrics::MetricsError,
    cuegraph_core::provider::ProviderError,
    cuegraph_core::graph::GraphError
);

/// Reads an input named on the command line; a missing file is a usage error.
fn read_input(path: &Path, flag: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{flag} {}: {e}", path.display())))
}

fn load_graph(path: &Path, flag: &str) -> Result<ConceptGraph, CliError> {
    let text = read_input(path, flag)?;
    let doc = parse_annotation(&text)
        .map_err(|d| CliError::domain(d.first().kind.name(), format!("{}:{d}", path.display())))?;
    Ok(to_graph(&doc)?)
}

fn text_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "concepts: {}", report.concepts);
    let _ = writeln!(out, "relationships: {}", report.relationships);
    let histogram: Vec<String> = report
        .paths
        .length_histogram
        .iter()
        .map(|(len, n)| format!("{len}:{n}"))
        .collect();
    let _ = writeln!(out, "paths: {} ({})", report.paths.count, histogram.join(" "));
    let _ = writeln!(out, "max depth: {}, breadth: {}", report.paths.max_depth, report.paths.breadth);
    let top: Vec<String> = report
        .centrality
        .iter()
        .take(5)
        .map(|e| format!("{} ({})", e.concept, e.degree))
        .collect();
    let _ = writeln!(out, "most connected: {}", top.join(", "));
    for (name, members) in &report.clusters {
        let _ = writeln!(out, "cluster {name}: {}", members.len());
    }
    let isolated = match report.unconnected.isolated.as_slice() {
        [] => "none".to_string(),
        labels => labels.join(", "),
    };
    let _ = writeln!(out, "isolated: {isolated}");
    let _ = writeln!(out, "implied-only links: {}", report.unconnected.implied_only.len());
    let _ = writeln!(out, "flagged causal chains: {}", report.idea_flow.flagged().count());
    if let Some(findings) = &report.inconsistencies {
        for f in findings {
            let conflicts: Vec<String> = f
                .conflicts
                .iter()
                .map(|c| format!("{} vs {}", c.source_attribute, c.target_attribute))
                .collect();
            let _ = writeln!(out, "mismatch {} / {}: {}", f.source, f.target, conflicts.join(", "));
        }
    }
    out
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    let mut graph = load_graph(&args.file, "file")?;
    for delta in &args.merge {
        graph = graph.merge(&load_graph(delta, "--merge")?)?;
    }
    let analogy = match &args.analogy {
        None => None,
        Some(path) => {
            let map: AnalogyMap = serde_json::from_str(&read_input(path, "--analogy")?)
                .map_err(|e| CliError::domain("invalid-map", format!("{}: {e}", path.display())))?;
            let lexicon = match &args.lexicon {
                Some(path) => PolarityLexicon::parse(&read_input(path, "--lexicon")?)?,
                None => PolarityLexicon::builtin(),
            };
            Some((map, lexicon))
        }
    };
    let options = AnalysisOptions {
        flow_threshold: args.flow_threshold,
        analogy: analogy.as_ref().map(|(m, l)| (m, l)),
        explored_cues: None,
    };
    let report = analyze(&graph, &options)?;
    Ok(match args.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Text => text_report(&report),
    })
}

fn make_provider(spec: &ProviderSpec) -> Result<Box<dyn Provider>, CliError> {
    Ok(match spec {
        ProviderSpec::Replay(path) => {
            read_input(path, "--provider")?;
            Box::new(ReplayProvider::load(path)?)
        }
        ProviderSpec::Scripted(path) => {
            read_input(path, "--provider")?;
            Box::new(ScriptedProvider::load(path)?)
        }
        ProviderSpec::Live => Box::new(LiveProvider::new(LiveConfig::from_env()?)?),
    })
}

fn cmd_explore(args: &ExploreArgs) -> Result<String, CliError> {
    let paragraph = read_input(&args.paragraph, "--paragraph")?;
    let policy = match &args.policy {
        PolicySpec::Replay(path) => Policy::replay_from_json(&read_input(path, "--policy")?)
            .map_err(|e| CliError::domain("trace-mismatch", format!("{}: {e}", path.display())))?,
        PolicySpec::AutoOverlap(k) => Policy::AutoOverlap {
            k: *k,
            budget: args.budget,
        },
        PolicySpec::Random => Policy::Random {
            seed: args
                .seed
                .ok_or_else(|| CliError::Usage("--seed is required with --policy random".into()))?,
            budget: args.budget,
        },
    };
    let mut annotations = Vec::new();
    for spec in &args.annotate {
        let (rev, file) = spec
            .split_once('=')
            .and_then(|(r, f)| Some((r.parse::<usize>().ok()?, PathBuf::from(f))))
            .ok_or_else(|| CliError::Usage(format!("--annotate expects REV=FILE, got `{spec}`")))?;
        annotations.push((rev, read_input(&file, "--annotate")?));
    }

    let provider = make_provider(&args.provider)?;
    let mut session = match &args.record {
        Some(path) => {
            let recorder = RecordingProvider::new(provider);
            let session = explore(paragraph.trim_end(), &policy, &recorder)?;
            recorder.write_fixture(path)?;
            session
        }
        None => explore(paragraph.trim_end(), &policy, provider.as_ref())?,
    };
    for (rev, text) in annotations {
        session.attach_annotation(rev, &text)?;
    }
    Ok(session.export())
}

fn cmd_export(args: &ExportArgs) -> Result<String, CliError> {
    let session = ExplorationSession::import(&read_input(&args.session, "--session")?)?;
    if args.format == ExportFormat::Trace {
        return Ok(session.export_trace());
    }
    let revision = match args.revision {
        Some(r) => r,
        None => (0..session.paragraphs().len())
            .rev()
            .find(|r| session.annotation(*r).is_some())
            .ok_or_else(|| CliError::domain("no-annotation", "the session has no annotated revision"))?,
    };
    let graph = session
        .graph(revision)?
        .ok_or_else(|| CliError::domain("no-annotation", format!("revision {revision} has no annotation")))?;
    Ok(match args.format {
        ExportFormat::Dot => graph_dot(&graph),
        _ => graph_json(&graph),
    })
}

fn cmd_serve(args: &ServeArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("--host {}: {e}", args.host)))?;
    let store = match &args.data_dir {
        Some(dir) => SessionStore::open(dir).map_err(|e| CliError::domain("storage", e))?,
        None => SessionStore::in_memory(),
    };
    let provider: Option<Arc<dyn Provider>> = args
        .provider
        .as_ref()
        .map(make_provider)
        .transpose()?
        .map(Arc::from);
    let state = AppState::new(store, provider);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::domain("runtime", e))?;
    let _ = writeln!(err, "listening on http://{addr}");
    runtime
        .block_on(cuegraph_service::serve(addr, state))
        .map_err(|e| CliError::domain("serve", e))
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let artifact = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args)?,
        Command::Explore(args) => cmd_explore(args)?,
        Command::Export(args) => cmd_export(args)?,
        Command::Serve(args) => return cmd_serve(args, err),
    };
    out.write_all(artifact.as_bytes())
        .map_err(|e| CliError::domain("write-failure", e))
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = match &e {
                CliError::Usage(m) => writeln!(err, "usage error: {m}\n\nRun `cuegraph --help` for usage."),
                CliError::Domain { .. } => writeln!(err, "{e}"),
            };
            e.exit_code()
        }
    }
}
