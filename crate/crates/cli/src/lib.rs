//! Command implementations for the `kgreason` binary.
//!
//! Settings come from flags, then `KGREASON_*` environment variables, then an
//! optional TOML config file. Data goes to stdout and diagnostics to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use kgreason::cypher::{execute, parse_query};
use kgreason::eval::{load_dataset, run_benchmark, Dataset, RunConfig};
use kgreason::graph::{load_kg, KnowledgeGraph};
use kgreason::llm::ProviderSpec;
use kgreason::reasoning::{answer_question, PipelineConfig, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ABSTAINED: i32 = 2;

const DEFAULT_TOKEN_ENV: &str = "KGREASON_API_TOKEN";

#[derive(Debug, Parser)]
#[command(name = "kgreason", version, about = "Schema-guided question answering over knowledge graphs")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Settings {
    /// TOML file supplying defaults for any setting below.
    #[arg(long, global = true, env = "KGREASON_CONFIG")]
    config: Option<PathBuf>,
    /// Triple file: subject<TAB>relation<TAB>object per line.
    #[arg(long, global = true, env = "KGREASON_KG")]
    kg: Option<PathBuf>,
    /// Alias file: alias<TAB>canonical name per line.
    #[arg(long, global = true, env = "KGREASON_ALIASES")]
    aliases: Option<PathBuf>,
    /// `scripted:<file>` or `http:<url>`.
    #[arg(long, global = true, env = "KGREASON_PROVIDER")]
    provider: Option<String>,
    /// Environment variable holding the HTTP bearer token.
    #[arg(long, global = true, env = "KGREASON_TOKEN_ENV")]
    token_env: Option<String>,
    #[arg(long, global = true, env = "KGREASON_RELEVANCE_THRESHOLD")]
    relevance_threshold: Option<f64>,
    #[arg(long, global = true, env = "KGREASON_HOP_BUDGET")]
    hop_budget: Option<usize>,
    #[arg(long, global = true, env = "KGREASON_MAX_ITERATIONS")]
    max_iterations: Option<usize>,
    /// Pipeline variant; for `eval`, a comma-separated list (empty for none).
    #[arg(long, global = true, env = "KGREASON_VARIANT")]
    variant: Option<String>,
    /// Output directory for `eval` reports.
    #[arg(long, global = true, env = "KGREASON_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the ranked answers to a question.
    Ask { question: String },
    /// Print the JSON reasoning trace for a question.
    Explain { question: String },
    /// Run pipeline variants over a dataset and write report files.
    Eval {
        /// JSONL file of {"id", "question", "answers"} records.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run a Cypher query against the graph and print rows as TSV.
    Query { cypher: String },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    kg: Option<PathBuf>,
    aliases: Option<PathBuf>,
    provider: Option<String>,
    token_env: Option<String>,
    relevance_threshold: Option<f64>,
    hop_budget: Option<usize>,
    max_iterations: Option<usize>,
    variant: Option<String>,
    out: Option<PathBuf>,
    sample_triples: Option<usize>,
    schema_template: Option<String>,
    answer_template: Option<String>,
    schema_only_template: Option<String>,
    io_template: Option<String>,
    hypothesis_template: Option<String>,
}

/// Settings after merging flags, environment and config file.
#[derive(Debug)]
struct Resolved {
    kg: Option<PathBuf>,
    aliases: Option<PathBuf>,
    provider: Option<String>,
    token_env: String,
    variant: Option<String>,
    out: Option<PathBuf>,
    pipeline: PipelineConfig,
}

fn relative_to(base: Option<&Path>, path: PathBuf) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

fn resolve(settings: Settings) -> Result<Resolved> {
    let (file, base) = match &settings.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            let file: FileConfig =
                toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
            (file, path.parent().map(Path::to_path_buf))
        }
        None => (FileConfig::default(), None),
    };
    let base = base.as_deref();
    let file_provider = file.provider.map(|p| match p.strip_prefix("scripted:") {
        Some(rel) => format!(
            "scripted:{}",
            relative_to(base, PathBuf::from(rel)).display()
        ),
        None => p,
    });

    let mut pipeline = PipelineConfig::default();
    if let Some(t) = settings.relevance_threshold.or(file.relevance_threshold) {
        if !(0.0..=1.0).contains(&t) {
            bail!("relevance threshold must lie in [0, 1], got {t}");
        }
        pipeline.relevance_threshold = t;
    }
    if let Some(h) = settings.hop_budget.or(file.hop_budget) {
        if h == 0 {
            bail!("hop budget must be positive");
        }
        pipeline.hop_budget = Some(h);
    }
    if let Some(m) = settings.max_iterations.or(file.max_iterations) {
        if m == 0 {
            bail!("max iterations must be positive");
        }
        pipeline.max_iterations = m;
    }
    if let Some(k) = file.sample_triples {
        pipeline.schema.sample_triples = k;
    }
    if let Some(t) = file.schema_template {
        pipeline.schema.template = t;
    }
    if let Some(t) = file.answer_template {
        pipeline.answer_template = t;
    }
    if let Some(t) = file.schema_only_template {
        pipeline.schema_only_template = t;
    }
    if let Some(t) = file.io_template {
        pipeline.io_template = t;
    }
    if let Some(t) = file.hypothesis_template {
        pipeline.hypothesis_template = t;
    }

    Ok(Resolved {
        kg: settings.kg.or_else(|| file.kg.map(|p| relative_to(base, p))),
        aliases: settings.aliases.or_else(|| file.aliases.map(|p| relative_to(base, p))),
        provider: settings.provider.or(file_provider),
        token_env: settings
            .token_env
            .or(file.token_env)
            .unwrap_or_else(|| DEFAULT_TOKEN_ENV.to_string()),
        variant: settings.variant.or(file.variant),
        out: settings.out.or_else(|| file.out.map(|p| relative_to(base, p))),
        pipeline,
    })
}

impl Resolved {
    fn load_graph(&self) -> Result<KnowledgeGraph> {
        let path = self
            .kg
            .as_ref()
            .ok_or_else(|| anyhow!("no knowledge graph given (use --kg)"))?;
        let triples = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let aliases = match &self.aliases {
            Some(p) => Some(BufReader::new(
                File::open(p).with_context(|| format!("cannot open {}", p.display()))?,
            )),
            None => None,
        };
        load_kg(BufReader::new(triples), aliases).with_context(|| format!("cannot load {}", path.display()))
    }

    fn provider(&self) -> Result<ProviderSpec> {
        let text = self
            .provider
            .as_deref()
            .ok_or_else(|| anyhow!("no provider given (use --provider scripted:<file> or http:<url>)"))?;
        let mut spec = ProviderSpec::parse(text)?;
        if let ProviderSpec::Http(config) = &mut spec {
            config.bearer_token = std::env::var(&self.token_env).ok();
        }
        Ok(spec)
    }

    fn single_variant(&self) -> Result<Variant> {
        match self.variant.as_deref() {
            None => Ok(Variant::Full),
            Some(v) => v.parse().map_err(|e: String| anyhow!(e)),
        }
    }

    /// Absent means every variant; an empty string means none.
    fn variant_list(&self) -> Result<Vec<Variant>> {
        match self.variant.as_deref() {
            None => Ok(Variant::ALL.to_vec()),
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse().map_err(|e: String| anyhow!(e)))
                .collect(),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let resolved = resolve(cli.settings)?;
    match cli.command {
        Command::Ask { question } => ask(&resolved, &question, false, stdout, stderr),
        Command::Explain { question } => ask(&resolved, &question, true, stdout, stderr),
        Command::Eval { dataset } => eval(&resolved, &dataset, stdout, stderr),
        Command::Query { cypher } => query(&resolved, &cypher, stdout),
    }
}

fn ask(
    resolved: &Resolved,
    question: &str,
    explain: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    if question.trim().is_empty() {
        bail!("question is empty");
    }
    let variant = resolved.single_variant()?;
    let spec = resolved.provider()?;
    let kg = resolved.load_graph()?;
    let provider = spec.build();
    let config = PipelineConfig {
        variant,
        ..resolved.pipeline.clone()
    };
    let outcome = answer_question(question, &kg, provider.as_ref(), &config);
    if explain {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&outcome.trace)?)?;
    } else {
        for name in outcome.answer.names(&kg) {
            writeln!(stdout, "{name}")?;
        }
    }
    if outcome.answer.is_answered() {
        Ok(EXIT_OK)
    } else {
        let stage = outcome.trace["failure_stage"].as_str().unwrap_or("unknown");
        writeln!(stderr, "no answer (gave up at stage `{stage}`)")?;
        Ok(EXIT_ABSTAINED)
    }
}

fn eval(resolved: &Resolved, dataset_path: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let variants = resolved.variant_list()?;
    let out = resolved
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory given (use --out)"))?;
    let spec = resolved.provider()?;
    let file = File::open(dataset_path).with_context(|| format!("cannot open {}", dataset_path.display()))?;
    let records =
        load_dataset(BufReader::new(file)).with_context(|| format!("cannot load {}", dataset_path.display()))?;
    let kg = resolved.load_graph()?;

    let name = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let configs: Vec<RunConfig> = variants
        .into_iter()
        .map(|variant| {
            RunConfig::new(
                spec.clone(),
                PipelineConfig {
                    variant,
                    ..resolved.pipeline.clone()
                },
            )
        })
        .collect();
    let report = run_benchmark(&kg, &[Dataset { name, records }], &configs);
    let (md, json) = report
        .write_to(&out)
        .with_context(|| format!("cannot write reports to {}", out.display()))?;
    write!(stdout, "{}", report.to_markdown())?;
    writeln!(
        stderr,
        "wrote {} and {} ({:.2?})",
        md.display(),
        json.display(),
        report.wall_clock
    )?;
    Ok(EXIT_OK)
}

fn query(resolved: &Resolved, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let query = parse_query(text)?;
    let kg = resolved.load_graph()?;
    let table = execute(&kg, &query)?;
    write!(stdout, "{}", table.to_tsv(&kg))?;
    Ok(EXIT_OK)
}
