use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uniaudit_core::config::RunConfig;
use uniaudit_core::pipeline;
use uniaudit_core::report::{ExportFormat, GrsScope};
use uniaudit_core::{Error, ErrorKind, HttpChatBackend, Variant};

#[derive(Parser)]
#[command(
    name = "uniaudit",
    version,
    about = "Audit LLM university recommendations for demographic and geographic bias"
)]
struct Cli {
    /// TOML run configuration; bundled defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Global,
    Nationality,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Base,
    Regional,
    Background,
    ReducedGender,
    ReducedClass,
    ReducedNationality,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Base => Variant::Base,
            VariantArg::Regional => Variant::Regional,
            VariantArg::Background => Variant::Background,
            VariantArg::ReducedGender => Variant::ReducedGender,
            VariantArg::ReducedClass => Variant::ReducedClass,
            VariantArg::ReducedNationality => Variant::ReducedNationality,
        }
    }
}

#[derive(clap::Args)]
struct ExportArgs {
    /// Scored-record JSONL.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; defaults to paths.output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the profile grid as JSONL.
    Profiles {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render prompts for one or more variants as JSONL.
    Prompts {
        #[arg(long, value_enum, default_value = "base")]
        variant: Vec<VariantArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query a model endpoint and append raw responses (resumable).
    Query {
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum, default_value = "base")]
        variant: Vec<VariantArg>,
        /// Prompt JSONL from `prompts`; rendered from the config otherwise.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and resolve raw responses into recommendation records.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach DRS components to parsed records.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-country GRS tables.
    Grs(ExportArgs),
    /// Every report table.
    Report(ExportArgs),
    /// Check the configuration and all referenced assets.
    Validate,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Endpoint => 3,
    }
}

fn fail(e: &Error) -> ExitCode {
    let kind = e.kind();
    let summary = serde_json::json!({
        "error": e.code(),
        "kind": format!("{kind:?}").to_lowercase(),
        "message": e.to_string(),
    });
    eprintln!("{summary}");
    ExitCode::from(exit_code(kind))
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, Error> {
    out.or_else(|| cfg.paths.output_dir.clone())
        .ok_or_else(|| Error::Config("pass --out or set paths.output_dir".into()))
}

fn export_settings(cfg: &RunConfig, args: &ExportArgs) -> (GrsScope, ExportFormat) {
    let scope = match args.scope {
        Some(ScopeArg::Global) => GrsScope::Global,
        Some(ScopeArg::Nationality) => GrsScope::Nationality,
        None => cfg.report.scope,
    };
    let format = match args.format {
        Some(FormatArg::Csv) => ExportFormat::Csv,
        Some(FormatArg::Json) => ExportFormat::Json,
        Some(FormatArg::Markdown) => ExportFormat::Markdown,
        None => cfg.report.format,
    };
    (scope, format)
}

fn paths_json(paths: &[PathBuf]) -> serde_json::Value {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Profiles { out } => {
            let n = pipeline::stage_profiles(&cfg, &out)?;
            emit(serde_json::json!({ "profiles": n, "out": out.display().to_string() }));
        }
        Command::Prompts { variant, out } => {
            let variants: Vec<Variant> = variant.into_iter().map(Variant::from).collect();
            let n = pipeline::stage_prompts(&cfg, &variants, &out)?;
            emit(serde_json::json!({ "prompts": n, "out": out.display().to_string() }));
        }
        Command::Query { model, variant, prompts, out } => {
            let endpoint = cfg.endpoint(model.as_deref())?;
            let backend = HttpChatBackend::from_config(endpoint)?;
            let variants: Vec<Variant> = variant.into_iter().map(Variant::from).collect();
            let summary =
                pipeline::stage_query(&cfg, model.as_deref(), &variants, prompts.as_deref(), &backend, &out)?;
            let failed = summary.failures.len();
            emit(serde_json::to_value(&summary)?);
            if failed > 0 && summary.succeeded == 0 && summary.skipped_existing == 0 {
                return Err(Error::Endpoint(format!("all {failed} requests failed")));
            }
        }
        Command::Ingest { input, out } => {
            let m = pipeline::stage_ingest(&cfg, &input, &out)?;
            emit(serde_json::json!({
                "responses": m.responses,
                "records": m.records,
                "unmatched": m.unmatched,
                "untagged": m.untagged,
                "line_errors": m.line_errors.len(),
                "out": out.display().to_string(),
            }));
        }
        Command::Score { input, out } => {
            let n = pipeline::stage_score(&cfg, &input, &out)?;
            emit(serde_json::json!({ "scored": n, "out": out.display().to_string() }));
        }
        Command::Grs(args) => {
            let dir = output_dir(&cfg, args.out.clone())?;
            let (scope, format) = export_settings(&cfg, &args);
            let paths = pipeline::stage_grs(&cfg, &args.input, &dir, scope, format)?;
            emit(serde_json::json!({ "files": paths_json(&paths) }));
        }
        Command::Report(args) => {
            let dir = output_dir(&cfg, args.out.clone())?;
            let (scope, format) = export_settings(&cfg, &args);
            let paths = pipeline::stage_report(&cfg, &args.input, &dir, scope, format)?;
            emit(serde_json::json!({ "files": paths_json(&paths) }));
        }
        Command::Validate => {
            let report = pipeline::stage_validate(&cfg)?;
            emit(serde_json::to_value(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
