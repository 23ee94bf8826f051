//! Command-line front end for the audit pipeline.
//!
//! Exit codes: 0 success, 2 configuration or validation failure, 3 backend
//! or transport failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlm_audit::config::{endpoint_override, RunConfig};
use mlm_audit::corpus::validate_profiles;
use mlm_audit::pipeline::{AuditOptions, Pipeline};
use mlm_audit::report::{format_2dp, format_p, ReportFormat};
use mlm_audit::Error;

#[derive(Debug, Parser)]
#[command(
    name = "mlm-audit",
    version,
    about = "Gender-bias audit harness for masked language models"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(
        long,
        short,
        global = true,
        env = "MLM_AUDIT_CONFIG",
        default_value = "mlm-audit.toml"
    )]
    config: PathBuf,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Per-invocation overrides of configuration fields.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Restrict the pronoun sets to subject pronouns.
    #[arg(long, global = true)]
    subject_only: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate the configuration, corpus, lexicon and backends.
    Validate,
    /// Pronoun experiment: GTC per job prompt and per-category statistics.
    AuditPronouns {
        #[arg(long)]
        model: String,
        /// Also write every response to this replay file.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Linguistic-token experiment: top-k predictions and parallel pairs.
    AuditTokens {
        #[arg(long)]
        model: String,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Neutrality offsets of a monolingual/multilingual model pair.
    Compare {
        #[arg(long)]
        mono: String,
        #[arg(long)]
        multi: String,
    },
    /// Render every artifact in the output directory as a report.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// structured, csv or markdown; repeatable.
        #[arg(long = "format", default_value = "structured")]
        formats: Vec<String>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load(&cli.config)?;
    let o = &cli.overrides;
    if let Some(corpus) = &o.corpus {
        config.corpus = corpus.clone();
    }
    if let Some(dir) = &o.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(k) = o.k {
        config.k = k;
    }
    if let Some(alpha) = o.alpha {
        config.alpha = alpha;
    }
    if let Some(concurrency) = o.concurrency {
        config.concurrency = concurrency;
    }
    if o.subject_only {
        config.subject_only = true;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(&cli)?;
    let pipeline = Pipeline::new(config, endpoint_override())?;

    match cli.command {
        Command::Validate => {
            let config = &pipeline.config;
            validate_profiles(&config.profiles()?)?;
            for model in &config.models {
                model.build_backend(&pipeline.corpus, &config.pronoun_lexicon(), None)?;
            }
            println!(
                "ok: corpus {} ({} job, {} linguistic prompts), {} model(s), POS lexicon with {} words",
                pipeline.corpus.version,
                pipeline.corpus.job_prompts.len(),
                pipeline.corpus.linguistic_prompts.len(),
                config.models.len(),
                pipeline.pos_lexicon.len()
            );
        }
        Command::AuditPronouns { model, record } => {
            let outcome = pipeline.audit_pronouns(&model, &AuditOptions { record })?;
            println!("{model}: {} GTC pairs", outcome.batch.pairs().count());
            for row in &outcome.stats {
                let s = &row.stats;
                println!(
                    "  {:<22} n={:<3} V={:<8} p={:<6} A={} {} {}",
                    s.category.label(),
                    s.n,
                    s.v_value,
                    format_p(s.p_value),
                    format_2dp(s.a_value),
                    s.magnitude,
                    s.classification
                );
            }
        }
        Command::AuditTokens { model, record } => {
            let outcome = pipeline.audit_tokens(&model, &AuditOptions { record })?;
            let s = &outcome.summary;
            println!(
                "{model}: {} prompts, {} parallel pairs",
                outcome.predictions.len(),
                s.total_pairs
            );
            for (unit, count) in &s.per_unit_counts {
                let share = s
                    .per_unit_share
                    .get(unit)
                    .map(|v| format!("{:.1}%", v * 100.0))
                    .unwrap_or_else(|| "-".into());
                println!("  {unit:<10} {count:>3} {share}");
            }
        }
        Command::Compare { mono, multi } => {
            for row in pipeline.compare(&mono, &multi)? {
                let c = &row.comparison;
                println!(
                    "{:<22} {} - {} = {}",
                    c.category.label(),
                    format_2dp(c.delta_mono),
                    format_2dp(c.delta_multi),
                    format_2dp(c.difference)
                );
            }
        }
        Command::Report { out, formats } => {
            let formats = formats
                .iter()
                .map(|f| f.parse::<ReportFormat>())
                .collect::<Result<Vec<_>, _>>()?;
            for path in pipeline.write_report(&out, &formats)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_backend() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
