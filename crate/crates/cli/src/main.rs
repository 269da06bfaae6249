use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use vlmaudit_core::audit::{build_report, config_from_path, debug_top_k};
use vlmaudit_core::config::parse_formats;
use vlmaudit_core::corpus::synth::{generate_synthetic_corpus, write_bundle, SynthSpec};
use vlmaudit_core::metrics::{bias_against_uniform, Dimension, ProbVector};
use vlmaudit_core::report::write_report;
use vlmaudit_core::validate::{all_passed, render_checks, validate_paths};
use vlmaudit_core::{Error, ErrorClass};

/// Demographic bias audit for image-text embedding models.
#[derive(Parser)]
#[command(name = "vlmaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full audit and write the report.
    Audit(AuditArgs),
    /// Check embedding files, manifests, label CSVs, taxonomies and configs.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Generate a synthetic planted-bias bundle.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Retrieval depth written into the generated audit config.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Print the top-k retrieval for one model and role as JSON.
    Topk {
        #[arg(long)]
        model: String,
        #[arg(long)]
        role: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score a distribution against the uniform baseline.
    Score {
        /// JSON array of shares or object of category -> share, inline or a file path.
        #[arg(long)]
        dist: String,
        #[arg(long, default_value = "gender")]
        dimension: String,
    },
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated list of json, csv, md.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let mut config = config_from_path(&args.config)?;
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if let Some(out) = args.out {
        // Command-line paths are relative to the working directory.
        config.out = std::path::absolute(out).context("resolving --out")?;
    }
    if let Some(f) = &args.format {
        config.formats = parse_formats(f)?;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    let report = build_report(&config)?;
    let out = config.out_dir();
    write_report(&report, &config.formats, &out)?;
    eprintln!(
        "audited {} model(s) x {} role(s) at k={}; report in {}",
        report.models.len(),
        report.roles.len(),
        config.k,
        out.display()
    );
    Ok(())
}

fn synth(spec: &Path, seed: Option<u64>, out: &Path, k: Option<usize>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(spec).map_err(|e| Error::from(e).at(spec))?;
    let spec_value: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::from(e).at(spec))?;
    let bundle = generate_synthetic_corpus(&spec_value, seed)?;
    let mut config = write_bundle(&bundle, k.unwrap_or(spec_value.k), out)?;
    config.seed = seed.or(spec_value.seed);
    let path = out.join("audit.json");
    std::fs::write(&path, config.to_json()).map_err(|source| Error::Output { path: path.clone(), source })?;
    println!("{}", path.display());
    Ok(())
}

fn topk(model: &str, role: &str, config: &Path, k: Option<usize>) -> anyhow::Result<()> {
    let mut config = config_from_path(config)?;
    if let Some(k) = k {
        config.k = k;
    }
    let result = debug_top_k(&config, model, role)?;
    println!("{}", result.to_json());
    Ok(())
}

fn parse_dist(arg: &str, dimension: Dimension) -> vlmaudit_core::Result<ProbVector> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Error::from(e).at(arg))?
    };
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let p = match value {
        serde_json::Value::Array(items) => items
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::InvalidDistribution(format!("not a number: {v}"))))
            .collect::<vlmaudit_core::Result<Vec<f64>>>()?,
        serde_json::Value::Object(map) => {
            let categories = dimension.categories();
            if let Some(extra) = map.keys().find(|k| !categories.iter().any(|c| c.eq_ignore_ascii_case(k))) {
                return Err(Error::CategoryMismatch(format!("unknown {} category {extra:?}", dimension.name())));
            }
            categories
                .iter()
                .map(|c| {
                    map.iter()
                        .find(|(k, _)| k.eq_ignore_ascii_case(c))
                        .map(|(_, v)| v.as_f64().ok_or_else(|| Error::InvalidDistribution(format!("not a number: {v}"))))
                        .unwrap_or(Ok(0.0))
                })
                .collect::<vlmaudit_core::Result<Vec<f64>>>()?
        }
        other => return Err(Error::InvalidDistribution(format!("expected an array or object, got {other}"))),
    };
    ProbVector::new(dimension, p)
}

fn score(dist: &str, dimension: &str) -> anyhow::Result<()> {
    let dimension: Dimension = dimension.parse()?;
    let p = parse_dist(dist, dimension)?;
    let s = bias_against_uniform(&p);
    let out = serde_json::json!({
        "dimension": dimension.name(),
        "categories": p.categories(),
        "p": p.p,
        "nats": s.nats,
        "normalized": s.normalized,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Audit(args) => audit(args)?,
        Command::Validate { paths } => {
            let checks = validate_paths(&paths);
            print!("{}", render_checks(&checks));
            if !all_passed(&checks) {
                return Ok(ExitCode::from(ErrorClass::Data.exit_code()));
            }
        }
        Command::Synth { spec, seed, out, k } => synth(&spec, seed, &out, k)?,
        Command::Topk { model, role, config, k } => topk(&model, &role, &config, k)?,
        Command::Score { dist, dimension } => score(&dist, &dimension)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ErrorClass::Usage.exit_code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let class = match err.downcast_ref::<Error>() {
                Some(e) => {
                    eprintln!("error [{}]: {e:#}", e.kind());
                    e.class()
                }
                None => {
                    eprintln!("error: {err:#}");
                    ErrorClass::Internal
                }
            };
            ExitCode::from(class.exit_code())
        }
    }
}
