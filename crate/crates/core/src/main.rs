use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmont::config::{parse_real_list, parse_seed, ConfigLoadError};
use qmont::{emit_report, run_audit, AuditKind, CampaignConfig, OutputFormat};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "qmont",
    version,
    about = "Audit quantum Montgomery-type identities and inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every selected audit kind (all by default).
    Audit(Opts),
    /// Montgomery identity residuals.
    Identity(Opts),
    /// Closed-form versus series moment audit.
    Moments(Opts),
    /// Inequality verdicts.
    Ineq(Opts),
    /// Classical-limit probes.
    Limits(Opts),
    /// Built-in counterexample regressions.
    Regression(Opts),
}

#[derive(Args)]
struct Opts {
    /// Campaign file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat any violation as failure.
    #[arg(long)]
    strict: bool,
    /// Seed of the sampled convexity checks.
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated q grid.
    #[arg(long)]
    q: Option<String>,
    /// Comma-separated r values.
    #[arg(long)]
    r: Option<String>,
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("qmont: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn build_config(opts: &Opts, kind: Option<AuditKind>) -> Result<CampaignConfig, ExitCode> {
    let mut cfg = match &opts.config {
        Some(path) => CampaignConfig::from_file(path).map_err(|e| match e {
            ConfigLoadError::Io(msg) => {
                eprintln!("qmont: cannot read config: {msg}");
                ExitCode::from(EXIT_IO)
            }
            ConfigLoadError::Invalid(e) => usage(e),
        })?,
        None => CampaignConfig::default(),
    };
    if let Some(k) = kind {
        cfg.audit_kinds = vec![k];
    }
    if let Some(f) = &opts.format {
        cfg.format = f.parse::<OutputFormat>().map_err(usage)?;
    }
    if let Some(out) = &opts.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = &opts.seed {
        cfg.seed = parse_seed(seed).map_err(usage)?;
    }
    if let Some(q) = &opts.q {
        cfg.q_grid = parse_real_list("--q", q).map_err(usage)?;
    }
    if let Some(r) = &opts.r {
        cfg.r_values = parse_real_list("--r", r).map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (opts, kind) = match &cli.command {
        Command::Audit(o) => (o, None),
        Command::Identity(o) => (o, Some(AuditKind::Identity)),
        Command::Moments(o) => (o, Some(AuditKind::Moments)),
        Command::Ineq(o) => (o, Some(AuditKind::Inequalities)),
        Command::Limits(o) => (o, Some(AuditKind::Limits)),
        Command::Regression(o) => (o, Some(AuditKind::Regression)),
    };
    let cfg = match build_config(opts, kind) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let report = match run_audit(&cfg) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };
    if let Err(e) = emit_report(&report, cfg.format, cfg.out.as_deref()) {
        eprintln!("qmont: {e}");
        return ExitCode::from(EXIT_IO);
    }
    for (kind, s) in &report.summary.by_kind {
        eprintln!(
            "{kind}: {} records, {} passed, {} failed, {} malformed, {}/{} asserted failed",
            s.records, s.passed, s.failed, s.malformed, s.asserted_failed, s.asserted
        );
    }
    ExitCode::from(report.exit_code(opts.strict) as u8)
}
