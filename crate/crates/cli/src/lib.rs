//! Argument parsing and dispatch for the `replen` binary.
//!
//! Each subcommand runs one pipeline stage against an output directory.
//! Stages find their inputs there by fixed file name, so a run is a
//! sequence of invocations sharing `--out`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use replen::eval::{self, cli_stages, EvalError, ExperimentConfig, ReportRow};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "REPLEN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "replen", version, about = "Simulation-guided replenishment pipeline")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Directory holding every stage's artifacts.
    #[arg(long, global = true, value_name = "DIR", env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or load the demand panel (skus.csv, demand.csv).
    Gen,
    /// Tabulate selection parameters for the first train epoch (params.csv).
    Params,
    /// Calibrate the loss budget and write labels (labels.csv).
    Labels,
    /// Pretrain the policy network on the labels.
    Pretrain,
    /// Fine-tune the pretrained network.
    Finetune,
    /// Run every configured method on the test split and write the report.
    Eval,
    /// Print a previously written report.csv.
    Report,
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 2 on a usage error, 1 on any other failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("replen: {msg}");
            1
        }
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), EvalError> {
    if let Command::Report = cli.command {
        return print_report(&cli_stages::report(&cli.out)?, out);
    }
    let cfg = eval::load_config(cli.config.as_deref(), cli.seed)?;
    let dir = cli.out.as_path();
    match cli.command {
        Command::Gen => {
            let exp = eval::stage_gen(&cfg, dir)?;
            say(out, dir, format_args!("{} skus, {} days", exp.panel.skus.len(), exp.panel.horizon_days))
        }
        Command::Params => {
            cli_stages::params(&cfg, dir)?;
            say(out, dir, format_args!("wrote {}", eval::PARAMS_FILE))
        }
        Command::Labels => labels(&cfg, dir, out),
        Command::Pretrain => {
            cli_stages::pretrain(&cfg, dir)?;
            say(out, dir, format_args!("wrote {}", eval::PRETRAINED_FILE))
        }
        Command::Finetune => {
            let r = cli_stages::finetune(&cfg, dir)?;
            say(out, dir, format_args!("wrote {} (best step {})", eval::FINETUNED_FILE, r.best_step))
        }
        Command::Eval => {
            let report = cli_stages::eval(&cfg, dir)?;
            print_report(&report.rows, out)
        }
        Command::Report => unreachable!("handled above"),
    }
}

fn labels(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<(), EvalError> {
    let s = cli_stages::labels(cfg, dir)?;
    let achieved = s.achieved_turnover.map_or("NA".to_string(), |t| format!("{t:.3}"));
    say(out, dir, format_args!("alpha {:.6}, turnover {achieved} days, {} probes", s.alpha, s.probes.len()))
}

fn say(out: &mut dyn Write, dir: &Path, msg: std::fmt::Arguments<'_>) -> Result<(), EvalError> {
    writeln!(out, "{}: {msg}", dir.display()).map_err(stdout_err)
}

fn print_report(rows: &[ReportRow], out: &mut dyn Write) -> Result<(), EvalError> {
    eval::write_report_csv(rows, &mut *out).map_err(|e| stdout_err(e.into()))
}

fn stdout_err(e: std::io::Error) -> EvalError {
    EvalError::Io { path: "<stdout>".into(), source: e }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_and_flag_are_usage_errors() {
        assert_eq!(cli_main(["replen", "frobnicate"]), 2);
        assert_eq!(cli_main(["replen", "gen", "--bogus"]), 2);
        assert_eq!(cli_main(["replen"]), 2);
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from(["replen", "eval", "--seed", "3", "--out", "d", "--config", "c.toml"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.out, PathBuf::from("d"));
        assert_eq!(cli.config, Some(PathBuf::from("c.toml")));
        assert!(matches!(cli.command, Command::Eval));
    }

    #[test]
    fn unreadable_config_fails_without_usage_code() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.toml");
        let out = dir.path().join("o");
        let code = cli_main(["replen".as_ref(), "gen".as_ref(), "--config".as_ref(), missing.as_os_str(), "--out".as_ref(), out.as_os_str()]);
        assert_eq!(code, 1);
    }
}
