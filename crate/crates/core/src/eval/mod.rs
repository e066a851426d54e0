//! Experiment configuration, the staged pipeline and method-comparison
//! reports.
//!
//! Every stage reads and writes fixed file names in one output directory so
//! the command-line tool can run stages separately; [`run_experiment`]
//! chains them in memory and writes the same files.

mod config;
mod pipeline;
mod report;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{ExperimentConfig, Granularity, LabelingConfig, Method, PanelConfig, Splits};
pub use pipeline::{Experiment, LabelStage, LabelSummary, MethodRun, Models};
pub use report::{
    apply_reference, build_report, emit_report, panel_hash, parse_report_csv, write_decisions_csv, write_report_csv,
    write_series_csv, DecisionRow, Report, ReportMeta, ReportRow, SeriesRow, DECISIONS_HEADER, REPORT_HEADER,
    SERIES_HEADER,
};

use crate::datagen::{load_panel, save_panel};
use crate::policy::PolicyNet;
use crate::rloo::FinetuneResult;
use crate::select::LabelSet;

pub const SKUS_FILE: &str = "skus.csv";
pub const DEMAND_FILE: &str = "demand.csv";
pub const PARAMS_FILE: &str = "params.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const LABELS_META_FILE: &str = "labels.meta.json";
pub const LABEL_DIAGNOSTICS_FILE: &str = "label_diagnostics.jsonl";
pub const PRETRAINED_FILE: &str = "model_pretrained.json";
pub const PRETRAIN_LOG_FILE: &str = "pretrain_log.jsonl";
pub const FINETUNED_FILE: &str = "model_finetuned.json";
pub const FINETUNE_LOG_FILE: &str = "finetune_log.jsonl";
pub const REPORT_FILE: &str = "report.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const REPORT_META_FILE: &str = "report.meta.json";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
    #[error("stage {stage} needs {} (run `{needs}` first)", path.display())]
    MissingArtifact { stage: &'static str, needs: &'static str, path: PathBuf },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::Io { path: path.display().to_string(), source: e }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EvalError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("serializable"));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

/// Reads an artifact produced by an earlier stage.
fn require(dir: &Path, file: &str, stage: &'static str, needs: &'static str) -> Result<String, EvalError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(EvalError::MissingArtifact { stage, needs, path });
    }
    std::fs::read_to_string(&path).map_err(io_err(&path))
}

/// Loads a config file; `seed` overrides the configured seed.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, EvalError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_toml_str(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Generates or loads the panel and writes it to `dir`.
pub fn stage_gen(cfg: &ExperimentConfig, dir: &Path) -> Result<Experiment, EvalError> {
    let exp = Experiment::new(cfg)?;
    ensure_dir(dir)?;
    save_panel(&exp.panel, dir).map_err(|e| EvalError::Stage { stage: "gen", cause: e.to_string() })?;
    Ok(exp)
}

/// Binds `cfg` to the panel of an earlier `gen` run in `dir`, or to the
/// configured panel directory.
pub fn open_experiment(cfg: &ExperimentConfig, dir: &Path, stage: &'static str) -> Result<Experiment, EvalError> {
    cfg.validate()?;
    let src = cfg.panel.dir.clone().unwrap_or_else(|| dir.to_path_buf());
    for f in [SKUS_FILE, DEMAND_FILE] {
        if !src.join(f).is_file() {
            return Err(EvalError::MissingArtifact { stage, needs: "gen", path: src.join(f) });
        }
    }
    let panel = load_panel(&src).map_err(|e| EvalError::Stage { stage, cause: e.to_string() })?;
    Experiment::with_panel(cfg.resolved(), panel)
}

pub fn stage_params(exp: &Experiment, dir: &Path) -> Result<(), EvalError> {
    let table = exp.params()?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(io_err(&dir.join(PARAMS_FILE)))?;
    write_file(&dir.join(PARAMS_FILE), &buf)
}

fn save_labels(stage: &LabelStage, dir: &Path) -> Result<(), EvalError> {
    let mut buf = Vec::new();
    stage
        .run
        .labels
        .write_csv(&mut buf)
        .map_err(|e| EvalError::Stage { stage: "labels", cause: e.to_string() })?;
    write_file(&dir.join(LABELS_FILE), &buf)?;
    write_json(&dir.join(LABELS_META_FILE), &stage.summary)?;
    write_jsonl(&dir.join(LABEL_DIAGNOSTICS_FILE), &stage.run.diagnostics)
}

pub fn stage_labels(exp: &Experiment, dir: &Path) -> Result<LabelStage, EvalError> {
    let stage = exp.labels()?;
    save_labels(&stage, dir)?;
    Ok(stage)
}

/// Reads labels.csv and its summary and replays the train trajectory.
pub fn load_labels(exp: &Experiment, dir: &Path, stage: &'static str) -> Result<LabelStage, EvalError> {
    let text = require(dir, LABELS_FILE, stage, "labels")?;
    let meta = require(dir, LABELS_META_FILE, stage, "labels")?;
    let bad = |e: String| EvalError::Stage { stage, cause: e };
    let set = LabelSet::parse_csv(text.as_bytes(), &exp.config.grid).map_err(|e| bad(format!("{LABELS_FILE}: {e}")))?;
    let summary: LabelSummary = serde_json::from_str(&meta).map_err(|e| bad(format!("{LABELS_META_FILE}: {e}")))?;
    exp.replay_train_labels(&set, summary)
}

fn load_model(dir: &Path, file: &str, stage: &'static str, needs: &'static str) -> Result<PolicyNet, EvalError> {
    let text = require(dir, file, stage, needs)?;
    PolicyNet::from_json(&text).map_err(|e| EvalError::Stage { stage, cause: format!("{file}: {e}") })
}

fn check_model(exp: &Experiment, net: &PolicyNet, file: &str, stage: &'static str) -> Result<(), EvalError> {
    if net.config != exp.config.net || net.features != exp.config.features {
        return Err(EvalError::Stage { stage, cause: format!("{file} was trained under a different configuration") });
    }
    Ok(())
}

pub fn stage_pretrain(exp: &Experiment, labels: &LabelStage, dir: &Path) -> Result<PolicyNet, EvalError> {
    let (net, log) = exp.pretrain(labels)?;
    write_file(&dir.join(PRETRAINED_FILE), net.to_json().as_bytes())?;
    write_jsonl(&dir.join(PRETRAIN_LOG_FILE), &log)?;
    Ok(net)
}

pub fn stage_finetune(exp: &Experiment, pretrained: &PolicyNet, labels: &LabelStage, dir: &Path) -> Result<FinetuneResult, EvalError> {
    let result = exp.finetune(pretrained, labels)?;
    write_file(&dir.join(FINETUNED_FILE), result.policy.to_json().as_bytes())?;
    write_jsonl(&dir.join(FINETUNE_LOG_FILE), &result.log)?;
    Ok(result)
}

pub fn stage_eval(exp: &Experiment, models: Models<'_>, dir: &Path) -> Result<Report, EvalError> {
    let report = exp.evaluate(models)?;
    emit_report(&report, dir)?;
    Ok(report)
}

/// Commands the CLI exposes, one per stage, each reading what earlier
/// stages left in `dir`.
pub mod cli_stages {
    use super::*;

    pub fn params(cfg: &ExperimentConfig, dir: &Path) -> Result<(), EvalError> {
        stage_params(&open_experiment(cfg, dir, "params")?, dir)
    }

    pub fn labels(cfg: &ExperimentConfig, dir: &Path) -> Result<LabelSummary, EvalError> {
        Ok(stage_labels(&open_experiment(cfg, dir, "labels")?, dir)?.summary)
    }

    pub fn pretrain(cfg: &ExperimentConfig, dir: &Path) -> Result<PolicyNet, EvalError> {
        let exp = open_experiment(cfg, dir, "pretrain")?;
        let labels = load_labels(&exp, dir, "pretrain")?;
        stage_pretrain(&exp, &labels, dir)
    }

    pub fn finetune(cfg: &ExperimentConfig, dir: &Path) -> Result<FinetuneResult, EvalError> {
        let exp = open_experiment(cfg, dir, "finetune")?;
        let labels = load_labels(&exp, dir, "finetune")?;
        let pre = load_model(dir, PRETRAINED_FILE, "finetune", "pretrain")?;
        check_model(&exp, &pre, PRETRAINED_FILE, "finetune")?;
        stage_finetune(&exp, &pre, &labels, dir)
    }

    pub fn eval(cfg: &ExperimentConfig, dir: &Path) -> Result<Report, EvalError> {
        let exp = open_experiment(cfg, dir, "eval")?;
        let summary = if exp.config.needs_labels() {
            let meta = require(dir, LABELS_META_FILE, "eval", "labels")?;
            require(dir, LABELS_FILE, "eval", "labels")?;
            Some(serde_json::from_str::<LabelSummary>(&meta).map_err(|e| EvalError::Stage {
                stage: "eval",
                cause: format!("{LABELS_META_FILE}: {e}"),
            })?)
        } else {
            None
        };
        let pre = match exp.config.methods.contains(&Method::DlPretrain) {
            true => Some(load_model(dir, PRETRAINED_FILE, "eval", "pretrain")?),
            false => None,
        };
        let fin = match exp.config.needs_finetune() {
            true => Some(load_model(dir, FINETUNED_FILE, "eval", "finetune")?),
            false => None,
        };
        for (net, file) in [(&pre, PRETRAINED_FILE), (&fin, FINETUNED_FILE)] {
            if let Some(n) = net {
                check_model(&exp, n, file, "eval")?;
            }
        }
        let models = Models { labels: summary.as_ref(), pretrained: pre.as_ref(), finetuned: fin.as_ref() };
        stage_eval(&exp, models, dir)
    }

    /// Parses report.csv from `dir`.
    pub fn report(dir: &Path) -> Result<Vec<ReportRow>, EvalError> {
        let text = require(dir, REPORT_FILE, "report", "eval")?;
        parse_report_csv(text.as_bytes()).map_err(|e| EvalError::Stage { stage: "report", cause: format!("{REPORT_FILE}: {e}") })
    }
}

/// Everything one pipeline run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: Report,
    pub labels: Option<LabelSummary>,
    pub pretrained: Option<PolicyNet>,
    pub finetuned: Option<FinetuneResult>,
}

/// Runs the whole pipeline. Stages not needed by the method list are
/// skipped. With `dir`, each stage writes its artifacts as it finishes, so
/// a failure leaves the earlier ones behind.
pub fn run_experiment(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<ExperimentOutput, EvalError> {
    let exp = match dir {
        Some(d) => stage_gen(cfg, d)?,
        None => Experiment::new(cfg)?,
    };
    if let Some(d) = dir {
        stage_params(&exp, d)?;
    }
    let labels = match exp.config.needs_labels() {
        true => Some(match dir {
            Some(d) => stage_labels(&exp, d)?,
            None => exp.labels()?,
        }),
        false => None,
    };
    let pretrained = match (&labels, exp.config.needs_pretrain()) {
        (Some(l), true) => Some(match dir {
            Some(d) => stage_pretrain(&exp, l, d)?,
            None => exp.pretrain(l)?.0,
        }),
        _ => None,
    };
    let finetuned = match (&labels, &pretrained, exp.config.needs_finetune()) {
        (Some(l), Some(p), true) => Some(match dir {
            Some(d) => stage_finetune(&exp, p, l, d)?,
            None => exp.finetune(p, l)?,
        }),
        _ => None,
    };
    let summary = labels.as_ref().map(|l| l.summary.clone());
    let models = Models {
        labels: summary.as_ref(),
        pretrained: pretrained.as_ref(),
        finetuned: finetuned.as_ref().map(|f| &f.policy),
    };
    let report = match dir {
        Some(d) => stage_eval(&exp, models, d)?,
        None => exp.evaluate(models)?,
    };
    Ok(ExperimentOutput { report, labels: summary, pretrained, finetuned })
}
