use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Method;
use super::pipeline::{Experiment, MethodRun};
use super::EvalError;
use crate::money::Cents;
use crate::sim::{aggregate_metrics, MetricSet, SimConfig};

pub const REPORT_HEADER: &str = "method,turnover_days,instock_rate,holding_cost,stockout_cost,total_cost,relative_total_pct";
pub const DECISIONS_HEADER: &str = "sku_id,epoch_start_day,method,v_days,base_stock_units";
pub const SERIES_HEADER: &str = "method,day_index,inventory_units,lost_units";

/// Written as `NA` in CSV when absent.
const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub turnover_days: Option<f64>,
    pub instock_rate: f64,
    pub holding_cost: Cents,
    pub stockout_cost: Cents,
    /// Always `holding_cost + stockout_cost`.
    pub total_cost: Cents,
    /// `None` when the reference total is zero.
    pub relative_total_pct: Option<f64>,
}

impl ReportRow {
    pub fn new(method: &str, m: &MetricSet) -> ReportRow {
        ReportRow {
            method: method.to_string(),
            turnover_days: m.turnover_days,
            instock_rate: m.instock_rate,
            holding_cost: m.holding_cost,
            stockout_cost: m.stockout_cost,
            total_cost: m.holding_cost + m.stockout_cost,
            relative_total_pct: None,
        }
    }
}

/// Fills `relative_total_pct` against `reference`, or against the first
/// row when no row carries that name.
pub fn apply_reference(rows: &mut [ReportRow], reference: &str) {
    let Some(base) = rows.iter().find(|r| r.method == reference).or(rows.first()).map(|r| r.total_cost) else {
        return;
    };
    for r in rows.iter_mut() {
        r.relative_total_pct = if r.method == reference || r.total_cost == base {
            Some(0.0)
        } else if base.0 == 0 {
            None
        } else {
            Some((r.total_cost.0 - base.0) as f64 * 100.0 / base.0 as f64)
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub sku_id: String,
    pub epoch_start_day: usize,
    pub method: String,
    pub v_days: Option<u32>,
    /// Last base-stock level set in the epoch, for base-stock rules.
    pub base_stock_units: Option<f64>,
}

impl DecisionRow {
    pub fn days(sku: &str, day: usize, method: Method, v: u32) -> DecisionRow {
        DecisionRow { sku_id: sku.into(), epoch_start_day: day, method: method.to_string(), v_days: Some(v), base_stock_units: None }
    }

    pub fn level(sku: &str, day: usize, method: Method, level: f64) -> DecisionRow {
        DecisionRow {
            sku_id: sku.into(),
            epoch_start_day: day,
            method: method.to_string(),
            v_days: None,
            base_stock_units: Some(level),
        }
    }
}

/// Aggregate end-of-day inventory and lost units across SKUs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub method: String,
    pub day_index: usize,
    pub inventory_units: u64,
    pub lost_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    /// Hash of the resolved experiment configuration.
    pub config_hash: String,
    /// Hash of the demand panel every method consumed.
    pub panel_hash: String,
    pub seed: u64,
    pub test_days: (usize, usize),
    pub sim: SimConfig,
    pub methods: Vec<String>,
    pub reference_method: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub decisions: Vec<DecisionRow>,
    pub series: Vec<SeriesRow>,
    pub meta: ReportMeta,
}

pub fn panel_hash(exp: &Experiment) -> String {
    let mut h = Sha256::new();
    for (sku, series) in exp.panel.skus.iter().zip(&exp.panel.demand) {
        h.update(serde_json::to_vec(sku).expect("sku serializes"));
        for d in series {
            h.update(d.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Assembles rows in method order. Every run must cover the test split.
pub fn build_report(exp: &Experiment, runs: &[MethodRun]) -> Result<Report, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::Stage { stage: "eval", cause: "no methods were run".into() });
    }
    let test = exp.config.splits.test();
    let mut rows = Vec::with_capacity(runs.len());
    let mut decisions = Vec::new();
    let mut series = Vec::new();
    for run in runs {
        if let Some(o) = run.outcomes.iter().find(|o| o.days() != test.len()) {
            return Err(EvalError::Stage {
                stage: "eval",
                cause: format!("{} covered {} days, expected {}", run.method, o.days(), test.len()),
            });
        }
        let m = aggregate_metrics(&run.outcomes).map_err(|e| EvalError::Stage { stage: "eval", cause: e.to_string() })?;
        let name = run.method.to_string();
        rows.push(ReportRow::new(&name, &m));
        decisions.extend(run.decisions.iter().cloned());
        for (k, day) in test.clone().enumerate() {
            series.push(SeriesRow {
                method: name.clone(),
                day_index: day,
                inventory_units: run.outcomes.iter().map(|o| o.inventory_trace[k]).sum(),
                lost_units: run.outcomes.iter().map(|o| o.lost_trace[k]).sum(),
            });
        }
    }
    let reference = exp.config.reference_method.to_string();
    apply_reference(&mut rows, &reference);
    let meta = ReportMeta {
        config_hash: exp.config.hash(),
        panel_hash: panel_hash(exp),
        seed: exp.config.seed,
        test_days: exp.config.splits.test,
        sim: exp.config.sim.clone(),
        methods: runs.iter().map(|r| r.method.to_string()).collect(),
        reference_method: reference,
    };
    Ok(Report { rows, decisions, series, meta })
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| NA.to_string(), |v| v.to_string())
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            opt(r.turnover_days.map(|t| format!("{t:.4}"))),
            format!("{:.6}", r.instock_rate),
            r.holding_cost.to_string(),
            r.stockout_cost.to_string(),
            r.total_cost.to_string(),
            opt(r.relative_total_pct.map(|p| format!("{p:.2}"))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads report.csv back, checking the header and the accounting identity.
/// Rounded columns come back at their printed precision.
pub fn parse_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.iter().collect::<Vec<_>>().join(",");
    if header != REPORT_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    let num = |s: &str, what: &str, line: usize| -> Result<Option<f64>, String> {
        if s == NA {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(format!("line {line}: {what} {s:?} is not a number")),
        }
    };
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 7 {
            return Err(format!("line {line}: expected 7 fields, got {}", rec.len()));
        }
        let cents = |i: usize| rec[i].parse::<Cents>().map_err(|e| format!("line {line}: {e}"));
        let row = ReportRow {
            method: rec[0].to_string(),
            turnover_days: num(&rec[1], "turnover_days", line)?,
            instock_rate: num(&rec[2], "instock_rate", line)?.ok_or(format!("line {line}: instock_rate missing"))?,
            holding_cost: cents(3)?,
            stockout_cost: cents(4)?,
            total_cost: cents(5)?,
            relative_total_pct: num(&rec[6], "relative_total_pct", line)?,
        };
        if row.holding_cost.0.checked_add(row.stockout_cost.0) != Some(row.total_cost.0) {
            return Err(format!("line {line}: total_cost is not holding_cost + stockout_cost"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_decisions_csv<W: Write>(rows: &[DecisionRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECISIONS_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.sku_id.clone(),
            r.epoch_start_day.to_string(),
            r.method.clone(),
            opt(r.v_days),
            opt(r.base_stock_units.map(|s| format!("{s:.3}"))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv<W: Write>(rows: &[SeriesRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER.split(','))?;
    for r in rows {
        w.write_record([r.method.clone(), r.day_index.to_string(), r.inventory_units.to_string(), r.lost_units.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes report.csv, decisions.csv, series.csv and report.meta.json into
/// `dir`. Output depends only on `report`, so re-emission is byte-stable.
pub fn emit_report(report: &Report, dir: &Path) -> Result<(), EvalError> {
    if report.rows.is_empty() {
        return Err(EvalError::Stage { stage: "report", cause: "no rows to emit".into() });
    }
    super::ensure_dir(dir)?;
    let mut buf = Vec::new();
    write_report_csv(&report.rows, &mut buf).map_err(|e| csv_err(dir, super::REPORT_FILE, e))?;
    super::write_file(&dir.join(super::REPORT_FILE), &buf)?;
    buf.clear();
    write_decisions_csv(&report.decisions, &mut buf).map_err(|e| csv_err(dir, super::DECISIONS_FILE, e))?;
    super::write_file(&dir.join(super::DECISIONS_FILE), &buf)?;
    buf.clear();
    write_series_csv(&report.series, &mut buf).map_err(|e| csv_err(dir, super::SERIES_FILE, e))?;
    super::write_file(&dir.join(super::SERIES_FILE), &buf)?;
    super::write_json(&dir.join(super::REPORT_META_FILE), &report.meta)
}

fn csv_err(dir: &Path, file: &str, e: csv::Error) -> EvalError {
    EvalError::Stage { stage: "report", cause: format!("{}: {e}", dir.join(file).display()) }
}
