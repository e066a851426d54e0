//! Epoch-wise label generation and turnover calibration of `alpha_loss`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, SelectError, SelectionProblem, SelectionSolution, SolveMethod, SolverKind, SolverOptions};
use crate::datagen::DemandPanel;
use crate::sim::{
    aggregate_metrics, epoch_ranges, evaluate_from, initial_state, tabulate_parameters, CandidateGrid, DemandTrace,
    Grouping, InventoryState, MetricSet, SaleBasis, SimConfig, SimError, SimOutcome,
};

pub const LABELS_HEADER: &str = "category_id,epoch_start_day,v_days,alpha_used";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub category_id: String,
    pub epoch_start_day: usize,
    pub v_days: u32,
    pub alpha_used: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub rows: Vec<LabelRow>,
}

impl LabelSet {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LABELS_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.category_id.clone(),
                r.epoch_start_day.to_string(),
                r.v_days.to_string(),
                r.alpha_used.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses labels.csv, rejecting a wrong header, malformed fields,
    /// `alpha_used` outside [0, 1], `v_days` outside `grid` and duplicate
    /// (category, epoch) rows.
    pub fn parse_csv<R: Read>(input: R, grid: &CandidateGrid) -> Result<LabelSet, String> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers().map_err(|e| e.to_string())?.iter().collect::<Vec<_>>().join(",");
        if header != LABELS_HEADER {
            return Err(format!("expected header `{LABELS_HEADER}`, found `{header}`"));
        }
        let mut rows = Vec::new();
        let mut seen = HashMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let row = n + 2;
            let rec = rec.map_err(|e| format!("row {row}: {e}"))?;
            if rec.len() != 4 {
                return Err(format!("row {row}: expected 4 fields, found {}", rec.len()));
            }
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let category_id = field(0).to_string();
            if category_id.is_empty() {
                return Err(format!("row {row}: empty category_id"));
            }
            let epoch_start_day: usize = field(1).parse().map_err(|_| format!("row {row}: bad epoch_start_day"))?;
            let v_days: u32 = field(2).parse().map_err(|_| format!("row {row}: bad v_days"))?;
            let alpha_used: f64 = field(3).parse().map_err(|_| format!("row {row}: bad alpha_used"))?;
            if !grid.contains(v_days) {
                return Err(format!("row {row}: v_days {v_days} outside [{}, {}]", grid.min_days, grid.max_days));
            }
            if !(0.0..=1.0).contains(&alpha_used) {
                return Err(format!("row {row}: alpha_used {alpha_used} outside [0, 1]"));
            }
            if let Some(prev) = seen.insert((category_id.clone(), epoch_start_day), row) {
                return Err(format!("row {row}: duplicates row {prev}"));
            }
            rows.push(LabelRow { category_id, epoch_start_day, v_days, alpha_used });
        }
        Ok(LabelSet { rows })
    }

    pub fn lookup(&self) -> HashMap<(&str, usize), u32> {
        self.rows.iter().map(|r| ((r.category_id.as_str(), r.epoch_start_day), r.v_days)).collect()
    }

    /// Label of every SKU for every epoch, broadcasting group labels.
    pub fn per_sku(&self, grouping: &Grouping, epoch_starts: &[usize]) -> Result<Vec<Vec<u32>>, String> {
        let map = self.lookup();
        grouping
            .sku_group
            .iter()
            .map(|&g| {
                let id = grouping.group_ids[g].as_str();
                epoch_starts
                    .iter()
                    .map(|&e| map.get(&(id, e)).copied().ok_or_else(|| format!("no label for {id} at day {e}")))
                    .collect()
            })
            .collect()
    }
}

/// State each labeling epoch starts from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochStart {
    /// The configured initial inventory at every epoch start, making the
    /// per-epoch problems independent.
    #[default]
    Reset,
    /// The state left by the labels of the previous epoch.
    Chained,
}

/// Everything that is fixed while `alpha_loss` varies.
#[derive(Debug, Clone)]
pub struct LabelingPlan<'a> {
    pub panel: &'a DemandPanel,
    /// Global day range labeled.
    pub window: Range<usize>,
    pub grid: CandidateGrid,
    pub sim: SimConfig,
    pub grouping: Grouping,
    pub epoch_days: usize,
    pub basis: SaleBasis,
    pub solver: SolverKind,
    pub solver_options: SolverOptions,
    pub epoch_start: EpochStart,
}

impl LabelingPlan<'_> {
    pub fn epochs(&self) -> Result<Vec<Range<usize>>, SelectError> {
        let len = self.window.len();
        if self.epoch_days == 0 {
            return Err(SimError::Domain("epoch_days must be at least 1".into()).into());
        }
        if len == 0 || self.window.end > self.panel.horizon_days {
            return Err(SimError::Domain(format!("window {:?} outside panel", self.window)).into());
        }
        if self.epoch_days > len {
            return Err(SimError::Domain(format!("epoch of {} days exceeds window of {len}", self.epoch_days)).into());
        }
        Ok(epoch_ranges(self.window.clone(), self.epoch_days))
    }

    /// Per-SKU state at the window start.
    pub fn start_states(&self) -> Vec<InventoryState> {
        self.states_at(self.window.clone())
    }

    fn states_at(&self, range: Range<usize>) -> Vec<InventoryState> {
        (0..self.panel.n_skus())
            .map(|i| {
                let trace = DemandTrace::from_panel(self.panel, i, range.clone());
                initial_state(&trace, &self.sim.with_horizon(range.len()))
            })
            .collect()
    }

    /// States for the epoch `range` given the carried ones.
    fn epoch_states(&self, range: &Range<usize>, carried: &[InventoryState]) -> Vec<InventoryState> {
        match self.epoch_start {
            EpochStart::Chained => carried.to_vec(),
            EpochStart::Reset => self.states_at(range.clone()),
        }
    }

    fn join(&self, segments: Vec<Vec<SimOutcome>>) -> Result<Vec<SimOutcome>, SimError> {
        let f = match self.epoch_start {
            EpochStart::Chained => SimOutcome::concat,
            EpochStart::Reset => SimOutcome::join,
        };
        segments.into_iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub epoch_start_day: usize,
    pub alpha: f64,
    pub method: SolveMethod,
    pub objective_value: f64,
    pub total_loss: f64,
    pub budget: f64,
    pub optimality_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LabelRun {
    pub alpha: f64,
    pub labels: LabelSet,
    pub epoch_starts: Vec<usize>,
    /// Label per SKU per epoch.
    pub sku_days: Vec<Vec<u32>>,
    /// Per epoch, the state of every SKU when the epoch starts.
    pub epoch_states: Vec<Vec<InventoryState>>,
    /// Trajectory per SKU over the whole window. With reset epochs the
    /// segments are joined without continuity between them.
    pub outcomes: Vec<SimOutcome>,
    pub metrics: MetricSet,
    pub diagnostics: Vec<SolveDiagnostics>,
    pub solutions: Vec<SelectionSolution>,
}

/// Labels every epoch of the plan at `alpha`. Each epoch is tabulated and
/// simulated from the state given by the plan's [`EpochStart`].
pub fn generate_labels(plan: &LabelingPlan<'_>, alpha: f64) -> Result<LabelRun, SelectError> {
    let epochs = plan.epochs()?;
    let n = plan.panel.n_skus();
    let mut states = plan.start_states();
    let mut segments: Vec<Vec<SimOutcome>> = vec![Vec::with_capacity(epochs.len()); n];
    let mut sku_days = vec![Vec::with_capacity(epochs.len()); n];
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut solutions = Vec::new();
    let mut epoch_states = Vec::with_capacity(epochs.len());

    for range in &epochs {
        states = plan.epoch_states(range, &states);
        epoch_states.push(states.clone());
        let cfg = plan.sim.with_horizon(range.len());
        let table =
            tabulate_parameters(plan.panel, range.clone(), &plan.grid, &cfg, &plan.grouping, plan.basis, Some(&states))?;
        let problem = SelectionProblem::from_params(&table, alpha);
        let sol = solve(&problem, plan.solver, &plan.solver_options)?;
        for (g, id) in plan.grouping.group_ids.iter().enumerate() {
            rows.push(LabelRow {
                category_id: id.clone(),
                epoch_start_day: range.start,
                v_days: sol.chosen_days[g],
                alpha_used: alpha,
            });
        }
        diagnostics.push(SolveDiagnostics {
            epoch_start_day: range.start,
            alpha,
            method: sol.method,
            objective_value: sol.objective_value,
            total_loss: sol.total_loss,
            budget: problem.budget(),
            optimality_gap: sol.optimality_gap,
            iterations: sol.iterations,
        });

        let outs = (0..n)
            .into_par_iter()
            .map(|i| {
                let v = sol.chosen_days[plan.grouping.sku_group[i]];
                let trace = DemandTrace::from_panel(plan.panel, i, range.clone());
                evaluate_from(&trace, &plan.panel.skus[i], v, &cfg, &states[i]).map(|o| (v, o))
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        for (i, (v, o)) in outs.into_iter().enumerate() {
            states[i] = o.end_state.clone();
            sku_days[i].push(v);
            segments[i].push(o);
        }
        solutions.push(sol);
    }

    let outcomes = plan.join(segments)?;
    let metrics = aggregate_metrics(&outcomes)?;
    Ok(LabelRun {
        alpha,
        labels: LabelSet { rows },
        epoch_starts: epochs.iter().map(|r| r.start).collect(),
        sku_days,
        epoch_states,
        outcomes,
        metrics,
        diagnostics,
        solutions,
    })
}

/// Runs the plan's epochs under a given label set instead of solving.
/// Group labels are broadcast to member SKUs; `alpha` is informational.
pub fn replay_labels(plan: &LabelingPlan<'_>, labels: &LabelSet) -> Result<LabelRun, SelectError> {
    let epochs = plan.epochs()?;
    let starts: Vec<usize> = epochs.iter().map(|r| r.start).collect();
    let sku_days = labels.per_sku(&plan.grouping, &starts).map_err(SelectError::Invalid)?;
    let n = plan.panel.n_skus();
    let mut states = plan.start_states();
    let mut segments: Vec<Vec<SimOutcome>> = vec![Vec::with_capacity(epochs.len()); n];
    let mut epoch_states = Vec::with_capacity(epochs.len());
    for (e, range) in epochs.iter().enumerate() {
        states = plan.epoch_states(range, &states);
        epoch_states.push(states.clone());
        let cfg = plan.sim.with_horizon(range.len());
        let outs = (0..n)
            .into_par_iter()
            .map(|i| {
                let trace = DemandTrace::from_panel(plan.panel, i, range.clone());
                plan.grid.check(sku_days[i][e])?;
                evaluate_from(&trace, &plan.panel.skus[i], sku_days[i][e], &cfg, &states[i])
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        for (i, o) in outs.into_iter().enumerate() {
            states[i] = o.end_state.clone();
            segments[i].push(o);
        }
    }
    let outcomes = plan.join(segments)?;
    let metrics = aggregate_metrics(&outcomes)?;
    Ok(LabelRun {
        alpha: labels.rows.first().map_or(f64::NAN, |r| r.alpha_used),
        labels: labels.clone(),
        epoch_starts: starts,
        sku_days,
        epoch_states,
        outcomes,
        metrics,
        diagnostics: Vec::new(),
        solutions: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub max_iter: usize,
    pub alpha_tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { max_iter: 20, alpha_tol: 2f64.powi(-20) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    /// `None` when infeasible or when there was no demand.
    pub turnover: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub run: LabelRun,
    pub achieved_turnover: Option<f64>,
    pub probes: Vec<Probe>,
    pub warning: Option<String>,
}

/// Searches `alpha_loss` in [0, 1] so that the pooled turnover of the
/// chained, labeled policy matches `target`. The midpoint is probed first,
/// then both endpoints, then the bracket is bisected. Infeasible probes
/// count as infinite turnover. The best probe seen is returned when the
/// tolerance is not met.
pub fn calibrate_alpha(
    plan: &LabelingPlan<'_>,
    target: f64,
    tol: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult, SelectError> {
    if !target.is_finite() || target < 0.0 || tol.is_nan() || tol < 0.0 {
        return Err(SelectError::Invalid(format!("target {target} / tolerance {tol} invalid")));
    }
    plan.epochs()?;
    let mut probes = Vec::new();
    let mut best: Option<(f64, LabelRun)> = None;
    let mut probe = |alpha: f64, probes: &mut Vec<Probe>| -> Result<f64, SelectError> {
        let turnover = match generate_labels(plan, alpha) {
            Ok(run) => {
                let t = run.metrics.turnover_days.unwrap_or(f64::INFINITY);
                let dist = (t - target).abs();
                if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                    best = Some((dist, run));
                }
                t
            }
            Err(SelectError::Infeasible { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        probes.push(Probe { alpha, turnover: turnover.is_finite().then_some(turnover) });
        Ok(turnover)
    };

    let hit = |t: f64| (t - target).abs() <= tol;
    let mut warning = None;
    let max_iter = opts.max_iter.max(1);

    let f_mid = probe(0.5, &mut probes)?;
    'search: {
        if hit(f_mid) || probes.len() >= max_iter {
            break 'search;
        }
        let f0 = probe(0.0, &mut probes)?;
        if hit(f0) {
            break 'search;
        }
        let f1 = probe(1.0, &mut probes)?;
        if hit(f1) {
            break 'search;
        }
        let (lo_t, hi_t) = (f0.min(f1), f0.max(f1));
        if target < lo_t || target > hi_t {
            warning = Some(format!(
                "target turnover {target} not bracketed by [{f0}, {f1}] on alpha in [0, 1]; using nearest probe"
            ));
            break 'search;
        }
        let increasing = f1 >= f0;
        let below = |t: f64| if increasing { t < target } else { t > target };
        let (mut lo, mut hi) = if below(f_mid) { (0.5, 1.0) } else { (0.0, 0.5) };
        while hi - lo > opts.alpha_tol {
            if probes.len() >= max_iter {
                warning = Some(format!("no alpha within {tol} days of target after {} probes", probes.len()));
                break 'search;
            }
            let mid = 0.5 * (lo + hi);
            let f = probe(mid, &mut probes)?;
            if hit(f) {
                break 'search;
            }
            if below(f) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        warning = Some(format!("alpha bracket narrowed below {} without meeting tolerance", opts.alpha_tol));
    }

    // A hit is always the best probe, so the chosen run is the nearest one.
    let (_, run) = best.ok_or_else(|| SelectError::Infeasible { min_loss: f64::NAN, budget: f64::NAN })?;
    if let Some(w) = &warning {
        log::debug!("{w}");
    }
    Ok(CalibrationResult {
        alpha: run.alpha,
        achieved_turnover: run.metrics.turnover_days,
        run,
        probes,
        warning,
    })
}
