//! Trace-driven replenishment simulator.
//!
//! Each simulated day runs, in order: order arrivals, demand realization
//! under lost sales, cost accumulation on post-demand stock, and (on review
//! days) the ordering decision. Review days are the global day indices
//! `t` with `t % nrt == offset % nrt`.

use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{DemandPanel, SkuRecord};
use crate::money::Cents;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rule error on day {day}: {message}")]
    Rule { day: usize, message: String },
}

/// Integer inventory-days candidates `min_days..=max_days`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub min_days: u32,
    pub max_days: u32,
}

impl CandidateGrid {
    pub fn new(min_days: u32, max_days: u32) -> Result<Self, SimError> {
        if min_days < 1 || min_days > max_days {
            return Err(SimError::Domain(format!("grid [{min_days}, {max_days}] needs 1 <= L <= U")));
        }
        Ok(CandidateGrid { min_days, max_days })
    }

    pub fn len(&self) -> usize {
        (self.max_days - self.min_days + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.min_days..=self.max_days).contains(&v)
    }

    pub fn index_of(&self, v: u32) -> Option<usize> {
        self.contains(v).then(|| (v - self.min_days) as usize)
    }

    pub fn value_at(&self, index: usize) -> u32 {
        self.min_days + index as u32
    }

    pub fn values(&self) -> impl Iterator<Item = u32> {
        self.min_days..=self.max_days
    }

    pub fn check(&self, v: u32) -> Result<(), SimError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(SimError::Domain(format!("v = {v} outside grid [{}, {}]", self.min_days, self.max_days)))
        }
    }
}

impl Default for CandidateGrid {
    fn default() -> Self {
        CandidateGrid { min_days: 3, max_days: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialInventory {
    Units(u64),
    /// Multiple of the average daily demand estimate at horizon start.
    DaysOfCover(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub horizon_days: usize,
    pub initial_inventory: InitialInventory,
    /// Trailing window (days) for the average-demand estimate behind `Q = v * d`.
    pub demand_avg_window: usize,
    /// Pins the average-demand estimate instead of the trailing mean.
    pub avg_demand_override: Option<f64>,
    /// Phase of the review calendar.
    pub review_offset: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon_days: 30,
            initial_inventory: InitialInventory::DaysOfCover(7.0),
            demand_avg_window: 28,
            avg_demand_override: None,
            review_offset: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon_days == 0 {
            return Err(SimError::Domain("horizon_days must be at least 1".into()));
        }
        if self.demand_avg_window == 0 {
            return Err(SimError::Domain("demand_avg_window must be at least 1".into()));
        }
        if let Some(d) = self.avg_demand_override {
            if !(d.is_finite() && d >= 0.0) {
                return Err(SimError::Domain("avg_demand_override must be finite and nonnegative".into()));
            }
        }
        if let InitialInventory::DaysOfCover(d) = self.initial_inventory {
            if !(d.is_finite() && d >= 0.0) {
                return Err(SimError::Domain("initial days of cover must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn with_horizon(&self, horizon_days: usize) -> SimConfig {
        SimConfig { horizon_days, ..self.clone() }
    }

    pub fn is_review_day(&self, sku: &SkuRecord, day: usize) -> bool {
        let nrt = sku.nrt_days.max(1) as usize;
        day % nrt == self.review_offset as usize % nrt
    }
}

/// A window of one SKU's demand series. Days before `start` are history
/// available to the ordering rule; `start` is also the global day index of
/// the first simulated day.
#[derive(Debug, Clone, Copy)]
pub struct DemandTrace<'a> {
    pub series: &'a [u32],
    pub start: usize,
    pub len: usize,
}

impl<'a> DemandTrace<'a> {
    /// Whole slice as the horizon, no history.
    pub fn new(days: &'a [u32]) -> Self {
        DemandTrace { series: days, start: 0, len: days.len() }
    }

    pub fn from_panel(panel: &'a DemandPanel, sku: usize, days: Range<usize>) -> Self {
        DemandTrace::window(&panel.demand[sku], days)
    }

    pub fn window(series: &'a [u32], days: Range<usize>) -> Self {
        let end = days.end.min(series.len());
        let start = days.start.min(end);
        DemandTrace { series, start, len: end - start }
    }

    pub fn days(&self) -> &'a [u32] {
        &self.series[self.start..self.start + self.len]
    }

    pub fn demand_total(&self) -> u64 {
        self.days().iter().map(|&d| d as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PendingOrder {
    /// Global day index on which the units are added to stock.
    pub arrival_day: usize,
    pub units: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InventoryState {
    pub on_hand: u64,
    pub pipeline: Vec<PendingOrder>,
}

impl InventoryState {
    pub fn on_hand(units: u64) -> Self {
        InventoryState { on_hand: units, pipeline: Vec::new() }
    }

    pub fn on_order(&self) -> u64 {
        self.pipeline.iter().map(|p| p.units).sum()
    }

    pub fn position(&self) -> u64 {
        self.on_hand + self.on_order()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Sum over days of unit cost times post-demand on-hand stock.
    pub stock_value: Cents,
    /// Sum over days of unit price times lost units.
    pub lost_sales_value: Cents,
    pub inventory_trace: Vec<u64>,
    pub lost_trace: Vec<u64>,
    pub sold_trace: Vec<u64>,
    pub arrival_trace: Vec<u64>,
    pub order_trace: Vec<u64>,
    /// Units in the pipeline at the end of each day.
    pub on_order_trace: Vec<u64>,
    pub demand_units_total: u64,
    pub sold_units_total: u64,
    pub ordered_units_total: u64,
    pub instock_days: usize,
    pub avg_inventory_units: f64,
    pub start_state: InventoryState,
    pub end_state: InventoryState,
}

impl SimOutcome {
    pub fn days(&self) -> usize {
        self.inventory_trace.len()
    }

    pub fn avg_demand_units(&self) -> f64 {
        if self.days() == 0 {
            0.0
        } else {
            self.demand_units_total as f64 / self.days() as f64
        }
    }

    /// Checks per-day flow balance and end-of-horizon pipeline conservation
    /// against the demand that produced this outcome.
    pub fn check_conservation(&self, demand: &[u32]) -> Result<(), String> {
        if demand.len() != self.days() {
            return Err(format!("trace has {} days, outcome {}", demand.len(), self.days()));
        }
        let mut prev = self.start_state.on_hand;
        for (t, &d) in demand.iter().enumerate() {
            let (sold, lost) = (self.sold_trace[t], self.lost_trace[t]);
            if sold + lost != d as u64 {
                return Err(format!("day {t}: sold {sold} + lost {lost} != demand {d}"));
            }
            let expect = prev + self.arrival_trace[t];
            if expect < sold || expect - sold != self.inventory_trace[t] {
                return Err(format!("day {t}: inventory balance broken"));
            }
            prev = self.inventory_trace[t];
        }
        let supplied = self.start_state.position() + self.ordered_units_total;
        let accounted = self.end_state.position() + self.sold_units_total;
        if supplied != accounted {
            return Err(format!("pipeline: supplied {supplied} != sold + on hand + on order {accounted}"));
        }
        if self.end_state.on_hand != prev {
            return Err("end on-hand differs from last inventory".into());
        }
        Ok(())
    }
}

/// What an ordering rule sees on a review day, after that day's demand.
#[derive(Debug, Clone, Copy)]
pub struct ReviewContext<'a> {
    pub day: usize,
    pub on_hand: u64,
    pub on_order: u64,
    /// Demand strictly before `day`, starting at global day 0.
    pub history: &'a [u32],
    pub today: u32,
    /// Global day index of the first simulated day.
    pub horizon_start: usize,
}

impl ReviewContext<'_> {
    pub fn position(&self) -> u64 {
        self.on_hand + self.on_order
    }
}

pub trait OrderRule {
    /// Called at the start of every simulated day, before arrivals.
    fn begin_day(&mut self, _day: usize, _state: &InventoryState, _history: &[u32]) -> Result<(), SimError> {
        Ok(())
    }

    /// Units to order on a review day.
    fn order(&mut self, ctx: &ReviewContext<'_>) -> Result<u64, SimError>;
}

/// Trailing mean of demand before `pos` as an exact (sum, count) pair.
///
/// With fewer than `window` prior days the estimate freezes at its value at
/// horizon start: the mean of whatever history precedes `start`, or the
/// first `window` horizon days when there is none.
pub fn demand_estimate(series: &[u32], start: usize, pos: usize, window: usize) -> (u64, u64) {
    let sum = |s: &[u32]| s.iter().map(|&d| d as u64).sum::<u64>();
    if pos >= window {
        return (sum(&series[pos - window..pos]), window as u64);
    }
    if start > 0 {
        let from = start.saturating_sub(window);
        let slice = &series[from..start];
        return (sum(slice), slice.len() as u64);
    }
    let slice = &series[..window.min(series.len())];
    (sum(slice), slice.len() as u64)
}

/// `round_half_up(v * sum / count)` in exact integer arithmetic.
pub fn days_to_units(v: u32, sum: u64, count: u64) -> u64 {
    if count == 0 {
        return 0;
    }
    (2 * v as u64 * sum + count) / (2 * count)
}

/// Converts inventory days to an order quantity under `cfg`.
pub fn order_quantity(v: u32, cfg: &SimConfig, series: &[u32], start: usize, pos: usize) -> u64 {
    match cfg.avg_demand_override {
        Some(d) => (v as f64 * d + 0.5).floor() as u64,
        None => {
            let (sum, count) = demand_estimate(series, start, pos, cfg.demand_avg_window);
            days_to_units(v, sum, count)
        }
    }
}

/// Starting state implied by `cfg.initial_inventory`.
pub fn initial_state(trace: &DemandTrace<'_>, cfg: &SimConfig) -> InventoryState {
    match cfg.initial_inventory {
        InitialInventory::Units(u) => InventoryState::on_hand(u),
        InitialInventory::DaysOfCover(days) => {
            let avg = match cfg.avg_demand_override {
                Some(d) => d,
                None => {
                    let (sum, count) = demand_estimate(trace.series, trace.start, trace.start, cfg.demand_avg_window);
                    if count == 0 { 0.0 } else { sum as f64 / count as f64 }
                }
            };
            InventoryState::on_hand((days * avg + 0.5).floor() as u64)
        }
    }
}

/// Runs `rule` over `trace` starting from `start`.
pub fn run_rule(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    cfg: &SimConfig,
    start: &InventoryState,
    rule: &mut dyn OrderRule,
) -> Result<SimOutcome, SimError> {
    if trace.len == 0 {
        return Err(SimError::Domain("zero-length trace".into()));
    }
    let n = trace.len;
    let mut out = SimOutcome {
        stock_value: Cents::ZERO,
        lost_sales_value: Cents::ZERO,
        inventory_trace: Vec::with_capacity(n),
        lost_trace: Vec::with_capacity(n),
        sold_trace: Vec::with_capacity(n),
        arrival_trace: Vec::with_capacity(n),
        order_trace: Vec::with_capacity(n),
        on_order_trace: Vec::with_capacity(n),
        demand_units_total: 0,
        sold_units_total: 0,
        ordered_units_total: 0,
        instock_days: 0,
        avg_inventory_units: 0.0,
        start_state: start.clone(),
        end_state: InventoryState::default(),
    };
    let mut state = start.clone();
    state.pipeline.sort_by_key(|p| p.arrival_day);
    let lead = sku.vlt_days.max(1) as usize;

    for t in 0..n {
        let day = trace.start + t;
        rule.begin_day(day, &state, &trace.series[..day])?;

        let mut arrived = 0;
        state.pipeline.retain(|p| {
            if p.arrival_day <= day {
                arrived += p.units;
                false
            } else {
                true
            }
        });
        state.on_hand += arrived;

        let demand = trace.series[day] as u64;
        let sold = demand.min(state.on_hand);
        let lost = demand - sold;
        state.on_hand -= sold;

        out.stock_value += sku.unit_cost.times(state.on_hand);
        out.lost_sales_value += sku.unit_price.times(lost);
        if lost == 0 {
            out.instock_days += 1;
        }

        let mut ordered = 0;
        if cfg.is_review_day(sku, day) {
            let ctx = ReviewContext {
                day,
                on_hand: state.on_hand,
                on_order: state.on_order(),
                history: &trace.series[..day],
                today: trace.series[day],
                horizon_start: trace.start,
            };
            ordered = rule.order(&ctx)?;
            if ordered > 0 {
                state.pipeline.push(PendingOrder { arrival_day: day + lead, units: ordered });
            }
        }

        out.inventory_trace.push(state.on_hand);
        out.lost_trace.push(lost);
        out.sold_trace.push(sold);
        out.arrival_trace.push(arrived);
        out.order_trace.push(ordered);
        out.on_order_trace.push(state.on_order());
        out.demand_units_total += demand;
        out.sold_units_total += sold;
        out.ordered_units_total += ordered;
    }
    out.avg_inventory_units = out.inventory_trace.iter().sum::<u64>() as f64 / n as f64;
    out.end_state = state;
    Ok(out)
}

/// Orders `round(v * d)` on every review day, where `v` comes from a
/// per-review decision list.
struct DaysRule<'a> {
    decisions: &'a [u32],
    /// Whole demand series, for the frozen estimate of a trace with no
    /// prior history.
    series: &'a [u32],
    next: usize,
    cfg: &'a SimConfig,
}

impl OrderRule for DaysRule<'_> {
    fn order(&mut self, ctx: &ReviewContext<'_>) -> Result<u64, SimError> {
        let v = *self.decisions.get(self.next).ok_or_else(|| SimError::Rule {
            day: ctx.day,
            message: "ran out of decisions".into(),
        })?;
        self.next += 1;
        Ok(order_quantity(v, self.cfg, self.series, ctx.horizon_start, ctx.day))
    }
}

/// Number of review days inside the trace.
pub fn review_days(trace: &DemandTrace<'_>, sku: &SkuRecord, cfg: &SimConfig) -> usize {
    (trace.start..trace.start + trace.len).filter(|&d| cfg.is_review_day(sku, d)).count()
}

fn check_trace(trace: &DemandTrace<'_>, cfg: &SimConfig) -> Result<(), SimError> {
    cfg.validate()?;
    if trace.len == 0 {
        return Err(SimError::Domain("zero-length trace".into()));
    }
    if trace.len != cfg.horizon_days {
        return Err(SimError::Domain(format!("trace has {} days, horizon is {}", trace.len, cfg.horizon_days)));
    }
    Ok(())
}

/// Replays a constant inventory-days decision `v` over the trace.
pub fn evaluate_candidate(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    v: u32,
    grid: &CandidateGrid,
    cfg: &SimConfig,
) -> Result<SimOutcome, SimError> {
    grid.check(v)?;
    check_trace(trace, cfg)?;
    let start = initial_state(trace, cfg);
    evaluate_from(trace, sku, v, cfg, &start)
}

/// As [`evaluate_candidate`] from an explicit state, without the grid check.
pub fn evaluate_from(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    v: u32,
    cfg: &SimConfig,
    start: &InventoryState,
) -> Result<SimOutcome, SimError> {
    let decisions = vec![v; review_days(trace, sku, cfg)];
    run_rule(trace, sku, cfg, start, &mut DaysRule { decisions: &decisions, series: trace.series, next: 0, cfg })
}

/// Replays one inventory-days decision per review day.
pub fn simulate_policy(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    decisions: &[u32],
    cfg: &SimConfig,
) -> Result<SimOutcome, SimError> {
    check_trace(trace, cfg)?;
    let start = initial_state(trace, cfg);
    simulate_policy_from(trace, sku, decisions, cfg, &start)
}

pub fn simulate_policy_from(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    decisions: &[u32],
    cfg: &SimConfig,
    start: &InventoryState,
) -> Result<SimOutcome, SimError> {
    let expected = review_days(trace, sku, cfg);
    if decisions.len() != expected {
        return Err(SimError::Domain(format!(
            "{} decisions for {expected} review days",
            decisions.len()
        )));
    }
    run_rule(trace, sku, cfg, start, &mut DaysRule { decisions, series: trace.series, next: 0, cfg })
}

/// Splits `window` into consecutive epochs of `epoch_days`; the last epoch
/// may be shorter.
pub fn epoch_ranges(window: Range<usize>, epoch_days: usize) -> Vec<Range<usize>> {
    let step = epoch_days.max(1);
    (window.start..window.end).step_by(step).map(|s| s..(s + step).min(window.end)).collect()
}

/// Runs one SKU epoch by epoch, carrying the end state of each epoch into
/// the next. `run` receives the epoch index, its global day range and the
/// carried state.
pub fn chain_epochs<F>(
    epochs: &[Range<usize>],
    start: &InventoryState,
    mut run: F,
) -> Result<SimOutcome, SimError>
where
    F: FnMut(usize, Range<usize>, &InventoryState) -> Result<SimOutcome, SimError>,
{
    let mut parts = Vec::with_capacity(epochs.len());
    let mut state = start.clone();
    for (e, range) in epochs.iter().enumerate() {
        let out = run(e, range.clone(), &state)?;
        state = out.end_state.clone();
        parts.push(out);
    }
    SimOutcome::concat(parts)
}

impl SimOutcome {
    /// Joins consecutive segments of one trajectory.
    pub fn concat(parts: Vec<SimOutcome>) -> Result<SimOutcome, SimError> {
        if parts.windows(2).any(|w| w[1].start_state != w[0].end_state) {
            return Err(SimError::Domain("segments are not contiguous".into()));
        }
        SimOutcome::join(parts)
    }

    /// Concatenates segments without requiring that each starts where the
    /// previous one ended. Totals and traces are still exact sums.
    pub fn join(parts: Vec<SimOutcome>) -> Result<SimOutcome, SimError> {
        let mut iter = parts.into_iter();
        let mut acc = iter.next().ok_or_else(|| SimError::Domain("no segments to join".into()))?;
        for p in iter {
            acc.stock_value += p.stock_value;
            acc.lost_sales_value += p.lost_sales_value;
            acc.inventory_trace.extend(p.inventory_trace);
            acc.lost_trace.extend(p.lost_trace);
            acc.sold_trace.extend(p.sold_trace);
            acc.arrival_trace.extend(p.arrival_trace);
            acc.order_trace.extend(p.order_trace);
            acc.on_order_trace.extend(p.on_order_trace);
            acc.demand_units_total += p.demand_units_total;
            acc.sold_units_total += p.sold_units_total;
            acc.ordered_units_total += p.ordered_units_total;
            acc.instock_days += p.instock_days;
            acc.end_state = p.end_state;
        }
        acc.avg_inventory_units = acc.inventory_trace.iter().sum::<u64>() as f64 / acc.days().max(1) as f64;
        Ok(acc)
    }
}

/// SKU-to-group assignment used to aggregate parameter tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub group_ids: Vec<String>,
    /// Group index per panel SKU.
    pub sku_group: Vec<usize>,
}

impl Grouping {
    pub fn by_category(panel: &DemandPanel) -> Grouping {
        let group_ids = panel.categories();
        let sku_group = panel
            .skus
            .iter()
            .map(|s| group_ids.iter().position(|c| *c == s.category_id).unwrap_or(0))
            .collect();
        Grouping { group_ids, sku_group }
    }

    pub fn per_sku(panel: &DemandPanel) -> Grouping {
        Grouping {
            group_ids: panel.skus.iter().map(|s| s.sku_id.clone()).collect(),
            sku_group: (0..panel.n_skus()).collect(),
        }
    }

    /// Builds a grouping from an explicit sku_id to group map.
    pub fn from_map(panel: &DemandPanel, map: &HashMap<String, String>) -> Result<Grouping, SimError> {
        let mut group_ids: Vec<String> = Vec::new();
        let mut sku_group = Vec::with_capacity(panel.n_skus());
        for sku in &panel.skus {
            let g = map
                .get(&sku.sku_id)
                .ok_or_else(|| SimError::Domain(format!("sku {} is not mapped to a category", sku.sku_id)))?;
            let idx = match group_ids.iter().position(|x| x == g) {
                Some(i) => i,
                None => {
                    group_ids.push(g.clone());
                    group_ids.len() - 1
                }
            };
            sku_group.push(idx);
        }
        Ok(Grouping { group_ids, sku_group })
    }

    pub fn n_groups(&self) -> usize {
        self.group_ids.len()
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.sku_group.iter().enumerate().filter(move |(_, g)| **g == group).map(|(i, _)| i)
    }
}

/// How the loss budget base is valued.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaleBasis {
    /// Unit price times demand over the window; independent of the policy.
    #[default]
    DemandValue,
    /// Unit price times units sold under the largest candidate.
    FulfilledAtMax,
}

/// `stock[g][k]` and `loss[g][k]` for group `g` and candidate index `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub group_ids: Vec<String>,
    pub grid: CandidateGrid,
    pub stock: Vec<Vec<Cents>>,
    pub loss: Vec<Vec<Cents>>,
    pub sale_total: Cents,
}

pub const PARAMS_HEADER: &str = "category_id,v_days,stock_value,loss_value";

impl ParamTable {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| std::io::Error::other(e);
        w.write_record(PARAMS_HEADER.split(',')).map_err(map)?;
        for (g, id) in self.group_ids.iter().enumerate() {
            for (k, v) in self.grid.values().enumerate() {
                w.write_record([id.clone(), v.to_string(), self.stock[g][k].to_string(), self.loss[g][k].to_string()])
                    .map_err(map)?;
            }
        }
        w.flush()
    }
}

/// Tabulates holding and lost-sales value of every candidate for every
/// group over the panel days `days`. `starts`, when given, holds one
/// starting state per SKU; otherwise `cfg.initial_inventory` applies.
pub fn tabulate_parameters(
    panel: &DemandPanel,
    days: Range<usize>,
    grid: &CandidateGrid,
    cfg: &SimConfig,
    grouping: &Grouping,
    basis: SaleBasis,
    starts: Option<&[InventoryState]>,
) -> Result<ParamTable, SimError> {
    if grouping.sku_group.len() != panel.n_skus() {
        return Err(SimError::Domain(format!(
            "grouping covers {} SKUs, panel has {}",
            grouping.sku_group.len(),
            panel.n_skus()
        )));
    }
    if let Some(s) = starts {
        if s.len() != panel.n_skus() {
            return Err(SimError::Domain("one start state per SKU required".into()));
        }
    }
    let cfg = cfg.with_horizon(days.len());
    cfg.validate()?;
    if days.is_empty() || days.end > panel.horizon_days {
        return Err(SimError::Domain(format!("day range {days:?} outside panel of {} days", panel.horizon_days)));
    }

    let rows: Vec<(Vec<(Cents, Cents)>, Cents)> = (0..panel.n_skus())
        .into_par_iter()
        .map(|i| {
            let sku = &panel.skus[i];
            let trace = DemandTrace::from_panel(panel, i, days.clone());
            let start = match starts {
                Some(s) => s[i].clone(),
                None => initial_state(&trace, &cfg),
            };
            let cells = grid
                .values()
                .map(|v| evaluate_from(&trace, sku, v, &cfg, &start).map(|o| (o.stock_value, o.lost_sales_value)))
                .collect::<Result<Vec<_>, _>>()?;
            let sale = match basis {
                SaleBasis::DemandValue => sku.unit_price.times(trace.demand_total()),
                SaleBasis::FulfilledAtMax => {
                    let o = evaluate_from(&trace, sku, grid.max_days, &cfg, &start)?;
                    sku.unit_price.times(o.sold_units_total)
                }
            };
            Ok((cells, sale))
        })
        .collect::<Result<_, SimError>>()?;

    let n_groups = grouping.n_groups();
    let mut stock = vec![vec![Cents::ZERO; grid.len()]; n_groups];
    let mut loss = vec![vec![Cents::ZERO; grid.len()]; n_groups];
    let mut sale_total = Cents::ZERO;
    for (i, (cells, sale)) in rows.into_iter().enumerate() {
        let g = grouping.sku_group[i];
        for (k, (s, l)) in cells.into_iter().enumerate() {
            stock[g][k] += s;
            loss[g][k] += l;
        }
        sale_total += sale;
    }
    Ok(ParamTable { group_ids: grouping.group_ids.clone(), grid: *grid, stock, loss, sale_total })
}

/// Report metrics of one or more simulated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    /// Average inventory over average daily demand; `None` when there was
    /// no demand.
    pub turnover_days: Option<f64>,
    pub instock_rate: f64,
    pub holding_cost: Cents,
    pub stockout_cost: Cents,
    pub total_cost: Cents,
}

pub fn compute_metrics(outcome: &SimOutcome, trace: &DemandTrace<'_>) -> Result<MetricSet, SimError> {
    if trace.len != outcome.days() {
        return Err(SimError::Domain(format!("trace has {} days, outcome {}", trace.len, outcome.days())));
    }
    aggregate_metrics(std::slice::from_ref(outcome))
}

/// Sums costs, pools turnover as total average inventory over total
/// average demand, and weights in-stock rate by days.
pub fn aggregate_metrics(outcomes: &[SimOutcome]) -> Result<MetricSet, SimError> {
    if outcomes.is_empty() {
        return Err(SimError::Domain("no outcomes to aggregate".into()));
    }
    let holding: Cents = outcomes.iter().map(|o| o.stock_value).sum();
    let stockout: Cents = outcomes.iter().map(|o| o.lost_sales_value).sum();
    let inv: f64 = outcomes.iter().map(|o| o.avg_inventory_units).sum();
    let dem: f64 = outcomes.iter().map(|o| o.avg_demand_units()).sum();
    let days: usize = outcomes.iter().map(|o| o.days()).sum();
    let instock: usize = outcomes.iter().map(|o| o.instock_days).sum();
    Ok(MetricSet {
        turnover_days: (dem > 0.0).then(|| inv / dem),
        instock_rate: if days == 0 { 1.0 } else { instock as f64 / days as f64 },
        holding_cost: holding,
        stockout_cost: stockout,
        total_cost: holding + stockout,
    })
}
