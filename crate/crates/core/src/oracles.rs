//! Reference implementations for tests. Nothing here calls into the main
//! solver, simulator or distribution code; only plain data types are shared.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datagen::SkuRecord;
use crate::money::Cents;
use crate::select::{SelectError, SelectionProblem, SelectionSolution, SolveMethod};
use crate::sim::{DemandTrace, InitialInventory, InventoryState, PendingOrder, SimConfig, SimError, SimOutcome};

pub const ENUMERATION_CAP: f64 = 1e7;

/// One main-path versus oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub case_id: String,
    pub main_value: f64,
    pub oracle_value: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Passes iff the deviation is within `tolerance`, taken relative to
    /// `max(|oracle|, 1)`.
    pub fn compare(case_id: impl Into<String>, main_value: f64, oracle_value: f64, tolerance: f64) -> Self {
        let abs_deviation = (main_value - oracle_value).abs();
        let rel_deviation = abs_deviation / oracle_value.abs().max(1e-300);
        let pass = abs_deviation <= tolerance * oracle_value.abs().max(1.0) || main_value == oracle_value;
        OracleReport { case_id: case_id.into(), main_value, oracle_value, abs_deviation, rel_deviation, tolerance, pass }
    }

    /// A boolean check recorded as 1 (holds) against 1 (expected).
    pub fn check(case_id: impl Into<String>, holds: bool) -> Self {
        Self::compare(case_id, if holds { 1.0 } else { 0.0 }, 1.0, 0.0)
    }
}

pub fn write_reports<W: Write>(mut out: W, reports: &[OracleReport]) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Full enumeration in lexicographic order of the choice vector; the first
/// strictly best feasible selection wins.
pub fn enumerate_selection(problem: &SelectionProblem) -> Result<SelectionSolution, SelectError> {
    let n = problem.stock.len();
    let m = (problem.grid.max_days - problem.grid.min_days + 1) as usize;
    let combos = (m as f64).powi(n as i32);
    if combos > ENUMERATION_CAP {
        return Err(SelectError::TooLarge { combinations: combos });
    }
    let budget = problem.sale_total * (1.0 - problem.alpha_loss);
    let mut idx = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64, f64)> = None;
    loop {
        let mut stock = 0.0;
        let mut loss = 0.0;
        for (i, &k) in idx.iter().enumerate() {
            stock += problem.stock[i][k];
            loss += problem.loss[i][k];
        }
        if loss <= budget && best.as_ref().is_none_or(|b| stock < b.1) {
            best = Some((idx.clone(), stock, loss));
        }
        // Odometer with the last category varying fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                let Some((choice, objective_value, total_loss)) = best else {
                    let mut min_loss = 0.0;
                    for row in &problem.loss {
                        let mut lo = f64::INFINITY;
                        for &x in row {
                            if x < lo {
                                lo = x;
                            }
                        }
                        min_loss += lo;
                    }
                    return Err(SelectError::Infeasible { min_loss, budget });
                };
                return Ok(SelectionSolution {
                    chosen_days: choice.iter().map(|&k| problem.grid.min_days + k as u32).collect(),
                    choice,
                    objective_value,
                    total_loss,
                    optimality_gap: 0.0,
                    dual_bound: Some(objective_value),
                    method: SolveMethod::Enumeration,
                    iterations: combos as usize,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn replay_quantity(v: u32, cfg: &SimConfig, series: &[u32], start: usize, day: usize) -> u64 {
    if let Some(d) = cfg.avg_demand_override {
        return (v as f64 * d + 0.5).floor() as u64;
    }
    let w = cfg.demand_avg_window;
    let (lo, hi) = if day >= w {
        (day - w, day)
    } else if start > 0 {
        (start.saturating_sub(w), start)
    } else {
        (0, w.min(series.len()))
    };
    let mut total: u64 = 0;
    for d in lo..hi {
        total += series[d] as u64;
    }
    let count = (hi - lo) as u64;
    if count == 0 {
        return 0;
    }
    let num = v as u64 * total;
    let q = num / count;
    if 2 * (num % count) >= count { q + 1 } else { q }
}

/// Naive day loop of the lost-sales simulator from the configured initial
/// inventory. Decisions are consumed one per review day.
pub fn replay_simulator(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    decisions: &[u32],
    cfg: &SimConfig,
) -> Result<SimOutcome, SimError> {
    let start_units = match cfg.initial_inventory {
        InitialInventory::Units(u) => u,
        InitialInventory::DaysOfCover(days) => {
            let avg = match cfg.avg_demand_override {
                Some(d) => d,
                None => {
                    let w = cfg.demand_avg_window;
                    let (lo, hi) = if trace.start >= w {
                        (trace.start - w, trace.start)
                    } else if trace.start > 0 {
                        (0, trace.start)
                    } else {
                        (0, w.min(trace.series.len()))
                    };
                    let s: u64 = trace.series[lo..hi].iter().map(|&x| x as u64).sum();
                    if hi == lo { 0.0 } else { s as f64 / (hi - lo) as f64 }
                }
            };
            (days * avg + 0.5).floor() as u64
        }
    };
    replay_from(trace, sku, decisions, cfg, &InventoryState { on_hand: start_units, pipeline: Vec::new() })
}

pub fn replay_from(
    trace: &DemandTrace<'_>,
    sku: &SkuRecord,
    decisions: &[u32],
    cfg: &SimConfig,
    start: &InventoryState,
) -> Result<SimOutcome, SimError> {
    let nrt = if sku.nrt_days == 0 { 1 } else { sku.nrt_days as usize };
    let lead = if sku.vlt_days == 0 { 1 } else { sku.vlt_days as usize };
    let phase = cfg.review_offset as usize % nrt;
    let mut on_hand = start.on_hand;
    let mut pipe: Vec<(usize, u64)> = start.pipeline.iter().map(|p| (p.arrival_day, p.units)).collect();
    let mut next_decision = 0;
    let mut stock_cents: i64 = 0;
    let mut lost_cents: i64 = 0;
    let mut out = SimOutcome {
        stock_value: Cents(0),
        lost_sales_value: Cents(0),
        inventory_trace: vec![],
        lost_trace: vec![],
        sold_trace: vec![],
        arrival_trace: vec![],
        order_trace: vec![],
        on_order_trace: vec![],
        demand_units_total: 0,
        sold_units_total: 0,
        ordered_units_total: 0,
        instock_days: 0,
        avg_inventory_units: 0.0,
        start_state: start.clone(),
        end_state: InventoryState::default(),
    };
    if trace.len == 0 {
        return Err(SimError::Domain("empty trace".into()));
    }
    for day in trace.start..trace.start + trace.len {
        let mut arrived = 0;
        let mut keep = Vec::new();
        for &(a, u) in &pipe {
            if a <= day {
                arrived += u;
            } else {
                keep.push((a, u));
            }
        }
        pipe = keep;
        on_hand += arrived;

        let d = trace.series[day] as u64;
        let (sold, lost) = if d > on_hand { (on_hand, d - on_hand) } else { (d, 0) };
        on_hand -= sold;
        stock_cents += sku.unit_cost.0 * on_hand as i64;
        lost_cents += sku.unit_price.0 * lost as i64;

        let mut ordered = 0;
        if day % nrt == phase {
            let v = *decisions
                .get(next_decision)
                .ok_or(SimError::Rule { day, message: "decisions exhausted".into() })?;
            next_decision += 1;
            ordered = replay_quantity(v, cfg, trace.series, trace.start, day);
            if ordered > 0 {
                pipe.push((day + lead, ordered));
            }
        }
        out.inventory_trace.push(on_hand);
        out.lost_trace.push(lost);
        out.sold_trace.push(sold);
        out.arrival_trace.push(arrived);
        out.order_trace.push(ordered);
        out.on_order_trace.push(pipe.iter().map(|p| p.1).sum());
        out.demand_units_total += d;
        out.sold_units_total += sold;
        out.ordered_units_total += ordered;
        if lost == 0 {
            out.instock_days += 1;
        }
    }
    if next_decision != decisions.len() {
        return Err(SimError::Domain(format!("{} decisions, {next_decision} review days", decisions.len())));
    }
    out.stock_value = Cents(stock_cents);
    out.lost_sales_value = Cents(lost_cents);
    let total: u64 = out.inventory_trace.iter().sum();
    out.avg_inventory_units = total as f64 / trace.len as f64;
    pipe.sort_by_key(|p| p.0);
    out.end_state = InventoryState {
        on_hand,
        pipeline: pipe.into_iter().map(|(arrival_day, units)| PendingOrder { arrival_day, units }).collect(),
    };
    Ok(out)
}

/// Central-difference gradient.
pub fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Vec<f64> {
    let mut x = params.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        g.push((up - down) / (2.0 * eps));
    }
    g
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Standard normal CDF by quadrature of the density.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if x >= 0.0 {
        0.5 + simpson(pdf, 0.0, x, 20_000)
    } else {
        0.5 - simpson(pdf, 0.0, -x, 20_000)
    }
}

/// Bisection inverse of [`normal_cdf_quadrature`].
pub fn normal_quantile_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_quadrature(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gamma(shape, scale) CDF by quadrature. For shape < 1 the substitution
/// `x = u^(1/shape)` removes the singularity at zero; otherwise the density
/// is integrated directly, scaled by its mode to stay in range. The
/// normalizer is the same integral taken far into the tail, so no gamma
/// function is needed.
pub fn gamma_cdf_quadrature(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let tail = shape + 40.0 * shape.sqrt() + 60.0;
    let z = x / scale;
    if z >= tail {
        return 1.0;
    }
    let partial = |z: f64| {
        if shape < 1.0 {
            simpson(|u: f64| (-(u.powf(1.0 / shape))).exp(), 0.0, z.powf(shape), 40_000)
        } else {
            let m = shape - 1.0;
            let log_mode = if m > 0.0 { m * m.ln() - m } else { 0.0 };
            let density = |t: f64| if t <= 0.0 { if m == 0.0 { 1.0 } else { 0.0 } } else { (m * t.ln() - t - log_mode).exp() };
            simpson(density, 0.0, z, 200_000)
        }
    };
    (partial(z) / partial(tail)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::tests::one_row;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut f = |x: &[f64]| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1];
        let g = fd_gradient(&mut f, &[1.5, -2.0], 1e-4);
        assert!((g[0] - (6.0 * 1.5 + 4.0)).abs() < 1e-9);
        assert!((g[1] - (-3.0 - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn normal_quadrature_hits_known_quantile() {
        assert!((normal_quantile_bisection(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_cdf_quadrature(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_quadrature_matches_exponential() {
        for &x in &[0.1, 1.0, 2.5, 7.0] {
            let exact = 1.0 - (-x / 2.0f64).exp();
            assert!((gamma_cdf_quadrature(x, 1.0, 2.0) - exact).abs() < 1e-9, "x = {x}");
        }
        let erlang2 = |x: f64| 1.0 - (-x).exp() * (1.0 + x);
        assert!((gamma_cdf_quadrature(3.0, 2.0, 1.0) - erlang2(3.0)).abs() < 1e-9);
    }

    #[test]
    fn enumeration_single_row_and_limits() {
        let p = one_row(vec![3.0, 6.0, 9.0], vec![10.0, 4.0, 1.0], 5.0);
        assert_eq!(enumerate_selection(&p).unwrap().choice, vec![1]);
        let infeasible = one_row(vec![3.0], vec![10.0], 5.0);
        assert!(matches!(enumerate_selection(&infeasible), Err(SelectError::Infeasible { .. })));
        let mut big = p.clone();
        big.stock = vec![vec![0.0; 3]; 20];
        big.loss = vec![vec![0.0; 3]; 20];
        assert!(matches!(enumerate_selection(&big), Err(SelectError::TooLarge { .. })));
    }

    #[test]
    fn report_verdicts() {
        assert!(OracleReport::compare("a", 1.0, 1.0 + 1e-12, 1e-9).pass);
        assert!(!OracleReport::compare("b", 1.0, 1.1, 1e-9).pass);
        assert!(!OracleReport::check("c", false).pass);
        let mut buf = Vec::new();
        write_reports(&mut buf, &[OracleReport::check("d", true)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }
}
