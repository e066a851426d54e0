//! Invariants checked on generated inputs against the reference
//! implementations in `replen::oracles`.

use proptest::prelude::*;

use replen::baselines::{gamma_cdf, gamma_quantile, normal_cdf, normal_quantile};
use replen::datagen::{SkuRecord, ValueClass, VolatilityClass};
use replen::eval::{parse_report_csv, write_report_csv, ReportRow};
use replen::oracles::{enumerate_selection, replay_simulator};
use replen::rloo::{loo_advantages, loo_baselines};
use replen::select::{
    pareto_sweep, solve_exact, solve_lagrangian, LabelRow, LabelSet, SelectError, SelectionProblem, SolverKind,
    SolverOptions,
};
use replen::sim::{
    evaluate_candidate, review_days, simulate_policy, CandidateGrid, DemandTrace, InitialInventory, MetricSet,
    SimConfig,
};
use replen::Cents;

fn sku_strategy() -> impl Strategy<Value = SkuRecord> {
    (1i64..500, 1i64..5, 0u32..6, 1u32..8).prop_map(|(cost, markup, vlt, nrt)| SkuRecord {
        sku_id: "s".into(),
        category_id: "c".into(),
        unit_cost: Cents(cost),
        unit_price: Cents(cost * markup),
        vlt_days: vlt,
        nrt_days: nrt,
        volatility_class: VolatilityClass::Y,
        value_class: ValueClass::B,
    })
}

fn sim_strategy(days: usize) -> impl Strategy<Value = SimConfig> {
    (0u64..60, 1usize..15, prop::option::of(0.0f64..20.0), 0u32..7, any::<bool>()).prop_map(
        move |(units, window, pin, offset, cover)| SimConfig {
            horizon_days: days,
            initial_inventory: if cover { InitialInventory::DaysOfCover(units as f64 / 8.0) } else { InitialInventory::Units(units) },
            demand_avg_window: window,
            avg_demand_override: pin,
            review_offset: offset,
        },
    )
}

/// Stock increasing and loss decreasing in the candidate index, with ties.
fn problem_strategy() -> impl Strategy<Value = SelectionProblem> {
    (1usize..=5, 0u32..=4)
        .prop_flat_map(|(n, span)| {
            let m = span as usize + 1;
            let row = (prop::collection::vec(0u32..20, m), prop::collection::vec(0u32..20, m));
            (Just(span), prop::collection::vec(row, n), 0.0f64..1.0)
        })
        .prop_map(|(span, rows, frac)| {
            let mut stock = Vec::new();
            let mut loss = Vec::new();
            for (ds, dl) in rows {
                let s: Vec<f64> = ds.iter().scan(0.0, |a, &d| { *a += d as f64; Some(*a) }).collect();
                let total: f64 = dl.iter().map(|&d| d as f64).sum();
                let l: Vec<f64> = dl.iter().scan(total, |a, &d| { *a -= d as f64; Some(*a + 1.0) }).collect();
                stock.push(s);
                loss.push(l);
            }
            let min: f64 = loss.iter().map(|r| r.last().copied().unwrap()).sum();
            let max: f64 = loss.iter().map(|r| r[0]).sum();
            SelectionProblem {
                grid: CandidateGrid::new(2, 2 + span).unwrap(),
                stock,
                loss,
                sale_total: 2.0 * (min + frac * (max - min)),
                alpha_loss: 0.5,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn simulator_matches_replay_and_conserves_units(
        (sku, demand, cfg) in (sku_strategy(), prop::collection::vec(0u32..30, 1..60))
            .prop_flat_map(|(sku, d)| { let n = d.len(); (Just(sku), Just(d), sim_strategy(n)) }),
        pool in prop::collection::vec(1u32..15, 60),
    ) {
        let trace = DemandTrace::new(&demand);
        let decisions = &pool[..review_days(&trace, &sku, &cfg)];
        let main = simulate_policy(&trace, &sku, decisions, &cfg).unwrap();
        let oracle = replay_simulator(&trace, &sku, decisions, &cfg).unwrap();
        prop_assert_eq!(&main, &oracle);
        prop_assert!(main.check_conservation(&demand).is_ok());
    }

    #[test]
    fn constant_decisions_equal_candidate_evaluation(
        sku in sku_strategy(),
        demand in prop::collection::vec(0u32..30, 1..60),
        v in 1u32..15,
    ) {
        let cfg = SimConfig { horizon_days: demand.len(), demand_avg_window: 5, ..SimConfig::default() };
        let trace = DemandTrace::new(&demand);
        let grid = CandidateGrid::new(1, 15).unwrap();
        let a = evaluate_candidate(&trace, &sku, v, &grid, &cfg).unwrap();
        let b = simulate_policy(&trace, &sku, &vec![v; review_days(&trace, &sku, &cfg)], &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn exact_solver_matches_enumeration(p in problem_strategy()) {
        match (solve_exact(&p), enumerate_selection(&p)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.objective_value, b.objective_value);
                prop_assert!(a.total_loss <= p.budget() + 1e-9);
                let lag = solve_lagrangian(&p).unwrap();
                prop_assert!(lag.total_loss <= p.budget() + 1e-9);
                prop_assert!(lag.objective_value >= a.objective_value - 1e-9);
            }
            (Err(SelectError::Infeasible { .. }), Err(SelectError::Infeasible { .. })) => {}
            (a, b) => prop_assert!(false, "solver {:?} vs oracle {:?}", a, b),
        }
    }

    #[test]
    fn sweep_objective_is_monotone_in_alpha(p in problem_strategy()) {
        let alphas: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let out = pareto_sweep(&p, &alphas, SolverKind::Exact, &SolverOptions::default()).unwrap();
        let mut last = f64::NEG_INFINITY;
        let mut infeasible = false;
        for e in &out {
            match &e.result {
                Ok(s) => {
                    prop_assert!(!infeasible, "feasible after infeasible at alpha {}", e.alpha);
                    prop_assert!(s.objective_value >= last);
                    last = s.objective_value;
                }
                Err(_) => infeasible = true,
            }
        }
    }

    #[test]
    fn loo_advantages_sum_to_zero_and_ignore_shifts(
        returns in prop::collection::vec(-100.0f64..100.0, 2..9),
        shift in -1e3f64..1e3,
    ) {
        let adv = loo_advantages(&returns);
        prop_assert!(adv.iter().sum::<f64>().abs() < 1e-9);
        let base = loo_baselines(&returns);
        let diff: f64 = returns.iter().zip(&base).map(|(r, b)| r - b).sum();
        prop_assert!(diff.abs() < 1e-9);
        let shifted: Vec<f64> = returns.iter().map(|r| r + shift).collect();
        for (a, b) in adv.iter().zip(loo_advantages(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf(p in 1e-6f64..(1.0 - 1e-6)) {
        let x = normal_quantile(p).unwrap();
        prop_assert!((normal_cdf(x) - p).abs() < 1e-9);
    }

    #[test]
    fn gamma_quantile_inverts_cdf(shape in 0.2f64..60.0, scale in 0.05f64..20.0, p in 1e-4f64..0.9999) {
        let x = gamma_quantile(shape, scale, p).unwrap();
        prop_assert!((gamma_cdf(x, shape, scale) - p).abs() < 1e-7);
    }

    #[test]
    fn report_rows_keep_accounting_identity(
        rows in prop::collection::vec((0i64..1_000_000_000, 0i64..1_000_000_000, 0.0f64..1.0, prop::option::of(0.0f64..90.0)), 1..6),
    ) {
        let rows: Vec<ReportRow> = rows
            .iter()
            .enumerate()
            .map(|(i, &(h, s, rate, t))| {
                let m = MetricSet { turnover_days: t, instock_rate: rate, holding_cost: Cents(h), stockout_cost: Cents(s), total_cost: Cents(h + s) };
                ReportRow::new(&format!("BM_{}", i + 1), &m)
            })
            .collect();
        let mut buf = Vec::new();
        write_report_csv(&rows, &mut buf).unwrap();
        let back = parse_report_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.total_cost, a.holding_cost + a.stockout_cost);
            prop_assert_eq!(a.total_cost, b.total_cost);
        }
    }

    #[test]
    fn label_csv_round_trips(rows in prop::collection::vec(("[a-z]{1,6}", 0usize..400, 1u32..=21, 0.0f64..=1.0), 0..12)) {
        let grid = CandidateGrid::new(1, 21).unwrap();
        let set = LabelSet {
            rows: rows
                .into_iter()
                .map(|(c, e, v, a)| LabelRow { category_id: c, epoch_start_day: e, v_days: v, alpha_used: a })
                .collect(),
        };
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        prop_assert_eq!(LabelSet::parse_csv(buf.as_slice(), &grid).unwrap(), set);
    }
}
