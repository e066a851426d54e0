//! Multiple-choice selection of inventory days per category.
//!
//! Each category picks exactly one candidate `v`; the objective is total
//! holding value and the single side constraint caps total lost-sales value
//! at `SALE * (1 - alpha_loss)`.

mod dp;
mod exact;
mod labels;
mod lagrangian;

use serde::{Deserialize, Serialize};

use crate::sim::{CandidateGrid, ParamTable};

pub use dp::solve_dp;
pub use exact::solve_branch_and_bound;
pub use labels::{
    calibrate_alpha, generate_labels, replay_labels, EpochStart, CalibrationOptions, CalibrationResult, LabelRow, LabelRun, LabelSet,
    LabelingPlan, Probe, SolveDiagnostics, LABELS_HEADER,
};
pub use lagrangian::{dual_value, repair, solve_lagrangian};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectError {
    #[error("invalid selection problem: {0}")]
    Invalid(String),
    #[error("infeasible: minimum attainable loss {min_loss} exceeds budget {budget}")]
    Infeasible { min_loss: f64, budget: f64 },
    #[error("instance too large for enumeration: {combinations} combinations")]
    TooLarge { combinations: f64 },
    #[error("alphas must be sorted ascending")]
    Unsorted,
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProblem {
    pub grid: CandidateGrid,
    /// `stock[i][k]`: holding value of category `i` at candidate index `k`.
    pub stock: Vec<Vec<f64>>,
    pub loss: Vec<Vec<f64>>,
    pub sale_total: f64,
    pub alpha_loss: f64,
}

impl SelectionProblem {
    /// Builds a problem from a tabulated parameter table, in currency units.
    pub fn from_params(table: &ParamTable, alpha_loss: f64) -> SelectionProblem {
        let conv = |m: &Vec<Vec<crate::money::Cents>>| m.iter().map(|r| r.iter().map(|c| c.as_units()).collect()).collect();
        SelectionProblem {
            grid: table.grid,
            stock: conv(&table.stock),
            loss: conv(&table.loss),
            sale_total: table.sale_total.as_units(),
            alpha_loss,
        }
    }

    pub fn with_alpha(&self, alpha_loss: f64) -> SelectionProblem {
        SelectionProblem { alpha_loss, ..self.clone() }
    }

    pub fn n_categories(&self) -> usize {
        self.stock.len()
    }

    pub fn n_options(&self) -> usize {
        self.grid.len()
    }

    pub fn budget(&self) -> f64 {
        self.sale_total * (1.0 - self.alpha_loss)
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        let bad = |m: String| Err(SelectError::Invalid(m));
        if !(0.0..=1.0).contains(&self.alpha_loss) {
            return bad(format!("alpha_loss {} outside [0, 1]", self.alpha_loss));
        }
        if !(self.sale_total.is_finite() && self.sale_total >= 0.0) {
            return bad("sale_total must be finite and nonnegative".into());
        }
        if self.stock.len() != self.loss.len() {
            return bad("stock and loss disagree on category count".into());
        }
        for (i, (s, l)) in self.stock.iter().zip(&self.loss).enumerate() {
            if s.len() != self.n_options() || l.len() != self.n_options() {
                return bad(format!("category {i}: rows must have {} entries", self.n_options()));
            }
            if s.iter().chain(l).any(|x| !x.is_finite()) {
                return bad(format!("category {i}: non-finite coefficient"));
            }
        }
        Ok(())
    }

    /// Smallest total loss any selection can reach, summed in category order.
    pub fn min_total_loss(&self) -> f64 {
        self.loss.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).fold(0.0, |a, b| a + b)
    }

    pub(crate) fn check_feasible(&self) -> Result<(), SelectError> {
        self.validate()?;
        let min_loss = self.min_total_loss();
        let budget = self.budget();
        if self.n_categories() > 0 && min_loss > budget {
            return Err(SelectError::Infeasible { min_loss, budget });
        }
        Ok(())
    }

    /// Objective and loss of a choice vector, summed in category order.
    pub fn evaluate(&self, choice: &[usize]) -> (f64, f64) {
        choice.iter().enumerate().fold((0.0, 0.0), |(s, l), (i, &k)| (s + self.stock[i][k], l + self.loss[i][k]))
    }

    /// Number of full selections, as a float to avoid overflow.
    pub fn combinations(&self) -> f64 {
        (self.n_options() as f64).powi(self.n_categories() as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Enumeration,
    BranchAndBound,
    Dp,
    Lagrangian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSolution {
    /// Chosen candidate index per category.
    pub choice: Vec<usize>,
    pub chosen_days: Vec<u32>,
    pub objective_value: f64,
    pub total_loss: f64,
    /// Certified relative gap to a lower bound; zero for exact methods.
    pub optimality_gap: f64,
    pub dual_bound: Option<f64>,
    pub method: SolveMethod,
    pub iterations: usize,
}

impl SelectionSolution {
    pub fn from_choice(problem: &SelectionProblem, choice: Vec<usize>, method: SolveMethod) -> Self {
        let (objective_value, total_loss) = problem.evaluate(&choice);
        SelectionSolution {
            chosen_days: choice.iter().map(|&k| problem.grid.value_at(k)).collect(),
            choice,
            objective_value,
            total_loss,
            optimality_gap: 0.0,
            dual_bound: None,
            method,
            iterations: 0,
        }
    }

    /// One-hot indicator rows.
    pub fn indicator(&self, n_options: usize) -> Vec<Vec<u8>> {
        self.choice
            .iter()
            .map(|&k| (0..n_options).map(|j| u8::from(j == k)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Exact below the size caps, Lagrangian above.
    #[default]
    Auto,
    Exact,
    Dp,
    Lagrangian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Largest number of full selections searched by branch and bound.
    pub exhaustive_cap: f64,
    /// Loss grid steps per budget in the DP.
    pub dp_resolution: usize,
    /// Largest `categories * candidates` handled by the DP under `Auto`.
    pub dp_cell_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { exhaustive_cap: 2.0e6, dp_resolution: 10_000, dp_cell_cap: 50_000 }
    }
}

/// Globally optimal selection: branch and bound when the instance is small
/// enough, otherwise the loss-discretized DP.
pub fn solve_exact(problem: &SelectionProblem) -> Result<SelectionSolution, SelectError> {
    solve_exact_with(problem, &SolverOptions::default())
}

pub fn solve_exact_with(problem: &SelectionProblem, opts: &SolverOptions) -> Result<SelectionSolution, SelectError> {
    if problem.combinations() <= opts.exhaustive_cap {
        solve_branch_and_bound(problem)
    } else {
        solve_dp(problem, opts.dp_resolution)
    }
}

pub fn solve(problem: &SelectionProblem, kind: SolverKind, opts: &SolverOptions) -> Result<SelectionSolution, SelectError> {
    match kind {
        SolverKind::Exact => solve_exact_with(problem, opts),
        SolverKind::Dp => solve_dp(problem, opts.dp_resolution),
        SolverKind::Lagrangian => solve_lagrangian(problem),
        SolverKind::Auto => {
            if problem.combinations() <= opts.exhaustive_cap {
                solve_branch_and_bound(problem)
            } else if problem.n_categories() * problem.n_options() <= opts.dp_cell_cap {
                solve_dp(problem, opts.dp_resolution)
            } else {
                solve_lagrangian(problem)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub alpha: f64,
    pub result: Result<SelectionSolution, SelectError>,
}

/// Solves `base` at every alpha. Infeasible points are reported per entry.
pub fn pareto_sweep(
    base: &SelectionProblem,
    alphas: &[f64],
    kind: SolverKind,
    opts: &SolverOptions,
) -> Result<Vec<SweepEntry>, SelectError> {
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(SelectError::Unsorted);
    }
    base.validate()?;
    Ok(alphas
        .iter()
        .map(|&alpha| SweepEntry { alpha, result: solve(&base.with_alpha(alpha), kind, opts) })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn one_row(stock: Vec<f64>, loss: Vec<f64>, budget: f64) -> SelectionProblem {
        SelectionProblem {
            grid: CandidateGrid::new(1, stock.len() as u32).unwrap(),
            stock: vec![stock],
            loss: vec![loss],
            sale_total: budget,
            alpha_loss: 0.0,
        }
    }

    /// Stock rising and loss falling in `v`, with noise.
    pub(crate) fn random_problem(seed: u64, max_cats: usize, max_span: u32) -> SelectionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=max_cats);
        let span = rng.random_range(0..=max_span);
        let grid = CandidateGrid::new(3, 3 + span).unwrap();
        let mut stock = Vec::new();
        let mut loss = Vec::new();
        for _ in 0..n {
            let scale = rng.random_range(10.0..100.0);
            let mut s = 0.0;
            let mut l = rng.random_range(50.0..200.0) * scale / 50.0;
            let (mut srow, mut lrow) = (Vec::new(), Vec::new());
            for _ in 0..grid.len() {
                s += rng.random_range(0.0..1.0) * scale;
                l *= rng.random_range(0.3..1.0);
                srow.push(s);
                lrow.push(l);
            }
            stock.push(srow);
            loss.push(lrow);
        }
        let min: f64 = loss.iter().map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min)).sum();
        let max: f64 = loss.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).sum();
        let budget = min + rng.random_range(0.0..1.0) * (max - min);
        SelectionProblem { grid, stock, loss, sale_total: budget * 2.0, alpha_loss: 0.5 }
    }

    #[test]
    fn single_category_enumeration_case() {
        let p = one_row(vec![3.0, 6.0, 9.0], vec![10.0, 4.0, 1.0], 5.0);
        let s = solve_exact(&p).unwrap();
        assert_eq!(s.choice, vec![1]);
        assert_eq!(s.objective_value, 6.0);
        assert_eq!(s.indicator(3), vec![vec![0, 1, 0]]);
    }

    #[test]
    fn inactive_budget_picks_min_stock() {
        let mut p = random_problem(3, 5, 5);
        p.alpha_loss = 0.0;
        p.sale_total = p.loss.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).sum::<f64>() + 1.0;
        let s = solve_exact(&p).unwrap();
        for (i, &k) in s.choice.iter().enumerate() {
            let min = p.stock[i].iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(p.stock[i][k], min);
        }
    }

    #[test]
    fn infeasible_reports_min_loss() {
        let p = one_row(vec![1.0, 2.0], vec![5.0, 4.0], 3.0);
        match solve_exact(&p) {
            Err(SelectError::Infeasible { min_loss, budget }) => {
                assert_eq!(min_loss, 4.0);
                assert_eq!(budget, 3.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(solve_lagrangian(&p), Err(SelectError::Infeasible { .. })));
        assert!(matches!(solve_dp(&p, 100), Err(SelectError::Infeasible { .. })));
    }

    #[test]
    fn sweep_is_monotone_and_pure() {
        let base = random_problem(11, 5, 4);
        let alphas = [0.0, 0.2, 0.4, 0.4, 0.6, 0.8, 0.9];
        let out = pareto_sweep(&base, &alphas, SolverKind::Exact, &SolverOptions::default()).unwrap();
        let feasible: Vec<_> = out.iter().filter_map(|e| e.result.as_ref().ok()).collect();
        for w in feasible.windows(2) {
            assert!(w[1].objective_value >= w[0].objective_value);
        }
        assert_eq!(out[2].result, out[3].result);
        assert!(matches!(
            pareto_sweep(&base, &[0.5, 0.1], SolverKind::Exact, &SolverOptions::default()),
            Err(SelectError::Unsorted)
        ));
    }

    #[test]
    fn alpha_zero_budget_is_sale() {
        let base = random_problem(5, 3, 3);
        let out = pareto_sweep(&base, &[0.0], SolverKind::Auto, &SolverOptions::default()).unwrap();
        let sol = out[0].result.as_ref().unwrap();
        assert!(sol.total_loss <= base.sale_total);
    }

    #[test]
    fn validation_catches_shape_errors() {
        let mut p = one_row(vec![1.0, 2.0], vec![1.0, 0.5], 3.0);
        p.loss[0].pop();
        assert!(matches!(solve_exact(&p), Err(SelectError::Invalid(_))));
        let q = SelectionProblem { alpha_loss: 1.5, ..one_row(vec![1.0], vec![1.0], 1.0) };
        assert!(q.validate().is_err());
    }
}
