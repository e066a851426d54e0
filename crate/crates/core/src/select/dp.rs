use super::{lagrangian, SelectError, SelectionProblem, SelectionSolution, SolveMethod};

/// Multiple-choice knapsack DP over losses discretized to `budget/resolution`.
///
/// Losses are rounded up for the primal pass, which keeps every returned
/// selection feasible, and rounded down for a second pass whose optimum is
/// a lower bound on the true optimum. The reported gap compares the two.
pub fn solve_dp(problem: &SelectionProblem, resolution: usize) -> Result<SelectionSolution, SelectError> {
    problem.check_feasible()?;
    let n = problem.n_categories();
    let m = problem.n_options();
    let budget = problem.budget();
    if n == 0 {
        return Ok(SelectionSolution::from_choice(problem, Vec::new(), SolveMethod::Dp));
    }
    if budget <= 0.0 {
        return zero_budget(problem);
    }
    let cap = resolution.max(1);
    let unit = budget / cap as f64;
    let weight = |loss: f64, up: bool| -> Option<usize> {
        if loss > budget {
            return None;
        }
        let w = (loss.max(0.0) / unit).min(cap as f64);
        Some(if up { w.ceil() as usize } else { w.floor() as usize }.min(cap + 1))
    };

    const INF: f64 = f64::INFINITY;
    let mut cost = vec![INF; cap + 1];
    cost[0] = 0.0;
    let mut lower = cost.clone();
    let mut pick = vec![u16::MAX; n * (cap + 1)];
    let mut next = vec![INF; cap + 1];
    let mut next_lower = vec![INF; cap + 1];
    for i in 0..n {
        next.fill(INF);
        next_lower.fill(INF);
        for k in 0..m {
            let s = problem.stock[i][k];
            if let Some(w) = weight(problem.loss[i][k], true).filter(|&w| w <= cap) {
                for r in w..=cap {
                    let c = cost[r - w] + s;
                    if c < next[r] {
                        next[r] = c;
                        pick[i * (cap + 1) + r] = k as u16;
                    }
                }
            }
            if let Some(w) = weight(problem.loss[i][k], false).filter(|&w| w <= cap) {
                for r in w..=cap {
                    let c = lower[r - w] + s;
                    if c < next_lower[r] {
                        next_lower[r] = c;
                    }
                }
            }
        }
        std::mem::swap(&mut cost, &mut next);
        std::mem::swap(&mut lower, &mut next_lower);
    }

    let lower_bound = lower.iter().copied().fold(INF, f64::min);
    let mut best_r = None;
    for (r, &c) in cost.iter().enumerate() {
        if c.is_finite() && best_r.is_none_or(|b: usize| c < cost[b]) {
            best_r = Some(r);
        }
    }
    let Some(mut r) = best_r else {
        // Rounding up excluded every selection; fall back to repair.
        let sol = lagrangian::solve_lagrangian(problem)?;
        return Ok(SelectionSolution { method: SolveMethod::Dp, ..sol });
    };

    let mut choice = vec![0usize; n];
    for i in (0..n).rev() {
        let k = pick[i * (cap + 1) + r] as usize;
        choice[i] = k;
        let w = weight(problem.loss[i][k], true).unwrap_or(0);
        r -= w;
    }
    let (_, total_loss) = problem.evaluate(&choice);
    if total_loss > budget {
        choice = lagrangian::repair(problem, choice);
    }
    let mut sol = SelectionSolution::from_choice(problem, choice, SolveMethod::Dp);
    sol.iterations = n * m * (cap + 1);
    let lb = lower_bound.min(sol.objective_value);
    sol.dual_bound = Some(lb);
    sol.optimality_gap = if sol.objective_value > 0.0 { (sol.objective_value - lb) / sol.objective_value } else { 0.0 };
    Ok(sol)
}

fn zero_budget(problem: &SelectionProblem) -> Result<SelectionSolution, SelectError> {
    let mut choice = Vec::with_capacity(problem.n_categories());
    for i in 0..problem.n_categories() {
        let k = (0..problem.n_options())
            .filter(|&k| problem.loss[i][k] <= 0.0)
            .min_by(|&a, &b| problem.stock[i][a].total_cmp(&problem.stock[i][b]).then(a.cmp(&b)))
            .ok_or(SelectError::Infeasible { min_loss: problem.min_total_loss(), budget: problem.budget() })?;
        choice.push(k);
    }
    let mut sol = SelectionSolution::from_choice(problem, choice, SolveMethod::Dp);
    sol.dual_bound = Some(sol.objective_value);
    Ok(sol)
}
