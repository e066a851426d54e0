use super::{SelectError, SelectionProblem, SelectionSolution, SolveMethod};

/// Depth-first branch and bound. Candidates are visited in ascending `v`
/// per category and only strict improvements replace the incumbent, so ties
/// resolve to the lexicographically smallest choice vector.
pub fn solve_branch_and_bound(problem: &SelectionProblem) -> Result<SelectionSolution, SelectError> {
    problem.check_feasible()?;
    let n = problem.n_categories();
    let budget = problem.budget();
    let mut suffix_stock = vec![0.0; n + 1];
    let mut suffix_loss = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_stock[i] = suffix_stock[i + 1] + problem.stock[i].iter().copied().fold(f64::INFINITY, f64::min);
        suffix_loss[i] = suffix_loss[i + 1] + problem.loss[i].iter().copied().fold(f64::INFINITY, f64::min);
    }

    let mut search = Search {
        problem,
        budget,
        loss_slack: 1e-12 * budget.abs().max(1.0),
        suffix_stock,
        suffix_loss,
        current: vec![0; n],
        best: None,
        nodes: 0,
    };
    search.descend(0, 0.0, 0.0);
    let (choice, _) = search.best.clone().ok_or(SelectError::Infeasible {
        min_loss: problem.min_total_loss(),
        budget,
    })?;
    let mut sol = SelectionSolution::from_choice(problem, choice, SolveMethod::BranchAndBound);
    sol.iterations = search.nodes;
    sol.dual_bound = Some(sol.objective_value);
    Ok(sol)
}

struct Search<'a> {
    problem: &'a SelectionProblem,
    budget: f64,
    loss_slack: f64,
    suffix_stock: Vec<f64>,
    suffix_loss: Vec<f64>,
    current: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
    nodes: usize,
}

impl Search<'_> {
    fn descend(&mut self, i: usize, stock: f64, loss: f64) {
        self.nodes += 1;
        if i == self.current.len() {
            if loss <= self.budget && self.best.as_ref().is_none_or(|(_, b)| stock < *b) {
                self.best = Some((self.current.clone(), stock));
            }
            return;
        }
        for k in 0..self.problem.n_options() {
            let s = stock + self.problem.stock[i][k];
            let l = loss + self.problem.loss[i][k];
            if l + self.suffix_loss[i + 1] > self.budget + self.loss_slack {
                continue;
            }
            if let Some((_, b)) = &self.best {
                let bound = s + self.suffix_stock[i + 1];
                if bound > *b + 1e-12 * b.abs().max(1.0) {
                    continue;
                }
            }
            self.current[i] = k;
            self.descend(i + 1, s, l);
        }
    }
}
