use super::{SelectError, SelectionProblem, SelectionSolution, SolveMethod};

const BISECTIONS: usize = 100;
/// Pairwise exchanges are tried only below this many `categories * candidates`.
const SWAP_CELL_CAP: usize = 600;

/// Per-category minimizer of `stock + lambda * loss`; ties go to smaller
/// loss, then smaller `v`.
fn pick(problem: &SelectionProblem, lambda: f64) -> Vec<usize> {
    (0..problem.n_categories())
        .map(|i| {
            let score = |k: usize| problem.stock[i][k] + lambda * problem.loss[i][k];
            (0..problem.n_options())
                .min_by(|&a, &b| {
                    score(a)
                        .total_cmp(&score(b))
                        .then(problem.loss[i][a].total_cmp(&problem.loss[i][b]))
                        .then(a.cmp(&b))
                })
                .unwrap_or(0)
        })
        .collect()
}

fn min_loss_choice(problem: &SelectionProblem) -> Vec<usize> {
    (0..problem.n_categories())
        .map(|i| {
            (0..problem.n_options())
                .min_by(|&a, &b| {
                    problem.loss[i][a]
                        .total_cmp(&problem.loss[i][b])
                        .then(problem.stock[i][a].total_cmp(&problem.stock[i][b]))
                        .then(a.cmp(&b))
                })
                .unwrap_or(0)
        })
        .collect()
}

/// Lagrangian dual `g(lambda) = sum_i min_k (stock + lambda * loss) - lambda * budget`,
/// a lower bound on the optimum for every `lambda >= 0`.
pub fn dual_value(problem: &SelectionProblem, lambda: f64) -> f64 {
    let inner: f64 = (0..problem.n_categories())
        .map(|i| {
            (0..problem.n_options())
                .map(|k| problem.stock[i][k] + lambda * problem.loss[i][k])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, |a, b| a + b);
    inner - lambda * problem.budget()
}

fn feasible(problem: &SelectionProblem, choice: &[usize]) -> bool {
    problem.evaluate(choice).1 <= problem.budget()
}

/// Greedily lowers loss until the choice meets the budget, taking the move
/// with the largest loss reduction per unit of added stock.
pub fn repair(problem: &SelectionProblem, mut choice: Vec<usize>) -> Vec<usize> {
    let budget = problem.budget();
    loop {
        let (_, loss) = problem.evaluate(&choice);
        if loss <= budget {
            return choice;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, &c) in choice.iter().enumerate() {
            for k in 0..problem.n_options() {
                let dl = problem.loss[i][c] - problem.loss[i][k];
                if dl <= 0.0 {
                    continue;
                }
                let ds = problem.stock[i][k] - problem.stock[i][c];
                let ratio = if ds <= 0.0 { f64::INFINITY } else { dl / ds };
                if best.is_none_or(|(r, _, _)| ratio > r) {
                    best = Some((ratio, i, k));
                }
            }
        }
        match best {
            Some((_, i, k)) => choice[i] = k,
            None => return min_loss_choice(problem),
        }
    }
}

/// Feasibility-preserving local search: best single replacement, then best
/// pairwise exchange on small instances, until no move lowers the objective.
fn improve(problem: &SelectionProblem, mut choice: Vec<usize>) -> Vec<usize> {
    let budget = problem.budget();
    let m = problem.n_options();
    let pairs = problem.n_categories() * m <= SWAP_CELL_CAP;
    let (mut obj, mut loss) = problem.evaluate(&choice);
    loop {
        let eps = 1e-12 * obj.abs().max(1.0);
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        for (i, &c) in choice.iter().enumerate() {
            for k in 0..m {
                let ds = problem.stock[i][k] - problem.stock[i][c];
                let dl = problem.loss[i][k] - problem.loss[i][c];
                if ds < -eps && loss + dl <= budget && best.as_ref().is_none_or(|(b, _)| ds < *b) {
                    best = Some((ds, vec![(i, k)]));
                }
            }
        }
        if best.is_none() && pairs {
            for i in 0..choice.len() {
                for j in i + 1..choice.len() {
                    for ki in 0..m {
                        for kj in 0..m {
                            let ds = problem.stock[i][ki] - problem.stock[i][choice[i]] + problem.stock[j][kj]
                                - problem.stock[j][choice[j]];
                            let dl = problem.loss[i][ki] - problem.loss[i][choice[i]] + problem.loss[j][kj]
                                - problem.loss[j][choice[j]];
                            if ds < -eps && loss + dl <= budget && best.as_ref().is_none_or(|(b, _)| ds < *b) {
                                best = Some((ds, vec![(i, ki), (j, kj)]));
                            }
                        }
                    }
                }
            }
        }
        let Some((_, moves)) = best else { return choice };
        let mut next = choice.clone();
        for (i, k) in moves {
            next[i] = k;
        }
        let (o, l) = problem.evaluate(&next);
        if l > budget || o >= obj {
            return choice;
        }
        choice = next;
        obj = o;
        loss = l;
    }
}

/// Bisection on the multiplier of the loss constraint followed by repair
/// and local search. The best dual value seen certifies the gap.
pub fn solve_lagrangian(problem: &SelectionProblem) -> Result<SelectionSolution, SelectError> {
    problem.check_feasible()?;
    let budget = problem.budget();
    let x0 = pick(problem, 0.0);
    let mut best_dual = dual_value(problem, 0.0);
    let mut iterations = 1;
    if feasible(problem, &x0) {
        let mut sol = SelectionSolution::from_choice(problem, x0, SolveMethod::Lagrangian);
        sol.dual_bound = Some(best_dual.min(sol.objective_value));
        sol.iterations = iterations;
        return Ok(sol);
    }

    let mut hi = 1.0;
    let mut hi_choice = pick(problem, hi);
    while !feasible(problem, &hi_choice) && hi < 1e300 {
        hi *= 2.0;
        hi_choice = pick(problem, hi);
        best_dual = best_dual.max(dual_value(problem, hi));
        iterations += 1;
    }
    if !feasible(problem, &hi_choice) {
        hi_choice = min_loss_choice(problem);
    }
    let mut lo = 0.0;
    for _ in 0..BISECTIONS {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let x = pick(problem, mid);
        best_dual = best_dual.max(dual_value(problem, mid));
        iterations += 1;
        if feasible(problem, &x) {
            hi = mid;
            hi_choice = x;
        } else {
            lo = mid;
        }
    }

    let from_hi = improve(problem, hi_choice);
    let from_lo = improve(problem, repair(problem, pick(problem, lo)));
    let (a, b) = (problem.evaluate(&from_hi), problem.evaluate(&from_lo));
    let choice = if b.1 <= budget && (b.0 < a.0 || (b.0 == a.0 && from_lo < from_hi)) || a.1 > budget {
        from_lo
    } else {
        from_hi
    };
    let mut sol = SelectionSolution::from_choice(problem, choice, SolveMethod::Lagrangian);
    let dual = best_dual.min(sol.objective_value);
    sol.dual_bound = Some(dual);
    sol.optimality_gap =
        if sol.objective_value > 0.0 { ((sol.objective_value - dual) / sol.objective_value).max(0.0) } else { 0.0 };
    sol.iterations = iterations;
    Ok(sol)
}
