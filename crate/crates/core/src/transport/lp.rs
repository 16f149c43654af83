//! Transportation simplex: northwest-corner start, u-v potentials, Bland's rule.

use crate::error::{Error, Result};

/// Largest `m * k` the exact solver accepts.
pub const MAX_CELLS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Row-major `m x k` plan.
    pub plan: Vec<f64>,
    pub cost: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Complementary-slackness residual: dual infeasibility plus reduced cost on the basis.
    pub residual: f64,
    pub pivots: usize,
}

/// Minimizes `sum c_ij x_ij` over nonnegative `x` with row sums `supply` and
/// column sums `demand` (both summing to the same total).
pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<LpSolution> {
    let (m, k) = (supply.len(), demand.len());
    if m == 0 || k == 0 {
        return Err(Error::invalid("transport problem needs at least one row and one column"));
    }
    if m * k > MAX_CELLS {
        return Err(Error::Resource(format!("{m} x {k} transport problem exceeds {MAX_CELLS} cells")));
    }
    debug_assert_eq!(cost.len(), m * k);
    let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let enter_tol = 1e-13 * scale;

    // northwest corner; degenerate zeros are kept basic so the basis is a spanning tree
    let mut x = vec![0.0; m * k];
    let mut basic = vec![false; m * k];
    let mut rows = supply.to_vec();
    let mut cols = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let q = rows[i].min(cols[j]);
        x[i * k + j] = q;
        basic[i * k + j] = true;
        rows[i] -= q;
        cols[j] -= q;
        if i == m - 1 && j == k - 1 {
            break;
        }
        if j == k - 1 || (i < m - 1 && rows[i] <= cols[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; k];
    let max_pivots = 50 * m * k + 1000;
    let mut pivots = 0;
    loop {
        potentials(&basic, cost, m, k, &mut u, &mut v);
        let entering = (0..m * k).find(|&c| !basic[c] && cost[c] - u[c / k] - v[c % k] < -enter_tol);
        let Some(e) = entering else { break };
        if pivots >= max_pivots {
            return Err(Error::Solver(format!("transport simplex did not converge in {max_pivots} pivots")));
        }
        pivot(&mut x, &mut basic, m, k, e);
        pivots += 1;
    }

    let mut residual: f64 = 0.0;
    for c in 0..m * k {
        let r = cost[c] - u[c / k] - v[c % k];
        if basic[c] {
            residual = residual.max(r.abs());
        } else {
            residual = residual.max(-r);
        }
    }
    for val in &mut x {
        if *val < 0.0 {
            *val = 0.0;
        }
    }
    let total = x.iter().zip(cost).map(|(a, b)| a * b).sum();
    Ok(LpSolution { plan: x, cost: total, u, v, residual, pivots })
}

fn adjacency(basic: &[bool], m: usize, k: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut by_row = vec![Vec::new(); m];
    let mut by_col = vec![Vec::new(); k];
    for c in (0..m * k).filter(|&c| basic[c]) {
        by_row[c / k].push(c % k);
        by_col[c % k].push(c / k);
    }
    (by_row, by_col)
}

fn potentials(basic: &[bool], cost: &[f64], m: usize, k: usize, u: &mut [f64], v: &mut [f64]) {
    let (by_row, by_col) = adjacency(basic, m, k);
    let mut seen_row = vec![false; m];
    let mut seen_col = vec![false; k];
    // nodes 0..m are rows, m..m+k columns
    let mut stack = vec![0usize];
    u[0] = 0.0;
    seen_row[0] = true;
    while let Some(node) = stack.pop() {
        if node < m {
            for &j in &by_row[node] {
                if !seen_col[j] {
                    seen_col[j] = true;
                    v[j] = cost[node * k + j] - u[node];
                    stack.push(m + j);
                }
            }
        } else {
            let j = node - m;
            for &i in &by_col[j] {
                if !seen_row[i] {
                    seen_row[i] = true;
                    u[i] = cost[i * k + j] - v[j];
                    stack.push(i);
                }
            }
        }
    }
}

fn pivot(x: &mut [f64], basic: &mut [bool], m: usize, k: usize, entering: usize) {
    let (ei, ej) = (entering / k, entering % k);
    let (by_row, by_col) = adjacency(basic, m, k);
    // tree path from row ei to column ej
    let mut parent = vec![usize::MAX; m + k];
    let mut queue = std::collections::VecDeque::from([ei]);
    parent[ei] = ei;
    while let Some(node) = queue.pop_front() {
        if node == m + ej {
            break;
        }
        let next: Vec<usize> = if node < m {
            by_row[node].iter().map(|&j| m + j).collect()
        } else {
            by_col[node - m].clone()
        };
        for nb in next {
            if parent[nb] == usize::MAX {
                parent[nb] = node;
                queue.push_back(nb);
            }
        }
    }
    let mut path_cells = Vec::new();
    let mut node = m + ej;
    while node != ei {
        let p = parent[node];
        let cell = if node < m { node * k + (p - m) } else { p * k + (node - m) };
        path_cells.push(cell);
        node = p;
    }
    // walking back from column ej, the first edge loses mass, then signs alternate
    let minus: Vec<usize> = path_cells.iter().step_by(2).copied().collect();
    let plus: Vec<usize> = path_cells.iter().skip(1).step_by(2).copied().collect();
    let step = minus.iter().map(|&c| x[c]).fold(f64::INFINITY, f64::min);
    let leaving = *minus
        .iter()
        .filter(|&&c| x[c] == step)
        .min()
        .expect("cycle has a decreasing cell");
    x[entering] += step;
    for &c in &minus {
        x[c] = (x[c] - step).max(0.0);
    }
    for &c in &plus {
        x[c] += step;
    }
    x[leaving] = 0.0;
    basic[entering] = true;
    basic[leaving] = false;
}
