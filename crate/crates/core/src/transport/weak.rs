//! Frank-Wolfe for the barycentric transport objective
//! `F(pi) = sum_i mu_i theta(x_i - b_i)`, `b_i = sum_j pi_ij y_j / mu_i`.

use super::lp;
use crate::costs::CostFunction;
use crate::error::Result;
use crate::numeric::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwVariant {
    /// Classic conditional gradient: step towards the LP vertex.
    Vanilla,
    /// Moves mass from the worst active vertex to the LP vertex.
    Pairwise,
}

#[derive(Debug, Clone, Copy)]
pub struct FwOptions {
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    pub variant: FwVariant,
    pub record_history: bool,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions { gap_tolerance: 1e-8, max_iterations: 10_000, variant: FwVariant::Pairwise, record_history: false }
    }
}

pub(crate) struct Problem<'a> {
    pub mu: &'a [f64],
    pub xs: &'a [Vec<f64>],
    pub nu: &'a [f64],
    pub ys: &'a [Vec<f64>],
    pub theta: &'a CostFunction,
}

pub(crate) struct FwOutcome {
    pub plan: Vec<f64>,
    pub cost: f64,
    pub gap: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.mu.len()
    }

    fn k(&self) -> usize {
        self.nu.len()
    }

    fn dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn barycenters(&self, plan: &[f64]) -> Vec<Vec<f64>> {
        let (k, n) = (self.k(), self.dim());
        (0..self.m())
            .map(|i| {
                let mut b = vec![0.0; n];
                for j in 0..k {
                    let w = plan[i * k + j];
                    if w != 0.0 {
                        for (bd, yd) in b.iter_mut().zip(&self.ys[j]) {
                            *bd += w * yd;
                        }
                    }
                }
                b.iter_mut().for_each(|v| *v /= self.mu[i]);
                b
            })
            .collect()
    }

    fn residuals(&self, bary: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.xs
            .iter()
            .zip(bary)
            .map(|(x, b)| x.iter().zip(b).map(|(a, c)| a - c).collect())
            .collect()
    }

    pub fn cost_of_bary(&self, bary: &[Vec<f64>]) -> f64 {
        self.residuals(bary)
            .iter()
            .zip(self.mu)
            .map(|(r, w)| w * self.theta.value(r))
            .sum()
    }

    pub fn cost(&self, plan: &[f64]) -> f64 {
        self.cost_of_bary(&self.barycenters(plan))
    }

    /// `G_ij = -<grad theta(x_i - b_i), y_j>`
    fn gradient(&self, bary: &[Vec<f64>]) -> Vec<f64> {
        let k = self.k();
        let mut g = vec![0.0; self.m() * k];
        for (i, r) in self.residuals(bary).iter().enumerate() {
            let gi = self.theta.gradient(r);
            for j in 0..k {
                g[i * k + j] = -dot(&gi, &self.ys[j]);
            }
        }
        g
    }

    /// Exact minimization of `gamma -> F(pi + gamma d)` on `[0, gamma_max]`,
    /// by bisection on the derivative of this convex function.
    fn line_search(&self, bary: &[Vec<f64>], d: &[f64], gamma_max: f64) -> f64 {
        let db = self.barycenters(d);
        let slope = |gamma: f64| -> f64 {
            let mut s = 0.0;
            for i in 0..self.m() {
                let r: Vec<f64> = (0..self.dim()).map(|a| self.xs[i][a] - bary[i][a] - gamma * db[i][a]).collect();
                s -= self.mu[i] * dot(&self.theta.gradient(&r), &db[i]);
            }
            s
        };
        if slope(0.0) >= 0.0 {
            return 0.0;
        }
        if slope(gamma_max) <= 0.0 {
            return gamma_max;
        }
        let (mut lo, mut hi) = (0.0, gamma_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the derivative may be flat on an interval; take the better endpoint
        let f = |g: f64| {
            let b: Vec<Vec<f64>> = bary
                .iter()
                .zip(&db)
                .map(|(b, e)| b.iter().zip(e).map(|(p, q)| p + g * q).collect())
                .collect();
            self.cost_of_bary(&b)
        };
        if f(hi) < f(lo) {
            hi
        } else {
            lo
        }
    }
}

pub(crate) fn frank_wolfe(p: &Problem<'_>, opts: &FwOptions) -> Result<FwOutcome> {
    let (m, k) = (p.m(), p.k());
    let product: Vec<f64> = (0..m * k).map(|c| p.mu[c / k] * p.nu[c % k]).collect();
    let first = lp::solve(p.mu, p.nu, &p.gradient(&p.barycenters(&product)))?.plan;
    let mut plan = first.clone();
    let mut active: Vec<(Vec<f64>, f64)> = vec![(first, 1.0)];
    let mut bary = p.barycenters(&plan);
    let mut cost = p.cost_of_bary(&bary);
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if opts.record_history {
            history.push(cost);
        }
        let g = p.gradient(&bary);
        let s = lp::solve(p.mu, p.nu, &g)?.plan;
        gap = g.iter().zip(plan.iter().zip(&s)).map(|(gi, (a, b))| gi * (a - b)).sum::<f64>().max(0.0);
        if gap <= opts.gap_tolerance {
            break;
        }
        iterations += 1;

        let (d, gamma_max, away) = match opts.variant {
            FwVariant::Vanilla => (s.iter().zip(&plan).map(|(a, b)| a - b).collect::<Vec<f64>>(), 1.0, None),
            FwVariant::Pairwise => {
                let (idx, _) = active
                    .iter()
                    .enumerate()
                    .map(|(i, (v, _))| (i, dot(&g, v)))
                    .fold((0, f64::NEG_INFINITY), |acc, (i, val)| if val > acc.1 { (i, val) } else { acc });
                let d: Vec<f64> = s.iter().zip(&active[idx].0).map(|(a, b)| a - b).collect();
                (d, active[idx].1, Some(idx))
            }
        };
        let gamma = p.line_search(&bary, &d, gamma_max);
        if gamma == 0.0 {
            // no descent along the chosen direction: the plan is optimal to rounding
            break;
        }
        for (a, b) in plan.iter_mut().zip(&d) {
            *a = (*a + gamma * b).max(0.0);
        }
        match away {
            None => {
                for (_, w) in active.iter_mut() {
                    *w *= 1.0 - gamma;
                }
                add_vertex(&mut active, s, gamma);
            }
            Some(idx) => {
                active[idx].1 -= gamma;
                add_vertex(&mut active, s, gamma);
            }
        }
        active.retain(|(_, w)| *w > 1e-15);
        bary = p.barycenters(&plan);
        cost = p.cost_of_bary(&bary);
    }
    if opts.record_history {
        history.push(cost);
    }
    Ok(FwOutcome { plan, cost, gap, iterations, history })
}

fn add_vertex(active: &mut Vec<(Vec<f64>, f64)>, v: Vec<f64>, w: f64) {
    match active.iter_mut().find(|(u, _)| u.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-15)) {
        Some((_, weight)) => *weight += w,
        None => active.push((v, w)),
    }
}
