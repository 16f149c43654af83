//! Exhaustive oracle for tiny weak transport problems: a dense grid over the
//! free entries of the coupling, followed by a pattern search.

use super::weak::Problem;
use crate::error::{Error, Result};

/// Largest number of grid points evaluated before the local refinement.
const GRID_BUDGET: f64 = 2.0e6;

pub(crate) fn minimize(p: &Problem<'_>) -> Result<f64> {
    let (m, k) = (p.mu.len(), p.nu.len());
    if m > 3 || k > 3 {
        return Err(Error::Resource(format!("brute-force oracle supports at most 3 x 3 problems, got {m} x {k}")));
    }
    let free = (m - 1) * (k - 1);
    let complete = |z: &[f64]| -> Option<Vec<f64>> {
        let mut plan = vec![0.0; m * k];
        for i in 0..m - 1 {
            for j in 0..k - 1 {
                plan[i * k + j] = z[i * (k - 1) + j];
            }
        }
        for i in 0..m - 1 {
            let used: f64 = (0..k - 1).map(|j| plan[i * k + j]).sum();
            plan[i * k + k - 1] = p.mu[i] - used;
        }
        for j in 0..k {
            let used: f64 = (0..m - 1).map(|i| plan[i * k + j]).sum();
            plan[(m - 1) * k + j] = p.nu[j] - used;
        }
        if plan.iter().any(|&v| v < -1e-13) {
            return None;
        }
        plan.iter_mut().for_each(|v| *v = v.max(0.0));
        Some(plan)
    };
    let objective = |z: &[f64]| -> f64 { complete(z).map_or(f64::INFINITY, |pl| p.cost(&pl)) };
    if free == 0 {
        return Ok(objective(&[]));
    }

    let upper: Vec<f64> = (0..free).map(|a| p.mu[a / (k - 1)].min(p.nu[a % (k - 1)])).collect();
    let step = if free <= 2 { 1e-3 } else { GRID_BUDGET.powf(-1.0 / free as f64) };
    let counts: Vec<usize> = upper.iter().map(|u| (u / step).ceil() as usize).collect();
    let mut best_z = vec![0.0; free];
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; free];
    let mut z = vec![0.0; free];
    loop {
        for a in 0..free {
            z[a] = if counts[a] == 0 { 0.0 } else { upper[a] * idx[a] as f64 / counts[a] as f64 };
        }
        let v = objective(&z);
        if v < best {
            best = v;
            best_z.copy_from_slice(&z);
        }
        let mut a = 0;
        while a < free {
            idx[a] += 1;
            if idx[a] <= counts[a] {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == free {
            break;
        }
    }

    // pattern search over coordinate and pairwise-diagonal directions
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for a in 0..free {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; free];
            d[a] = s;
            dirs.push(d);
        }
        for b in a + 1..free {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = vec![0.0; free];
                d[a] = sa;
                d[b] = sb;
                dirs.push(d);
            }
        }
    }
    let mut h = step;
    while h > 1e-10 {
        let mut improved = false;
        for d in &dirs {
            let trial: Vec<f64> = best_z.iter().zip(d).map(|(a, b)| a + h * b).collect();
            let v = objective(&trial);
            if v < best {
                best = v;
                best_z = trial;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok(best)
}
