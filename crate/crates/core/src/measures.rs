//! Finitely supported probability measures on R^n.
//!
//! A [`DiscreteMeasure`] stores distinct atoms with strictly positive weights
//! summing to one. Duplicate atoms are merged and zero-weight atoms dropped at
//! construction, so every other module can rely on a clean support.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Absolute tolerance on the total mass of a freshly supplied weight vector.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Default coordinate tolerance when matching atoms of two measures.
pub const SUPPORT_MATCH_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing cumulative probabilities against a level.
const CUMULATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from atoms and weights.
    ///
    /// Weights must be nonnegative and sum to one within [`MASS_TOLERANCE`];
    /// they are renormalized exactly afterwards.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("a measure needs at least one atom"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("points must have positive dimension"));
        }
        for (i, p) in points.iter().enumerate() {
            ensure_dim(dim, p.len())?;
            if let Some(v) = p.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("point {i} has non-finite coordinate {v}")));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!("weight {i} is {w}; weights must be nonnegative")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self::merged(dim, points, weights))
    }

    /// Uniform measure on the given points (duplicates accumulate mass).
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.len().max(1);
        let weights = vec![1.0 / m as f64; points.len()];
        Self::new(points, weights)
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Two atoms on the real line: `a` with probability `1 - p`, `b` with `p`.
    pub fn two_point(a: f64, b: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::range(format!("p = {p} must lie in [0, 1]")));
        }
        Self::new(vec![vec![a], vec![b]], vec![1.0 - p, p])
    }

    // Merge duplicates (exact coordinate equality), drop empty atoms, renormalize.
    fn merged(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out_points: Vec<Vec<f64>> = Vec::new();
        let mut out_weights: Vec<f64> = Vec::new();
        for (p, w) in points.into_iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let key: Vec<u64> = p.iter().map(|&v| (v + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&k) => out_weights[k] += w,
                None => {
                    index.insert(key, out_points.len());
                    out_points.push(p);
                    out_weights.push(w);
                }
            }
        }
        let total: f64 = out_weights.iter().sum();
        for w in &mut out_weights {
            *w /= total;
        }
        DiscreteMeasure { dim, points: out_points, weights: out_weights }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(|p| p.as_slice()).zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.atoms() {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }

    /// Expectation of `f` under the measure.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms().map(|(p, w)| w * f(p)).sum()
    }

    /// Index of the atom matching `x` coordinate-wise within `tol`, if any.
    pub fn find_atom(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("measure JSON, line {} column {}: {e}", e.line(), e.column()))
        })?;
        file.into_measure()
    }

    pub fn to_file(&self) -> MeasureFile {
        MeasureFile {
            schema: Some(1),
            dimension: self.dim,
            points: self.points.clone(),
            weights: Some(self.weights.clone()),
        }
    }
}

/// On-disk representation of a measure.
///
/// `{"dimension": n, "points": [[...], ...], "weights": [...]}`; `weights`
/// may be omitted for the uniform measure. Unknown fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<u32>,
    pub dimension: usize,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl MeasureFile {
    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        if let Some(s) = self.schema {
            if s != 1 {
                return Err(Error::Parse(format!("unsupported schema version {s}")));
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != self.dimension {
                return Err(Error::Parse(format!(
                    "point {i} has {} coordinates, dimension is {}",
                    p.len(),
                    self.dimension
                )));
            }
        }
        let mu = match self.weights {
            Some(w) => DiscreteMeasure::new(self.points, w)?,
            None => DiscreteMeasure::uniform(self.points)?,
        };
        Ok(mu)
    }
}

/// Relative entropy `H(nu|mu)` with the default support-matching tolerance.
pub fn relative_entropy(nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    relative_entropy_with_tol(nu, mu, SUPPORT_MATCH_TOLERANCE)
}

/// Relative entropy `H(nu|mu) = sum nu_i log(nu_i / mu_j(i))`.
///
/// Each atom of `nu` is matched to an atom of `mu` whose coordinates agree
/// within `tol`. Returns `+inf` when some atom of `nu` has no match.
pub fn relative_entropy_with_tol(nu: &DiscreteMeasure, mu: &DiscreteMeasure, tol: f64) -> Result<f64> {
    ensure_dim(mu.dim(), nu.dim())?;
    // several nu atoms may land on the same mu atom when tol is loose
    let mut matched = vec![0.0; mu.len()];
    for (x, w) in nu.atoms() {
        match mu.find_atom(x, tol) {
            Some(j) => matched[j] += w,
            None => return Ok(f64::INFINITY),
        }
    }
    let h: f64 = matched
        .iter()
        .zip(mu.weights())
        .filter(|(&v, _)| v > 0.0)
        .map(|(&v, &m)| v * (v / m).ln())
        .sum();
    Ok(h.max(0.0))
}

/// `E g log g - E g log E g` for nonnegative values `g` on the support.
pub fn entropy_of_values(weights: &[f64], g: &[f64]) -> Result<f64> {
    ensure_dim(weights.len(), g.len())?;
    if let Some((i, v)) = g.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("entropy needs finite g >= 0; g[{i}] = {v}")));
    }
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let eg: f64 = weights.iter().zip(g).map(|(w, v)| w * v).sum();
    let e_glogg: f64 = weights.iter().zip(g).map(|(w, &v)| w * xlogx(v)).sum();
    Ok((e_glogg - xlogx(eg)).max(0.0))
}

/// Entropy functional `Ent_mu(g)`.
pub fn entropy_functional(mu: &DiscreteMeasure, g: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let values: Vec<f64> = mu.points().iter().map(|p| g(p)).collect();
    entropy_of_values(mu.weights(), &values)
}

/// Distribution of `f(X)` for `X ~ mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PushforwardStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
}

/// `inf { t : P(Y <= t) >= 1/2 }` for a discrete law.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    weighted_quantile(values, weights, 0.5)
}

/// `inf { t : P(Y <= t) >= q }` for a discrete law.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        cum += weights[i];
        let last_of_tie = pos + 1 == order.len() || values[order[pos + 1]] != values[i];
        if last_of_tie && cum + CUMULATIVE_SLACK >= q {
            return values[i];
        }
    }
    values[*order.last().expect("nonempty support")]
}

pub fn pushforward_stats(mu: &DiscreteMeasure, f: impl Fn(&[f64]) -> f64) -> PushforwardStats {
    let values: Vec<f64> = mu.points().iter().map(|p| f(p)).collect();
    stats_of_values(mu.weights(), values)
}

pub(crate) fn stats_of_values(weights: &[f64], values: Vec<f64>) -> PushforwardStats {
    let mean: f64 = weights.iter().zip(&values).map(|(w, v)| w * v).sum();
    let variance: f64 = weights.iter().zip(&values).map(|(w, v)| w * (v - mean).powi(2)).sum();
    let median = weighted_median(&values, weights);
    PushforwardStats { values, mean, variance, median }
}

#[derive(Debug, Clone, Serialize)]
pub struct MedianVarianceReport {
    /// `E (f - Med f)^2`
    pub lhs: f64,
    /// `2 Var f`
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `E (f - Med f)^2 <= 2 Var f` with relative slack 1e-12.
pub fn median_variance_check(mu: &DiscreteMeasure, f: impl Fn(&[f64]) -> f64) -> MedianVarianceReport {
    let s = pushforward_stats(mu, f);
    let lhs: f64 = mu
        .weights()
        .iter()
        .zip(&s.values)
        .map(|(w, v)| w * (v - s.median).powi(2))
        .sum();
    let rhs = 2.0 * s.variance;
    let scale = s.values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let holds = lhs <= rhs * (1.0 + 1e-12) + 1e-15 * scale * scale;
    MedianVarianceReport { lhs, rhs, holds }
}

/// Smallest `M` among the distances `|x_i - mean|` with `mu(|X - EX| <= M) >= q`.
pub fn quantile_radius(mu: &DiscreteMeasure, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::range(format!("quantile level {q} must lie in (0, 1)")));
    }
    let mean = mu.mean();
    let dists: Vec<f64> = mu
        .points()
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(weighted_quantile(&dists, mu.weights(), q))
}

/// Product measure on `R^(n1 + n2)` with concatenated coordinates.
pub fn product_measure(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> DiscreteMeasure {
    let mut points = Vec::with_capacity(mu1.len() * mu2.len());
    let mut weights = Vec::with_capacity(mu1.len() * mu2.len());
    for (x, wx) in mu1.atoms() {
        for (y, wy) in mu2.atoms() {
            let mut p = x.to_vec();
            p.extend_from_slice(y);
            points.push(p);
            weights.push(wx * wy);
        }
    }
    DiscreteMeasure::merged(mu1.dim() + mu2.dim(), points, weights)
}

/// `p * mu1 + (1 - p) * mu0`, with coinciding atoms merged.
pub fn mixture(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, p: f64) -> Result<DiscreteMeasure> {
    ensure_dim(mu0.dim(), mu1.dim())?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::range(format!("mixture weight {p} must lie in (0, 1)")));
    }
    let mut points = mu1.points().to_vec();
    let mut weights: Vec<f64> = mu1.weights().iter().map(|w| p * w).collect();
    points.extend(mu0.points().iter().cloned());
    weights.extend(mu0.weights().iter().map(|w| (1.0 - p) * w));
    Ok(DiscreteMeasure::merged(mu0.dim(), points, weights))
}
