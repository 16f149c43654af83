//! Hopf-Lax infimum convolution `Q_t f(x) = inf_y f(y) + t theta((x - y)/t)`
//! and numerical checks of its semigroup and Hamilton-Jacobi structure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{legendre_radial_alpha, CostFunction, CostKind, Profile};
use crate::error::{ensure_dim, Error, Result};
use crate::numeric::{dot, golden_min, norm};

/// A convex function `R^n -> R` that the infimum convolution can consume.
pub trait ConvexFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    /// A Lipschitz constant, if one is known.
    fn lipschitz(&self) -> Option<f64>;
    /// Affine pieces, for max-affine functions.
    fn pieces(&self) -> Option<&[AffinePiece]> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

impl AffinePiece {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.slope, x) + self.intercept
    }
}

/// `f(x) = max_k <a_k, x> + b_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffineFunction {
    dim: usize,
    pieces: Vec<AffinePiece>,
}

/// Relative tolerance deciding which pieces are active at a point.
const ACTIVE_TOLERANCE: f64 = 1e-12;

impl MaxAffineFunction {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::invalid("a max-affine function needs at least one piece"));
        };
        let dim = first.slope.len();
        if dim == 0 {
            return Err(Error::invalid("slopes must have positive dimension"));
        }
        for (k, p) in pieces.iter().enumerate() {
            ensure_dim(dim, p.slope.len())?;
            if !p.intercept.is_finite() || p.slope.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("piece {k} has a non-finite coefficient")));
            }
        }
        Ok(MaxAffineFunction { dim, pieces })
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        MaxAffineFunction { dim, pieces: vec![AffinePiece { slope: vec![0.0; dim], intercept: c }] }
    }

    pub fn affine(slope: Vec<f64>, intercept: f64) -> Result<Self> {
        Self::new(vec![AffinePiece { slope, intercept }])
    }

    pub fn from_pairs(pairs: &[(Vec<f64>, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|(s, b)| AffinePiece { slope: s.clone(), intercept: *b }).collect())
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of the pieces attaining the max at `x`.
    pub fn active(&self, x: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.pieces.iter().map(|p| p.eval(x)).collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = ACTIVE_TOLERANCE * (1.0 + top.abs());
        (0..vals.len()).filter(|&k| vals[k] >= top - tol).collect()
    }

    /// Gradient length `limsup_{y -> x} |f(y) - f(x)| / |y - x|`: the largest
    /// slope norm among active pieces.
    pub fn gradient_length(&self, x: &[f64]) -> f64 {
        self.active(x).iter().map(|&k| norm(&self.pieces[k].slope)).fold(0.0, f64::max)
    }

    /// Slope of an active piece (the first one in index order).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.pieces[self.active(x)[0]].slope.clone()
    }

    /// Largest slope norm, the Lipschitz constant.
    pub fn max_slope_norm(&self) -> f64 {
        self.pieces.iter().map(|p| norm(&p.slope)).fold(0.0, f64::max)
    }

    /// Adds `c` to every intercept.
    pub fn shifted(&self, c: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| AffinePiece { slope: p.slope.clone(), intercept: p.intercept + c })
            .collect();
        MaxAffineFunction { dim: self.dim, pieces }
    }

    /// `a f + b` for `a > 0`.
    pub fn affine_transform(&self, a: f64, b: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| AffinePiece { slope: p.slope.iter().map(|v| a * v).collect(), intercept: a * p.intercept + b })
            .collect();
        MaxAffineFunction { dim: self.dim, pieces }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: FunctionFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("function JSON, line {} column {}: {e}", e.line(), e.column())))?;
        if let Some(s) = file.schema {
            if s != 1 {
                return Err(Error::Parse(format!("unsupported schema version {s}")));
            }
        }
        Self::new(file.pieces)
    }

    pub fn to_file(&self) -> FunctionFile {
        FunctionFile { schema: Some(1), pieces: self.pieces.clone() }
    }
}

/// `{"pieces": [{"slope": [...], "intercept": r}, ...]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<u32>,
    pub pieces: Vec<AffinePiece>,
}

impl ConvexFunction for MaxAffineFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.max_slope_norm())
    }

    fn pieces(&self) -> Option<&[AffinePiece]> {
        Some(&self.pieces)
    }
}

/// A convex function given by a closure.
pub struct ConvexClosure<F> {
    dim: usize,
    func: F,
    lipschitz: Option<f64>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ConvexClosure<F> {
    /// The caller vouches for convexity; `lipschitz` may be `None` for
    /// functions that are merely bounded below.
    pub fn new(dim: usize, func: F, lipschitz: Option<f64>) -> Self {
        ConvexClosure { dim, func, lipschitz }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ConvexFunction for ConvexClosure<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Result of one infimum-convolution evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct InfConvolution {
    /// Objective value at `minimizer` (an upper bound on the infimum).
    pub value: f64,
    /// Certified lower bound from the dual problem, when available.
    pub lower_bound: Option<f64>,
    pub minimizer: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Region {
    Ball(f64),
    Box(Vec<f64>),
}

impl Region {
    fn scaled(&self, k: f64) -> Region {
        match self {
            Region::Ball(r) => Region::Ball(r * k),
            Region::Box(w) => Region::Box(w.iter().map(|v| v * k).collect()),
        }
    }

    /// Parameter interval `{s : y + s d in x + region}`.
    fn line(&self, x: &[f64], y: &[f64], d: &[f64]) -> (f64, f64) {
        match self {
            Region::Ball(r) => {
                let off: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                let a = dot(d, d);
                let b = dot(&off, d);
                let c = dot(&off, &off) - r * r;
                let disc = (b * b - a * c).max(0.0).sqrt();
                ((-b - disc) / a, (-b + disc) / a)
            }
            Region::Box(w) => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..x.len() {
                    if d[i] != 0.0 {
                        let a = (x[i] - w[i] - y[i]) / d[i];
                        let b = (x[i] + w[i] - y[i]) / d[i];
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                }
                (lo.min(0.0), hi.max(0.0))
            }
        }
    }

    fn project(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Region::Ball(r) => {
                let off: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                let n = norm(&off);
                if n > *r {
                    for i in 0..y.len() {
                        y[i] = x[i] + off[i] * r / n;
                    }
                }
            }
            Region::Box(w) => {
                for i in 0..y.len() {
                    y[i] = y[i].clamp(x[i] - w[i], x[i] + w[i]);
                }
            }
        }
    }

    fn size(&self) -> f64 {
        match self {
            Region::Ball(r) => *r,
            Region::Box(w) => norm(w),
        }
    }

    fn near_boundary(&self, x: &[f64], y: &[f64]) -> bool {
        match self {
            Region::Ball(r) => crate::numeric::dist(x, y) > 0.9 * r,
            Region::Box(w) => (0..x.len()).any(|i| (y[i] - x[i]).abs() > 0.9 * w[i]),
        }
    }
}

/// Profile conjugate `rho*(g)` for `g >= 0`.
fn profile_conjugate(p: Profile, g: f64) -> f64 {
    if g > p.max_slope() {
        return f64::INFINITY;
    }
    let s = p.slope_inverse(g);
    g * s - p.value(s)
}

/// `theta*` and a point of its subdifferential, for built-in costs.
fn conjugate(theta: &CostFunction, a: &[f64]) -> Option<(f64, Vec<f64>)> {
    let radial = |p: Profile, v: &[f64], grad: &mut [f64]| -> f64 {
        let n = norm(v);
        if n > 0.0 {
            let s = p.slope_inverse(n.min(p.max_slope()));
            for (g, vi) in grad.iter_mut().zip(v) {
                *g = s * vi / n;
            }
        }
        profile_conjugate(p, n)
    };
    let mut grad = vec![0.0; a.len()];
    if let Some(p) = theta.radial_profile() {
        let v = radial(p, a, &mut grad);
        return Some((v, grad));
    }
    let (p, block) = theta.separable_profile()?;
    let mut total = 0.0;
    for (ab, gb) in a.chunks(block).zip(grad.chunks_mut(block)) {
        total += radial(p, ab, gb);
    }
    Some((total, grad))
}

/// `theta*(y) = sup_x (<x, y> - theta(x))` for a built-in cost; `+inf` beyond
/// the asymptotic slope.
pub fn cost_conjugate(theta: &CostFunction, y: &[f64]) -> Result<f64> {
    ensure_dim(theta.dim(), y.len())?;
    conjugate(theta, y)
        .map(|(v, _)| v)
        .ok_or_else(|| Error::Unsupported("no closed-form conjugate for a custom cost".into()))
}

/// Localization region for `y - x` when `f` is Lipschitz; `Err` when the
/// infimum may be `-inf`.
fn localization(f: &dyn ConvexFunction, theta: &CostFunction, t: f64) -> Result<Option<Region>> {
    let unbounded = |lf: f64, cap: f64| {
        Error::Unsupported(format!(
            "f has slope {lf} above the cost's asymptotic slope {cap}; the infimum may be unbounded below"
        ))
    };
    if let Some(p) = theta.radial_profile() {
        let Some(lf) = f.lipschitz() else { return Ok(None) };
        if lf > p.max_slope() * (1.0 + 1e-12) {
            return Err(unbounded(lf, p.max_slope()));
        }
        return Ok(Some(Region::Ball(t * p.slope_inverse(lf.min(p.max_slope())))));
    }
    if let Some((p, block)) = theta.separable_profile() {
        let n = f.dim();
        let per_block: Vec<f64> = match f.pieces() {
            Some(pieces) => (0..n / block)
                .map(|b| {
                    pieces
                        .iter()
                        .map(|pc| norm(&pc.slope[b * block..(b + 1) * block]))
                        .fold(0.0, f64::max)
                })
                .collect(),
            None => match f.lipschitz() {
                Some(lf) => vec![lf; n / block],
                None => return Ok(None),
            },
        };
        let mut widths = vec![0.0; n];
        for (b, &lb) in per_block.iter().enumerate() {
            if lb > p.max_slope() * (1.0 + 1e-12) {
                return Err(unbounded(lb, p.max_slope()));
            }
            let r = t * p.slope_inverse(lb.min(p.max_slope()));
            widths[b * block..(b + 1) * block].iter_mut().for_each(|w| *w = r);
        }
        return Ok(Some(Region::Box(widths)));
    }
    Ok(None)
}

/// `Q_t f(x)`.
pub fn inf_convolution(f: &dyn ConvexFunction, theta: &CostFunction, t: f64, x: &[f64]) -> Result<f64> {
    Ok(inf_convolution_detailed(f, theta, t, x)?.value)
}

/// `Q_t f(x)` with its minimizer and, for max-affine `f`, a dual lower bound.
pub fn inf_convolution_detailed(
    f: &dyn ConvexFunction,
    theta: &CostFunction,
    t: f64,
    x: &[f64],
) -> Result<InfConvolution> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::range(format!("t must be positive, got {t}")));
    }
    ensure_dim(f.dim(), x.len())?;
    ensure_dim(theta.dim(), x.len())?;
    let obj = |y: &[f64]| -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) / t).collect();
        f.eval(y) + t * theta.value(&z)
    };

    let mut starts = vec![x.to_vec()];
    let ridges = ridge_directions(f);
    let mut lower_bound = None;
    let mut best: Option<(Vec<f64>, f64)> = None;
    if let (Some(pieces), true) = (f.pieces(), conjugate(theta, &vec![0.0; x.len()]).is_some()) {
        let (y, lb) = dual_solve(pieces, theta, t, x);
        let v = obj(&y);
        lower_bound = Some(lb);
        // starts at each piece's own minimizer x - t grad theta*(a_k)
        for p in pieces {
            if let Some((c, g)) = conjugate(theta, &p.slope) {
                if c.is_finite() {
                    starts.push(x.iter().zip(&g).map(|(a, b)| a - t * b).collect());
                }
            }
        }
        let certified = v - lb <= 1e-11 * (1.0 + v.abs());
        best = Some((y.clone(), v));
        starts.push(y);
        if certified {
            let (y, v) = best.unwrap();
            return Ok(InfConvolution { value: v, lower_bound, minimizer: y });
        }
    }

    let (y, v) = match localization(f, theta, t)? {
        Some(region) => {
            // pad for rounding; the region already contains a minimizer
            let region = region.scaled(1.1);
            let region = match region {
                Region::Ball(r) => Region::Ball(r.max(1e-9 * (1.0 + t))),
                Region::Box(w) => Region::Box(w.iter().map(|v| v.max(1e-9 * (1.0 + t))).collect()),
            };
            primal_search(&obj, x, &region, &starts, &ridges)
        }
        None => {
            let mut r = 1.0 + t + norm(x);
            let mut out = None;
            for _ in 0..60 {
                let region = Region::Ball(r);
                let (y, v) = primal_search(&obj, x, &region, &starts, &ridges);
                if !region.near_boundary(x, &y) {
                    out = Some((y, v));
                    break;
                }
                starts.push(y);
                r *= 2.0;
            }
            out.ok_or_else(|| Error::Unsupported("infimum convolution appears unbounded below".into()))?
        }
    };
    let (y, v) = match best {
        Some((yb, vb)) if vb <= v => (yb, vb),
        _ => (y, v),
    };
    Ok(InfConvolution { value: v, lower_bound, minimizer: y })
}

/// Same as [`inf_convolution_detailed`] but restricted to `|y - x| <= radius`
/// (Euclidean ball), without the dual shortcut.
pub fn inf_convolution_in_ball(
    f: &dyn ConvexFunction,
    theta: &CostFunction,
    t: f64,
    x: &[f64],
    radius: f64,
) -> Result<f64> {
    ensure_dim(f.dim(), x.len())?;
    let obj = |y: &[f64]| -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) / t).collect();
        f.eval(y) + t * theta.value(&z)
    };
    let mut starts = vec![x.to_vec()];
    if let Some(pieces) = f.pieces() {
        for p in pieces {
            if let Some((c, g)) = conjugate(theta, &p.slope) {
                if c.is_finite() {
                    starts.push(x.iter().zip(&g).map(|(a, b)| a - t * b).collect());
                }
            }
        }
    }
    Ok(primal_search(&obj, x, &Region::Ball(radius), &starts, &ridge_directions(f)).1)
}

/// Unit directions along which two affine pieces stay equal: the axes
/// projected onto the complement of `a_k - a_l`.
fn ridge_directions(f: &dyn ConvexFunction) -> Vec<Vec<f64>> {
    let Some(pieces) = f.pieces() else { return Vec::new() };
    let n = f.dim();
    if n < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 0..pieces.len() {
        for l in k + 1..pieces.len() {
            let w: Vec<f64> = (0..n).map(|a| pieces[k].slope[a] - pieces[l].slope[a]).collect();
            let ww = dot(&w, &w);
            if ww == 0.0 {
                continue;
            }
            for i in 0..n {
                let mut d: Vec<f64> = w.iter().map(|v| -w[i] * v / ww).collect();
                d[i] += 1.0;
                let nd = norm(&d);
                if nd > 1e-8 {
                    d.iter_mut().for_each(|v| *v /= nd);
                    out.push(d);
                }
            }
        }
    }
    out
}

/// Maximizes `sum_k lambda_k (a_k.x + b_k) - t theta*(sum_k lambda_k a_k)` over
/// the simplex by pairwise Frank-Wolfe; returns the recovered primal point and
/// the dual value (a lower bound on `Q_t f(x)`).
fn dual_solve(pieces: &[AffinePiece], theta: &CostFunction, t: f64, x: &[f64]) -> (Vec<f64>, f64) {
    let k = pieces.len();
    let n = x.len();
    let c: Vec<f64> = pieces.iter().map(|p| p.eval(x)).collect();
    let conj = |a: &[f64]| conjugate(theta, a).expect("built-in cost");
    let mix = |lam: &[f64]| -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (l, p) in lam.iter().zip(pieces) {
            for (ai, si) in a.iter_mut().zip(&p.slope) {
                *ai += l * si;
            }
        }
        a
    };
    let phi = |lam: &[f64]| -> f64 { dot(lam, &c) - t * conj(&mix(lam)).0 };

    let start = (0..k)
        .map(|i| (i, c[i] - t * conj(&pieces[i].slope).0))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let mut lam = vec![0.0; k];
    lam[start] = 1.0;
    let mut val = phi(&lam);
    if val == f64::NEG_INFINITY {
        return (x.to_vec(), f64::NEG_INFINITY);
    }
    for _ in 0..5000 {
        let abar = mix(&lam);
        let (_, g) = conj(&abar);
        let grad: Vec<f64> = (0..k).map(|i| c[i] - t * dot(&g, &pieces[i].slope)).collect();
        let s = (0..k).fold(0, |b, i| if grad[i] > grad[b] { i } else { b });
        let v = (0..k).filter(|&i| lam[i] > 0.0).fold(s, |b, i| if grad[i] < grad[b] || lam[b] == 0.0 { i } else { b });
        let fw_gap = grad[s] - dot(&lam, &grad);
        if fw_gap <= 1e-14 * (1.0 + val.abs()) || s == v {
            break;
        }
        let dmax = lam[v];
        let dir: Vec<f64> = (0..n).map(|a| pieces[s].slope[a] - pieces[v].slope[a]).collect();
        let slope_at = |gamma: f64| -> f64 {
            let ag: Vec<f64> = abar.iter().zip(&dir).map(|(a, d)| a + gamma * d).collect();
            match conjugate(theta, &ag) {
                Some((cv, gg)) if cv.is_finite() => (c[s] - c[v]) - t * dot(&gg, &dir),
                _ => f64::NEG_INFINITY,
            }
        };
        let gamma = if slope_at(dmax) >= 0.0 {
            dmax
        } else {
            let (mut lo, mut hi) = (0.0, dmax);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if slope_at(mid) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if gamma <= 0.0 {
            break;
        }
        let mut next = lam.clone();
        next[s] += gamma;
        next[v] -= gamma;
        if gamma == dmax {
            next[v] = 0.0;
        }
        let nv = phi(&next);
        if !(nv >= val) {
            break;
        }
        lam = next;
        val = nv;
    }
    let (_, g) = conj(&mix(&lam));
    let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
    (y, val)
}

/// Convex minimization over `x + region`: golden section in 1-D; otherwise
/// coordinate descent with golden line searches from several starts, then a
/// pattern search over axis, diagonal and ridge directions.
fn primal_search(
    obj: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    region: &Region,
    starts: &[Vec<f64>],
    ridges: &[Vec<f64>],
) -> (Vec<f64>, f64) {
    let n = x.len();
    let line_min = |y: &[f64], d: &[f64]| -> (Vec<f64>, f64) {
        let (lo, hi) = region.line(x, y, d);
        let (s, v) = golden_min(
            |s| {
                let p: Vec<f64> = y.iter().zip(d).map(|(a, b)| a + s * b).collect();
                obj(&p)
            },
            lo,
            hi,
            1e-13,
        );
        (y.iter().zip(d).map(|(a, b)| a + s * b).collect(), v)
    };
    if n == 1 {
        return line_min(x, &[1.0]);
    }

    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        dirs.push(e);
        for j in i + 1..n {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[i] = std::f64::consts::FRAC_1_SQRT_2;
                d[j] = s * std::f64::consts::FRAC_1_SQRT_2;
                dirs.push(d);
            }
        }
    }
    dirs.extend(ridges.iter().cloned());
    let axes = dirs.clone();

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let mut y = start.clone();
        region.project(x, &mut y);
        let mut v = obj(&y);
        for _ in 0..100 {
            let before = v;
            for d in &axes {
                let (ny, nv) = line_min(&y, d);
                if nv < v {
                    y = ny;
                    v = nv;
                }
            }
            if before - v <= 1e-15 * (1.0 + v.abs()) {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| v < b.1) {
            best = Some((y, v));
        }
    }
    let (mut y, mut v) = best.expect("at least one start");

    let mut step = region.size() / 4.0;
    let floor = 1e-12 * (1.0 + region.size());
    while step > floor {
        let mut improved = false;
        for d in &dirs {
            for s in [step, -step] {
                let mut p: Vec<f64> = y.iter().zip(d).map(|(a, b)| a + s * b).collect();
                region.project(x, &mut p);
                let pv = obj(&p);
                if pv < v {
                    y = p;
                    v = pv;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (y, v)
}

/// An axis-aligned lattice `origin + h * (i_1, ..., i_n)`, `0 <= i_a < counts[a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, spacing: f64, counts: Vec<usize>) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::range(format!("grid spacing must be positive, got {spacing}")));
        }
        if origin.is_empty() || origin.len() != counts.len() {
            return Err(Error::invalid("grid origin and counts must have the same positive length"));
        }
        if origin.len() > 3 {
            return Err(Error::Unsupported("grids are limited to dimension 3".into()));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("every axis needs at least one node"));
        }
        Ok(GridSpec { origin, spacing, counts })
    }

    /// Symmetric 1-D grid on `[lo, hi]` with spacing `h`.
    pub fn interval(lo: f64, hi: f64, h: f64) -> Result<Self> {
        let n = ((hi - lo) / h).round() as usize + 1;
        Self::new(vec![lo], h, vec![n])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.counts[a];
            idx /= self.counts[a];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + self.spacing * i as f64)
            .collect()
    }

    /// Neighbor of `idx` one step along `axis` (`dir` = +1 or -1).
    pub fn neighbor(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut m = self.multi_index(idx);
        let j = m[axis] as isize + dir;
        if j < 0 || j >= self.counts[axis] as isize {
            return None;
        }
        m[axis] = j as usize;
        Some(self.flat_index(&m))
    }

    /// True when the closed ball of `radius` around node `idx` lies inside the grid box.
    pub fn ball_inside(&self, idx: usize, radius: f64) -> bool {
        let p = self.node(idx);
        (0..self.dim()).all(|a| {
            let lo = self.origin[a];
            let hi = lo + self.spacing * (self.counts[a] - 1) as f64;
            p[a] - radius >= lo - 1e-12 && p[a] + radius <= hi + 1e-12
        })
    }
}

/// Values of a function on the nodes of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        ensure_dim(spec.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        Ok(GridFunction { spec, values })
    }

    pub fn sample(spec: &GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let values = (0..spec.len()).into_par_iter().map(|i| f(&spec.node(i))).collect();
        Self::new(spec.clone(), values)
    }

    /// `min over nodes y of g(y) + t theta((x - y)/t)`: exhaustive, O(nodes).
    pub fn inf_convolution(&self, theta: &CostFunction, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::range(format!("t must be positive, got {t}")));
        }
        ensure_dim(self.spec.dim(), x.len())?;
        ensure_dim(theta.dim(), x.len())?;
        let mut best = f64::INFINITY;
        let mut z = vec![0.0; x.len()];
        for (i, &g) in self.values.iter().enumerate() {
            let y = self.spec.node(i);
            for a in 0..x.len() {
                z[a] = (x[a] - y[a]) / t;
            }
            best = best.min(g + t * theta.value(&z));
        }
        Ok(best)
    }

    /// Largest `|g(x + h e_a) - g(x)| / h` over neighboring nodes.
    pub fn lipschitz_estimate(&self) -> f64 {
        let h = self.spec.spacing;
        let mut worst: f64 = 0.0;
        for i in 0..self.values.len() {
            for a in 0..self.spec.dim() {
                if let Some(j) = self.spec.neighbor(i, a, 1) {
                    worst = worst.max((self.values[j] - self.values[i]).abs() / h);
                }
            }
        }
        worst
    }
}

/// Outcome of a semigroup check.
#[derive(Debug, Clone, Serialize)]
pub struct SemigroupReport {
    pub max_defect: f64,
    pub argmax: Vec<f64>,
    pub tolerance: f64,
    pub nodes_checked: usize,
    pub holds: bool,
}

/// Compares `Q_t(Q_s f)` (outer operator on the grid samples of `Q_s f`) with
/// `Q_{t+s} f` on interior nodes whose localization ball stays in the grid.
pub fn semigroup_check(
    f: &dyn ConvexFunction,
    theta: &CostFunction,
    s: f64,
    t: f64,
    spec: &GridSpec,
) -> Result<SemigroupReport> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::range("s and t must be positive"));
    }
    let lf = f
        .lipschitz()
        .ok_or_else(|| Error::Unsupported("semigroup check needs a Lipschitz f".into()))?;
    ensure_dim(f.dim(), spec.dim())?;
    let us: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|i| inf_convolution(f, theta, s, &spec.node(i)))
        .collect::<Result<_>>()?;
    let inner = GridFunction::new(spec.clone(), us)?;
    let radius = match localization(f, theta, t)? {
        Some(r) => 1.1 * r.size() + spec.spacing,
        None => return Err(Error::Unsupported("semigroup check needs a localizable cost".into())),
    };
    let nodes: Vec<usize> = (0..spec.len()).filter(|&i| spec.ball_inside(i, radius)).collect();
    let defects: Vec<(f64, usize)> = nodes
        .par_iter()
        .map(|&i| {
            let x = spec.node(i);
            let lhs = inner.inf_convolution(theta, t, &x)?;
            let rhs = inf_convolution(f, theta, s + t, &x)?;
            Ok(((lhs - rhs).abs(), i))
        })
        .collect::<Result<_>>()?;
    let (max_defect, arg) = defects.iter().fold((0.0, usize::MAX), |acc, &(d, i)| if d > acc.0 { (d, i) } else { acc });
    let tolerance = 2.0 * lf * spec.spacing + 1e-8;
    Ok(SemigroupReport {
        max_defect,
        argmax: if arg == usize::MAX { vec![] } else { spec.node(arg) },
        tolerance,
        nodes_checked: nodes.len(),
        holds: max_defect <= tolerance,
    })
}

/// Statistics of `d/dt u + alpha*(|grad u|)` over a space-time grid.
#[derive(Debug, Clone, Serialize)]
pub struct HjReport {
    pub max_residual: f64,
    pub mean_abs_residual: f64,
    pub worst_location: Option<(f64, Vec<f64>)>,
    pub evaluated: usize,
    pub excluded_steep: usize,
    pub excluded_kink: usize,
}

/// Hamilton-Jacobi residual of `u(t, x) = Q_t f(x)` for the cost `alpha_{C,L}`.
///
/// Derivatives are central differences with steps `dt` in time and the grid
/// spacing in space. Nodes with `|grad u| > 0.95 L` or a second difference
/// above `10 h^2` along some axis are excluded and counted.
pub fn hj_residual(
    f: &dyn ConvexFunction,
    c: f64,
    l: f64,
    times: &[f64],
    dt: f64,
    spec: &GridSpec,
) -> Result<HjReport> {
    let alpha = CostFunction::radial_alpha(spec.dim(), c, l)?;
    ensure_dim(f.dim(), spec.dim())?;
    if times.iter().any(|&t| t - dt <= 0.0) || !(dt > 0.0) {
        return Err(Error::range("every time level must exceed the time step"));
    }
    let h = spec.spacing;
    let n = spec.dim();
    let interior: Vec<usize> =
        (0..spec.len()).filter(|&i| (0..n).all(|a| spec.neighbor(i, a, 1).is_some() && spec.neighbor(i, a, -1).is_some())).collect();

    struct Node {
        residual: f64,
        steep: bool,
        kink: bool,
    }
    let mut jobs = Vec::with_capacity(times.len() * interior.len());
    for (ti, _) in times.iter().enumerate() {
        for &i in &interior {
            jobs.push((ti, i));
        }
    }
    let results: Vec<(usize, usize, Node)> = jobs
        .par_iter()
        .map(|&(ti, i)| {
            let t = times[ti];
            let x = spec.node(i);
            let u = |tt: f64, p: &[f64]| inf_convolution(f, &alpha, tt, p);
            let u0 = u(t, &x)?;
            let du_dt = (u(t + dt, &x)? - u(t - dt, &x)?) / (2.0 * dt);
            let mut grad = vec![0.0; n];
            let mut kink = false;
            for a in 0..n {
                let mut xp = x.clone();
                xp[a] += h;
                let mut xm = x.clone();
                xm[a] -= h;
                let (up, um) = (u(t, &xp)?, u(t, &xm)?);
                grad[a] = (up - um) / (2.0 * h);
                if (up - 2.0 * u0 + um).abs() / h > 10.0 * h {
                    kink = true;
                }
            }
            let g = norm(&grad);
            let steep = g > 0.95 * l;
            let residual = if steep { f64::NAN } else { du_dt + legendre_radial_alpha(c, l, g) };
            Ok((ti, i, Node { residual, steep, kink }))
        })
        .collect::<Result<_>>()?;

    let mut report = HjReport {
        max_residual: 0.0,
        mean_abs_residual: 0.0,
        worst_location: None,
        evaluated: 0,
        excluded_steep: 0,
        excluded_kink: 0,
    };
    let mut sum = 0.0;
    for (ti, i, node) in results {
        if node.steep {
            report.excluded_steep += 1;
            continue;
        }
        if node.kink {
            report.excluded_kink += 1;
            continue;
        }
        report.evaluated += 1;
        let r = node.residual.abs();
        sum += r;
        if r > report.max_residual || report.worst_location.is_none() {
            report.max_residual = report.max_residual.max(r);
            if r >= report.max_residual {
                report.worst_location = Some((times[ti], spec.node(i)));
            }
        }
    }
    if report.evaluated > 0 {
        report.mean_abs_residual = sum / report.evaluated as f64;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzDisplacementReport {
    pub grid_lipschitz: f64,
    pub lipschitz_bound: f64,
    pub max_displacement: f64,
    /// `C L^2 t`
    pub displacement_bound: f64,
    pub holds: bool,
}

/// Checks that `u(t, .) = Q_t f` is `L`-Lipschitz on the grid and that
/// `|u(t, x) - f(x)| <= C L^2 t`, for the cost `alpha_{C,L}`.
pub fn lipschitz_and_displacement_check(
    f: &MaxAffineFunction,
    c: f64,
    l: f64,
    t: f64,
    spec: &GridSpec,
) -> Result<LipschitzDisplacementReport> {
    let alpha = CostFunction::radial_alpha(spec.dim(), c, l)?;
    let lf = f.max_slope_norm();
    if lf > l * (1.0 + 1e-12) {
        return Err(Error::range(format!("f is {lf}-Lipschitz, above L = {l}")));
    }
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|i| inf_convolution(f, &alpha, t, &spec.node(i)))
        .collect::<Result<_>>()?;
    let u = GridFunction::new(spec.clone(), values)?;
    let max_displacement = (0..spec.len())
        .map(|i| (u.values[i] - f.value(&spec.node(i))).abs())
        .fold(0.0, f64::max);
    let grid_lipschitz = u.lipschitz_estimate();
    let displacement_bound = c * l * l * t;
    let lipschitz_bound = l;
    Ok(LipschitzDisplacementReport {
        grid_lipschitz,
        lipschitz_bound,
        max_displacement,
        displacement_bound,
        holds: grid_lipschitz <= l + 1e-8 && max_displacement <= displacement_bound + 1e-8,
    })
}

/// Returns the radial-alpha parameters `(C, L)` of a cost, if it is one.
pub fn alpha_params(theta: &CostFunction) -> Option<(f64, f64)> {
    match *theta.kind() {
        CostKind::RadialAlpha { c, l } => Some((c, l)),
        _ => None,
    }
}
