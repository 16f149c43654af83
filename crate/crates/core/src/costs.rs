//! Convex cost functions, their Legendre transforms, Orlicz norms and dual norms.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{ensure_dim, Error, Result};
use crate::numeric::{dot, golden_min, norm, ray_crossing};

/// Values above this are treated as divergent by numeric conjugate oracles.
pub const DIVERGENCE_SENTINEL: f64 = 1e6;

const CUSTOM_CHECK_SEED: u64 = 0x5EED_C057;
const CUSTOM_CHECKS: usize = 100;
const HEURISTIC_STARTS: usize = 16;

/// One-dimensional profile `rho` of a radial or per-coordinate cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Profile {
    /// `s^2 / (2C)` up to `CD`, then `Ds - CD^2/2`.
    QuadLinear { c: f64, d: f64 },
    /// `c s^r`
    Power { c: f64, r: f64 },
    /// `c s^2` up to 1, then `c s^r`.
    QuadPower { c: f64, r: f64 },
}

impl Profile {
    pub(crate) fn value(self, s: f64) -> f64 {
        let s = s.abs();
        match self {
            Profile::QuadLinear { c, d } => {
                if s <= c * d {
                    s * s / (2.0 * c)
                } else {
                    d * s - c * d * d / 2.0
                }
            }
            Profile::Power { c, r } => c * s.powf(r),
            Profile::QuadPower { c, r } => {
                if s <= 1.0 {
                    c * s * s
                } else {
                    c * s.powf(r)
                }
            }
        }
    }

    /// Derivative for `s >= 0`; left limit at kinks.
    pub(crate) fn slope(self, s: f64) -> f64 {
        match self {
            Profile::QuadLinear { c, d } => (s / c).min(d),
            Profile::Power { c, r } => {
                if r == 1.0 {
                    c
                } else {
                    c * r * s.powf(r - 1.0)
                }
            }
            Profile::QuadPower { c, r } => {
                if s <= 1.0 {
                    2.0 * c * s
                } else {
                    c * r * s.powf(r - 1.0)
                }
            }
        }
    }

    /// Smallest `s >= 0` whose subdifferential contains `g`, capped at the
    /// start of the last linear piece for profiles with bounded slope.
    pub(crate) fn slope_inverse(self, g: f64) -> f64 {
        match self {
            Profile::QuadLinear { c, d } => c * g.min(d),
            Profile::Power { c, r } => {
                if r == 1.0 {
                    0.0
                } else {
                    (g / (c * r)).powf(1.0 / (r - 1.0))
                }
            }
            Profile::QuadPower { c, r } => {
                if g <= 2.0 * c {
                    g / (2.0 * c)
                } else if g <= r * c {
                    1.0
                } else {
                    (g / (c * r)).powf(1.0 / (r - 1.0))
                }
            }
        }
    }

    /// Supremum of the slope (finite only for asymptotically linear profiles).
    pub(crate) fn max_slope(self) -> f64 {
        match self {
            Profile::QuadLinear { d, .. } => d,
            Profile::Power { c, r } if r == 1.0 => c,
            _ => f64::INFINITY,
        }
    }

    /// `sup { s : rho(s) <= level }`, by bisection.
    pub(crate) fn level_radius(self, level: f64) -> f64 {
        ray_crossing(|s| self.value(s), level).unwrap_or(f64::INFINITY)
    }
}

/// A user-supplied cost. Convexity is spot-checked at construction.
#[derive(Clone)]
pub struct CustomCost {
    func: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    symmetric: bool,
}

impl fmt::Debug for CustomCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCost").field("symmetric", &self.symmetric).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum CostKind {
    /// `theta_{C,D}(x)` applied to the Euclidean norm.
    QuadLinear { c: f64, d: f64 },
    /// `c |x|^r`, `r >= 1`.
    Power { c: f64, r: f64 },
    /// Sum of `theta_{C,D}` over consecutive coordinate blocks of size `block`.
    PerCoordQuadLinear { c: f64, d: f64, block: usize },
    /// `c * sum_i (x_i^2 1{|x_i| <= 1} + |x_i|^r 1{|x_i| > 1})`, `r >= 2`.
    PerCoordQuadPower { c: f64, r: f64 },
    /// `alpha(s) = s^2/(4C)` for `|s| <= 2CL`, `L|s| - L^2 C` beyond, of the norm.
    RadialAlpha { c: f64, l: f64 },
    Custom(CustomCost),
}

#[derive(Debug, Clone)]
pub struct CostFunction {
    kind: CostKind,
    dim: usize,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::range(format!("{name} must be positive and finite, got {v}")))
    }
}

impl CostFunction {
    pub fn quad_linear(dim: usize, c: f64, d: f64) -> Result<Self> {
        positive("C", c)?;
        positive("D", d)?;
        Self::with_kind(dim, CostKind::QuadLinear { c, d })
    }

    pub fn power(dim: usize, c: f64, r: f64) -> Result<Self> {
        positive("c", c)?;
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::range(format!("power cost needs r >= 1 for convexity, got {r}")));
        }
        Self::with_kind(dim, CostKind::Power { c, r })
    }

    pub fn per_coord_quad_linear(dim: usize, c: f64, d: f64, block: usize) -> Result<Self> {
        positive("C", c)?;
        positive("D", d)?;
        if block == 0 || dim % block != 0 {
            return Err(Error::invalid(format!("block size {block} does not divide dimension {dim}")));
        }
        Self::with_kind(dim, CostKind::PerCoordQuadLinear { c, d, block })
    }

    /// Convex envelope of `sum_i min(|x_i/c|^2, |x_i/c|)`.
    ///
    /// The envelope is `sum_i theta_{c^2/2, 1/c}(x_i)`; it keeps the two-sided
    /// comparison `|x|* <= c (sqrt(p)|x| + p max|x_i|) <= 2|x|*`.
    pub fn min_quad_linear_envelope(dim: usize, c: f64) -> Result<Self> {
        positive("c", c)?;
        Self::per_coord_quad_linear(dim, c * c / 2.0, 1.0 / c, 1)
    }

    pub fn per_coord_quad_power(dim: usize, c: f64, r: f64) -> Result<Self> {
        positive("c", c)?;
        if !(r >= 2.0 && r.is_finite()) {
            return Err(Error::range(format!("quadratic-power cost needs r >= 2 for convexity, got {r}")));
        }
        Self::with_kind(dim, CostKind::PerCoordQuadPower { c, r })
    }

    pub fn radial_alpha(dim: usize, c: f64, l: f64) -> Result<Self> {
        positive("C", c)?;
        positive("L", l)?;
        Self::with_kind(dim, CostKind::RadialAlpha { c, l })
    }

    /// Wraps a user cost. It must be declared convex; convexity, `theta(0) = 0`
    /// and symmetry are spot-checked on seeded random segments.
    pub fn custom<F>(dim: usize, func: F, declared_convex: bool) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !declared_convex {
            return Err(Error::Unsupported("custom costs must be declared convex".into()));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let zero = func(&vec![0.0; dim]);
        if zero.abs() > 1e-12 {
            return Err(Error::invalid(format!("custom cost has theta(0) = {zero}, expected 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(CUSTOM_CHECK_SEED);
        let mut symmetric = true;
        for i in 0..CUSTOM_CHECKS {
            let scale = [0.1, 1.0, 10.0][i % 3];
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-scale..scale)).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-scale..scale)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let (fx, fy, fm) = (func(&x), func(&y), func(&mid));
            if !(fx.is_finite() && fy.is_finite() && fm.is_finite()) {
                return Err(Error::Unsupported("custom cost returned a non-finite value".into()));
            }
            let avg = 0.5 * (fx + fy);
            if fm > avg + 1e-12 * (1.0 + avg.abs()) {
                return Err(Error::Unsupported(format!(
                    "custom cost failed the midpoint convexity check at {x:?}, {y:?}"
                )));
            }
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            if (func(&neg) - fx).abs() > 1e-12 * (1.0 + fx.abs()) {
                symmetric = false;
            }
        }
        Self::with_kind(dim, CostKind::Custom(CustomCost { func: Arc::new(func), symmetric }))
    }

    fn with_kind(dim: usize, kind: CostKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(CostFunction { kind, dim })
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The same family in another dimension (custom costs cannot be resized).
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        match self.kind {
            CostKind::Custom(_) if dim != self.dim => {
                Err(Error::Unsupported("custom costs have a fixed dimension".into()))
            }
            CostKind::PerCoordQuadLinear { block, .. } if dim % block != 0 => {
                Err(Error::invalid(format!("block size {block} does not divide dimension {dim}")))
            }
            _ => Self::with_kind(dim, self.kind.clone()),
        }
    }

    /// Radial profile `rho` with `theta(x) = rho(|x|)`, if the cost is radial.
    pub(crate) fn radial_profile(&self) -> Option<Profile> {
        match self.kind {
            CostKind::QuadLinear { c, d } => Some(Profile::QuadLinear { c, d }),
            CostKind::Power { c, r } => Some(Profile::Power { c, r }),
            // alpha_{C,L} coincides with theta_{2C,L}
            CostKind::RadialAlpha { c, l } => Some(Profile::QuadLinear { c: 2.0 * c, d: l }),
            _ => None,
        }
    }

    /// Block profile and block size for separable costs.
    pub(crate) fn separable_profile(&self) -> Option<(Profile, usize)> {
        match self.kind {
            CostKind::PerCoordQuadLinear { c, d, block } => Some((Profile::QuadLinear { c, d }, block)),
            CostKind::PerCoordQuadPower { c, r } => Some((Profile::QuadPower { c, r }, 1)),
            _ => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            CostKind::Custom(cc) => cc.symmetric,
            _ => true,
        }
    }

    /// Supremum of the slope of `theta` along rays, when finite.
    pub fn max_slope(&self) -> Option<f64> {
        let s = match (self.radial_profile(), self.separable_profile()) {
            (Some(p), _) => p.max_slope(),
            (None, Some((p, block))) => p.max_slope() * ((self.dim / block) as f64).sqrt(),
            _ => f64::INFINITY,
        };
        s.is_finite().then_some(s)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        ensure_dim(self.dim, x.len())?;
        Ok(self.value(x))
    }

    /// Unchecked evaluation; `x` must have the cost's dimension.
    pub fn value(&self, x: &[f64]) -> f64 {
        if let Some(p) = self.radial_profile() {
            return p.value(norm(x));
        }
        match &self.kind {
            CostKind::Custom(cc) => (cc.func)(x),
            _ => {
                let (p, block) = self.separable_profile().expect("separable cost");
                x.chunks(block).map(|b| p.value(norm(b))).sum()
            }
        }
    }

    /// A (sub)gradient of `theta` at `x`; zero at the origin.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let radial_grad = |p: Profile, v: &[f64], out: &mut [f64]| {
            let n = norm(v);
            if n > 0.0 {
                let k = p.slope(n) / n;
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = k * vi;
                }
            }
        };
        let mut g = vec![0.0; x.len()];
        if let Some(p) = self.radial_profile() {
            radial_grad(p, x, &mut g);
            return g;
        }
        match &self.kind {
            CostKind::Custom(cc) => {
                let mut y = x.to_vec();
                for i in 0..x.len() {
                    let h = 1e-7 * x[i].abs().max(1.0);
                    y[i] = x[i] + h;
                    let up = (cc.func)(&y);
                    y[i] = x[i] - h;
                    let down = (cc.func)(&y);
                    y[i] = x[i];
                    g[i] = (up - down) / (2.0 * h);
                }
            }
            _ => {
                let (p, block) = self.separable_profile().expect("separable cost");
                for (xb, gb) in x.chunks(block).zip(g.chunks_mut(block)) {
                    radial_grad(p, xb, gb);
                }
            }
        }
        g
    }

    /// Level set `{theta < level}`.
    pub fn sublevel(&self, level: f64) -> Result<SublevelSet<'_>> {
        positive("level", level)?;
        Ok(SublevelSet { cost: self, level })
    }

    /// `sup { s >= 0 : theta(s x) <= level }`.
    fn ray_radius(&self, x: &[f64], level: f64) -> Result<f64> {
        ray_crossing(|s| self.value(&scaled(x, s)), level)
            .ok_or_else(|| Error::Unsupported("cost does not grow along a ray".into()))
    }

    /// Orlicz norm `|x|_{theta/p} = inf { a > 0 : theta(x/a) <= p }`.
    pub fn orlicz_norm(&self, p: f64, x: &[f64]) -> Result<f64> {
        ensure_dim(self.dim, x.len())?;
        positive("p", p)?;
        if x.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        Ok(1.0 / self.ray_radius(x, p)?)
    }

    /// Dual norm `|x|*_{theta,p} = sup { <x, y> : theta(y) <= p }`.
    pub fn dual_norm(&self, p: f64, x: &[f64]) -> Result<DualNorm> {
        ensure_dim(self.dim, x.len())?;
        positive("p", p)?;
        if !self.is_symmetric() {
            return Err(Error::Unsupported("dual norms need a symmetric cost".into()));
        }
        if x.iter().all(|&v| v == 0.0) {
            return Ok(DualNorm { value: 0.0, heuristic: false });
        }
        if let Some(prof) = self.radial_profile() {
            return Ok(DualNorm { value: norm(x) * prof.level_radius(p), heuristic: false });
        }
        if let Some((prof, block)) = self.separable_profile() {
            let a: Vec<f64> = x.chunks(block).map(norm).collect();
            return Ok(DualNorm { value: separable_dual(prof, &a, p), heuristic: false });
        }
        self.heuristic_dual(p, x)
    }

    // sup over unit directions d of <x, d> * R(d), where R(d) is the ray radius.
    fn heuristic_dual(&self, p: f64, x: &[f64]) -> Result<DualNorm> {
        let n = self.dim;
        let objective = |d: &[f64]| -> Result<f64> {
            let nd = norm(d);
            if nd == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let u = scaled(d, 1.0 / nd);
            Ok(dot(x, &u) * self.ray_radius(&u, p)?)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(CUSTOM_CHECK_SEED ^ 0xD0A1);
        let mut best = f64::NEG_INFINITY;
        for start in 0..HEURISTIC_STARTS {
            let mut d: Vec<f64> = if start == 0 {
                x.to_vec()
            } else {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let mut val = objective(&d)?;
            let mut step = 0.5;
            while step > 1e-9 {
                let mut improved = false;
                for i in 0..n {
                    for sign in [1.0, -1.0] {
                        let mut trial = d.clone();
                        trial[i] += sign * step * norm(&d).max(1e-300);
                        let v = objective(&trial)?;
                        if v > val {
                            val = v;
                            d = trial;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.max(val);
        }
        Ok(DualNorm { value: best, heuristic: true })
    }
}

fn scaled(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}

/// `sup { sum_b a_b s_b : sum_b rho(s_b) <= p, s_b >= 0 }` via a Lagrange multiplier.
fn separable_dual(prof: Profile, a: &[f64], p: f64) -> f64 {
    let amax = a.iter().fold(0.0_f64, |m, &v| m.max(v));
    let s_of = |eta: f64| -> Vec<f64> { a.iter().map(|&ab| prof.slope_inverse(ab / eta)).collect() };
    let budget = |s: &[f64]| -> f64 { s.iter().map(|&v| prof.value(v)).sum() };
    let value = |s: &[f64]| -> f64 { a.iter().zip(s).map(|(x, y)| x * y).sum() };

    let dmax = prof.max_slope();
    let eta_min = if dmax.is_finite() { amax / dmax } else { 0.0 };
    if eta_min > 0.0 {
        // at the smallest admissible multiplier the largest blocks sit at the
        // start of the linear piece and absorb any leftover budget at rate amax/D
        let s = s_of(eta_min);
        let b0 = budget(&s);
        if b0 <= p {
            return value(&s) + (p - b0) * amax / dmax;
        }
    }
    let mut hi = if eta_min > 0.0 { 2.0 * eta_min } else { amax.max(1e-300) };
    while budget(&s_of(hi)) > p {
        hi *= 2.0;
    }
    let mut lo = if eta_min > 0.0 { eta_min } else { hi };
    if eta_min == 0.0 {
        while budget(&s_of(lo)) <= p && lo > 1e-300 {
            hi = lo;
            lo *= 0.5;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if budget(&s_of(mid)) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    value(&s_of(hi))
}

/// A dual-norm value; `heuristic` is set when it comes from multi-start search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualNorm {
    pub value: f64,
    pub heuristic: bool,
}

/// The sublevel set `B_theta(r) = {theta < r}`.
#[derive(Debug, Clone, Copy)]
pub struct SublevelSet<'a> {
    cost: &'a CostFunction,
    level: f64,
}

impl SublevelSet<'_> {
    pub fn level(&self) -> f64 {
        self.level
    }

    /// `sup { s : theta(s d) <= r }` for a nonzero direction `d` (normalized internally).
    pub fn radius(&self, direction: &[f64]) -> Result<f64> {
        ensure_dim(self.cost.dim, direction.len())?;
        let n = norm(direction);
        if n == 0.0 {
            return Err(Error::invalid("direction must be nonzero"));
        }
        self.cost.ray_radius(&scaled(direction, 1.0 / n), self.level)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.cost.value(x) < self.level
    }
}

/// `alpha*(s)` for the cost `alpha_{C,L}`: `C s^2` on `[-L, L]`, `+inf` outside.
pub fn legendre_radial_alpha(c: f64, l: f64, s: f64) -> f64 {
    if s.abs() <= l {
        c * s * s
    } else {
        f64::INFINITY
    }
}

/// `theta_{C,D}*(y)`: `C |y|^2 / 2` for `|y| <= D`, `+inf` outside.
pub fn legendre_quadlinear(c: f64, d: f64, y: &[f64]) -> f64 {
    let n = norm(y);
    if n <= d {
        c * n * n / 2.0
    } else {
        f64::INFINITY
    }
}

/// Numeric Legendre transform `sup_u (s u - f(u))` of an even function on R.
///
/// Evaluates a symmetric log-spaced grid over `|u|` in `[1e-8, 1e12]`, then
/// refines the best cell by golden section. Cells are ranked by the objective
/// minus its rounding error, so a flat supremum (as at the knot of a
/// quadratic-linear cost) is located at moderate `|u|` instead of where
/// cancellation noise is largest. Divergent transforms show up as values far
/// above [`DIVERGENCE_SENTINEL`].
pub fn numeric_conjugate_1d(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    const PER_DECADE: usize = 200;
    const DECADES: usize = 20;
    let mut grid = Vec::with_capacity(2 * PER_DECADE * DECADES + 3);
    for k in 0..=PER_DECADE * DECADES {
        grid.push(1e-8 * 10f64.powf(k as f64 / PER_DECADE as f64));
    }
    let mut us: Vec<f64> = grid.iter().rev().map(|u| -u).collect();
    us.push(0.0);
    us.extend(grid);
    let obj = |u: f64| s * u - f(u);
    let (best_idx, _) = us
        .iter()
        .enumerate()
        .map(|(i, &u)| (i, obj(u) - 8.0 * f64::EPSILON * ((s * u).abs() + f(u).abs())))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = us[best_idx.saturating_sub(1)];
    let hi = us[(best_idx + 1).min(us.len() - 1)];
    let (_, neg) = golden_min(|u| -obj(u), lo, hi, 1e-15);
    -neg
}

/// Ratio between the numeric dual norm of a quadratic-power per-coordinate cost
/// and the rearrangement formula `p^{1/r} |(x*_i)_{i<=p}|_{r*} + sqrt(p) |(x*_i)_{i>p}|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RearrangedComparison {
    pub numeric: f64,
    pub formula: f64,
    /// `numeric / formula`
    pub ratio: f64,
}

pub fn dual_norm_rearranged(theta: &CostFunction, p: usize, x: &[f64]) -> Result<RearrangedComparison> {
    let CostKind::PerCoordQuadPower { r, .. } = *theta.kind() else {
        return Err(Error::Unsupported("rearranged dual norm needs a quadratic-power cost".into()));
    };
    if r <= 2.0 {
        return Err(Error::range(format!("rearranged form needs r > 2, got {r}")));
    }
    ensure_dim(theta.dim(), x.len())?;
    if p == 0 || p > x.len() {
        return Err(Error::range(format!("p must be an integer in [1, {}], got {p}", x.len())));
    }
    let numeric = theta.dual_norm(p as f64, x)?.value;
    let formula = rearranged_formula(r, p, x);
    let ratio = if formula == 0.0 { if numeric == 0.0 { 1.0 } else { f64::INFINITY } } else { numeric / formula };
    Ok(RearrangedComparison { numeric, formula, ratio })
}

fn rearranged_formula(r: f64, p: usize, x: &[f64]) -> f64 {
    let mut xs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    xs.sort_by(|a, b| b.total_cmp(a));
    let r_star = r / (r - 1.0);
    let head = xs[..p].iter().map(|v| v.powf(r_star)).sum::<f64>().powf(1.0 / r_star);
    let tail = norm(&xs[p..]);
    (p as f64).powf(1.0 / r) * head + (p as f64).sqrt() * tail
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormComparison {
    /// `|x|*_{theta, t p}`
    pub lhs: f64,
    /// `t |x|*_{theta, p}`
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `|x|*_{theta,tp} <= t |x|*_{theta,p}` for `t >= 1`.
pub fn norm_comparison_check(theta: &CostFunction, p: f64, t: f64, x: &[f64]) -> Result<NormComparison> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::range(format!("t must be at least 1, got {t}")));
    }
    let lhs = theta.dual_norm(t * p, x)?.value;
    let rhs = t * theta.dual_norm(p, x)?.value;
    Ok(NormComparison { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

/// On-disk cost description: `{"kind": ..., "params": {...}, "dimension": n}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<u32>,
    pub kind: String,
    pub params: Map<String, Value>,
    pub dimension: usize,
}

fn take_param(params: &Map<String, Value>, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Parse(format!("cost parameter \"{key}\" missing or not a number")))
}

fn allow_params(params: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Parse(format!("unknown cost parameter \"{k}\" (expected {allowed:?})"))),
        None => Ok(()),
    }
}

impl CostFile {
    pub fn into_cost(self) -> Result<CostFunction> {
        if let Some(s) = self.schema {
            if s != 1 {
                return Err(Error::Parse(format!("unsupported schema version {s}")));
            }
        }
        let p = &self.params;
        let n = self.dimension;
        match self.kind.as_str() {
            "quadlinear" => {
                allow_params(p, &["C", "D"])?;
                CostFunction::quad_linear(n, take_param(p, "C")?, take_param(p, "D")?)
            }
            "power" => {
                allow_params(p, &["c", "r"])?;
                CostFunction::power(n, take_param(p, "c")?, take_param(p, "r")?)
            }
            "percoord" => {
                if p.contains_key("c") {
                    allow_params(p, &["c"])?;
                    return CostFunction::min_quad_linear_envelope(n, take_param(p, "c")?);
                }
                allow_params(p, &["C", "D", "block_size"])?;
                let block = match p.get("block_size") {
                    None => 1,
                    Some(v) => v
                        .as_u64()
                        .ok_or_else(|| Error::Parse("block_size must be a positive integer".into()))?
                        as usize,
                };
                CostFunction::per_coord_quad_linear(n, take_param(p, "C")?, take_param(p, "D")?, block)
            }
            "percoord_power" => {
                allow_params(p, &["c", "r"])?;
                CostFunction::per_coord_quad_power(n, take_param(p, "c")?, take_param(p, "r")?)
            }
            "radial_alpha" => {
                allow_params(p, &["C", "L"])?;
                CostFunction::radial_alpha(n, take_param(p, "C")?, take_param(p, "L")?)
            }
            other => Err(Error::Parse(format!(
                "unknown cost kind \"{other}\" (expected quadlinear, power, percoord, percoord_power, radial_alpha)"
            ))),
        }
    }
}

impl CostFunction {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CostFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("cost JSON, line {} column {}: {e}", e.line(), e.column())))?;
        file.into_cost()
    }

    /// File form of a built-in cost; `None` for custom costs.
    pub fn to_file(&self) -> Option<CostFile> {
        let mut params = Map::new();
        let mut put = |k: &str, v: f64| {
            params.insert(k.to_string(), Value::from(v));
        };
        let kind = match self.kind {
            CostKind::QuadLinear { c, d } => {
                put("C", c);
                put("D", d);
                "quadlinear"
            }
            CostKind::Power { c, r } => {
                put("c", c);
                put("r", r);
                "power"
            }
            CostKind::PerCoordQuadLinear { c, d, block } => {
                put("C", c);
                put("D", d);
                params.insert("block_size".into(), Value::from(block as u64));
                "percoord"
            }
            CostKind::PerCoordQuadPower { c, r } => {
                put("c", c);
                put("r", r);
                "percoord_power"
            }
            CostKind::RadialAlpha { c, l } => {
                put("C", c);
                put("L", l);
                "radial_alpha"
            }
            CostKind::Custom(_) => return None,
        };
        Some(CostFile { schema: Some(1), kind: kind.into(), params, dimension: self.dim })
    }
}
