//! Closed-form constants linking the convex Poincaré inequality to modified
//! log-Sobolev inequalities and weak transport costs, plus the stability
//! rules for products, perturbations and mixtures.

use serde::Serialize;

use crate::costs::CostFunction;
use crate::error::{Error, Result};
use crate::numeric::{gaussian_tail, golden_min};
use crate::transport::Branch;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::range(format!("{name} must be positive and finite, got {v}")))
    }
}

fn convex_range(lambda: f64, c: f64) -> Result<()> {
    positive("lambda", lambda)?;
    positive("c", c)?;
    if c > 0.5 * lambda.sqrt() * (1.0 + 1e-15) {
        return Err(Error::range(format!("c = {c} exceeds 0.5 sqrt(lambda) = {}", 0.5 * lambda.sqrt())));
    }
    Ok(())
}

/// `C1(c, lambda) = (sqrt(lambda/2) - c/2)^-2`.
pub fn c1_constant(lambda: f64, c: f64) -> Result<f64> {
    convex_range(lambda, c)?;
    Ok(((0.5 * lambda).sqrt() - 0.5 * c).powi(-2))
}

/// `C2(c, lambda) = exp(c sqrt(2/lambda))`.
pub fn c2_constant(lambda: f64, c: f64) -> Result<f64> {
    convex_range(lambda, c)?;
    Ok((c * (2.0 / lambda).sqrt()).exp())
}

/// Log-Sobolev constant for convex `f` with `|grad f| <= c <= sqrt(lambda)/2`:
/// `C = exp(c sqrt(2/lambda)) / (3 lambda) + 1 / (3 (sqrt(lambda/2) - c/2)^2)`.
pub fn mls_convex_constant(lambda: f64, c: f64) -> Result<f64> {
    convex_range(lambda, c)?;
    let e = (c * (2.0 / lambda).sqrt()).exp();
    let d = (0.5 * lambda).sqrt() - 0.5 * c;
    Ok(e / (3.0 * lambda) + 1.0 / (3.0 * d * d))
}

/// The pieces of the concave-branch constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcaveConstant {
    /// Bound on `E exp(2 g_+)`.
    pub d1: f64,
    /// Bound on `E g_+^4 / (E|grad f|)^4`.
    pub d2: f64,
    /// Radius at which `d1`, `d2` are evaluated: the best admissible `M' >= M`.
    pub m_used: f64,
    pub value: f64,
}

fn concave_at(lambda: f64, c: f64, m: f64) -> ConcaveConstant {
    let b1 = lambda.sqrt() / (32.0 * c) - 2.0;
    let a1 = 32.0 * m * c;
    let d1 = (2.0 * a1).exp() + 16.0 * (-a1 * b1).exp() / b1;
    let b = lambda.sqrt() / 32.0;
    let a2 = 32.0 * m;
    let d2 = a2.powi(4) + 32.0 * upper_gamma4(a2 * b) / b.powi(4);
    let value = (1.0 / lambda + (d1 * d2).sqrt() / 3.0) * (c * (2.0 / lambda).sqrt()).exp();
    ConcaveConstant { d1, d2, m_used: m, value }
}

/// Log-Sobolev constant for `e^{-f}`, `f` convex with `|grad f| <= c < sqrt(lambda)/64`,
/// given `P(|X - EX| <= M) >= 3/4`.
///
/// `D1 = e^{64Mc} + 16 e^{-32Mc b1} / b1` with `b1 = sqrt(lambda)/(32c) - 2`;
/// `D2 = (32M)^4 + 32 Gamma(4, 32 M b) / b^4` with `b = sqrt(lambda)/32` (the
/// tail bound `8 e^{-t b}` integrated against `4 t^3`);
/// `C = (1/lambda + sqrt(D1 D2)/3) e^{c sqrt(2/lambda)}`.
///
/// Both bounds first decrease in `M`, and every `M' >= M` is also an
/// admissible radius, so the constant is minimized over `M' >= M`.
pub fn mls_concave_parts(lambda: f64, c: f64, m: f64) -> Result<ConcaveConstant> {
    positive("lambda", lambda)?;
    positive("c", c)?;
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::range(format!("M must be nonnegative and finite, got {m}")));
    }
    let cap = lambda.sqrt() / 64.0;
    if c >= cap {
        return Err(Error::range(format!(
            "c = {c} must be below sqrt(lambda)/64 = {cap}; the exponential moment bound diverges otherwise"
        )));
    }
    Ok(concave_at(lambda, c, m.max(concave_minimizer(lambda, c))))
}

/// The constant at exactly the radius `m`, without minimizing over larger radii.
pub fn mls_concave_at_radius(lambda: f64, c: f64, m: f64) -> Result<ConcaveConstant> {
    mls_concave_parts(lambda, c, 0.0)?;
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::range(format!("M must be nonnegative and finite, got {m}")));
    }
    Ok(concave_at(lambda, c, m))
}

/// Global minimizer of `M -> C(lambda, c, M)`: a scan over `[0, 20/sqrt(lambda)]`
/// refined by golden section (both bounds bottom out near `log(8)/sqrt(lambda)`).
fn concave_minimizer(lambda: f64, c: f64) -> f64 {
    let hi = 20.0 / lambda.sqrt();
    let n: usize = 2000;
    let f = |m: f64| concave_at(lambda, c, m).value;
    let best = (0..=n).map(|k| (k, f(hi * k as f64 / n as f64))).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a }).0;
    let lo_m = hi * best.saturating_sub(1) as f64 / n as f64;
    let hi_m = hi * (best + 1).min(n) as f64 / n as f64;
    golden_min(f, lo_m, hi_m, 1e-13).0
}

/// `Gamma(4, z) = 6 e^{-z} (1 + z + z^2/2 + z^3/6)`.
fn upper_gamma4(z: f64) -> f64 {
    6.0 * (-z).exp() * (1.0 + z + z * z / 2.0 + z * z * z / 6.0)
}

pub fn mls_concave_constant(lambda: f64, c: f64, m: f64) -> Result<f64> {
    Ok(mls_concave_parts(lambda, c, m)?.value)
}

/// `M = 2 sqrt(n / lambda)`: a radius with `P(|X - EX| <= M) >= 3/4` by Chebyshev.
pub fn default_m(n: usize, lambda: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    if n == 0 {
        return Err(Error::range("n must be at least 1"));
    }
    Ok(2.0 * (n as f64 / lambda).sqrt())
}

/// Parameters `(2C, c)` of the cost `theta_{2C,c}` for which the given branch
/// of the weak transport-entropy inequality holds.
pub fn transport_cost_params(lambda: f64, c: f64, branch: Branch, m: Option<f64>) -> Result<(f64, f64)> {
    let big_c = match branch {
        Branch::Minus => mls_convex_constant(lambda, c)?,
        Branch::Plus => {
            let m = m.ok_or_else(|| Error::invalid("the plus branch needs the quantile radius M"))?;
            mls_concave_constant(lambda, c, m)?
        }
    };
    Ok((2.0 * big_c, c))
}

/// `lambda = 1 / C`.
pub fn poincare_from_transport(c: f64) -> Result<f64> {
    positive("C", c)?;
    Ok(1.0 / c)
}

/// The cost `alpha(|x|)` with `alpha(s) = s^2/(4C)` up to `2CL`, linear with slope `L` beyond.
pub fn cost_from_mls(dim: usize, c: f64, l: f64) -> Result<CostFunction> {
    CostFunction::radial_alpha(dim, c, l)
}

/// `lambda e^{-osc U}` for a density `e^U`.
pub fn perturbation_lambda(lambda: f64, osc_u: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    if !(osc_u >= 0.0 && osc_u.is_finite()) {
        return Err(Error::range(format!("oscillation must be nonnegative, got {osc_u}")));
    }
    Ok(lambda * (-osc_u).exp())
}

/// `(max(1/lambda0, 1/lambda1) + 2 W2^2)^-1` for any mixture weight.
pub fn mixture_lambda(lambda0: f64, lambda1: f64, w2sq: f64) -> Result<f64> {
    positive("lambda0", lambda0)?;
    positive("lambda1", lambda1)?;
    if !(w2sq >= 0.0 && w2sq.is_finite()) {
        return Err(Error::range(format!("W2^2 must be nonnegative, got {w2sq}")));
    }
    Ok(1.0 / ((1.0 / lambda0).max(1.0 / lambda1) + 2.0 * w2sq))
}

/// Upper end of the bisection bracket for the inverse Gaussian tail.
pub const GAUSSIAN_TAIL_BRACKET: f64 = 40.0;

/// Inverse of the standard Gaussian tail on `[0, 40]`; the flag is set when
/// `p` is below `tail(40)` and the bracket edge is returned.
pub fn gaussian_tail_inverse(p: f64) -> (f64, bool) {
    if p >= 0.5 {
        return (0.0, false);
    }
    if p <= gaussian_tail(GAUSSIAN_TAIL_BRACKET) {
        return (GAUSSIAN_TAIL_BRACKET, true);
    }
    let (mut lo, mut hi) = (0.0, GAUSSIAN_TAIL_BRACKET);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gaussian_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tensorization {
    pub lambda: f64,
    pub lambda_prime: f64,
    /// `lambda / lambda'`, the implied universal constant.
    pub ratio: f64,
    /// Maximizing radius `r`.
    pub argmax: f64,
    pub saturated: bool,
}

/// Constant for products of measures with convex Poincaré constant `lambda`:
/// `sqrt(lambda') = sup_{r >= 2 log 16 / sqrt(lambda)} tailinv(8 e^{-sqrt(lambda) r / 2}) / r`.
pub fn tensorization_lambda(lambda: f64) -> Result<Tensorization> {
    positive("lambda", lambda)?;
    let sl = lambda.sqrt();
    let r0 = 2.0 * 16f64.ln() / sl;
    let mut saturated = false;
    let objective = |r: f64| -> (f64, bool) {
        let (x, sat) = gaussian_tail_inverse(8.0 * (-0.5 * sl * r).exp());
        (x / r, sat)
    };
    // log grid from r0 to where the tail argument nears underflow; the
    // objective is 0 at r0 and decays like r^{-1/2}
    let r1 = 1200.0 / sl;
    let n = 4000;
    let grid: Vec<f64> = (0..=n).map(|k| r0 * (r1 / r0).powf(k as f64 / n as f64)).collect();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, &r) in grid.iter().enumerate() {
        let (v, sat) = objective(r);
        saturated |= sat;
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    if best == 0 || best == n {
        return Err(Error::Solver("tensorization supremum not bracketed".into()));
    }
    let (r, v) = golden_min(|r| -objective(r).0, grid[best - 1], grid[best + 1], 1e-14);
    let sup = -v;
    let lambda_prime = sup * sup;
    Ok(Tensorization { lambda, lambda_prime, ratio: lambda / lambda_prime, argmax: r, saturated })
}

/// Every derived constant for a given `(lambda, c, M)`.
///
/// The convex branch needs `c <= sqrt(lambda)/2`, the concave branch
/// `c < sqrt(lambda)/64` and `M`; a branch whose precondition fails is
/// left empty and explained in `notes`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsPipeline {
    pub lambda: f64,
    pub c: f64,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub derived: DerivedConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedConstants {
    #[serde(rename = "C_mls_convex")]
    pub c_mls_convex: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    #[serde(rename = "C_mls_concave")]
    pub c_mls_concave: Option<f64>,
    #[serde(rename = "D1")]
    pub d1: Option<f64>,
    #[serde(rename = "D2")]
    pub d2: Option<f64>,
    /// `(2C, c)` for the minus branch.
    pub cost_minus: Option<(f64, f64)>,
    /// `(2C, c)` for the plus branch.
    pub cost_plus: Option<(f64, f64)>,
    pub tensorization: Tensorization,
    pub notes: Vec<String>,
}

impl ConstantsPipeline {
    pub fn new(lambda: f64, c: f64, m: Option<f64>) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("c", c)?;
        let mut notes = Vec::new();
        let (mut c_mls_convex, mut c1, mut c2, mut cost_minus) = (None, None, None, None);
        match mls_convex_constant(lambda, c) {
            Ok(v) => {
                c_mls_convex = Some(v);
                c1 = Some(c1_constant(lambda, c)?);
                c2 = Some(c2_constant(lambda, c)?);
                cost_minus = Some((2.0 * v, c));
            }
            Err(e) => notes.push(format!("convex branch: {e}")),
        }
        let (mut c_mls_concave, mut d1, mut d2, mut cost_plus) = (None, None, None, None);
        match m {
            None => notes.push("concave branch: no quantile radius M given".into()),
            Some(m) => match mls_concave_parts(lambda, c, m) {
                Ok(parts) => {
                    c_mls_concave = Some(parts.value);
                    d1 = Some(parts.d1);
                    d2 = Some(parts.d2);
                    cost_plus = Some((2.0 * parts.value, c));
                }
                Err(e) => notes.push(format!("concave branch: {e}")),
            },
        }
        Ok(ConstantsPipeline {
            lambda,
            c,
            m,
            derived: DerivedConstants {
                c_mls_convex,
                c1,
                c2,
                c_mls_concave,
                d1,
                d2,
                cost_minus,
                cost_plus,
                tensorization: tensorization_lambda(lambda)?,
                notes,
            },
        })
    }

    /// `theta_{2C,c}` for one branch, in dimension `dim`.
    pub fn cost(&self, branch: Branch, dim: usize) -> Result<CostFunction> {
        let params = match branch {
            Branch::Minus => self.derived.cost_minus,
            Branch::Plus => self.derived.cost_plus,
        };
        let (two_c, c) = params.ok_or_else(|| Error::range(format!("{branch:?} branch is not available")))?;
        CostFunction::quad_linear(dim, two_c, c)
    }
}

fn branch_constant(p: &ConstantsPipeline, branch: Branch) -> Result<f64> {
    let v = match branch {
        Branch::Minus => p.derived.c_mls_convex,
        Branch::Plus => p.derived.c_mls_concave,
    };
    v.ok_or_else(|| Error::range(format!("{branch:?} branch is not available at c = {}", p.c)))
}

/// `theta_{2 max(C-, C+), min(c-, c+)}`: a cost below both branch costs, for
/// the two-sided inequality with `Q_2`.
pub fn combined_cost(minus: &ConstantsPipeline, plus: &ConstantsPipeline, dim: usize) -> Result<CostFunction> {
    let big_c = branch_constant(minus, Branch::Minus)?.max(branch_constant(plus, Branch::Plus)?);
    CostFunction::quad_linear(dim, 2.0 * big_c, minus.c.min(plus.c))
}

/// Coordinate-wise `theta_{4 max(C-, C+), min(c-, c+)}`, the cost attached to
/// `Q_1` of the product measure in dimension `dim`.
pub fn product_cost(minus: &ConstantsPipeline, plus: &ConstantsPipeline, dim: usize) -> Result<CostFunction> {
    let big_c = branch_constant(minus, Branch::Minus)?.max(branch_constant(plus, Branch::Plus)?);
    CostFunction::per_coord_quad_linear(dim, 4.0 * big_c, minus.c.min(plus.c), 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson on `[a, b]`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    #[test]
    fn convex_constant_values() {
        // 40-digit reference from an independent arbitrary-precision evaluation
        let reference = 0.867_379_471_042_613_950_400_701_057;
        let v = mls_convex_constant(2.0, 0.5).unwrap();
        assert!((v - reference).abs() < 1e-12, "{v}");
        let small = mls_convex_constant(2.0, 1e-12).unwrap();
        assert!((small - 0.5).abs() < 1e-10);
        let edge = mls_convex_constant(4.0, 1.0).unwrap();
        assert!(edge.is_finite() && edge > 0.0);
        assert!(mls_convex_constant(4.0, 1.01).is_err());
        assert!(mls_convex_constant(-1.0, 0.1).is_err());
    }

    #[test]
    fn c1_c2_recombine() {
        for (l, c) in [(2.0, 0.5), (0.3, 0.1), (10.0, 1.2), (1.0, 1e-6)] {
            let c1 = c1_constant(l, c).unwrap();
            let c2 = c2_constant(l, c).unwrap();
            let whole = mls_convex_constant(l, c).unwrap();
            assert!((c2 / (3.0 * l) + c1 / 3.0 - whole).abs() <= 1e-14 * whole.max(1.0));
        }
        assert!((c1_constant(2.0, 0.5).unwrap() - 1.0 / 0.5625).abs() < 1e-14);
        assert!((c2_constant(2.0, 0.5).unwrap() - 0.5f64.exp()).abs() < 1e-15);
        assert!((c1_constant(3.0, 1e-14).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn concave_constant_matches_quadrature() {
        let (l, c, m) = (2.0f64, 0.01, 1.0);
        let parts = mls_concave_at_radius(l, c, m).unwrap();
        let b1 = l.sqrt() / (32.0 * c);
        let a1 = 32.0 * m * c;
        let tail1 = simpson(&|t| 16.0 * (2.0 * t - t * b1).exp(), a1, a1 + 60.0 / (b1 - 2.0), 1e-13);
        let d1 = (2.0 * a1).exp() + tail1;
        let b = l.sqrt() / 32.0;
        let a2 = 32.0 * m;
        let tail2 = simpson(&|t| 32.0 * t.powi(3) * (-b * t).exp(), a2, a2 + 120.0 / b, 1e-6);
        let d2 = a2.powi(4) + tail2;
        assert!((parts.d1 - d1).abs() <= 1e-9 * d1);
        assert!((parts.d2 - d2).abs() <= 1e-9 * d2);
        let value = (1.0 / l + (d1 * d2).sqrt() / 3.0) * (c * (2.0 / l).sqrt()).exp();
        assert!((parts.value - value).abs() <= 1e-6 * value);
        // arbitrary-precision reference
        assert!((parts.value - 5219.964_668_128_617).abs() <= 1e-9 * parts.value);
        // a larger admissible radius can only help
        let best = mls_concave_parts(l, c, m).unwrap();
        assert!(best.value <= parts.value && best.m_used >= m);
        let far = mls_concave_parts(l, c, 50.0).unwrap();
        assert_eq!(far.m_used, 50.0);
        assert_eq!(far.value, mls_concave_at_radius(l, c, 50.0).unwrap().value);
    }

    #[test]
    fn concave_constant_limits_and_errors() {
        let l = 2.0f64;
        let v = mls_concave_at_radius(l, 1e-9, 0.0).unwrap();
        assert!((v.d1 - 1.0).abs() < 1e-6);
        let d2 = 192.0 * 32f64.powi(4) / (l * l);
        assert!((v.d2 - d2).abs() <= 1e-12 * d2);
        assert!(mls_concave_constant(l, l.sqrt() / 64.0, 1.0).is_err());
        assert!(mls_concave_constant(l, 0.01, -1.0).is_err());
        let mut prev = 0.0;
        for k in 0..20 {
            let v = mls_concave_constant(l, 0.01, 0.25 * k as f64).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn defaults_and_params() {
        assert_eq!(default_m(1, 4.0).unwrap(), 1.0);
        assert_eq!(default_m(4, 1.0).unwrap(), 4.0);
        assert!((default_m(9, 2.0).unwrap() - 3.0 * default_m(1, 2.0).unwrap()).abs() < 1e-15);
        let (two_c, c) = transport_cost_params(2.0, 0.5, Branch::Minus, None).unwrap();
        assert!((two_c - 2.0 * 0.867_379_471_042_614).abs() < 1e-12 && c == 0.5);
        assert!(transport_cost_params(2.0, 0.01, Branch::Plus, None).is_err());
        assert!(transport_cost_params(4.0, 1.0, Branch::Minus, None).is_ok());
        assert_eq!(poincare_from_transport(1.0).unwrap(), 1.0);
        assert_eq!(poincare_from_transport(2.0).unwrap(), 0.5);
        for l in [0.1f64, 1.0, 2.0, 7.5] {
            for c in [0.01, 0.1, 0.5 * l.sqrt()] {
                let (two_c, _) = transport_cost_params(l, c, Branch::Minus, None).unwrap();
                assert!(poincare_from_transport(two_c / 2.0).unwrap() <= l);
            }
        }
    }

    #[test]
    fn cost_from_mls_knot() {
        let (c, l) = (0.7, 1.3);
        let alpha = cost_from_mls(1, c, l).unwrap();
        let knot = 2.0 * c * l;
        let quad = knot * knot / (4.0 * c);
        let lin = l * knot - l * l * c;
        assert!((quad - lin).abs() < 1e-14 && (quad - c * l * l).abs() < 1e-14);
        assert!((alpha.value(&[knot]) - c * l * l).abs() < 1e-14);
        assert_eq!(alpha.value(&[0.0]), 0.0);
    }

    #[test]
    fn stability_rules() {
        assert_eq!(perturbation_lambda(3.0, 0.0).unwrap(), 3.0);
        assert!((perturbation_lambda(3.0, 2f64.ln()).unwrap() - 1.5).abs() < 1e-15);
        assert!(perturbation_lambda(3.0, 1.0).unwrap() > perturbation_lambda(3.0, 1.1).unwrap());
        assert_eq!(mixture_lambda(2.0, 2.0, 0.0).unwrap(), 2.0);
        for (a, b, w) in [(1.0, 3.0, 0.2), (0.5, 0.1, 0.0), (4.0, 4.0, 10.0)] {
            assert!(mixture_lambda(a, b, w).unwrap() <= f64::min(a, b));
        }
        assert!(mixture_lambda(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn gaussian_tail_inverse_round_trip() {
        for p in [0.5, 0.3, 1e-3, 1e-30, 1e-300] {
            let (x, sat) = gaussian_tail_inverse(p);
            assert!(!sat);
            assert!((gaussian_tail(x) - p).abs() <= 1e-12 * p.max(1e-300) + 1e-310);
        }
        assert_eq!(gaussian_tail_inverse(0.0), (GAUSSIAN_TAIL_BRACKET, true));
    }

    #[test]
    fn tensorization_scale_covariance() {
        // arbitrary-precision reference for lambda / lambda'
        let reference = 32.811_391_624_968_26;
        let ratios: Vec<f64> = [0.1, 1.0, 4.0, 10.0].iter().map(|&l| tensorization_lambda(l).unwrap().ratio).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() <= 1e-6 * ratios[0]);
            assert!((r - reference).abs() <= 1e-6 * reference, "{r}");
        }
        let t = tensorization_lambda(1.0).unwrap();
        assert!(t.lambda_prime > 0.0 && !t.saturated);
        assert!(t.argmax > 2.0 * 16f64.ln());
    }

    #[test]
    fn pipeline_branches() {
        let p = ConstantsPipeline::new(2.0, 0.5, Some(0.5)).unwrap();
        assert!(p.derived.cost_minus.is_some());
        assert!(p.derived.cost_plus.is_none());
        assert_eq!(p.derived.notes.len(), 1);
        let q = ConstantsPipeline::new(2.0, 0.02, Some(0.5)).unwrap();
        let (two_c, c) = q.derived.cost_plus.unwrap();
        assert!(two_c > 0.0 && c == 0.02);
        let json = serde_json::to_value(&q).unwrap();
        assert!(json["derived"]["C_mls_concave"].is_number());
        assert!(q.cost(Branch::Plus, 1).is_ok());
    }
}
