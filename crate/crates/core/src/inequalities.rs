//! Estimators and verifiers: the convex Poincaré constant, dual forms of the
//! weak transport-entropy inequalities, modified log-Sobolev inequalities and
//! concentration bounds for convex functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::constants::{mls_concave_constant, mls_convex_constant};
use crate::costs::CostFunction;
use crate::error::{ensure_dim, Error, Result};
use crate::hopflax::{inf_convolution, AffinePiece, MaxAffineFunction};
use crate::measures::{quantile_radius, weighted_median, weighted_quantile, DiscreteMeasure};
use crate::numeric::norm;
use crate::report::VerificationReport;

/// Tolerance for dual and log-Sobolev checks.
pub const CHECK_TOLERANCE: f64 = 1e-8;

/// Result of the convex Poincaré search.
#[derive(Debug, Clone, Serialize)]
pub struct PoincareEstimate {
    /// Largest `Var f / E|grad f|^2` found: a lower bound on the supremum.
    pub best_ratio: f64,
    /// `1 / best_ratio`: an upper bound on the optimal constant (infinite for ratio 0).
    pub lambda_hat: f64,
    #[serde(serialize_with = "serialize_pieces")]
    pub witness: MaxAffineFunction,
    pub restarts_used: usize,
}

fn serialize_pieces<S: serde::Serializer>(f: &MaxAffineFunction, s: S) -> std::result::Result<S::Ok, S::Error> {
    f.pieces().serialize(s)
}

/// `Var_mu f / E_mu |grad f|^2`, where the gradient length at an atom is the
/// largest active slope norm; `0/0 = 0`.
pub fn poincare_ratio(mu: &DiscreteMeasure, f: &MaxAffineFunction) -> f64 {
    let vals: Vec<f64> = mu.points().iter().map(|x| f.value(x)).collect();
    let w = mu.weights();
    let mean: f64 = vals.iter().zip(w).map(|(v, p)| v * p).sum();
    let var: f64 = vals.iter().zip(w).map(|(v, p)| p * (v - mean) * (v - mean)).sum();
    let grad: f64 = mu.atoms().map(|(x, p)| p * f.gradient_length(x).powi(2)).sum();
    if grad == 0.0 {
        0.0
    } else {
        var / grad
    }
}

fn pieces_to_params(f: &MaxAffineFunction) -> Vec<f64> {
    f.pieces().iter().flat_map(|p| p.slope.iter().copied().chain(std::iter::once(p.intercept))).collect()
}

fn params_to_pieces(params: &[f64], n: usize) -> MaxAffineFunction {
    let pieces = params
        .chunks(n + 1)
        .map(|c| AffinePiece { slope: c[..n].to_vec(), intercept: c[n] })
        .collect();
    MaxAffineFunction::new(pieces).expect("finite parameters")
}

/// Multi-start local search for `sup Var f / E|grad f|^2` over convex
/// max-affine `f` with `k_pieces` pieces.
///
/// Pieces are added one at a time: the search with `j` pieces also starts from
/// the best `j - 1` piece witness (plus a duplicated piece), so the result is
/// non-decreasing in `k_pieces` for a fixed seed.
pub fn estimate_convex_poincare(
    mu: &DiscreteMeasure,
    k_pieces: usize,
    restarts: usize,
    seed: u64,
) -> Result<PoincareEstimate> {
    if k_pieces < 2 {
        return Err(Error::invalid("k_pieces must be at least 2"));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let n = mu.dim();
    let constant = MaxAffineFunction::constant(n, 0.0);
    if mu.len() < 2 {
        return Ok(PoincareEstimate { best_ratio: 0.0, lambda_hat: f64::INFINITY, witness: constant, restarts_used: 0 });
    }
    let center = mu.mean();
    let spread = mu
        .points()
        .iter()
        .map(|x| norm(&x.iter().zip(&center).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .fold(0.0, f64::max);

    let mut best: Option<(f64, MaxAffineFunction)> = None;
    let mut used = 0;
    for k in 2..=k_pieces {
        let warm = best.as_ref().map(|(_, f)| {
            let mut pieces = f.pieces().to_vec();
            pieces.push(pieces[pieces.len() - 1].clone());
            MaxAffineFunction::new(pieces).expect("copy of valid pieces")
        });
        let results: Vec<(f64, MaxAffineFunction)> = (0..restarts)
            .into_par_iter()
            .map(|r| {
                let start = match (&warm, r) {
                    (Some(w), 0) => w.clone(),
                    _ => {
                        let stream = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (r as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
                        let mut rng = ChaCha8Rng::seed_from_u64(stream);
                        random_start(&mut rng, mu, k, spread)
                    }
                };
                local_search(mu, start, spread)
            })
            .collect();
        used += restarts;
        for (ratio, f) in results {
            if best.as_ref().map_or(true, |(b, _)| ratio > *b) {
                best = Some((ratio, f));
            }
        }
    }
    let (_, witness) = best.expect("at least one restart");
    let best_ratio = poincare_ratio(mu, &witness);
    let lambda_hat = if best_ratio > 0.0 { 1.0 / best_ratio } else { f64::INFINITY };
    Ok(PoincareEstimate { best_ratio, lambda_hat, witness, restarts_used: used })
}

fn random_start(rng: &mut ChaCha8Rng, mu: &DiscreteMeasure, k: usize, spread: f64) -> MaxAffineFunction {
    let n = mu.dim();
    let pieces = (0..k)
        .map(|_| {
            let slope: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) / spread).collect();
            let anchor = &mu.points()[rng.gen_range(0..mu.len())];
            let z: Vec<f64> = anchor.iter().map(|v| v + rng.gen_range(-0.5..0.5) * spread).collect();
            let intercept = -slope.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            AffinePiece { slope, intercept }
        })
        .collect();
    MaxAffineFunction::new(pieces).expect("finite start")
}

/// Coordinate perturbation of slopes and intercepts with step halving.
fn local_search(mu: &DiscreteMeasure, start: MaxAffineFunction, spread: f64) -> (f64, MaxAffineFunction) {
    let n = mu.dim();
    let mut params = pieces_to_params(&start);
    let eval = |p: &[f64]| poincare_ratio(mu, &params_to_pieces(p, n));
    let mut value = eval(&params);
    let mut step = 0.5;
    let mut evaluations = 0usize;
    while step > 1e-9 && evaluations < 200_000 {
        let before = value;
        for i in 0..params.len() {
            // slopes move on the scale 1/spread, intercepts on the scale of the values
            let scale = if i % (n + 1) == n { 1.0 + params[i].abs() } else { 1.0 / spread + params[i].abs() };
            for dir in [1.0, -1.0] {
                let mut trial = params.clone();
                trial[i] += dir * step * scale;
                evaluations += 1;
                let v = eval(&trial);
                if v > value {
                    value = v;
                    params = trial;
                    break;
                }
            }
        }
        if value - before <= 1e-9 * value.abs().max(1e-300) {
            step *= 0.5;
        }
    }
    (value, params_to_pieces(&params, n))
}

/// Which dual functional to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DualForm {
    /// `exp(int Q_1 f dmu) int e^{-f} dmu`
    Plus,
    /// `int exp(Q_1 f) dmu exp(-int f dmu)`
    Minus,
    /// `int exp(Q_2 f) dmu int e^{-f} dmu`
    Both,
}

impl DualForm {
    fn id(self) -> &'static str {
        match self {
            DualForm::Plus => "dual-transport-plus",
            DualForm::Minus => "dual-transport-minus",
            DualForm::Both => "inf-convolution-t2",
        }
    }
}

fn log_mean_exp(weights: &[f64], vals: &[f64]) -> f64 {
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + weights.iter().zip(vals).map(|(w, v)| w * (v - top).exp()).sum::<f64>().ln()
}

/// Value of a dual functional (which is `<= 1` when the inequality holds).
///
/// Computed in the log domain after shifting `f` so that its minimum over the
/// support is 0; both functionals are invariant under such shifts.
pub fn dual_value(mu: &DiscreteMeasure, theta: &CostFunction, f: &MaxAffineFunction, form: DualForm) -> Result<f64> {
    ensure_dim(mu.dim(), theta.dim())?;
    ensure_dim(mu.dim(), f.pieces()[0].slope.len())?;
    let low = mu.points().iter().map(|x| f.value(x)).fold(f64::INFINITY, f64::min);
    let g = f.shifted(-low);
    let t = if form == DualForm::Both { 2.0 } else { 1.0 };
    let w = mu.weights();
    let fv: Vec<f64> = mu.points().iter().map(|x| g.value(x)).collect();
    let qv: Vec<f64> = mu.points().iter().map(|x| inf_convolution(&g, theta, t, x)).collect::<Result<_>>()?;
    let neg: Vec<f64> = fv.iter().map(|v| -v).collect();
    let log_value = match form {
        DualForm::Plus => w.iter().zip(&qv).map(|(p, q)| p * q).sum::<f64>() + log_mean_exp(w, &neg),
        DualForm::Minus => log_mean_exp(w, &qv) - w.iter().zip(&fv).map(|(p, v)| p * v).sum::<f64>(),
        DualForm::Both => log_mean_exp(w, &qv) + log_mean_exp(w, &neg),
    };
    Ok(log_value.exp())
}

/// Checks one dual functional for every `f`, in parallel, recording in input order.
pub fn check_dual(
    mu: &DiscreteMeasure,
    theta: &CostFunction,
    fs: &[MaxAffineFunction],
    form: DualForm,
) -> Result<VerificationReport> {
    let values: Vec<f64> = fs.par_iter().map(|f| dual_value(mu, theta, f, form)).collect::<Result<_>>()?;
    let mut report = VerificationReport::new(form.id(), CHECK_TOLERANCE);
    for (i, (v, f)) in values.iter().zip(fs).enumerate() {
        report.record(i, *v, 1.0, || json!({ "f": f.pieces() }));
    }
    Ok(report)
}

/// `exp(int Q_1 f dmu) int e^{-f} dmu <= 1`.
pub fn check_dual_tplus(mu: &DiscreteMeasure, theta: &CostFunction, f: &MaxAffineFunction) -> Result<VerificationReport> {
    check_dual(mu, theta, std::slice::from_ref(f), DualForm::Plus)
}

/// `int exp(Q_1 f) dmu exp(-int f dmu) <= 1`.
pub fn check_dual_tminus(mu: &DiscreteMeasure, theta: &CostFunction, f: &MaxAffineFunction) -> Result<VerificationReport> {
    check_dual(mu, theta, std::slice::from_ref(f), DualForm::Minus)
}

/// `int exp(Q_2 f) dmu int e^{-f} dmu <= 1`.
pub fn check_inf_convolution_t2(
    mu: &DiscreteMeasure,
    theta: &CostFunction,
    f: &MaxAffineFunction,
) -> Result<VerificationReport> {
    check_dual(mu, theta, std::slice::from_ref(f), DualForm::Both)
}

/// Both sides of a log-Sobolev inequality `Ent(e^g) <= C E|grad g|^2 e^g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MlsSides {
    pub entropy: f64,
    pub energy: f64,
    pub constant: f64,
}

/// `Ent(e^{s f})` and `E|grad f|^2 e^{s f}` for `s = +-1`, scaled by a common
/// factor `e^{-max s f}` to avoid overflow.
fn mls_sides(mu: &DiscreteMeasure, f: &MaxAffineFunction, sign: f64) -> (f64, f64) {
    let g: Vec<f64> = mu.points().iter().map(|x| sign * f.value(x)).collect();
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = mu.weights();
    let e: Vec<f64> = g.iter().map(|v| (v - top).exp()).collect();
    let mean_e: f64 = w.iter().zip(&e).map(|(p, v)| p * v).sum();
    // Ent(e^{g - top}) = E[(g - top) e^{g-top}] - E e^{g-top} log E e^{g-top}
    let ent: f64 = w.iter().zip(g.iter().zip(&e)).map(|(p, (gv, ev))| p * (gv - top) * ev).sum::<f64>() - mean_e * mean_e.ln();
    let energy: f64 = mu.atoms().zip(&e).map(|((x, p), ev)| p * f.gradient_length(x).powi(2) * ev).sum();
    (ent.max(0.0), energy)
}

fn slope_cap(f: &MaxAffineFunction, c: f64) -> Result<()> {
    let s = f.max_slope_norm();
    if s > c * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("f has slope norm {s} above the cap c = {c}")));
    }
    Ok(())
}

/// `Ent(e^f) <= C(lambda, c) E|grad f|^2 e^f` for convex `f` with slopes at most `c`.
///
/// Whether `mu` actually satisfies the convex Poincaré inequality with
/// `lambda` is the caller's responsibility.
pub fn check_mls_convex(
    mu: &DiscreteMeasure,
    fs: &[MaxAffineFunction],
    lambda: f64,
    c: f64,
) -> Result<VerificationReport> {
    let constant = mls_convex_constant(lambda, c)?;
    let mut report = VerificationReport::new("mls-convex", CHECK_TOLERANCE);
    for (i, f) in fs.iter().enumerate() {
        ensure_dim(mu.dim(), f.pieces()[0].slope.len())?;
        slope_cap(f, c)?;
        let (ent, energy) = mls_sides(mu, f, 1.0);
        report.record(i, ent, constant * energy, || json!({ "f": f.pieces(), "lambda": lambda, "c": c }));
    }
    Ok(report)
}

/// `Ent(e^{-f}) <= C(lambda, c, M) E|grad f|^2 e^{-f}`; `M` defaults to the
/// 3/4-quantile radius of `mu`.
pub fn check_mls_concave(
    mu: &DiscreteMeasure,
    fs: &[MaxAffineFunction],
    lambda: f64,
    c: f64,
    m: Option<f64>,
) -> Result<VerificationReport> {
    let m = match m {
        Some(m) => m,
        None => quantile_radius(mu, 0.75)?,
    };
    let constant = mls_concave_constant(lambda, c, m)?;
    let mut report = VerificationReport::new("mls-concave", CHECK_TOLERANCE);
    for (i, f) in fs.iter().enumerate() {
        ensure_dim(mu.dim(), f.pieces()[0].slope.len())?;
        slope_cap(f, c)?;
        let (ent, energy) = mls_sides(mu, f, -1.0);
        report.record(i, ent, constant * energy, || json!({ "f": f.pieces(), "lambda": lambda, "c": c, "M": m }));
    }
    Ok(report)
}

/// A tail or moment bound, or the reason it does not apply.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TailBound {
    Applicable {
        value: f64,
        /// Deviation level the bound refers to, when it is derived.
        threshold: Option<f64>,
        /// A probability bound of at least 1 says nothing.
        vacuous: bool,
    },
    NotApplicable {
        reason: String,
    },
}

impl TailBound {
    fn probability(value: f64, threshold: Option<f64>) -> Self {
        TailBound::Applicable { value, threshold, vacuous: value >= 1.0 }
    }

    fn moment(value: f64) -> Self {
        TailBound::Applicable { value, threshold: None, vacuous: !value.is_finite() }
    }

    fn no(reason: impl Into<String>) -> Self {
        TailBound::NotApplicable { reason: reason.into() }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            TailBound::Applicable { value, .. } => Some(*value),
            TailBound::NotApplicable { .. } => None,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            TailBound::Applicable { threshold, .. } => *threshold,
            TailBound::NotApplicable { .. } => None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, TailBound::Applicable { .. })
    }
}

fn finite_pos(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// `P(f >= Med f + t) <= 8 exp(-0.52 sqrt(lambda) t / L)` for `L`-Lipschitz convex `f`.
pub fn upper_tail(lambda: f64, l: f64, t: f64) -> TailBound {
    if !finite_pos(lambda) || !finite_pos(l) || !(t >= 0.0) {
        return TailBound::no("needs lambda > 0, L > 0, t >= 0");
    }
    TailBound::probability(8.0 * (-0.52 * lambda.sqrt() * t / l).exp(), Some(t))
}

/// `||(f - Med f)_+||_p <= p / sqrt(2 lambda) ||grad f||_p` for `p >= 2`.
pub fn moment_upper(lambda: f64, p: f64, g_p: f64) -> TailBound {
    if !finite_pos(lambda) || !(p >= 2.0) || !(g_p >= 0.0) {
        return TailBound::no("needs lambda > 0, p >= 2, gradient moment >= 0");
    }
    TailBound::moment(p / (2.0 * lambda).sqrt() * g_p)
}

/// `P(f <= Med f - t) <= 8 exp(-t sqrt(lambda) / (32 G))` for `t > 32 M G`, `G = E|grad f|`.
pub fn lower_tail(lambda: f64, m: f64, g: f64, t: f64) -> TailBound {
    if !finite_pos(lambda) || !(m >= 0.0) || !finite_pos(g) {
        return TailBound::no("needs lambda > 0, M >= 0, E|grad f| > 0");
    }
    if !(t > 32.0 * m * g) {
        return TailBound::no(format!("t = {t} must exceed 32 M E|grad f| = {}", 32.0 * m * g));
    }
    TailBound::probability(8.0 * (-t * lambda.sqrt() / (32.0 * g)).exp(), Some(t))
}

/// `mu((A + B_theta(r))^c) <= e^{-r} / mu(A)` for convex `A`.
pub fn enlargement(mu_a: f64, r: f64) -> TailBound {
    if !(mu_a > 0.0 && mu_a <= 1.0) || !finite_pos(r) {
        return TailBound::no("needs 0 < mu(A) <= 1 and r > 0");
    }
    TailBound::probability((-r).exp() / mu_a, None)
}

/// `P(|f - Med f| > sup |grad f|*_{theta,p}) <= 4 e^{-p}`.
pub fn lipschitz_conc(p: f64) -> TailBound {
    if !(p >= 0.0) || !p.is_finite() {
        return TailBound::no("needs p >= 0");
    }
    TailBound::probability(4.0 * (-p).exp(), None)
}

/// `||(f - Med f)_+ / |grad f|*_{theta,p}||_p <= 3^{1/p}` for `p >= 1`.
pub fn selfnorm_moment(p: f64) -> TailBound {
    if !(p >= 1.0) || !p.is_finite() {
        return TailBound::no("needs p >= 1");
    }
    TailBound::moment(3f64.powf(1.0 / p))
}

/// `P(f < Med f - 16 E|grad f|*_{theta,p}) <= 4 e^{-p}`.
pub fn nonlip_lower(p: f64, mean_dual_grad: f64) -> TailBound {
    if !(p >= 0.0) || !(mean_dual_grad >= 0.0) {
        return TailBound::no("needs p >= 0 and E|grad f|* >= 0");
    }
    TailBound::probability(4.0 * (-p).exp(), Some(16.0 * mean_dual_grad))
}

/// `P(f < Med f - M_{p,q}(1 + log(8/(2q - 1)))) <= 4 e^{-p}` where `M_{p,q}` is a
/// `q`-quantile of `|grad f|*_{theta,p}`.
pub fn nonlip_lower_quantile(p: f64, q: f64, m_pq: f64) -> TailBound {
    if !(p > 0.0) || !(q > 0.5 && q <= 1.0) || !(m_pq >= 0.0) {
        return TailBound::no("needs p > 0, q in (1/2, 1], M_pq >= 0");
    }
    TailBound::probability(4.0 * (-p).exp(), Some(m_pq * (1.0 + (8.0 / (2.0 * q - 1.0)).ln())))
}

/// `||(f - Med f)_-||_p <= 48 E|grad f|*_{theta,p}` for `p > 0`.
pub fn lower_lp(p: f64, mean_dual_grad: f64) -> TailBound {
    if !(p > 0.0) || !(mean_dual_grad >= 0.0) {
        return TailBound::no("needs p > 0 and E|grad f|* >= 0");
    }
    TailBound::moment(48.0 * mean_dual_grad)
}

/// `P(f - Med f >= t) <= e^{-p} + P(|grad f|*_{theta,p} >= t/(3e))` for `p >= 1`;
/// `dual_grad_tail(s)` returns `P(|grad f|*_{theta,p} >= s)`.
pub fn combined(t: f64, p: f64, dual_grad_tail: impl Fn(f64) -> f64) -> TailBound {
    if !(p >= 1.0) || !(t >= 0.0) {
        return TailBound::no("needs p >= 1 and t >= 0");
    }
    let tail = dual_grad_tail(t / (3.0 * std::f64::consts::E));
    TailBound::probability((-p).exp() + tail, Some(t))
}

/// `P(|f - Med f| >= 3e^2 || |grad f|*_{theta,p} ||_p) <= 6 e^{-p}` for `p >= 1`.
pub fn moment_quantile(p: f64, norm_p: f64) -> TailBound {
    if !(p >= 1.0) || !(norm_p >= 0.0) {
        return TailBound::no("needs p >= 1 and a nonnegative moment");
    }
    let e = std::f64::consts::E;
    TailBound::probability(6.0 * (-p).exp(), Some(3.0 * e * e * norm_p))
}

/// Exact concentration checks on a discrete measure, one report per statement.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    /// `P(|f - Med| > sup|grad f|*) <= 4e^{-p}`
    pub lipschitz: VerificationReport,
    /// `||(f - Med)_+ / |grad f|*||_p <= 3^{1/p}` (instances with `p >= 1`)
    pub self_normalized: VerificationReport,
    /// Lower tail at the 3/4-quantile threshold.
    pub lower_quantile: VerificationReport,
    /// Lower tail at `16 E|grad f|*`.
    pub lower_mean: VerificationReport,
    /// `||(f - Med)_-||_p <= 48 E|grad f|*`
    pub lower_moment: VerificationReport,
}

/// `|grad f|*_{theta,p}` at every atom of `mu` (largest over active pieces)
/// and its supremum over all pieces.
pub fn dual_gradients(
    mu: &DiscreteMeasure,
    f: &MaxAffineFunction,
    theta: &CostFunction,
    p: f64,
) -> Result<(f64, Vec<f64>)> {
    let piece_norms: Vec<f64> =
        f.pieces().iter().map(|pc| theta.dual_norm(p, &pc.slope).map(|d| d.value)).collect::<Result<_>>()?;
    // the gradient of a max-affine function is one of its slopes
    let sup = piece_norms.iter().copied().fold(0.0, f64::max);
    let at_atoms = mu
        .points()
        .iter()
        .map(|x| f.active(x).iter().map(|&k| piece_norms[k]).fold(0.0, f64::max))
        .collect();
    Ok((sup, at_atoms))
}

struct ConcentrationInstance {
    lipschitz: (f64, f64),
    self_normalized: Option<(f64, f64)>,
    lower_quantile: (f64, f64),
    lower_mean: (f64, f64),
    lower_moment: (f64, f64),
}

fn concentration_instance(
    mu: &DiscreteMeasure,
    f: &MaxAffineFunction,
    theta: &CostFunction,
    p: f64,
) -> Result<ConcentrationInstance> {
    let w = mu.weights();
    let vals: Vec<f64> = mu.points().iter().map(|x| f.value(x)).collect();
    let med = weighted_median(&vals, w);
    let (sup_dual, atom_dual) = dual_gradients(mu, f, theta, p)?;
    let mean_dual: f64 = w.iter().zip(&atom_dual).map(|(a, b)| a * b).sum();
    let prob = |pred: &dyn Fn(f64) -> bool| -> f64 { w.iter().zip(&vals).filter(|(_, v)| pred(**v)).fold(0.0, |acc, (p, _)| acc + p) };

    let lip_prob = prob(&|v| (v - med).abs() > sup_dual);
    let bound = 4.0 * (-p).exp();

    let self_normalized = (p >= 1.0).then(|| {
        let moment: f64 = w
            .iter()
            .zip(vals.iter().zip(&atom_dual))
            .map(|(pw, (v, g))| {
                let up = (v - med).max(0.0);
                let ratio = if up == 0.0 { 0.0 } else { up / g };
                pw * ratio.powf(p)
            })
            .sum();
        (moment.powf(1.0 / p), 3f64.powf(1.0 / p))
    });

    let q = 0.75;
    let m_pq = weighted_quantile(&atom_dual, w, q);
    let thr_q = m_pq * (1.0 + (8.0 / (2.0 * q - 1.0)).ln());
    let lower_quantile = (prob(&|v| v < med - thr_q), bound);
    let thr_m = 16.0 * mean_dual;
    let lower_mean = (prob(&|v| v < med - thr_m), bound);
    let lower_norm: f64 =
        w.iter().zip(&vals).map(|(pw, v)| pw * (med - v).max(0.0).powf(p)).sum::<f64>().powf(1.0 / p);
    Ok(ConcentrationInstance {
        lipschitz: (lip_prob, bound),
        self_normalized,
        lower_quantile,
        lower_mean,
        lower_moment: (lower_norm, 48.0 * mean_dual),
    })
}

/// Exact probabilities and moments under `mu` for every `(f, p)` pair, compared
/// with the concentration bounds for the cost `theta`. Probability bounds of
/// at least 1 are counted as vacuous.
pub fn empirical_concentration_check(
    mu: &DiscreteMeasure,
    fs: &[MaxAffineFunction],
    theta: &CostFunction,
    ps: &[f64],
) -> Result<ConcentrationReport> {
    ensure_dim(mu.dim(), theta.dim())?;
    if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::range(format!("p must be positive, got {p}")));
    }
    let jobs: Vec<(usize, usize)> = (0..fs.len()).flat_map(|i| (0..ps.len()).map(move |j| (i, j))).collect();
    let results: Vec<ConcentrationInstance> =
        jobs.par_iter().map(|&(i, j)| concentration_instance(mu, &fs[i], theta, ps[j])).collect::<Result<_>>()?;
    let mut report = ConcentrationReport {
        lipschitz: VerificationReport::new("concentration-lipschitz", 1e-12),
        self_normalized: VerificationReport::new("concentration-self-normalized", 1e-12),
        lower_quantile: VerificationReport::new("concentration-lower-quantile", 1e-12),
        lower_mean: VerificationReport::new("concentration-lower-mean", 1e-12),
        lower_moment: VerificationReport::new("concentration-lower-moment", 1e-12),
    };
    let record_prob = |r: &mut VerificationReport, id: usize, (lhs, rhs): (f64, f64), inputs: &dyn Fn() -> serde_json::Value| {
        if rhs >= 1.0 {
            r.record_vacuous();
        } else {
            r.record(id, lhs, rhs, inputs);
        }
    };
    for (id, (&(i, j), inst)) in jobs.iter().zip(results).enumerate() {
        let inputs = || json!({ "f": fs[i].pieces(), "p": ps[j] });
        record_prob(&mut report.lipschitz, id, inst.lipschitz, &inputs);
        if let Some((lhs, rhs)) = inst.self_normalized {
            report.self_normalized.record(id, lhs, rhs, inputs);
        }
        record_prob(&mut report.lower_quantile, id, inst.lower_quantile, &inputs);
        record_prob(&mut report.lower_mean, id, inst.lower_mean, &inputs);
        report.lower_moment.record(id, inst.lower_moment.0, inst.lower_moment.1, inputs);
    }
    Ok(report)
}

/// Random max-affine function with `k` pieces whose slopes have Euclidean norm
/// at most `max_slope` and whose kinks fall near `[-spread, spread]^n`.
pub fn random_max_affine(rng: &mut impl Rng, dim: usize, k: usize, max_slope: f64, spread: f64) -> MaxAffineFunction {
    let pieces = (0..k.max(1))
        .map(|_| {
            let mut a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let na = norm(&a).max(1e-300);
            let r = max_slope * rng.gen_range(0.0..1.0f64);
            a.iter_mut().for_each(|v| *v *= r / na);
            let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-spread..=spread)).collect();
            let b = -a.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>() + rng.gen_range(-0.1..0.1) * max_slope * spread;
            AffinePiece { slope: a, intercept: b }
        })
        .collect();
    MaxAffineFunction::new(pieces).expect("finite coefficients")
}

/// Random measure carried by a random nonempty subset of the atoms of `mu`.
pub fn random_measure_on_support(rng: &mut impl Rng, mu: &DiscreteMeasure) -> DiscreteMeasure {
    loop {
        let w: Vec<f64> =
            (0..mu.len()).map(|_| if rng.gen_bool(0.8) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
        let total: f64 = w.iter().sum();
        if total > 1e-3 {
            let w = w.iter().map(|v| v / total).collect();
            return DiscreteMeasure::new(mu.points().to_vec(), w).expect("normalized weights on valid atoms");
        }
    }
}
