//! Standard and weak (barycentric) optimal transport between discrete measures.
//!
//! Direction convention: [`weak_ot`]`(nu, mu, theta)` computes `T̄_θ(ν|μ)`, an
//! average over the atoms of `mu` of `theta(x - b_x)`, where `b_x` is the
//! barycenter of the conditional law of `Y` given `X = x` under a coupling of
//! `(mu, nu)`.

mod bruteforce;
pub mod lp;
mod weak;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::costs::CostFunction;
use crate::error::{ensure_dim, Error, Result};
use crate::measures::{relative_entropy, DiscreteMeasure};
use crate::report::VerificationReport;

pub use weak::{FwOptions, FwVariant};

/// Marginal tolerance for couplings.
pub const MARGINAL_TOLERANCE: f64 = 1e-10;

/// A coupling of `mu` (rows) and `nu` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    pi: Vec<Vec<f64>>,
}

impl Coupling {
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, pi: Vec<Vec<f64>>) -> Result<Self> {
        if pi.len() != mu.len() || pi.iter().any(|r| r.len() != nu.len()) {
            return Err(Error::invalid(format!("coupling must be {} x {}", mu.len(), nu.len())));
        }
        if pi.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("coupling entries must be finite and nonnegative"));
        }
        let c = Coupling { mu, nu, pi };
        let res = c.marginal_residual();
        if res > MARGINAL_TOLERANCE {
            return Err(Error::invalid(format!("coupling marginals off by {res:e}")));
        }
        Ok(c)
    }

    fn from_flat(mu: &DiscreteMeasure, nu: &DiscreteMeasure, flat: &[f64]) -> Result<Self> {
        let k = nu.len();
        let pi = flat.chunks(k).map(|r| r.to_vec()).collect();
        Coupling::new(mu.clone(), nu.clone(), pi)
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn pi(&self) -> &[Vec<f64>] {
        &self.pi
    }

    /// Largest deviation of a row or column sum from its marginal weight.
    pub fn marginal_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, w) in self.pi.iter().zip(self.mu.weights()) {
            worst = worst.max((row.iter().sum::<f64>() - w).abs());
        }
        for (j, w) in self.nu.weights().iter().enumerate() {
            let col: f64 = self.pi.iter().map(|r| r[j]).sum();
            worst = worst.max((col - w).abs());
        }
        worst
    }

    /// Conditional law `p_{x_i}(j) = pi_ij / mu_i`.
    pub fn conditional(&self, i: usize) -> Vec<f64> {
        let w = self.mu.weights()[i];
        self.pi[i].iter().map(|v| v / w).collect()
    }

    /// `b_i = sum_j y_j p_{x_i}(j)`.
    pub fn barycenters(&self) -> Vec<Vec<f64>> {
        (0..self.mu.len())
            .map(|i| {
                let p = self.conditional(i);
                let mut b = vec![0.0; self.nu.dim()];
                for (pj, y) in p.iter().zip(self.nu.points()) {
                    for (bd, yd) in b.iter_mut().zip(y) {
                        *bd += pj * yd;
                    }
                }
                b
            })
            .collect()
    }
}

/// A coupling with its conditional barycenters and barycentric cost.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricPlan {
    pub coupling: Coupling,
    pub barycenters: Vec<Vec<f64>>,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct StandardOt {
    pub cost: f64,
    pub coupling: Coupling,
    /// Complementary-slackness residual of the final basis.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct WeakOt {
    pub cost: f64,
    pub plan: BarycentricPlan,
    /// Frank-Wolfe duality gap, an upper bound on `cost - optimum`.
    pub gap: f64,
    pub iterations: usize,
    /// Objective after each iteration (only when requested).
    pub history: Vec<f64>,
}

impl WeakOt {
    pub fn to_file(&self) -> PlanFile {
        PlanFile {
            pi: self.plan.coupling.pi().to_vec(),
            barycenters: self.plan.barycenters.clone(),
            cost: self.cost,
            gap: self.gap,
        }
    }
}

/// Plan export: `{"pi": [[...]], "barycenters": [[...]], "cost": r, "gap": g}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub pi: Vec<Vec<f64>>,
    pub barycenters: Vec<Vec<f64>>,
    pub cost: f64,
    pub gap: f64,
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure, theta: &CostFunction) -> Result<()> {
    ensure_dim(mu.dim(), nu.dim())?;
    ensure_dim(theta.dim(), mu.dim())
}

/// `T_θ(mu, nu) = min_pi sum pi_ij theta(x_i - y_j)`, solved exactly.
pub fn standard_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure, theta: &CostFunction) -> Result<StandardOt> {
    check_dims(mu, nu, theta)?;
    if mu.len() * nu.len() > lp::MAX_CELLS {
        return Err(Error::Resource(format!(
            "{} x {} transport problem exceeds {} cells",
            mu.len(),
            nu.len(),
            lp::MAX_CELLS
        )));
    }
    let mut cost = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.points() {
        for y in nu.points() {
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            cost.push(theta.value(&diff));
        }
    }
    let sol = lp::solve(mu.weights(), nu.weights(), &cost)?;
    let coupling = Coupling::from_flat(mu, nu, &sol.plan)?;
    Ok(StandardOt { cost: sol.cost, coupling, residual: sol.residual })
}

/// `W_2^2(mu0, mu1)`: the standard cost with `theta(x) = |x|^2`.
pub fn w2_squared(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<f64> {
    let theta = CostFunction::power(mu0.dim(), 1.0, 2.0)?;
    Ok(standard_ot(mu0, mu1, &theta)?.cost)
}

/// `T̄_θ(nu | mu)` with default solver options.
pub fn weak_ot(nu: &DiscreteMeasure, mu: &DiscreteMeasure, theta: &CostFunction) -> Result<WeakOt> {
    weak_ot_with(nu, mu, theta, &FwOptions::default())
}

pub fn weak_ot_with(
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    theta: &CostFunction,
    opts: &FwOptions,
) -> Result<WeakOt> {
    check_dims(mu, nu, theta)?;
    let problem = weak::Problem { mu: mu.weights(), xs: mu.points(), nu: nu.weights(), ys: nu.points(), theta };
    let out = weak::frank_wolfe(&problem, opts)?;
    let coupling = Coupling::from_flat(mu, nu, &out.plan)?;
    let barycenters = problem.barycenters(&out.plan);
    Ok(WeakOt {
        cost: out.cost,
        plan: BarycentricPlan { coupling, barycenters, cost: out.cost },
        gap: out.gap,
        iterations: out.iterations,
        history: out.history,
    })
}

/// Grid-search oracle for `T̄_θ(nu | mu)` on problems with at most 3 x 3 atoms.
pub fn weak_ot_bruteforce(nu: &DiscreteMeasure, mu: &DiscreteMeasure, theta: &CostFunction) -> Result<f64> {
    check_dims(mu, nu, theta)?;
    let problem = weak::Problem { mu: mu.weights(), xs: mu.points(), nu: nu.weights(), ys: nu.points(), theta };
    bruteforce::minimize(&problem)
}

/// Which transport-entropy inequality to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `T̄_θ(ν|μ) <= H(ν|μ)`
    Plus,
    /// `T̄_θ(μ|ν) <= H(ν|μ)`
    Minus,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportInequalityReport {
    pub plus: VerificationReport,
    pub minus: VerificationReport,
}

/// Checks both weak transport-entropy inequalities for every `nu` in the family.
///
/// Measures with infinite relative entropy are counted as vacuous.
pub fn check_weak_transport_inequalities(
    mu: &DiscreteMeasure,
    theta: &CostFunction,
    nus: &[DiscreteMeasure],
) -> Result<TransportInequalityReport> {
    Ok(TransportInequalityReport {
        plus: check_transport_branch(mu, theta, nus, Branch::Plus, 0)?,
        minus: check_transport_branch(mu, theta, nus, Branch::Minus, 0)?,
    })
}

/// One branch of the transport-entropy check; instance ids start at `first_id`.
pub fn check_transport_branch(
    mu: &DiscreteMeasure,
    theta: &CostFunction,
    nus: &[DiscreteMeasure],
    branch: Branch,
    first_id: usize,
) -> Result<VerificationReport> {
    let id = match branch {
        Branch::Plus => "weak-transport-plus",
        Branch::Minus => "weak-transport-minus",
    };
    let results: Vec<Option<(f64, f64, f64)>> = nus
        .par_iter()
        .map(|nu| {
            let h = relative_entropy(nu, mu)?;
            if !h.is_finite() {
                return Ok(None);
            }
            let t = match branch {
                Branch::Plus => weak_ot(nu, mu, theta)?,
                Branch::Minus => weak_ot(mu, nu, theta)?,
            };
            Ok(Some((t.cost, h, t.gap)))
        })
        .collect::<Result<_>>()?;
    let mut report = VerificationReport::new(id, 1e-8);
    for (offset, (nu, r)) in nus.iter().zip(results).enumerate() {
        match r {
            None => report.record_vacuous(),
            Some((cost, h, gap)) => report.record(first_id + offset, cost, h, || {
                json!({"nu_points": nu.points(), "nu_weights": nu.weights(), "gap": gap})
            }),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::uniform(vec![vec![-1.0], vec![1.0]]).unwrap()
    }

    fn quad() -> CostFunction {
        CostFunction::power(1, 1.0, 2.0).unwrap()
    }

    fn random_measure(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DiscreteMeasure {
        let pts: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let t: f64 = w.iter().sum();
        DiscreteMeasure::new(pts, w.iter().map(|v| v / t).collect()).unwrap()
    }

    #[test]
    fn standard_ot_examples() {
        let mu = two_point();
        let r = standard_ot(&mu, &mu, &quad()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.residual <= 1e-8);
        let d0 = DiscreteMeasure::dirac(vec![0.0]).unwrap();
        assert!((standard_ot(&d0, &mu, &quad()).unwrap().cost - 1.0).abs() < 1e-15);
        let other = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        assert!(standard_ot(&other, &mu, &quad()).is_err());
    }

    #[test]
    fn monotone_rearrangement_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let theta = CostFunction::quad_linear(1, 1.0, 1.0).unwrap();
        for _ in 0..50 {
            let n = rng.gen_range(1..8);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
            let ys: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
            let mu = DiscreteMeasure::uniform(xs.clone()).unwrap();
            let nu = DiscreteMeasure::uniform(ys.clone()).unwrap();
            let mut a: Vec<f64> = xs.iter().map(|p| p[0]).collect();
            let mut b: Vec<f64> = ys.iter().map(|p| p[0]).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let mono: f64 = a.iter().zip(&b).map(|(x, y)| theta.value(&[x - y])).sum::<f64>() / n as f64;
            let lp = standard_ot(&mu, &nu, &theta).unwrap().cost;
            assert!((lp - mono).abs() < 1e-12, "{lp} vs {mono}");
        }
    }

    #[test]
    fn w2_examples() {
        let mu = DiscreteMeasure::two_point(0.0, 1.0, 0.5).unwrap();
        assert_eq!(w2_squared(&mu, &mu).unwrap(), 0.0);
        let a = DiscreteMeasure::dirac(vec![1.0, 2.0]).unwrap();
        let b = DiscreteMeasure::dirac(vec![-1.0, 0.0]).unwrap();
        assert!((w2_squared(&a, &b).unwrap() - 8.0).abs() < 1e-12);
        let nu = DiscreteMeasure::two_point(0.0, 2.0, 0.5).unwrap();
        assert!((w2_squared(&mu, &nu).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weak_ot_forced_couplings() {
        let nu = two_point();
        let d0 = DiscreteMeasure::dirac(vec![0.0]).unwrap();
        let to_nu = weak_ot(&nu, &d0, &quad()).unwrap();
        assert!(to_nu.cost.abs() < 1e-12);
        assert!(to_nu.plan.barycenters[0][0].abs() < 1e-12);
        let from_nu = weak_ot(&d0, &nu, &quad()).unwrap();
        assert!((from_nu.cost - 1.0).abs() < 1e-12);
        let same = weak_ot(&nu, &nu, &quad()).unwrap();
        assert!(same.cost.abs() < 1e-12);
        let ber = DiscreteMeasure::two_point(0.0, 1.0, 0.5).unwrap();
        assert!(weak_ot_bruteforce(&ber, &ber, &quad()).unwrap().abs() < 1e-12);
        assert!((weak_ot_bruteforce(&d0, &nu, &quad()).unwrap() - 1.0).abs() < 1e-12);
        assert!(weak_ot_bruteforce(&nu, &d0, &quad()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn frank_wolfe_matches_bruteforce_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let costs = [quad(), CostFunction::quad_linear(1, 1.0, 1.0).unwrap()];
        for case in 0..20 {
            let (m, k) = if case % 2 == 0 { (2, 2) } else { (2, 3) };
            let mu = random_measure(&mut rng, m, 1);
            let nu = random_measure(&mut rng, k, 1);
            let theta = &costs[case % 4 / 2];
            let fw = weak_ot(&nu, &mu, theta).unwrap();
            let brute = weak_ot_bruteforce(&nu, &mu, theta).unwrap();
            assert!((fw.cost - brute).abs() <= 1e-5, "case {case}: fw {} brute {brute} gap {}", fw.cost, fw.gap);
            assert!(fw.gap <= 1e-8, "gap {}", fw.gap);
            assert!(fw.plan.coupling.marginal_residual() <= MARGINAL_TOLERANCE);
        }
    }

    #[test]
    fn history_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for variant in [FwVariant::Vanilla, FwVariant::Pairwise] {
            let mu = random_measure(&mut rng, 4, 2);
            let nu = random_measure(&mut rng, 5, 2);
            let theta = CostFunction::quad_linear(2, 0.5, 1.0).unwrap();
            let opts = FwOptions { record_history: true, variant, max_iterations: 500, ..FwOptions::default() };
            let r = weak_ot_with(&nu, &mu, &theta, &opts).unwrap();
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{variant:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn jensen_domination_and_barycenters_in_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let (m, k) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let mu = random_measure(&mut rng, m, 2);
            let nu = random_measure(&mut rng, k, 2);
            let theta = CostFunction::quad_linear(2, 1.0, 1.0).unwrap();
            let weak = weak_ot(&nu, &mu, &theta).unwrap();
            let strong = standard_ot(&mu, &nu, &theta).unwrap();
            assert!(weak.cost <= strong.cost + 1e-9);
            for b in &weak.plan.barycenters {
                for a in 0..2 {
                    let lo = nu.points().iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
                    let hi = nu.points().iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
                    assert!(b[a] >= lo - 1e-12 && b[a] <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn transport_inequality_report() {
        let mu = DiscreteMeasure::two_point(0.0, 1.0, 0.5).unwrap();
        let theta = CostFunction::quad_linear(1, 2.0, 0.5).unwrap();
        let atom = DiscreteMeasure::dirac(vec![1.0]).unwrap();
        let outside = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let r = check_weak_transport_inequalities(&mu, &theta, &[mu.clone(), atom, outside]).unwrap();
        assert_eq!(r.plus.instances, 3);
        assert_eq!(r.plus.vacuous, 1);
        assert!(r.plus.passed() && r.minus.passed());
        assert!(r.plus.worst_ratio.unwrap() <= 1.0);
    }

    #[test]
    fn coupling_validation() {
        let mu = DiscreteMeasure::two_point(0.0, 1.0, 0.5).unwrap();
        assert!(Coupling::new(mu.clone(), mu.clone(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]).is_ok());
        assert!(Coupling::new(mu.clone(), mu.clone(), vec![vec![0.5, 0.1], vec![0.0, 0.4]]).is_err());
        assert!(Coupling::new(mu.clone(), mu.clone(), vec![vec![1.0]]).is_err());
        let c = Coupling::new(mu.clone(), mu, vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert_eq!(c.conditional(0), vec![0.5, 0.5]);
        assert_eq!(c.barycenters(), vec![vec![0.5], vec![0.5]]);
    }
}
