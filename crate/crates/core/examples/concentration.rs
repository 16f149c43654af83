//! Tail and moment bounds for convex functions, compared with exact tails on
//! a product of two-point measures.

use convex_transport::constants::{product_cost, ConstantsPipeline};
use convex_transport::inequalities::{
    empirical_concentration_check, lower_tail, moment_quantile, random_max_affine, selfnorm_moment, upper_tail,
};
use convex_transport::measures::{product_measure, quantile_radius, weighted_median};
use convex_transport::DiscreteMeasure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> convex_transport::Result<()> {
    println!("upper tail at t = 0: {:?}", upper_tail(2.0, 1.0, 0.0));
    println!("lower tail at the boundary: {:?}", lower_tail(2.0, 0.5, 1.0, 16.0));
    println!("self-normalized moment, p = 1: {:?}", selfnorm_moment(1.0));
    println!("moment quantile, p = 3: {:?}", moment_quantile(3.0, 0.2));

    let factor = DiscreteMeasure::two_point(0.0, 1.0, 0.5)?;
    let mut mu = factor.clone();
    for _ in 1..4 {
        mu = product_measure(&mu, &factor);
    }
    // exact upper tail of the coordinate sum against the bound with L = 2 (the Euclidean slope norm)
    let sums: Vec<f64> = mu.points().iter().map(|x| x.iter().sum()).collect();
    let med = weighted_median(&sums, mu.weights());
    println!("   t   exact   bound");
    for t in [0.5, 1.0, 2.0, 3.0] {
        let exact = mu.weights().iter().zip(&sums).filter(|(_, s)| **s >= med + t).fold(0.0, |acc, (w, _)| acc + w);
        println!("{t:4.1}  {exact:.4}  {:.4}", upper_tail(2.0, 2.0, t).value().unwrap_or(f64::NAN));
    }

    let m = quantile_radius(&factor, 0.75)?;
    let minus = ConstantsPipeline::new(2.0, 0.5, Some(m))?;
    let plus = ConstantsPipeline::new(2.0, 0.02, Some(m))?;
    let theta = product_cost(&minus, &plus, mu.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let fs: Vec<_> = (0..200).map(|i| random_max_affine(&mut rng, 4, 1 + i % 4, 1.0, 1.0)).collect();
    let r = empirical_concentration_check(&mu, &fs, &theta, &[1.0, 2.0, 4.0])?;
    for rep in [&r.lipschitz, &r.self_normalized, &r.lower_quantile, &r.lower_mean, &r.lower_moment] {
        println!(
            "{:32} {} checks ({} vacuous), worst ratio {:.4}, violations {}",
            rep.id,
            rep.instances,
            rep.vacuous,
            rep.worst_ratio.unwrap_or(0.0),
            rep.violations.len()
        );
    }
    Ok(())
}
