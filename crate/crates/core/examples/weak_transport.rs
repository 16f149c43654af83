//! Barycentric transport between discrete measures, in both directions, next
//! to the standard cost it never exceeds.

use convex_transport::transport::{standard_ot, weak_ot, weak_ot_bruteforce};
use convex_transport::{CostFunction, DiscreteMeasure};

fn main() -> convex_transport::Result<()> {
    let delta = DiscreteMeasure::dirac(vec![0.0])?;
    let pair = DiscreteMeasure::uniform(vec![vec![-1.0], vec![1.0]])?;
    let theta = CostFunction::power(1, 1.0, 2.0)?;

    // spreading a point mass is free; collapsing a pair onto it is not
    let spread = weak_ot(&pair, &delta, &theta)?;
    let collapse = weak_ot(&delta, &pair, &theta)?;
    println!("T(pair | delta) = {:.3e}   T(delta | pair) = {:.6}", spread.cost, collapse.cost);

    let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![0.2, 0.5, 0.3])?;
    let nu = DiscreteMeasure::new(vec![vec![-0.5], vec![2.0]], vec![0.6, 0.4])?;
    let weak = weak_ot(&nu, &mu, &theta)?;
    let standard = standard_ot(&mu, &nu, &theta)?;
    println!("weak {:.6} (gap {:.1e}, {} iterations) <= standard {:.6}", weak.cost, weak.gap, weak.iterations, standard.cost);
    println!("barycenters: {:?}", weak.plan.barycenters);
    println!("plan export: {}", serde_json::to_string(&weak.to_file()).expect("plan serializes"));

    let small_nu = DiscreteMeasure::new(vec![vec![-0.5], vec![2.0]], vec![0.6, 0.4])?;
    let small_mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.3, 0.7])?;
    let fw = weak_ot(&small_nu, &small_mu, &theta)?.cost;
    let brute = weak_ot_bruteforce(&small_nu, &small_mu, &theta)?;
    println!("2x2 check: Frank-Wolfe {fw:.9} vs exhaustive {brute:.9}");
    Ok(())
}
