//! Discrete measures: relative entropy, medians, products and mixtures.

use convex_transport::measures::{
    median_variance_check, mixture, product_measure, pushforward_stats, quantile_radius, relative_entropy,
};
use convex_transport::DiscreteMeasure;

fn main() -> convex_transport::Result<()> {
    let mu = DiscreteMeasure::two_point(0.0, 1.0, 0.5)?;
    let nu = DiscreteMeasure::two_point(0.0, 1.0, 0.25)?;
    println!("H(nu|mu) = {:.6}", relative_entropy(&nu, &mu)?);
    let off = DiscreteMeasure::dirac(vec![0.5])?;
    println!("H(off-support|mu) = {}", relative_entropy(&off, &mu)?);

    let cube = product_measure(&product_measure(&mu, &mu), &mu);
    println!("product on {} atoms in R^{}", cube.len(), cube.dim());
    let stats = pushforward_stats(&cube, |x| x.iter().sum());
    println!("sum of coordinates: {stats:?}");
    println!("median/variance: {:?}", median_variance_check(&cube, |x| x[0].max(x[1]) + x[2]));
    println!("3/4-quantile radius of mu: {}", quantile_radius(&mu, 0.75)?);

    let shifted = DiscreteMeasure::two_point(2.0, 3.0, 0.5)?;
    let mix = mixture(&mu, &shifted, 0.3)?;
    println!("mixture atoms {:?}", mix.points());
    Ok(())
}
