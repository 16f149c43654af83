//! Searching for the convex Poincaré constant of small discrete measures.

use convex_transport::inequalities::{estimate_convex_poincare, poincare_ratio};
use convex_transport::measures::product_measure;
use convex_transport::DiscreteMeasure;

fn main() -> convex_transport::Result<()> {
    let bernoulli = DiscreteMeasure::two_point(0.0, 1.0, 0.5)?;
    let e = estimate_convex_poincare(&bernoulli, 2, 64, 0xC0FFEE)?;
    println!("Bernoulli(1/2): best ratio {:.9}, lambda <= {:.6}", e.best_ratio, e.lambda_hat);

    let skewed = DiscreteMeasure::two_point(0.0, 1.0, 0.2)?;
    let e = estimate_convex_poincare(&skewed, 3, 32, 1)?;
    println!("Bernoulli(0.2): best ratio {:.6} (1D analysis gives max(p, 1-p) = 0.8)", e.best_ratio);

    let three = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![0.2, 0.5, 0.3])?;
    for k in 2..=4 {
        let e = estimate_convex_poincare(&three, k, 16, 7)?;
        println!("three atoms, {k} pieces: {:.6}", e.best_ratio);
    }

    let square = product_measure(&bernoulli, &bernoulli);
    let e = estimate_convex_poincare(&square, 3, 16, 3)?;
    println!("product square: {:.6} (check {:.6})", e.best_ratio, poincare_ratio(&square, &e.witness));
    Ok(())
}
