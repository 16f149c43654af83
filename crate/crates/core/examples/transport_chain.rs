//! From a Poincaré constant to weak transport-entropy inequalities: derive the
//! costs, then test the dual forms and the inequalities themselves.

use convex_transport::constants::{combined_cost, ConstantsPipeline};
use convex_transport::inequalities::{check_dual, random_max_affine, random_measure_on_support, DualForm};
use convex_transport::transport::{check_transport_branch, Branch};
use convex_transport::DiscreteMeasure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> convex_transport::Result<()> {
    let mu = DiscreteMeasure::two_point(0.0, 1.0, 0.5)?;
    let minus = ConstantsPipeline::new(2.0, 0.5, None)?;
    let plus = ConstantsPipeline::new(2.0, 0.02, Some(0.5))?;
    let theta_minus = minus.cost(Branch::Minus, 1)?;
    let theta_plus = plus.cost(Branch::Plus, 1)?;
    let theta_both = combined_cost(&minus, &plus, 1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let steep: Vec<_> = (0..200).map(|i| random_max_affine(&mut rng, 1, 1 + i % 4, 0.5, 1.5)).collect();
    let flat: Vec<_> = (0..200).map(|i| random_max_affine(&mut rng, 1, 1 + i % 4, 0.02, 1.5)).collect();
    let nus: Vec<_> = (0..200).map(|_| random_measure_on_support(&mut rng, &mu)).collect();

    let reports = [
        check_dual(&mu, &theta_minus, &steep, DualForm::Minus)?,
        check_dual(&mu, &theta_plus, &flat, DualForm::Plus)?,
        check_dual(&mu, &theta_both, &flat, DualForm::Both)?,
        check_transport_branch(&mu, &theta_minus, &nus, Branch::Minus, 0)?,
        check_transport_branch(&mu, &theta_plus, &nus, Branch::Plus, 0)?,
    ];
    for r in &reports {
        println!(
            "{:22} {:4} instances, worst lhs/rhs {:.6}, violations {}",
            r.id,
            r.instances,
            r.worst_ratio.unwrap_or(0.0),
            r.violations.len()
        );
    }
    Ok(())
}
