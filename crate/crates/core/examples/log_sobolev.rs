//! Modified log-Sobolev inequalities for convex and concave exponentials.

use convex_transport::hopflax::MaxAffineFunction;
use convex_transport::inequalities::{check_mls_concave, check_mls_convex, random_max_affine};
use convex_transport::DiscreteMeasure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> convex_transport::Result<()> {
    let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5])?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let fs: Vec<_> = (0..500).map(|i| random_max_affine(&mut rng, 1, 1 + i % 3, 0.5, 1.0)).collect();
    let convex = check_mls_convex(&mu, &fs, 2.0, 0.5)?;
    println!("Ent(e^f) <= C E|f'|^2 e^f: worst ratio {:.4} over {}", convex.worst_ratio.unwrap_or(0.0), convex.instances);

    let fs: Vec<_> = (0..500).map(|i| random_max_affine(&mut rng, 1, 1 + i % 3, 0.02, 1.0)).collect();
    let concave = check_mls_concave(&mu, &fs, 2.0, 0.02, None)?;
    println!("Ent(e^-f) <= C E|f'|^2 e^-f: worst ratio {:.3e} over {}", concave.worst_ratio.unwrap_or(0.0), concave.instances);

    let edge = MaxAffineFunction::affine(vec![0.5], 0.0)?;
    let r = check_mls_convex(&mu, &[edge], 2.0, 0.5)?;
    println!("linear f with the largest allowed slope: slack {:.6}", r.worst_slack.unwrap_or(f64::NAN));
    Ok(())
}
