//! Infimum convolution of max-affine functions, with grid diagnostics.

use convex_transport::hopflax::{
    hj_residual, inf_convolution, inf_convolution_detailed, lipschitz_and_displacement_check, semigroup_check,
    ConvexClosure, GridSpec, MaxAffineFunction,
};
use convex_transport::CostFunction;

fn main() -> convex_transport::Result<()> {
    // Q_1 of x^2 under the quadratic cost is x^2 / 2
    let quad = CostFunction::power(1, 1.0, 2.0)?;
    let square = ConvexClosure::new(1, |x: &[f64]| x[0] * x[0], None);
    for x in [-1.0, 0.5, 2.0] {
        println!("Q_1(x^2)({x}) = {:.9}", inf_convolution(&square, &quad, 1.0, &[x])?);
    }

    let f = MaxAffineFunction::from_pairs(&[(vec![0.5, 0.1], 0.0), (vec![-0.3, 0.2], 0.1), (vec![0.0, -0.4], 0.0)])?;
    let theta = CostFunction::quad_linear(2, 1.0, 1.0)?;
    let r = inf_convolution_detailed(&f, &theta, 0.7, &[0.2, -0.1])?;
    println!("Q_0.7 f = {:.9} (certified lower bound {:?}) at y = {:?}", r.value, r.lower_bound, r.minimizer);

    let g = MaxAffineFunction::from_pairs(&[(vec![0.5], 0.0), (vec![-0.3], 0.0)])?;
    let alpha = CostFunction::radial_alpha(1, 1.0, 1.0)?;
    let wide = GridSpec::interval(-2.0, 2.0, 0.01)?;
    let sg = semigroup_check(&g, &alpha, 0.4, 0.6, &wide)?;
    println!("semigroup: max defect {:.2e} (allowed {:.2e}) over {} nodes", sg.max_defect, sg.tolerance, sg.nodes_checked);

    let times: Vec<f64> = (0..10).map(|k| 0.5 + 0.05 * k as f64 + 0.003).collect();
    for h in [0.02, 0.01] {
        let spec = GridSpec::interval(-1.0, 1.0, h)?;
        let hj = hj_residual(&g, 1.0, 1.0, &times, h, &spec)?;
        println!("h = {h}: HJ max residual {:.3e}, mean {:.3e}", hj.max_residual, hj.mean_abs_residual);
    }
    let spec = GridSpec::interval(-1.0, 1.0, 0.01)?;
    let d = lipschitz_and_displacement_check(&g, 1.0, 1.0, 1.0, &spec)?;
    println!("|u - f| = {:.4} <= C L^2 t = {:.4}", d.max_displacement, d.displacement_bound);
    Ok(())
}
