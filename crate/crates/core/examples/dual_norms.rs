//! Orlicz norms and their duals for radial and coordinate-wise costs.

use convex_transport::costs::{dual_norm_rearranged, norm_comparison_check};
use convex_transport::CostFunction;

fn main() -> convex_transport::Result<()> {
    let x = [1.0, -2.0, 0.5];
    let power = CostFunction::power(3, 2.0, 3.0)?;
    for p in [0.5, 1.0, 4.0] {
        let d = power.dual_norm(p, &x)?;
        println!("power cost, p = {p}: |x|_theta/p = {:.6}, |x|* = {:.6}", power.orlicz_norm(p, &x)?, d.value);
    }

    // sqrt(p)|x| + p max|x_i| is within a factor 2 of the dual norm of the convexified cost
    let c = 0.8;
    let envelope = CostFunction::min_quad_linear_envelope(3, c)?;
    for p in [0.1, 1.0, 10.0] {
        let dual = envelope.dual_norm(p, &x)?.value;
        let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mid = c * (p.sqrt() * l2 + p * linf);
        println!("envelope cost, p = {p}: |x|* = {dual:.6}, sandwich ratio {:.4}", mid / dual);
    }

    let qp = CostFunction::per_coord_quad_power(3, 1.0, 4.0)?;
    let r = dual_norm_rearranged(&qp, 2, &x)?;
    println!("rearrangement form: numeric {:.6}, formula {:.6}, ratio {:.4}", r.numeric, r.formula, r.ratio);

    let quad_linear = CostFunction::per_coord_quad_linear(3, 1.0, 0.5, 1)?;
    println!("scaling in p: {:?}", norm_comparison_check(&quad_linear, 1.0, 3.0, &x)?);
    Ok(())
}
