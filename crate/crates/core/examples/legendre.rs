//! Closed-form Legendre transforms next to a numeric supremum.

use convex_transport::costs::{legendre_quadlinear, legendre_radial_alpha, numeric_conjugate_1d, DIVERGENCE_SENTINEL};
use convex_transport::hopflax::cost_conjugate;
use convex_transport::CostFunction;

fn main() -> convex_transport::Result<()> {
    let (c, l) = (0.5, 2.0);
    let alpha = CostFunction::radial_alpha(1, c, l)?;
    println!("  s    closed alpha*   numeric");
    for s in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5] {
        let numeric = numeric_conjugate_1d(|u| alpha.value(&[u]), s);
        let shown = if numeric > DIVERGENCE_SENTINEL { "diverges".to_string() } else { format!("{numeric:.9}") };
        println!("{s:4.1}  {:>12}  {shown}", legendre_radial_alpha(c, l, s));
    }

    let theta = CostFunction::quad_linear(2, 1.5, 1.0)?;
    for y in [[0.3, 0.4], [0.6, 0.8], [0.9, 0.9]] {
        println!("theta*({y:?}) = {} (generic: {})", legendre_quadlinear(1.5, 1.0, &y), cost_conjugate(&theta, &y)?);
    }
    Ok(())
}
