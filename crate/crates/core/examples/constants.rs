//! Constants derived from a convex Poincaré constant.

use convex_transport::constants::{
    mixture_lambda, mls_concave_parts, mls_convex_constant, perturbation_lambda, tensorization_lambda,
    ConstantsPipeline,
};

fn main() -> convex_transport::Result<()> {
    let pipeline = ConstantsPipeline::new(2.0, 0.5, Some(0.5))?;
    println!("{}", serde_json::to_string_pretty(&pipeline).expect("pipeline serializes"));

    for c in [0.1, 0.3, 0.5, 0.7] {
        println!("C(2, {c}) = {:.12}", mls_convex_constant(2.0, c)?);
    }
    let parts = mls_concave_parts(2.0, 0.02, 0.5)?;
    println!("concave branch at c = 0.02: D1 = {:.4}, D2 = {:.4e}, C = {:.4} (radius {:.4})", parts.d1, parts.d2, parts.value, parts.m_used);

    for lambda in [0.1, 1.0, 10.0] {
        let t = tensorization_lambda(lambda)?;
        println!("tensorization: lambda = {lambda}, lambda' = {:.6e}, ratio {:.9}", t.lambda_prime, t.ratio);
    }
    println!("perturbation by osc 0.5: {:.6}", perturbation_lambda(2.0, 0.5)?);
    println!("mixture with W2^2 = 0.25: {:.6}", mixture_lambda(2.0, 1.0, 0.25)?);
    Ok(())
}
