//! Tensor Gauss-Legendre and composite midpoint rules.

use colombeau::{Cuboid, QuadratureRule};

fn main() -> colombeau::Result<()> {
    let square = Cuboid::cube(2, 0.0, 1.0)?;
    let f = |x: &[f64]| (x[0] * x[1]).exp();
    let reference = QuadratureRule::gauss(&square, 40)?.integrate(f)?;
    println!("∫∫ exp(xy) over [0,1]^2 ≈ {reference:.15}");

    for n in [2, 4, 8] {
        let v = QuadratureRule::gauss(&square, n)?.integrate(f)?;
        println!("  GL({n:>2}) error {:.2e}", (v - reference).abs());
    }
    let mut prev = None;
    for n in [16, 32, 64, 128] {
        let err = (QuadratureRule::midpoint(&square, n)?.integrate(f)? - reference).abs();
        let ratio = prev.map(|p: f64| format!("  ratio {:.3}", p / err)).unwrap_or_default();
        println!("  midpoint({n:>3}) error {err:.2e}{ratio}");
        prev = Some(err);
    }
    Ok(())
}
