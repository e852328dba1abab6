//! Functional equations of the exponential: semigroup law, derivative in t,
//! commutation with the generator.

use colombeau::expm::{commutation_residual, derivative_residual, semigroup_residual};
use colombeau::kerndsl::bump;
use colombeau::{CompactKernel, Cuboid, QuadratureRule};

fn main() -> colombeau::Result<()> {
    let dom = Cuboid::interval(-0.5, 1.5)?;
    let unit = Cuboid::interval(0.0, 1.0)?;
    let h = CompactKernel::from_fn(dom.clone(), dom, unit.product(&unit), |_, x, y| {
        (3.0 * (x[0] + y[0])).cos() * (-(x[0] - y[0]).powi(2) / 0.2).exp() * bump(2.0 * x[0] - 1.0) * bump(2.0 * y[0] - 1.0)
    })?;
    let rule = QuadratureRule::gauss(&unit, 32)?;
    let tol = 1e-14;

    for (a, b) in [(0.3, 0.7), (1.0, -1.0), (2.0, 0.5)] {
        println!("semigroup a={a:<4} b={b:<4} residual {:.2e}", semigroup_residual(&h, a, b, 0.5, &rule, tol)?);
    }
    let (r1, r2) = derivative_residual(&h, 0.5, 1e-3, 0.5, &rule, tol)?;
    println!("d/dt at t=0.5: residual(h) {r1:.3e}, residual(h/2) {r2:.3e}, ratio {:.3}", r1 / r2);
    println!("commutation residual {:.2e}", commutation_residual(&h, 1.0, 0.5, &rule, tol)?);
    Ok(())
}
