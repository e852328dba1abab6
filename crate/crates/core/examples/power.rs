//! Powers of a rank-one kernel: L_n = λ^{n-1} u⊗u.

use colombeau::kernelop::power;
use colombeau::{CompactKernel, Cuboid, QuadratureRule};

fn main() -> colombeau::Result<()> {
    let unit = Cuboid::interval(0.0, 1.0)?;
    let c = (6.0f64 / 7.0).sqrt(); // ∫(c(1+x))² = 2
    let u = move |t: f64| c * (1.0 + t);
    let h = CompactKernel::from_fn(unit.clone(), unit.clone(), unit.product(&unit), move |_, x, y| u(x[0]) * u(y[0]))?;
    let rule = QuadratureRule::gauss(&unit, 8)?;
    for n in 1..=6 {
        let l = power(&h, n, 1.0, &rule)?;
        let got = l.eval(1.0, &[0.25], &[0.75]);
        let want = 2f64.powi(n as i32 - 1) * u(0.25) * u(0.75);
        println!("L_{n}(0.25, 0.75) = {got:>12.8}   closed form {want:>12.8}");
    }
    Ok(())
}
