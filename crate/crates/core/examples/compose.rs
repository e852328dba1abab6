//! Composing two kernels with disjoint supports and checking where the
//! result lives.

use colombeau::kernelop::{compose, support_check};
use colombeau::{CompactKernel, Cuboid, QuadratureRule};

fn main() -> colombeau::Result<()> {
    let iv = |a: f64, b: f64| Cuboid::interval(a, b);
    let bump = |t: f64, c: f64| colombeau::kerndsl::bump(2.0 * (t - c) - 1.0);

    // H on [0,1]×[1,2], K on [1,2]×[3,4]
    let h = CompactKernel::from_fn(
        iv(-1.0, 2.0)?,
        iv(0.0, 3.0)?,
        Cuboid::new(vec![0.0, 1.0], vec![1.0, 2.0])?,
        move |_, x, s| (x[0] - s[0]).cos() * bump(x[0], 0.0) * bump(s[0], 1.0),
    )?;
    let k = CompactKernel::from_fn(
        iv(0.0, 3.0)?,
        iv(2.0, 5.0)?,
        Cuboid::new(vec![1.0, 3.0], vec![2.0, 4.0])?,
        move |_, s, y| (1.0 + s[0] * y[0]) * bump(s[0], 1.0) * bump(y[0], 3.0),
    )?;
    let rule = QuadratureRule::gauss(&iv(1.0, 2.0)?, 32)?;
    let l = compose(&h, &k, 1.0, &rule)?;
    println!("support of L: {:?}", l.support());
    println!("L(0.5, 3.5) = {:.12}", l.eval(1.0, &[0.5], &[3.5]));

    let report = support_check(&l, 1.0, l.support(), 1e-10, 32);
    println!(
        "support check: {} (max outside {:.1e}, sup inside {:.4})",
        if report.pass { "pass" } else { "FAIL" },
        report.max_violation,
        report.reference
    );
    Ok(())
}
