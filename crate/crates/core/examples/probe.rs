//! Recovering a kernel from its operator by probing with mollified deltas.

use colombeau::kernelop::{apply, reconstruct_kernel};
use colombeau::{CompactKernel, Cuboid, QuadratureRule};

fn main() -> colombeau::Result<()> {
    let dom = Cuboid::interval(0.0, 3.0)?;
    let h = CompactKernel::from_fn(dom.clone(), dom.clone(), dom.product(&dom), |_, x, y| x[0].sin() * y[0].cos())?;
    let rule = QuadratureRule::midpoint(&dom, 3000)?;
    let (x, y) = (1.0f64, 1.0f64);
    let truth = x.sin() * y.cos();

    let mut prev: Option<f64> = None;
    for eta in [0.2, 0.1, 0.05, 0.025] {
        // the operator is only used as a black box
        let v = reconstruct_kernel(|f| apply(&h, f, 1.0, &rule), &dom, eta, &[x], &[y])?;
        let err = (v - truth).abs();
        let ratio = prev.map(|p| format!("ratio {:.3}", p / err)).unwrap_or_default();
        println!("eta {eta:<6} H ≈ {v:.10}  error {err:.3e}  {ratio}");
        prev = Some(err);
    }
    Ok(())
}
