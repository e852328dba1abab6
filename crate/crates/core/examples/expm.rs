//! The operator exponential of a Gaussian-bump kernel against a dense
//! matrix exponential.

use colombeau::expm::{exp_apply, exp_kernel};
use colombeau::kerndsl::bump;
use colombeau::{CompactKernel, Cuboid, GeneralizedFunction, QuadratureRule};
use nalgebra::{DMatrix, DVector};

fn main() -> colombeau::Result<()> {
    let dom = Cuboid::interval(-0.5, 1.5)?;
    let unit = Cuboid::interval(0.0, 1.0)?;
    let h = CompactKernel::from_fn(dom.clone(), dom.clone(), unit.product(&unit), |_, x, y| {
        (-(x[0] - y[0]).powi(2) / 0.1).exp() * bump(2.0 * x[0] - 1.0) * bump(2.0 * y[0] - 1.0)
    })?;
    let rule = QuadratureRule::gauss(&unit, 32)?;
    let res = exp_kernel(&h, 0.5, &rule, 1e-14)?;
    println!("plan: {} terms (tail bound {:.2e}), {} summed", res.plan.n_terms, res.plan.tail_bound, res.terms_used);
    println!("S(0.5, 0.5) = {:.15}", res.s_kernel.eval(0.5, &[0.5], &[0.5]));

    let f = GeneralizedFunction::constant_in_eps(dom, |y| (2.0 * y[0]).cos());
    let u = exp_apply(&h, &f, 0.5, &rule, 1e-14, 1.0)?;

    let w = DMatrix::from_diagonal(&DVector::from_column_slice(rule.weights()));
    let mw = &res.nystrom.values * w;
    let fv = DVector::from_iterator(rule.len(), rule.nodes().map(|y| f.eval(0.5, y)));
    let dense = dense_oracle::expm_dense(&mw) * fv;
    let worst = rule.nodes().enumerate().map(|(i, x)| (u.eval(0.5, x) - dense[i]).abs()).fold(0.0, f64::max);
    println!("max |e^H f - expm(MW) f| at nodes: {worst:.2e}");
    Ok(())
}
