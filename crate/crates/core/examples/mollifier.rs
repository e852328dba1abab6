//! Embedding a Dirac delta by mollification, and its sifting property.

use colombeau::genfun::{classify_function, mollifier_constant, mollifier_embed};
use colombeau::{ClassifyOptions, Cuboid, EmbedData, EpsilonGrid, QuadratureRule, SeminormSpec};

fn main() -> colombeau::Result<()> {
    for d in 1..=3 {
        println!("c_{d} = {:.14}", mollifier_constant(d));
    }

    let dom = Cuboid::interval(-1.0, 2.0)?;
    let delta = mollifier_embed(&EmbedData::Delta(vec![0.4]), &dom)?;
    let rule = QuadratureRule::midpoint(&dom, 60_000)?;
    let g = |x: f64| (2.0 * x).cos();
    for eps in [0.2, 0.1, 0.05] {
        let v = rule.integrate(|x| g(x[0]) * delta.eval(eps, x))?;
        println!("eps {eps:<5} ∫ g δ_eps = {v:.10}  error {:.3e}", (v - g(0.4)).abs());
    }

    let spec = SeminormSpec::new(dom, 0, 3001);
    let (class, _) = classify_function(&delta, &spec, &EpsilonGrid::default(), &ClassifyOptions::default())?;
    println!("sup-norm net of the delta: {}", class.verdict.label());
    Ok(())
}
