//! Kernels written in the expression language.

use colombeau::asymptotics::Verdict;
use colombeau::genfun::classify_function;
use colombeau::kerndsl::{parse, Env, VarKind};
use colombeau::{ClassifyOptions, CompactKernel, Cuboid, EpsilonGrid, SeminormSpec};

fn main() -> colombeau::Result<()> {
    for src in ["2^3^2", "-2^2", "1-2-3", "2^-1"] {
        let e = parse(src, 1, &VarKind::ALL)?;
        println!("{src:<8} parses as {e:<24} = {}", e.eval(&Env::default())?);
    }
    match parse("exp(-(x-y)^2/eps", 1, &VarKind::ALL) {
        Err(e) => println!("error: {e}"),
        Ok(_) => unreachable!(),
    }

    let dom = Cuboid::interval(-0.5, 1.5)?;
    let unit = Cuboid::interval(0.0, 1.0)?;
    let h = CompactKernel::parse("logeps * bump(2*x-1) * bump(2*y-1)", dom.clone(), dom, unit.product(&unit), &[])?;
    let spec = SeminormSpec::new(unit.product(&unit), 0, 17);
    let (class, _) = classify_function(&h.as_function(), &spec, &EpsilonGrid::default(), &ClassifyOptions::default())?;
    println!("logeps-kernel: {}", class.verdict.label());
    assert_eq!(class.verdict, Verdict::LogGrowth);
    Ok(())
}
