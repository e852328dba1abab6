//! Growth classification of a few scalar ε-nets.

use colombeau::asymptotics::classify;
use colombeau::{ClassifyOptions, EpsilonGrid};

type Net = fn(f64) -> f64;

fn main() -> colombeau::Result<()> {
    let grid = EpsilonGrid::default();
    let opts = ClassifyOptions::default();
    let nets: [(&str, Net); 6] = [
        ("eps^-3", |e| e.powi(-3)),
        ("eps^-0.5", |e| e.powf(-0.5)),
        ("3|ln eps|", |e| 3.0 * e.ln().abs()),
        ("5", |_| 5.0),
        ("eps", |e| e),
        ("exp(-1/eps)", |e| (-1.0 / e).exp()),
    ];
    for (name, net) in nets {
        let c = classify(net, &grid, &opts)?;
        println!("{name:>12}  {}", c.verdict.label());
    }
    Ok(())
}
