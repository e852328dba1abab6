#![allow(dead_code)]

use colombeau::kerndsl::bump;
use colombeau::{CompactKernel, Cuboid, QuadratureRule};

pub fn unit() -> Cuboid {
    Cuboid::interval(0.0, 1.0).unwrap()
}

/// `[-0.5, 1.5]`: the corpus domain, strictly larger than the support.
pub fn wide() -> Cuboid {
    Cuboid::interval(-0.5, 1.5).unwrap()
}

pub fn unit_square() -> Cuboid {
    Cuboid::cube(2, 0.0, 1.0).unwrap()
}

pub fn gl(n: usize) -> QuadratureRule {
    QuadratureRule::gauss(&unit(), n).unwrap()
}

/// Bump on `[c, c+1]`.
pub fn b(t: f64, c: f64) -> f64 {
    bump(2.0 * (t - c) - 1.0)
}

/// Smooth kernels on `[-0.5, 1.5]²` supported in `[0, 1]²`.
pub fn corpus() -> Vec<(&'static str, CompactKernel, bool)> {
    let mk = |f: fn(f64, f64) -> f64| {
        CompactKernel::from_fn(wide(), wide(), unit_square(), move |_, x, y| f(x[0], y[0]) * b(x[0], 0.0) * b(y[0], 0.0))
            .unwrap()
    };
    vec![
        ("gauss", mk(|x, y| (-(x - y).powi(2) / 0.1).exp()), true),
        ("offset", mk(|x, y| 2.0 * (-(x - 0.3).powi(2) / 0.05 - (y - 0.6).powi(2) / 0.08).exp()), false),
        ("wave", mk(|x, y| (3.0 * (x + y)).cos() * (-(x - y).powi(2) / 0.2).exp()), true),
    ]
}

/// Kernel on `X × Y` with `X = [a-0.5, a+1.5]`, `Y = [c-0.5, c+1.5]`,
/// supported in `[a, a+1] × [c, c+1]`.
pub fn shifted(a: f64, c: f64, shape: fn(f64, f64) -> f64) -> CompactKernel {
    let x = Cuboid::interval(a - 0.5, a + 1.5).unwrap();
    let y = Cuboid::interval(c - 0.5, c + 1.5).unwrap();
    let s = Cuboid::new(vec![a, c], vec![a + 1.0, c + 1.0]).unwrap();
    CompactKernel::from_fn(x, y, s, move |_, x, y| shape(x[0] - a, y[0] - c) * b(x[0], a) * b(y[0], c)).unwrap()
}

pub fn shapes() -> [fn(f64, f64) -> f64; 3] {
    [
        |u, v| (-(u - v).powi(2) / 0.1).exp(),
        |u, v| 1.0 + u * v,
        |u, v| (2.0 * u).sin() + (v - 0.5).powi(2),
    ]
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
