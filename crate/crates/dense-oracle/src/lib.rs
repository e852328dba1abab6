//! Dense matrix exponential via scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005).
//!
//! This crate is a verification instrument: it shares no code with the
//! truncated-series construction in `colombeau::expm` and is used to check
//! it, both from tests and from the scenario runner's oracle columns.

use nalgebra::DMatrix;

/// theta_13 from Higham's Table 10.2: the largest 1-norm for which the
/// [13/13] Padé approximant is accurate to unit roundoff.
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Induced 1-norm (max column sum of absolute values).
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(A) for a real square matrix.
///
/// Panics if `a` is not square or the Padé denominator is singular (which
/// cannot happen for a correctly scaled argument).
pub fn expm_dense(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm_dense requires a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }

    let norm = norm_1(a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE_13;

    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &ident;
    let u = &scaled * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &ident;

    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is singular");

    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
