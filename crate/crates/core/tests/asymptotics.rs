use colombeau::asymptotics::{classify, estimate_exponent, sample, Verdict};
use colombeau::{ClassifyOptions, EpsilonGrid};
use proptest::prelude::*;

fn class(net: impl Fn(f64) -> f64 + Sync) -> Verdict {
    classify(net, &EpsilonGrid::default(), &ClassifyOptions::default()).unwrap().verdict
}

#[test]
fn discrimination_suite() {
    let moderate = |v: Verdict, q: f64| matches!(v, Verdict::Moderate(s) if (s - q).abs() <= 0.05);
    assert!(moderate(class(|e| e.powf(-3.0)), 3.0));
    assert!(moderate(class(|e| e.powf(-0.5)), 0.5));
    assert_eq!(class(|e| 3.0 * e.ln().abs()), Verdict::LogGrowth);
    assert!(moderate(class(|_| 5.0), 0.0));
    assert!(moderate(class(|e| e), -1.0));
    assert_eq!(class(|e| (-1.0 / e).exp()), Verdict::NegligibleUpTo(10));
}

#[test]
fn diagnostics_are_deterministic() {
    let g = EpsilonGrid::default();
    let o = ClassifyOptions::default();
    let net = |e: f64| e.powf(-1.3) * (1.0 + e.sin());
    let a = classify(net, &g, &o).unwrap();
    let b = classify(net, &g, &o).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(a.diagnostics.slope.unwrap().to_bits(), b.diagnostics.slope.unwrap().to_bits());
}

#[test]
fn log_nets_fit_small_exponents() {
    // bent but shallow: LogGrowth comes with a fitted exponent well below 1/2
    for c in [0.5, 1.0, 3.0, 10.0] {
        let (slope, _) = estimate_exponent(move |e: f64| c * e.ln().abs(), &EpsilonGrid::default()).unwrap();
        assert!(slope > 0.0 && slope < 0.5, "{slope}");
    }
}

proptest! {
    #[test]
    fn scale_equivariance(c in 1e-6f64..1e6, q in -3.0f64..3.0, wiggle in 0.0f64..0.5) {
        let g = EpsilonGrid::default();
        let net = move |e: f64| e.powf(-q) * (1.0 + wiggle * (7.0 * e.ln()).sin());
        let (s1, _) = estimate_exponent(net, &g).unwrap();
        let (s2, _) = estimate_exponent(move |e| c * net(e), &g).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-12, "{} {}", s1, s2);
    }

    #[test]
    fn fitted_power_laws(q in -4.0f64..6.0, c in 0.01f64..100.0) {
        let g = EpsilonGrid::default();
        let (s, r) = estimate_exponent(move |e: f64| c * e.powf(-q), &g).unwrap();
        prop_assert!((s - q).abs() < 1e-9);
        prop_assert!(r < 1e-9);
    }

    // Dominated nets: net1 = r(ε)·net2 with 0 ≤ r ≤ 1 and r non-increasing
    // as ε decreases. (Arbitrary pointwise domination is not enough for a
    // trend test on finitely many samples.)
    #[test]
    fn domination_preserves_negligibility(
        a in 0.2f64..3.0,
        k in 0.0f64..3.0,
        r0 in 0.0f64..1.0,
        sign in prop::bool::ANY,
    ) {
        let g = EpsilonGrid::default();
        let o = ClassifyOptions::default();
        let net2 = move |e: f64| (-a / e).exp();
        let c2 = classify(net2, &g, &o).unwrap().verdict;
        prop_assume!(matches!(c2, Verdict::NegligibleUpTo(_)));
        let s = if sign { -1.0 } else { 1.0 };
        let net1 = move |e: f64| s * r0 * e.powf(k) * net2(e);
        for (v1, v2) in sample(net1, &g).unwrap().iter().zip(sample(net2, &g).unwrap()) {
            prop_assert!(v1.abs() <= v2);
        }
        let c1 = classify(move |e| net1(e).abs(), &g, &o).unwrap().verdict;
        prop_assert_eq!(c1, c2);
    }
}
