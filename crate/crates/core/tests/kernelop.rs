mod common;

use colombeau::asymptotics::Verdict;
use colombeau::kernelop::{self, apply, compose, power, reconstruct_kernel, support_check};
use colombeau::{ClassifyOptions, CompactKernel, Cuboid, EpsilonGrid, GeneralizedFunction, QuadratureRule, SeminormSpec};
use common::*;
use proptest::prelude::*;

fn test_functions() -> Vec<GeneralizedFunction> {
    vec![
        GeneralizedFunction::constant_in_eps(wide(), |_| 1.0),
        GeneralizedFunction::constant_in_eps(wide(), |y| (2.0 * y[0]).cos()),
        GeneralizedFunction::constant_in_eps(wide(), |y| y[0] * y[0] - 0.3),
    ]
}

fn at_nodes(f: &GeneralizedFunction, rule: &QuadratureRule) -> Vec<f64> {
    rule.nodes().map(|x| f.eval(0.5, x)).collect()
}

#[test]
fn separable_composition_matches_closed_form() {
    let h = CompactKernel::from_fn(unit(), unit(), unit_square(), |_, x, s| x[0] * s[0]).unwrap();
    let k = CompactKernel::from_fn(unit(), unit(), unit_square(), |_, s, y| s[0] * y[0]).unwrap();
    let rule = gl(32);
    let l = compose(&h, &k, 1.0, &rule).unwrap();
    let mut worst: f64 = 0.0;
    for x in rule.nodes() {
        for y in rule.nodes() {
            worst = worst.max((l.eval(1.0, x, y) - x[0] * y[0] / 3.0).abs());
        }
    }
    assert!(worst <= 1e-13, "{worst}");
}

#[test]
fn operator_kernel_consistency() {
    let rule = gl(32);
    let corpus = corpus();
    for (hn, h, _) in &corpus {
        for (kn, k, _) in &corpus {
            let l = compose(h, k, 0.5, &rule).unwrap();
            for f in test_functions() {
                let lhs = at_nodes(&apply(&l, &f, 0.5, &rule).unwrap(), &rule);
                let kf = apply(k, &f, 0.5, &rule).unwrap();
                let rhs = at_nodes(&apply(h, &kf, 0.5, &rule).unwrap(), &rule);
                let scale = lhs.iter().chain(&rhs).fold(1.0f64, |m, v| m.max(v.abs()));
                let err = max_abs_diff(&lhs, &rhs);
                assert!(err <= 1e-12 * scale, "{hn}∘{kn}: {err}");
            }
        }
    }
}

#[test]
fn node_identities_are_exact() {
    let rule = gl(12);
    for (name, h, _) in corpus() {
        let nm = h.discretize(0.5, &rule, &rule).unwrap();
        let f = &test_functions()[1];
        let g = apply(&h, f, 0.5, &rule).unwrap();
        for (i, x) in rule.nodes().enumerate() {
            let mut want = 0.0;
            for (j, y) in rule.nodes().enumerate() {
                want += nm.values[(i, j)] * rule.weights()[j] * f.eval(0.5, y);
            }
            assert_eq!(g.eval(0.5, x), want, "{name}");
        }

        let l = compose(&h, &h, 0.5, &rule).unwrap();
        let l2 = power(&h, 2, 0.5, &rule).unwrap();
        for (i, x) in rule.nodes().enumerate() {
            for (j, y) in rule.nodes().enumerate() {
                let mut want = 0.0;
                for m in 0..rule.len() {
                    want += nm.values[(i, m)] * rule.weights()[m] * nm.values[(m, j)];
                }
                assert_eq!(l.eval(0.5, x, y), want, "{name}");
                assert_eq!(l2.eval(0.5, x, y), want, "{name}");
            }
        }
    }
}

#[test]
fn associativity_at_matched_rules() {
    let rule = gl(16);
    let c = corpus();
    let (h, k, m) = (&c[0].1, &c[1].1, &c[2].1);
    let left = compose(&compose(h, k, 0.5, &rule).unwrap(), m, 0.5, &rule).unwrap();
    let right = compose(h, &compose(k, m, 0.5, &rule).unwrap(), 0.5, &rule).unwrap();
    let sup = |k: &CompactKernel| {
        let nm = k.discretize(0.5, &rule, &rule).unwrap();
        nm.values.amax()
    };
    let bound = sup(h) * sup(k) * sup(m);
    for x in rule.nodes() {
        for y in rule.nodes() {
            let d = (left.eval(0.5, x, y) - right.eval(0.5, x, y)).abs();
            assert!(d <= 1e-12 * bound.max(1e-300), "{d}");
        }
    }
}

#[test]
fn support_propagates_through_composition() {
    let shapes = shapes();
    for i in 0..3 {
        let h = shifted(0.0, 1.0, shapes[i]);
        let k = shifted(1.0, 2.0, shapes[(i + 1) % 3]);
        let rule = QuadratureRule::gauss(&Cuboid::interval(1.0, 2.0).unwrap(), 32).unwrap();
        let l = compose(&h, &k, 1.0, &rule).unwrap();
        let claimed = Cuboid::new(vec![0.0, 2.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(l.support(), &claimed);
        let rep = support_check(&l, 1.0, &claimed, 1e-10, 32);
        assert!(rep.pass, "pair {i}: {rep:?}");
    }
}

#[test]
fn support_check_of_a_leaking_claim() {
    let h = CompactKernel::from_fn(unit(), unit(), unit_square(), |_, x, y| {
        colombeau::kerndsl::bump((x[0] - 0.5) / 0.3) * colombeau::kerndsl::bump((y[0] - 0.5) / 0.3)
    })
    .unwrap();
    let rep = support_check(&h, 1.0, &Cuboid::cube(2, 0.0, 0.5).unwrap(), 1e-10, 32);
    assert!(!rep.pass);
    let p = rep.worst_point.unwrap();
    assert!((p[0] - 0.5).abs() < 0.1 && (p[1] - 0.5).abs() < 0.1, "{p:?}");
}

#[test]
fn power_seminorm_bound() {
    let rule = gl(16);
    let vol = rule.cuboid().volume();
    for (name, h, _) in corpus() {
        let p = h.discretize(0.5, &rule, &rule).unwrap().values.amax();
        for n in 1..=6 {
            let l = power(&h, n, 0.5, &rule).unwrap();
            let sup = l.discretize(0.5, &rule, &rule).unwrap().values.amax();
            let bound = vol.powi(n as i32 - 1) * p.powi(n as i32);
            assert!(sup <= bound * (1.0 + 1e-10), "{name} n={n}: {sup} > {bound}");
        }
    }
}

#[test]
fn power_of_rank_one_kernels() {
    // u = c(1+x) on [0,1] with ∫u² = 2
    let c = (6.0f64 / 7.0).sqrt();
    let u = move |t: f64| c * (1.0 + t);
    let h = CompactKernel::from_fn(unit(), unit(), unit_square(), move |_, x, y| u(x[0]) * u(y[0])).unwrap();
    let rule = gl(8);
    for n in 1..=5 {
        let l = power(&h, n, 1.0, &rule).unwrap();
        for x in [0.0, 0.25, 0.9] {
            let want = 2f64.powi(n as i32 - 1) * u(x) * u(0.4);
            assert!((l.eval(1.0, &[x], &[0.4]) - want).abs() < 1e-12 * want, "n={n}");
        }
    }
}

#[test]
fn probing_recovers_the_kernel() {
    let dom = Cuboid::interval(0.0, 3.0).unwrap();
    let sq = dom.product(&dom);
    let h = CompactKernel::from_fn(dom.clone(), dom.clone(), sq, |_, x, y| x[0].sin() * y[0].cos()).unwrap();
    let rule = QuadratureRule::midpoint(&dom, 3000).unwrap();
    let (x, y) = (1.0f64, 1.0f64);
    let truth = x.sin() * y.cos();
    let err = |eta: f64| {
        let v = reconstruct_kernel(|f| apply(&h, f, 1.0, &rule), &dom, eta, &[x], &[y]).unwrap();
        (v - truth).abs()
    };
    let ratio = err(0.05) / err(0.025);
    assert!((3.2..=4.8).contains(&ratio), "{ratio}");

    let zero = CompactKernel::zero(dom.clone(), dom.clone(), dom.product(&dom)).unwrap();
    for y in [0.5, 1.5, 2.5] {
        let v = reconstruct_kernel(|f| apply(&zero, f, 1.0, &rule), &dom, 0.05, &[1.0], &[y]).unwrap();
        assert!(v.abs() <= 1e-12);
    }
}

fn bump_kernel(scale: fn(f64) -> f64) -> CompactKernel {
    CompactKernel::from_fn(wide(), wide(), unit_square(), move |e, x, y| scale(e) * b(x[0], 0.0) * b(y[0], 0.0)).unwrap()
}

fn basis() -> Vec<GeneralizedFunction> {
    vec![
        GeneralizedFunction::constant_in_eps(wide(), |_| 1.0),
        GeneralizedFunction::constant_in_eps(wide(), |y| y[0]),
        GeneralizedFunction::constant_in_eps(wide(), |y| y[0] * y[0]),
    ]
}

#[test]
fn null_test_of_small_kernels() {
    let grid = EpsilonGrid::default();
    let spec = SeminormSpec::new(unit_square(), 0, 17);
    let rule = gl(16);
    let opts = ClassifyOptions { p_max: 6, ..ClassifyOptions::default() };

    let tiny = bump_kernel(|e| e.powi(8));
    let rep = kernelop::null_test(&tiny, &grid, &basis(), &spec, &rule, &opts).unwrap();
    let negligible = |v: &Verdict| matches!(v, Verdict::NegligibleUpTo(6));
    assert!(negligible(&rep.kernel_class.verdict), "{:?}", rep.kernel_class);
    assert!((rep.kernel_class.diagnostics.slope.unwrap() + 8.0).abs() < 0.05);
    for c in &rep.image_classes {
        assert!(negligible(&c.verdict), "{c:?}");
        assert!((c.diagnostics.slope.unwrap() + 8.0).abs() < 0.05);
    }

    let zero = bump_kernel(|_| 0.0);
    let rep = kernelop::null_test(&zero, &grid, &basis(), &spec, &rule, &opts).unwrap();
    assert!(negligible(&rep.kernel_class.verdict));
    assert!(rep.kernel_net.iter().all(|v| *v == 0.0));
    assert!(rep.image_classes.iter().all(|c| negligible(&c.verdict)));

    let log = bump_kernel(|e| e.ln().abs());
    let rep = kernelop::null_test(&log, &grid, &basis(), &spec, &rule, &opts).unwrap();
    assert_eq!(rep.kernel_class.verdict, Verdict::LogGrowth);
    assert!(rep.image_classes.iter().all(|c| c.verdict == Verdict::LogGrowth));
}

#[test]
fn composed_kernels_have_derivative_seminorms() {
    let derivs = vec![
        (vec![1, 0], "-2*(x-y)/0.1*exp(-(x-y)^2/0.1)".to_string()),
        (vec![0, 1], "2*(x-y)/0.1*exp(-(x-y)^2/0.1)".to_string()),
    ];
    let h = CompactKernel::parse("exp(-(x-y)^2/0.1)", unit(), unit(), unit_square(), &derivs).unwrap();
    let rule = gl(24);
    let l = compose(&h, &h, 1.0, &rule).unwrap();
    let spec = SeminormSpec::new(unit_square(), 1, 9);
    let exact = colombeau::genfun::seminorm(&l.as_function(), &spec, 1.0).unwrap();
    let fd = colombeau::genfun::seminorm(&l.as_function(), &SeminormSpec { fd_step: Some(1e-5), ..spec }, 1.0).unwrap();
    assert!((exact - fd).abs() < 1e-6 * exact, "{exact} {fd}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn apply_is_linear(a in -3.0f64..3.0, bcoef in -3.0f64..3.0, k in 0usize..3) {
        let rule = gl(10);
        let (_, h, _) = corpus().swap_remove(k);
        let fns = test_functions();
        let (f, g) = (fns[1].clone(), fns[2].clone());
        let (f2, g2) = (f.clone(), g.clone());
        let comb = GeneralizedFunction::new(wide(), move |e, y| a * f2.eval(e, y) + bcoef * g2.eval(e, y));
        let lhs = at_nodes(&apply(&h, &comb, 0.5, &rule).unwrap(), &rule);
        let af = at_nodes(&apply(&h, &f, 0.5, &rule).unwrap(), &rule);
        let bg = at_nodes(&apply(&h, &g, 0.5, &rule).unwrap(), &rule);
        for i in 0..lhs.len() {
            let rhs = a * af[i] + bcoef * bg[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-14 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn scaling_commutes_with_apply(t in -4.0f64..4.0, k in 0usize..3) {
        let rule = gl(10);
        let (_, h, _) = corpus().swap_remove(k);
        let f = &test_functions()[1];
        let base = at_nodes(&apply(&h, f, 0.5, &rule).unwrap(), &rule);
        let scaled = at_nodes(&apply(&h.scaled(t), f, 0.5, &rule).unwrap(), &rule);
        for i in 0..base.len() {
            prop_assert!((scaled[i] - t * base[i]).abs() <= 1e-14 * (1.0 + base[i].abs()));
        }
    }
}
