//! Generalized functions as ε-parameterized evaluators.
//!
//! A [`GeneralizedFunction`] stands for one representative `(f_ε)`: a map
//! `(ε, x) ↦ f_ε(x)` on a box, optionally with exact derivatives and a
//! declared support. Seminorms `p_{K,l}` are estimated by sampling, and the
//! resulting ε-net is handed to [`crate::asymptotics`] for classification.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::asymptotics::{self, ClassifyOptions, EpsilonGrid, GrowthClass};
use crate::error::{Error, Result};
use crate::kerndsl::{self, Env, Expr, VarKind};
use crate::quadrature::{gauss_legendre, Cuboid, MAX_DIM};

pub type EvalFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// `(ε, x, α) ↦ ∂^α f_ε(x)`; `None` means "not available, use finite
/// differences".
pub type DerivFn = Arc<dyn Fn(f64, &[f64], &[usize]) -> Option<f64> + Send + Sync>;

/// Declared smoothness of functions built from closed-form expressions.
pub const SMOOTH: usize = usize::MAX;

#[derive(Clone)]
pub struct GeneralizedFunction {
    domain: Cuboid,
    eval: EvalFn,
    /// Applied after evaluation and differentiation, so that seminorms are
    /// exactly homogeneous.
    scale: f64,
    max_derivative_order: usize,
    deriv: Option<DerivFn>,
    support: Option<Cuboid>,
}

impl fmt::Debug for GeneralizedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralizedFunction")
            .field("domain", &self.domain)
            .field("max_derivative_order", &self.max_derivative_order)
            .field("has_derivatives", &self.deriv.is_some())
            .field("support", &self.support)
            .finish()
    }
}

impl GeneralizedFunction {
    /// A function with no declared smoothness beyond order 0.
    pub fn new<F>(domain: Cuboid, eval: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { domain, eval: Arc::new(eval), scale: 1.0, max_derivative_order: 0, deriv: None, support: None }
    }

    /// Function of the form `(ε, x) ↦ value(x)`, independent of ε.
    pub fn constant_in_eps<F>(domain: Cuboid, value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(domain, move |_, x| value(x)).with_smoothness(SMOOTH)
    }

    /// Builds from a DSL expression over `x` (and `eps`, `logeps`). Points
    /// are also bound to `y` so test functions may be written in either.
    /// Evaluation errors surface as NaN and are reported as `NonFinite`
    /// by consumers.
    pub fn from_expr(expr: Expr, domain: Cuboid) -> Self {
        Self::new(domain, move |eps, x| {
            let env = Env { x, y: x, eps: Some(eps), ..Env::default() };
            expr.eval(&env).unwrap_or(f64::NAN)
        })
        .with_smoothness(SMOOTH)
    }

    /// Parses `source` (variables `x`/`y`, `eps`, `logeps`) and builds the
    /// function on `domain`.
    pub fn parse(source: &str, domain: Cuboid) -> Result<Self> {
        let expr = kerndsl::parse(source, domain.dim(), &[VarKind::X, VarKind::Y, VarKind::Eps])?;
        Ok(Self::from_expr(expr, domain))
    }

    /// Declares derivatives up to `order` obtainable by finite differences.
    pub fn with_smoothness(mut self, order: usize) -> Self {
        self.max_derivative_order = order;
        self
    }

    /// Attaches exact derivatives up to `order`.
    pub fn with_derivatives<D>(mut self, order: usize, deriv: D) -> Self
    where
        D: Fn(f64, &[f64], &[usize]) -> Option<f64> + Send + Sync + 'static,
    {
        self.max_derivative_order = order;
        self.deriv = Some(Arc::new(deriv));
        self
    }

    pub fn with_support(mut self, support: Cuboid) -> Result<Self> {
        if !self.domain.contains_box(&support) {
            return Err(Error::DomainMismatch(format!("support {support:?} not inside domain {:?}", self.domain)));
        }
        self.support = Some(support);
        Ok(self)
    }

    pub fn domain(&self) -> &Cuboid {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn support(&self) -> Option<&Cuboid> {
        self.support.as_ref()
    }

    pub fn max_derivative_order(&self) -> usize {
        self.max_derivative_order
    }

    #[inline]
    pub fn eval(&self, eps: f64, x: &[f64]) -> f64 {
        self.scale * (self.eval)(eps, x)
    }

    pub(crate) fn evaluator(&self) -> EvalFn {
        let (inner, c) = (self.eval.clone(), self.scale);
        Arc::new(move |e, x| c * inner(e, x))
    }

    /// `c * f`, keeping support and smoothness.
    pub fn scaled(&self, c: f64) -> Self {
        Self { scale: self.scale * c, ..self.clone() }
    }

    /// `∂^α f_ε(x)` from the attached derivatives, or by finite differences
    /// with step `h`.
    pub fn derivative(&self, eps: f64, x: &[f64], alpha: &[usize], h: f64) -> f64 {
        let order: usize = alpha.iter().sum();
        if order == 0 {
            return self.eval(eps, x);
        }
        if order <= self.max_derivative_order {
            if let Some(v) = self.deriv.as_ref().and_then(|d| d(eps, x, alpha)) {
                return self.scale * v;
            }
        }
        let mut alpha = alpha.to_vec();
        let mut point = x.to_vec();
        self.scale * self.finite_difference(eps, &mut point, &mut alpha, h)
    }

    /// `∂^α f_ε(x)` from the attached derivatives only.
    pub(crate) fn exact_derivative(&self, eps: f64, x: &[f64], alpha: &[usize]) -> Option<f64> {
        let order: usize = alpha.iter().sum();
        if order == 0 {
            return Some(self.eval(eps, x));
        }
        if order > self.max_derivative_order {
            return None;
        }
        self.deriv.as_ref().and_then(|d| d(eps, x, alpha)).map(|v| self.scale * v)
    }

    /// `k`-th differences per axis, nested across axes. Central where the
    /// stencil fits in the domain, otherwise shifted to one side.
    fn finite_difference(&self, eps: f64, x: &mut [f64], alpha: &mut [usize], h: f64) -> f64 {
        let Some(axis) = alpha.iter().position(|a| *a > 0) else {
            return (self.eval)(eps, x);
        };
        let k = alpha[axis];
        alpha[axis] = 0;
        let x0 = x[axis];
        let (lo, hi) = (self.domain.lo()[axis], self.domain.hi()[axis]);
        // central: offsets (j - k/2)·s with s = h for even k, 2h for odd k
        let step = if k.is_multiple_of(2) { h } else { 2.0 * h };
        let half = k as f64 / 2.0 * step;
        let (first, step) = if x0 - half >= lo && x0 + half <= hi {
            (x0 - half, step)
        } else if x0 + k as f64 * h <= hi {
            (x0, h)
        } else {
            (x0 - k as f64 * h, h)
        };
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k + 1 - j) as f64 / j as f64;
            }
            let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            x[axis] = first + j as f64 * step;
            acc += sign * binom * self.finite_difference(eps, x, alpha, h);
        }
        x[axis] = x0;
        alpha[axis] = k;
        acc / step.powi(k as i32)
    }
}

/// Parameters of the sampled seminorm `p_{K,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormSpec {
    pub compact: Cuboid,
    pub order: usize,
    /// Points per axis of the sampling grid (endpoints included).
    pub sample_resolution: usize,
    /// Finite-difference step. Required for orders above the function's
    /// declared smoothness; defaults to a eighth of the grid spacing.
    pub fd_step: Option<f64>,
}

impl SeminormSpec {
    pub fn new(compact: Cuboid, order: usize, sample_resolution: usize) -> Self {
        Self { compact, order, sample_resolution, fd_step: None }
    }

    fn default_step(&self) -> f64 {
        let n = self.sample_resolution.max(2) - 1;
        let spacing = (0..self.compact.dim())
            .map(|i| (self.compact.hi()[i] - self.compact.lo()[i]) / n as f64)
            .fold(f64::INFINITY, f64::min);
        spacing / 8.0
    }
}

/// All multi-indices of dimension `dim` with total order at most `l`.
pub fn multi_indices(dim: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    let mut frontier = out.clone();
    for _ in 0..l {
        let mut next = Vec::new();
        for a in &frontier {
            let start = a.iter().rposition(|v| *v > 0).unwrap_or(0);
            for i in start..dim {
                let mut b = a.clone();
                b[i] += 1;
                next.push(b);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Sampled `p_{K,l}(f_ε) = max_{x ∈ grid(K)} max_{|α| ≤ l} |∂^α f_ε(x)|`.
///
/// The sampled value is a lower bound of the true supremum.
pub fn seminorm(f: &GeneralizedFunction, spec: &SeminormSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    if !f.domain().contains_box(&spec.compact) {
        return Err(Error::DomainMismatch(format!(
            "seminorm compact {:?} not inside domain {:?}",
            spec.compact,
            f.domain()
        )));
    }
    if spec.order > f.max_derivative_order() && spec.fd_step.is_none() {
        return Err(Error::MissingDerivatives { order: spec.order, available: f.max_derivative_order() });
    }
    let h = spec.fd_step.unwrap_or_else(|| spec.default_step());
    let alphas = multi_indices(f.dim(), spec.order);
    let points = spec.compact.sample_grid(spec.sample_resolution);

    let maxima: Vec<f64> = points
        .par_iter()
        .map(|x| alphas.iter().map(|a| f.derivative(eps, x, a, h).abs()).fold(0.0, nan_max))
        .collect();
    let sup = maxima.into_iter().fold(0.0, nan_max);
    if sup.is_finite() {
        Ok(sup)
    } else {
        Err(Error::non_finite(format!("seminorm at eps = {eps:e}")))
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Classifies the seminorm net `ε ↦ p_{K,l}(f_ε)` over the grid.
pub fn classify_function(
    f: &GeneralizedFunction,
    spec: &SeminormSpec,
    grid: &EpsilonGrid,
    opts: &ClassifyOptions,
) -> Result<(GrowthClass, Vec<f64>)> {
    let eps = grid.values();
    let values = eps.iter().map(|e| seminorm(f, spec, *e)).collect::<Result<Vec<_>>>()?;
    let class = asymptotics::classify_samples(&eps, &values, opts)?;
    Ok((class, values))
}

/// Normalization `c_d` making `c_d exp(-1/(1-|t|^2))` integrate to one over
/// the unit ball of `R^d`, via a radial 2048-point Gauss-Legendre rule.
pub fn mollifier_constant(dim: usize) -> f64 {
    static CACHE: [OnceLock<f64>; MAX_DIM] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    assert!((1..=MAX_DIM).contains(&dim), "mollifier dimension must be 1..={MAX_DIM}");
    *CACHE[dim - 1].get_or_init(|| {
        let (x, w) = gauss_legendre(2048);
        let radial: f64 = x
            .iter()
            .zip(&w)
            .map(|(t, w)| {
                let r = 0.5 * (t + 1.0);
                0.5 * w * r.powi(dim as i32 - 1) * kerndsl::bump(r)
            })
            .sum();
        let sphere = match dim {
            1 => 2.0,
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        };
        1.0 / (sphere * radial)
    })
}

/// Normalized mollifier `φ(t)`, radially symmetric with unit mass.
pub fn mollifier(t: &[f64]) -> f64 {
    let r2: f64 = t.iter().map(|v| v * v).sum();
    if r2 >= 1.0 {
        0.0
    } else {
        mollifier_constant(t.len()) * (-1.0 / (1.0 - r2)).exp()
    }
}

/// Classical data to embed.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedData {
    /// Dirac delta at a point.
    Delta(Vec<f64>),
    /// Smooth function given as a DSL expression in `x`.
    Smooth(String),
}

/// `δ_a ↦ (ε^{-d} φ((x-a)/ε))_ε`; smooth `g ↦ (g)_ε`.
pub fn mollifier_embed(data: &EmbedData, domain: &Cuboid) -> Result<GeneralizedFunction> {
    match data {
        EmbedData::Delta(a) => delta_net(a, domain),
        EmbedData::Smooth(src) => {
            let expr = kerndsl::parse(src, domain.dim(), &[VarKind::X])?;
            Ok(GeneralizedFunction::from_expr(expr, domain.clone()))
        }
    }
}

fn delta_net(a: &[f64], domain: &Cuboid) -> Result<GeneralizedFunction> {
    let d = domain.dim();
    if a.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: a.len() });
    }
    if d > MAX_DIM {
        return Err(Error::InvalidBox(format!("mollifier dimension {d} exceeds {MAX_DIM}")));
    }
    let interior = (0..d).all(|i| domain.lo()[i] < a[i] && a[i] < domain.hi()[i]);
    if !interior {
        return Err(Error::PointOutsideDomain { point: a.to_vec() });
    }
    let center = a.to_vec();
    let f = GeneralizedFunction::new(domain.clone(), move |eps, x| {
        let mut t = [0.0; MAX_DIM];
        for i in 0..x.len() {
            t[i] = (x[i] - center[i]) / eps;
        }
        mollifier(&t[..x.len()]) / eps.powi(x.len() as i32)
    })
    .with_smoothness(SMOOTH);
    // all ε ≤ 1, so supp ⊆ a + [-1, 1]^d
    let reach = Cuboid::new(a.iter().map(|v| v - 1.0).collect(), a.iter().map(|v| v + 1.0).collect())?;
    match reach.intersect(domain) {
        Some(s) => f.with_support(s),
        None => Ok(f),
    }
}

/// A fixed-ε slice of a delta net, with scale `eta`, as an ε-independent
/// function. Used for probing operators.
pub fn delta_probe(center: &[f64], eta: f64, domain: &Cuboid) -> Result<GeneralizedFunction> {
    let net = delta_net(center, domain)?;
    let inner = net.evaluator();
    Ok(GeneralizedFunction::new(domain.clone(), move |_, x| inner(eta, x)).with_smoothness(SMOOTH))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::Verdict;
    use crate::quadrature::QuadratureRule;

    fn unit() -> Cuboid {
        Cuboid::interval(0.0, 1.0).unwrap()
    }

    fn linear_over_eps() -> GeneralizedFunction {
        GeneralizedFunction::new(unit(), |e, x| x[0] / e)
            .with_derivatives(1, |e, _, a| if a[0] == 1 { Some(1.0 / e) } else { None })
    }

    #[test]
    fn seminorm_of_linear_net() {
        let f = linear_over_eps();
        for eps in [1.0, 0.25, 1e-3] {
            assert_eq!(seminorm(&f, &SeminormSpec::new(unit(), 0, 11), eps).unwrap(), 1.0 / eps);
            assert_eq!(seminorm(&f, &SeminormSpec::new(unit(), 1, 11), eps).unwrap(), 1.0 / eps);
        }
    }

    #[test]
    fn finite_difference_fallback() {
        let f = GeneralizedFunction::new(unit(), |e, x| x[0] / e).with_smoothness(SMOOTH);
        let v = seminorm(&f, &SeminormSpec::new(unit(), 1, 11), 0.5).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        let g = GeneralizedFunction::constant_in_eps(unit(), |x| x[0].powi(3));
        let second = seminorm(&g, &SeminormSpec::new(unit(), 2, 21), 1.0).unwrap();
        // the boundary stencil is one-sided: exactly f''(1 - h) for a cubic
        let h = 1.0 / 20.0 / 8.0;
        assert!((second - 6.0 * (1.0 - h)).abs() < 1e-6, "{second}");
    }

    #[test]
    fn missing_derivatives() {
        let f = GeneralizedFunction::new(unit(), |_, x| x[0]);
        let spec = SeminormSpec::new(unit(), 1, 5);
        assert_eq!(seminorm(&f, &spec, 0.5), Err(Error::MissingDerivatives { order: 1, available: 0 }));
        let spec = SeminormSpec { fd_step: Some(1e-4), ..spec };
        assert!((seminorm(&f, &spec, 0.5).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oscillating_net_against_dense_sampling() {
        let f = GeneralizedFunction::new(unit(), |e, x| (x[0] / e).sin());
        let coarse = seminorm(&f, &SeminormSpec::new(unit(), 0, 64), 0.1).unwrap();
        let dense = seminorm(&f, &SeminormSpec::new(unit(), 0, 100_000), 0.1).unwrap();
        assert!((0.99..=1.0).contains(&coarse), "{coarse}");
        assert!(coarse <= dense && dense <= 1.0);
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(1, 2), vec![vec![0], vec![1], vec![2]]);
        let m = multi_indices(2, 2);
        assert_eq!(m.len(), 6);
        assert!(m.contains(&vec![1, 1]) && m.contains(&vec![0, 2]));
        assert_eq!(multi_indices(3, 3).len(), 20);
    }

    #[test]
    fn mollifier_constants_match_reference() {
        // mpmath adaptive quadrature
        assert!((mollifier_constant(1) - 2.252_283_621_043_58).abs() < 1e-12);
        assert!((mollifier_constant(2) - 2.143_565_775_792_24).abs() < 1e-12);
        assert!((mollifier_constant(3) - 2.267_116_739_608_32).abs() < 1e-12);
    }

    #[test]
    fn delta_has_unit_mass() {
        let dom = Cuboid::interval(-1.0, 1.0).unwrap();
        let d = mollifier_embed(&EmbedData::Delta(vec![0.0]), &dom).unwrap();
        let rule = QuadratureRule::midpoint(&dom, 4000).unwrap();
        for eps in [0.5, 0.25, 0.1, 0.05] {
            let m = rule.integrate(|x| d.eval(eps, x)).unwrap();
            assert!((m - 1.0).abs() < 1e-10, "eps={eps} mass={m}");
        }
        let peak = seminorm(&d, &SeminormSpec::new(dom, 0, 201), 0.1).unwrap();
        assert!((peak - 10.0 * mollifier(&[0.0])).abs() < 1e-12);
    }

    #[test]
    fn delta_errors_and_support() {
        let dom = Cuboid::interval(-1.0, 1.0).unwrap();
        assert!(matches!(mollifier_embed(&EmbedData::Delta(vec![1.0]), &dom), Err(Error::PointOutsideDomain { .. })));
        let d = mollifier_embed(&EmbedData::Delta(vec![0.5]), &dom).unwrap();
        assert_eq!(d.support(), Some(&Cuboid::interval(-0.5, 1.0).unwrap()));
        assert!(matches!(
            mollifier_embed(&EmbedData::Smooth("x^".into()), &dom),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn smooth_embedding_is_constant_in_eps() {
        let g = mollifier_embed(&EmbedData::Smooth("x^2".into()), &unit()).unwrap();
        for eps in [1.0, 0.1, 1e-6] {
            assert_eq!(g.eval(eps, &[0.5]), 0.25);
        }
    }

    #[test]
    fn sifting_is_second_order() {
        let dom = Cuboid::interval(-1.0, 1.0).unwrap();
        let d = mollifier_embed(&EmbedData::Delta(vec![0.3]), &dom).unwrap();
        let rule = QuadratureRule::midpoint(&dom, 20_000).unwrap();
        let err = |eps: f64| (rule.integrate(|x| x[0].cos() * d.eval(eps, x)).unwrap() - 0.3f64.cos()).abs();
        let ratio = err(0.1) / err(0.05);
        assert!(ratio >= 3.5, "ratio {ratio}");
    }

    #[test]
    fn classification_of_function_nets() {
        let grid = EpsilonGrid::default();
        let opts = ClassifyOptions::default();
        let spec = SeminormSpec::new(unit(), 0, 33);

        let f = GeneralizedFunction::new(unit(), |e, x| e.ln().abs() * kerndsl::bump(2.0 * x[0] - 1.0));
        assert_eq!(classify_function(&f, &spec, &grid, &opts).unwrap().0.verdict, Verdict::LogGrowth);

        let f = GeneralizedFunction::new(unit(), |e, x| e * kerndsl::bump(2.0 * x[0] - 1.0));
        match classify_function(&f, &spec, &grid, &opts).unwrap().0.verdict {
            Verdict::Moderate(q) => assert!((q + 1.0).abs() < 0.05),
            v => panic!("{v:?}"),
        }

        let dom = Cuboid::interval(-1.0, 1.0).unwrap();
        let d = mollifier_embed(&EmbedData::Delta(vec![0.0]), &dom).unwrap();
        match classify_function(&d, &SeminormSpec::new(dom, 0, 33), &grid, &opts).unwrap().0.verdict {
            Verdict::Moderate(q) => assert!((q - 1.0).abs() < 0.05),
            v => panic!("{v:?}"),
        }
    }
}
