//! Compactly supported kernels and the integral operators they define.
//!
//! A [`CompactKernel`] lives on `X × Y` with a declared support box
//! `K₁ × K₂`. Its operator acts by quadrature on `K₂`:
//!
//! ```text
//! (Ĥ f)(x) = Σ_j w_j H_ε(x, y_j) f_ε(y_j)
//! ```
//!
//! Composition, powers and the exponential produce *fixed-ε slices*: kernels
//! whose evaluator closes over discrete middle sums at one ε. A slice is
//! stored as a short expansion
//!
//! ```text
//! L(x, y) = Σ c_k G_k(x, y) + Σ ℓ_t(x)ᵀ C_t r_t(y)
//! ```
//!
//! where `ℓ(x) = [w_m H(x, ξ_m)]_m` and `r(y) = [K(ξ_m, y)]_m` are feature
//! vectors over a middle rule. Composing two expansions only multiplies
//! small core matrices, so `L_n` is evaluable anywhere at a cost independent
//! of `n`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::asymptotics::{classify_samples, ClassifyOptions, EpsilonGrid, GrowthClass};
use crate::error::{Error, Result};
use crate::genfun::{self, GeneralizedFunction, SeminormSpec, SMOOTH};
use crate::kerndsl::{self, Env, Expr, VarKind};
use crate::quadrature::{Cuboid, QuadratureRule, MAX_DIM};

/// Relative level below which kernel values count as vanishing.
pub const VANISH_TOL: f64 = 1e-10;

#[inline]
fn joined<R>(x: &[f64], y: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
    let mut buf = [0.0; 2 * MAX_DIM];
    let n = x.len() + y.len();
    buf[..x.len()].copy_from_slice(x);
    buf[x.len()..n].copy_from_slice(y);
    f(&buf[..n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// `x ↦ [w_m K(x, ξ_m)]`
    Left,
    /// `y ↦ [K(ξ_m, y)]`
    Right,
}

/// Feature vectors of a kernel against the nodes of a middle rule.
struct Features {
    kernel: GeneralizedFunction,
    x_dim: usize,
    eps: f64,
    rule: QuadratureRule,
    side: Side,
}

impl Features {
    fn new(kernel: &CompactKernel, eps: f64, rule: &QuadratureRule, side: Side) -> Arc<Self> {
        Arc::new(Self {
            kernel: kernel.as_function(),
            x_dim: kernel.x_dim(),
            eps,
            rule: rule.clone(),
            side,
        })
    }

    fn len(&self) -> usize {
        self.rule.len()
    }

    fn eval(&self, p: &[f64]) -> Vec<f64> {
        let w = self.rule.weights();
        self.rule
            .nodes()
            .enumerate()
            .map(|(m, xi)| match self.side {
                Side::Left => w[m] * joined(p, xi, |q| self.kernel.eval(self.eps, q)),
                Side::Right => joined(xi, p, |q| self.kernel.eval(self.eps, q)),
            })
            .collect()
    }

    /// Derivative of the features in the free variable, when the underlying
    /// kernel has exact derivatives of that order.
    fn eval_derivative(&self, p: &[f64], alpha_p: &[usize]) -> Option<Vec<f64>> {
        let w = self.rule.weights();
        let mut alpha = vec![0; self.kernel.dim()];
        match self.side {
            Side::Left => alpha[..self.x_dim].copy_from_slice(alpha_p),
            Side::Right => alpha[self.x_dim..].copy_from_slice(alpha_p),
        }
        self.rule
            .nodes()
            .enumerate()
            .map(|(m, xi)| match self.side {
                Side::Left => joined(p, xi, |q| self.kernel.exact_derivative(self.eps, q, &alpha)).map(|v| w[m] * v),
                Side::Right => joined(xi, p, |q| self.kernel.exact_derivative(self.eps, q, &alpha)),
            })
            .collect()
    }

    /// Matrix whose row `m` is the feature vector at node `m` of `at`.
    fn at_nodes(&self, at: &QuadratureRule) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..at.len()).into_par_iter().map(|m| self.eval(at.node(m))).collect();
        DMatrix::from_fn(at.len(), self.len(), |i, j| rows[i][j])
    }
}

#[derive(Clone)]
enum Core {
    /// `c · I`
    Identity(f64),
    Dense(DMatrix<f64>),
}

impl Core {
    fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            Core::Identity(c) => DMatrix::identity(n, n) * *c,
            Core::Dense(m) => m.clone(),
        }
    }

    fn scaled(&self, t: f64) -> Core {
        match self {
            Core::Identity(c) => Core::Identity(c * t),
            Core::Dense(m) => Core::Dense(m * t),
        }
    }

    fn bilinear(&self, l: &[f64], r: &[f64]) -> f64 {
        match self {
            Core::Identity(c) => {
                let mut s = 0.0;
                for (a, b) in l.iter().zip(r) {
                    s += a * b;
                }
                c * s
            }
            Core::Dense(m) => {
                let cr = m * DVector::from_column_slice(r);
                l.iter().zip(cr.iter()).map(|(a, b)| a * b).sum()
            }
        }
    }
}

#[derive(Clone)]
struct DirectTerm {
    coef: f64,
    kernel: GeneralizedFunction,
    eps: f64,
}

#[derive(Clone)]
struct FactoredTerm {
    left: Arc<Features>,
    core: Core,
    right: Arc<Features>,
}

/// A fixed-ε kernel: sum of direct and factored terms.
#[derive(Clone)]
struct Expansion {
    eps: f64,
    direct: Vec<DirectTerm>,
    factored: Vec<FactoredTerm>,
}

impl Expansion {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in &self.direct {
            s += d.coef * joined(x, y, |q| d.kernel.eval(d.eps, q));
        }
        for f in &self.factored {
            s += f.core.bilinear(&f.left.eval(x), &f.right.eval(y));
        }
        s
    }

    fn derivative(&self, x: &[f64], y: &[f64], ax: &[usize], ay: &[usize]) -> Option<f64> {
        let alpha: Vec<usize> = ax.iter().chain(ay).copied().collect();
        let mut s = 0.0;
        for d in &self.direct {
            s += d.coef * joined(x, y, |q| d.kernel.exact_derivative(d.eps, q, &alpha))?;
        }
        for f in &self.factored {
            s += f.core.bilinear(&f.left.eval_derivative(x, ax)?, &f.right.eval_derivative(y, ay)?);
        }
        Some(s)
    }

    fn smoothness(&self) -> usize {
        let d = self.direct.iter().map(|t| t.kernel.max_derivative_order());
        let f = self
            .factored
            .iter()
            .flat_map(|t| [t.left.kernel.max_derivative_order(), t.right.kernel.max_derivative_order()]);
        d.chain(f).min().unwrap_or(SMOOTH)
    }

    fn scaled(&self, t: f64) -> Expansion {
        Expansion {
            eps: self.eps,
            direct: self.direct.iter().map(|d| DirectTerm { coef: d.coef * t, ..d.clone() }).collect(),
            factored: self
                .factored
                .iter()
                .map(|f| FactoredTerm { core: f.core.scaled(t), ..f.clone() })
                .collect(),
        }
    }
}

#[derive(Clone)]
enum Body {
    /// A full ε-net.
    Net(GeneralizedFunction),
    /// A fixed-ε slice.
    Slice(Arc<Expansion>),
}

type CacheKey = (u64, u64, u64);

/// Kernel values on a pair of rules: `values[(i, j)] = H_ε(x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct NystromMatrix {
    pub rule_x: QuadratureRule,
    pub rule_y: QuadratureRule,
    pub values: DMatrix<f64>,
    pub weights_y: Vec<f64>,
}

impl NystromMatrix {
    /// `M · diag(w_y)`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut mw = self.values.clone();
        for (j, w) in self.weights_y.iter().enumerate() {
            mw.column_mut(j).scale_mut(*w);
        }
        mw
    }
}

/// A compactly supported kernel on `X × Y`.
#[derive(Clone)]
pub struct CompactKernel {
    x_box: Cuboid,
    y_box: Cuboid,
    support: Cuboid,
    body: Body,
    cache: Arc<Mutex<HashMap<CacheKey, Arc<NystromMatrix>>>>,
}

impl fmt::Debug for CompactKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompactKernel")
            .field("x_box", &self.x_box)
            .field("y_box", &self.y_box)
            .field("support", &self.support)
            .field("slice_eps", &self.slice_eps())
            .finish()
    }
}

impl CompactKernel {
    /// Wraps a function on `X × Y` (first `x_dim` coordinates are `x`).
    pub fn new(base: GeneralizedFunction, x_dim: usize, support: Cuboid) -> Result<Self> {
        let dim = base.dim();
        if x_dim == 0 || x_dim >= dim || x_dim > MAX_DIM || dim - x_dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!("cannot split a {dim}-dimensional box at {x_dim}")));
        }
        if support.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: support.dim() });
        }
        if !base.domain().contains_box(&support) {
            return Err(Error::DomainMismatch(format!("support {support:?} not inside {:?}", base.domain())));
        }
        let (x_box, y_box) = base.domain().split(x_dim);
        Ok(Self { x_box, y_box, support, body: Body::Net(base), cache: Arc::default() })
    }

    /// Kernel from a closure `(ε, x, y) ↦ H_ε(x, y)`, declared smooth.
    pub fn from_fn<F>(x_box: Cuboid, y_box: Cuboid, support: Cuboid, f: F) -> Result<Self>
    where
        F: Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        let dx = x_box.dim();
        let base = GeneralizedFunction::new(x_box.product(&y_box), move |e, p| f(e, &p[..dx], &p[dx..]))
            .with_smoothness(SMOOTH);
        Self::new(base, dx, support)
    }

    /// Kernel from a DSL expression in `x`, `y`, `eps`, `logeps`.
    /// `derivatives` optionally supplies exact `∂^α` expressions, with `α`
    /// over the joined `(x, y)` coordinates.
    pub fn parse(
        source: &str,
        x_box: Cuboid,
        y_box: Cuboid,
        support: Cuboid,
        derivatives: &[(Vec<usize>, String)],
    ) -> Result<Self> {
        let d = x_box.dim();
        if y_box.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: y_box.dim() });
        }
        let allowed = [VarKind::X, VarKind::Y, VarKind::Eps];
        let expr = Arc::new(kerndsl::parse(source, d, &allowed)?);
        let mut derivs: Vec<(Vec<usize>, Expr)> = Vec::new();
        for (alpha, src) in derivatives {
            if alpha.len() != 2 * d {
                return Err(Error::DimensionMismatch { expected: 2 * d, got: alpha.len() });
            }
            derivs.push((alpha.clone(), kerndsl::parse(src, d, &allowed)?));
        }
        let e = expr.clone();
        let mut base = GeneralizedFunction::new(x_box.product(&y_box), move |eps, p| {
            let env = Env { x: &p[..d], y: &p[d..], eps: Some(eps), ..Env::default() };
            e.eval(&env).unwrap_or(f64::NAN)
        })
        .with_smoothness(SMOOTH);
        if !derivs.is_empty() {
            base = base.with_derivatives(SMOOTH, move |eps, p, alpha| {
                let (_, de) = derivs.iter().find(|(a, _)| a.as_slice() == alpha)?;
                let env = Env { x: &p[..d], y: &p[d..], eps: Some(eps), ..Env::default() };
                Some(de.eval(&env).unwrap_or(f64::NAN))
            });
        }
        Self::new(base, d, support)
    }

    /// The zero kernel.
    pub fn zero(x_box: Cuboid, y_box: Cuboid, support: Cuboid) -> Result<Self> {
        Self::from_fn(x_box, y_box, support, |_, _, _| 0.0)
    }

    pub fn x_box(&self) -> &Cuboid {
        &self.x_box
    }

    pub fn y_box(&self) -> &Cuboid {
        &self.y_box
    }

    pub fn x_dim(&self) -> usize {
        self.x_box.dim()
    }

    pub fn domain(&self) -> Cuboid {
        self.x_box.product(&self.y_box)
    }

    /// Declared support `K₁ × K₂`.
    pub fn support(&self) -> &Cuboid {
        &self.support
    }

    /// `(K₁, K₂)`.
    pub fn support_factors(&self) -> (Cuboid, Cuboid) {
        self.support.split(self.x_dim())
    }

    /// The ε at which this kernel is a fixed slice, if it is one.
    pub fn slice_eps(&self) -> Option<f64> {
        match &self.body {
            Body::Net(_) => None,
            Body::Slice(e) => Some(e.eps),
        }
    }

    /// `H_ε(x, y)`. Slices ignore `eps`.
    pub fn eval(&self, eps: f64, x: &[f64], y: &[f64]) -> f64 {
        match &self.body {
            Body::Net(g) => joined(x, y, |p| g.eval(eps, p)),
            Body::Slice(e) => e.eval(x, y),
        }
    }

    /// The kernel as a function on the joined domain `X × Y`.
    pub fn as_function(&self) -> GeneralizedFunction {
        match &self.body {
            Body::Net(g) => g.clone(),
            Body::Slice(e) => {
                let dx = self.x_dim();
                let ev = e.clone();
                let dv = e.clone();
                GeneralizedFunction::new(self.domain(), move |_, p| ev.eval(&p[..dx], &p[dx..]))
                    .with_derivatives(e.smoothness(), move |_, p, alpha| {
                        dv.derivative(&p[..dx], &p[dx..], &alpha[..dx], &alpha[dx..])
                    })
                    .with_support(self.support.clone())
                    .expect("support was validated at construction")
            }
        }
    }

    /// `t · H` with a fresh matrix cache.
    pub fn scaled(&self, t: f64) -> CompactKernel {
        let body = match &self.body {
            Body::Net(g) => Body::Net(g.scaled(t)),
            Body::Slice(e) => Body::Slice(Arc::new(e.scaled(t))),
        };
        CompactKernel { body, cache: Arc::default(), ..self.clone() }
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
        }
        match self.slice_eps() {
            Some(s) if s != eps => Err(Error::InvalidArgument(format!("kernel is a slice at eps = {s}, used at {eps}"))),
            _ => Ok(()),
        }
    }

    fn terms_at(&self, eps: f64) -> (Vec<DirectTerm>, Vec<FactoredTerm>) {
        match &self.body {
            Body::Net(g) => (vec![DirectTerm { coef: 1.0, kernel: g.clone(), eps }], Vec::new()),
            Body::Slice(e) => (e.direct.clone(), e.factored.clone()),
        }
    }

    fn from_expansion(x_box: Cuboid, y_box: Cuboid, support: Cuboid, expansion: Expansion) -> Self {
        Self { x_box, y_box, support, body: Body::Slice(Arc::new(expansion)), cache: Arc::default() }
    }

    /// Nyström matrix `M[i][j] = H_ε(x_i, y_j)`, cached per (ε, rules).
    pub fn discretize(&self, eps: f64, rule_x: &QuadratureRule, rule_y: &QuadratureRule) -> Result<Arc<NystromMatrix>> {
        self.check_eps(eps)?;
        if !self.x_box.contains_box(rule_x.cuboid()) {
            return Err(Error::RuleMismatch(format!("x rule on {:?} outside X = {:?}", rule_x.cuboid(), self.x_box)));
        }
        if !self.y_box.contains_box(rule_y.cuboid()) {
            return Err(Error::RuleMismatch(format!("y rule on {:?} outside Y = {:?}", rule_y.cuboid(), self.y_box)));
        }
        let key = (eps.to_bits(), rule_x.fingerprint(), rule_y.fingerprint());
        if let Some(m) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(m.clone());
        }

        let rows: Vec<Vec<f64>> = (0..rule_x.len())
            .into_par_iter()
            .map(|i| rule_y.nodes().map(|y| self.eval(eps, rule_x.node(i), y)).collect())
            .collect();
        let values = DMatrix::from_fn(rule_x.len(), rule_y.len(), |i, j| rows[i][j]);
        if let Some((k, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (i, j) = (k % rule_x.len(), k / rule_x.len());
            return Err(Error::non_finite(format!(
                "kernel at ({:?}, {:?})",
                rule_x.node(i),
                rule_y.node(j)
            )));
        }
        let nm = Arc::new(NystromMatrix {
            rule_x: rule_x.clone(),
            rule_y: rule_y.clone(),
            values,
            weights_y: rule_y.weights().to_vec(),
        });
        let mut cache = self.cache.lock().expect("cache poisoned");
        Ok(cache.entry(key).or_insert(nm).clone())
    }

    /// Checks the sampled values outside the declared support against the
    /// vanishing tolerance.
    pub fn check_vanishing(&self, eps: f64, resolution: usize) -> SupportReport {
        support_check(self, eps, &self.support, VANISH_TOL, resolution)
    }
}

fn check_rule_covers(rule: &QuadratureRule, inner: &Cuboid, outer: &Cuboid, what: &str) -> Result<()> {
    if !rule.cuboid().contains_box(inner) {
        return Err(Error::RuleMismatch(format!("{what} rule on {:?} does not cover {inner:?}", rule.cuboid())));
    }
    if !outer.contains_box(rule.cuboid()) {
        return Err(Error::RuleMismatch(format!("{what} rule on {:?} leaves the domain {outer:?}", rule.cuboid())));
    }
    Ok(())
}

/// `x ↦ Σ_j w_j H_ε(x, y_j) f_ε(y_j)`, a fixed-ε function on `X` with
/// support `K₁`. The rule must cover `K₂` and stay inside `Y`.
pub fn apply(h: &CompactKernel, f: &GeneralizedFunction, eps: f64, rule_y: &QuadratureRule) -> Result<GeneralizedFunction> {
    h.check_eps(eps)?;
    let (k1, k2) = h.support_factors();
    check_rule_covers(rule_y, &k2, h.y_box(), "integration")?;
    if f.dim() != h.y_box().dim() {
        return Err(Error::DimensionMismatch { expected: h.y_box().dim(), got: f.dim() });
    }
    let f_nodes: Vec<f64> = rule_y
        .nodes()
        .map(|y| {
            let v = f.eval(eps, y);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::non_finite(format!("function at {y:?}")))
            }
        })
        .collect::<Result<_>>()?;
    let weighted_f: Vec<f64> = f_nodes.iter().zip(rule_y.weights()).map(|(v, w)| w * v).collect();

    let (direct, factored) = h.terms_at(eps);
    // Σ_j r(y_j) w_j f_j per factored term, pushed through the core
    let reduced: Vec<(Arc<Features>, DVector<f64>)> = factored
        .iter()
        .map(|t| {
            let r = t.right.at_nodes(rule_y);
            let v = r.transpose() * DVector::from_column_slice(&weighted_f);
            let u = match &t.core {
                Core::Identity(c) => v * *c,
                Core::Dense(m) => m * v,
            };
            (t.left.clone(), u)
        })
        .collect();

    let rule = Arc::new(rule_y.clone());
    let fv = Arc::new(f_nodes);
    let smooth = match &h.body {
        Body::Net(g) => g.max_derivative_order(),
        Body::Slice(e) => e.smoothness(),
    };

    let (r2, fv2, direct2, reduced2) = (rule.clone(), fv.clone(), direct.clone(), reduced.clone());
    let value = move |x: &[f64]| {
        let mut s = 0.0;
        for d in &direct2 {
            let mut acc = 0.0;
            for (j, y) in r2.nodes().enumerate() {
                // (H_ε(x, y_j) w_j) f_j, the order of M·diag(w)·f
                acc += joined(x, y, |q| d.kernel.eval(d.eps, q)) * r2.weights()[j] * fv2[j];
            }
            s += d.coef * acc;
        }
        for (left, u) in &reduced2 {
            s += left.eval(x).iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    };
    let dx = h.x_dim();
    let deriv = move |x: &[f64], ax: &[usize]| -> Option<f64> {
        let mut alpha = ax.to_vec();
        alpha.resize(dx + rule.dim(), 0);
        let mut s = 0.0;
        for d in &direct {
            let mut acc = 0.0;
            for (j, y) in rule.nodes().enumerate() {
                acc += joined(x, y, |q| d.kernel.exact_derivative(d.eps, q, &alpha))? * rule.weights()[j] * fv[j];
            }
            s += d.coef * acc;
        }
        for (left, u) in &reduced {
            s += left.eval_derivative(x, ax)?.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        Some(s)
    };
    GeneralizedFunction::new(h.x_box().clone(), move |_, x| value(x))
        .with_derivatives(smooth, move |_, x, a| deriv(x, a))
        .with_support(k1)
}

fn features_at_rule(t: &FactoredTerm, side: Side, rule: &QuadratureRule) -> DMatrix<f64> {
    match side {
        Side::Left => t.left.at_nodes(rule),
        Side::Right => t.right.at_nodes(rule),
    }
}

/// Kernel of `Ĥ ∘ K̂` at one ε: `L(x, y) = Σ_m w_m H_ε(x, ξ_m) K_ε(ξ_m, y)`
/// with support `K₁ × K₃`.
pub fn compose(h: &CompactKernel, k: &CompactKernel, eps: f64, rule_mid: &QuadratureRule) -> Result<CompactKernel> {
    h.check_eps(eps)?;
    k.check_eps(eps)?;
    if h.y_box() != k.x_box() {
        return Err(Error::DomainMismatch(format!(
            "middle boxes differ: {:?} vs {:?}",
            h.y_box(),
            k.x_box()
        )));
    }
    let (k1, k2h) = h.support_factors();
    let (k2k, k3) = k.support_factors();
    let middle = k2h.hull(&k2k)?;
    check_rule_covers(rule_mid, &middle, h.y_box(), "middle")?;

    let (h_direct, h_factored) = h.terms_at(eps);
    let (k_direct, k_factored) = k.terms_at(eps);
    let n_mid = rule_mid.len();
    let w = DVector::from_column_slice(rule_mid.weights());

    // the middle feature maps of the direct terms, built once
    let h_left: Vec<Arc<Features>> = h_direct
        .iter()
        .map(|d| Features::new(&direct_kernel(d, h), eps, rule_mid, Side::Left))
        .collect();
    let k_right: Vec<Arc<Features>> = k_direct
        .iter()
        .map(|d| Features::new(&direct_kernel(d, k), eps, rule_mid, Side::Right))
        .collect();
    // Λ = rows ℓ₂(ξ_m) of K's factored terms; Rᵀ W from rows r₁(ξ_m) of H's
    let k_lambda: Vec<DMatrix<f64>> = k_factored.iter().map(|t| features_at_rule(t, Side::Left, rule_mid)).collect();
    let h_rtw: Vec<DMatrix<f64>> = h_factored
        .iter()
        .map(|t| {
            let mut r = features_at_rule(t, Side::Right, rule_mid);
            for (m, wm) in w.iter().enumerate() {
                r.row_mut(m).scale_mut(*wm);
            }
            r.transpose()
        })
        .collect();

    let mut terms: Vec<FactoredTerm> = Vec::new();
    for (a, hd) in h_direct.iter().enumerate() {
        for (b, kd) in k_direct.iter().enumerate() {
            terms.push(FactoredTerm {
                left: h_left[a].clone(),
                core: Core::Identity(hd.coef * kd.coef),
                right: k_right[b].clone(),
            });
        }
        for (b, kf) in k_factored.iter().enumerate() {
            let core = &k_lambda[b] * kf.core.to_dense(kf.left.len()) * hd.coef;
            terms.push(FactoredTerm { left: h_left[a].clone(), core: Core::Dense(core), right: kf.right.clone() });
        }
    }
    for (a, hf) in h_factored.iter().enumerate() {
        let c1 = hf.core.to_dense(hf.left.len());
        for (b, kd) in k_direct.iter().enumerate() {
            let core = &c1 * &h_rtw[a] * kd.coef;
            terms.push(FactoredTerm { left: hf.left.clone(), core: Core::Dense(core), right: k_right[b].clone() });
        }
        for (b, kf) in k_factored.iter().enumerate() {
            let core = &c1 * &h_rtw[a] * &k_lambda[b] * kf.core.to_dense(kf.left.len());
            terms.push(FactoredTerm { left: hf.left.clone(), core: Core::Dense(core), right: kf.right.clone() });
        }
    }
    debug_assert!(terms.iter().all(|t| t.left.len() == n_mid || t.left.side == Side::Left));

    let expansion = Expansion { eps, direct: Vec::new(), factored: merge_terms(terms) };
    Ok(CompactKernel::from_expansion(h.x_box().clone(), k.y_box().clone(), k1.product(&k3), expansion))
}

/// `H + ℓ(x)ᵀ C r(y)` with `H`'s own feature maps on `rule`, at one ε.
pub(crate) fn series_slice(h: &CompactKernel, eps: f64, rule: &QuadratureRule, core: Option<DMatrix<f64>>) -> CompactKernel {
    let (direct, mut factored) = h.terms_at(eps);
    if let Some(c) = core {
        factored = vec![FactoredTerm {
            left: Features::new(h, eps, rule, Side::Left),
            core: Core::Dense(c),
            right: Features::new(h, eps, rule, Side::Right),
        }];
        // for slice kernels the direct part already carries their factored terms
        if h.slice_eps().is_some() {
            return CompactKernel::from_expansion(
                h.x_box().clone(),
                h.y_box().clone(),
                h.support().clone(),
                Expansion {
                    eps,
                    direct: vec![DirectTerm { coef: 1.0, kernel: h.as_function(), eps }],
                    factored,
                },
            );
        }
    }
    CompactKernel::from_expansion(
        h.x_box().clone(),
        h.y_box().clone(),
        h.support().clone(),
        Expansion { eps, direct, factored },
    )
}

fn direct_kernel(d: &DirectTerm, owner: &CompactKernel) -> CompactKernel {
    // a direct term's coefficient is carried by the core, not the features
    CompactKernel {
        x_box: owner.x_box.clone(),
        y_box: owner.y_box.clone(),
        support: owner.support.clone(),
        body: Body::Net(d.kernel.clone()),
        cache: Arc::default(),
    }
}

fn merge_terms(terms: Vec<FactoredTerm>) -> Vec<FactoredTerm> {
    let mut out: Vec<FactoredTerm> = Vec::new();
    for t in terms {
        let slot = out
            .iter_mut()
            .find(|o| Arc::ptr_eq(&o.left, &t.left) && Arc::ptr_eq(&o.right, &t.right));
        match slot {
            None => out.push(t),
            Some(o) => {
                o.core = match (&o.core, &t.core) {
                    (Core::Identity(a), Core::Identity(b)) => Core::Identity(a + b),
                    (a, b) => Core::Dense(a.to_dense(t.left.len()) + b.to_dense(t.left.len())),
                };
            }
        }
    }
    out
}

/// Kernel `L_n` of `Ĥⁿ`: `L₁ = H`, `L_n = H ∘ L_{n-1}` on the shared rule.
pub fn power(h: &CompactKernel, n: usize, eps: f64, rule: &QuadratureRule) -> Result<CompactKernel> {
    if n == 0 {
        return Err(Error::InvalidArgument("power needs n >= 1".into()));
    }
    check_square(h, rule)?;
    h.check_eps(eps)?;
    let mut l = h.clone();
    for _ in 1..n {
        l = compose(h, &l, eps, rule)?;
    }
    Ok(l)
}

/// `X = Y` and `supp H ⊆ K × K` with `K` the rule's box.
pub(crate) fn check_square(h: &CompactKernel, rule: &QuadratureRule) -> Result<()> {
    if h.x_box() != h.y_box() {
        return Err(Error::DomainMismatch(format!("kernel on {:?} x {:?} is not on X x X", h.x_box(), h.y_box())));
    }
    let envelope = rule.cuboid().product(rule.cuboid());
    if !envelope.contains_box(h.support()) {
        return Err(Error::RuleMismatch(format!(
            "support {:?} not inside K x K for K = {:?}",
            h.support(),
            rule.cuboid()
        )));
    }
    if !h.x_box().contains_box(rule.cuboid()) {
        return Err(Error::RuleMismatch(format!("rule box {:?} leaves X = {:?}", rule.cuboid(), h.x_box())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub pass: bool,
    /// Largest `|H_ε|` sampled outside the claimed box.
    pub max_violation: f64,
    pub worst_point: Option<Vec<f64>>,
    /// Sampled `p_{claimed,0}(H_ε)`.
    pub reference: f64,
}

/// Samples the domain outside `claimed` and passes iff
/// `max |H_ε| <= tol · (1 + p_{claimed,0}(H_ε))`.
pub fn support_check(h: &CompactKernel, eps: f64, claimed: &Cuboid, tol: f64, resolution: usize) -> SupportReport {
    let dx = h.x_dim();
    let value = |p: &[f64]| h.eval(eps, &p[..dx], &p[dx..]).abs();
    let outside: Vec<(f64, Vec<f64>)> = h
        .domain()
        .sample_grid(resolution)
        .into_par_iter()
        .filter(|p| !claimed.contains_point(p))
        .map(|p| (value(&p), p))
        .collect();
    let reference = claimed
        .sample_grid(resolution)
        .par_iter()
        .map(|p| value(p))
        .reduce(|| 0.0, |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) });

    let mut max_violation = 0.0;
    let mut worst_point = None;
    for (v, p) in outside {
        if v > max_violation || v.is_nan() {
            max_violation = v;
            worst_point = Some(p);
            if v.is_nan() {
                break;
            }
        }
    }
    let pass = max_violation <= tol * (1.0 + reference);
    SupportReport { pass, max_violation, worst_point, reference }
}

/// `(Ĥ δ_y^η)(x)`: applies the black-box operator to a mollified delta of
/// width `eta` centred at `y`, which recovers `H(x, y)` up to `O(η²)`.
pub fn reconstruct_kernel<Op>(op: Op, y_domain: &Cuboid, eta: f64, x: &[f64], y: &[f64]) -> Result<f64>
where
    Op: FnOnce(&GeneralizedFunction) -> Result<GeneralizedFunction>,
{
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("probe scale must lie in (0, 1], got {eta}")));
    }
    let inside = y.len() == y_domain.dim()
        && (0..y.len()).all(|i| y_domain.lo()[i] <= y[i] - eta && y[i] + eta <= y_domain.hi()[i]);
    if !inside {
        return Err(Error::ProbeOutsideDomain { center: y.to_vec(), radius: eta });
    }
    let probe = genfun::delta_probe(y, eta, y_domain)?;
    let image = op(&probe)?;
    let v = image.eval(eta, x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite(format!("reconstruction at {x:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullTestReport {
    pub kernel_class: GrowthClass,
    pub kernel_net: Vec<f64>,
    pub image_classes: Vec<GrowthClass>,
    pub image_nets: Vec<Vec<f64>>,
}

/// Classifies the seminorm net of `H` and of `Ĥ b` for each basis
/// function. `spec.compact` lives in `X × Y`; the image seminorms use its
/// `X` factor with the same order and resolution.
pub fn null_test(
    h: &CompactKernel,
    grid: &EpsilonGrid,
    basis: &[GeneralizedFunction],
    spec: &SeminormSpec,
    rule_y: &QuadratureRule,
    opts: &ClassifyOptions,
) -> Result<NullTestReport> {
    let eps = grid.values();
    let kf = h.as_function();
    let kernel_net = eps.iter().map(|e| genfun::seminorm(&kf, spec, *e)).collect::<Result<Vec<_>>>()?;
    let kernel_class = classify_samples(&eps, &kernel_net, opts)?;

    let (kx, _) = spec.compact.split(h.x_dim());
    let image_spec = SeminormSpec { compact: kx, ..spec.clone() };
    let mut image_classes = Vec::with_capacity(basis.len());
    let mut image_nets = Vec::with_capacity(basis.len());
    for b in basis {
        let net = eps
            .iter()
            .map(|e| genfun::seminorm(&apply(h, b, *e, rule_y)?, &image_spec, *e))
            .collect::<Result<Vec<_>>>()?;
        image_classes.push(classify_samples(&eps, &net, opts)?);
        image_nets.push(net);
    }
    Ok(NullTestReport { kernel_class, kernel_net, image_classes, image_nets })
}
