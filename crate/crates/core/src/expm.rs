//! The operator exponential `e^Ĥ = Id + Ŝ` with `S = Σ_{n≥1} L_n / n!`.
//!
//! On a rule over `K` with Nyström matrix `M` and weights `W`, the kernel
//! powers at the nodes obey `L_n = (MW)^{n-1} M`, so the series is summed by
//! the recurrence `T₁ = M`, `T_n = MW T_{n-1} / n`. The number of terms comes
//! from the tail bound
//!
//! ```text
//! Σ_{m>n} vol(K)^{m-1} p^m / m!,     p = sup |H_ε|,
//! ```
//!
//! which dominates every truncation error of the series regardless of the
//! rule.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::asymptotics::{fit_exponent, ClassifyOptions, EpsilonGrid, GrowthClass, Verdict};
use crate::error::{Error, Result};
use crate::genfun::{self, GeneralizedFunction, SeminormSpec};
use crate::kernelop::{self, CompactKernel, NystromMatrix};
use crate::quadrature::QuadratureRule;

/// `vol · p` above which `e^{vol·p}` is treated as overflowing.
pub const MAX_EXPONENT: f64 = 700.0;

/// Cap on the number of series terms.
pub const MAX_TERMS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPlan {
    pub n_terms: usize,
    pub tail_bound: f64,
    pub vol_k: f64,
    pub p_h: f64,
    pub tol: f64,
}

fn check_tail_args(vol: f64, p: f64) -> Result<f64> {
    if !(vol > 0.0 && vol.is_finite()) {
        return Err(Error::InvalidArgument(format!("volume must be positive, got {vol}")));
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("kernel bound must be non-negative, got {p}")));
    }
    let x = vol * p;
    if x > MAX_EXPONENT {
        return Err(Error::Overflow { exponent: x });
    }
    Ok(x)
}

/// `Σ_{m>n} vol^{m-1} p^m / m!`, summed to machine precision.
pub fn tail_bound(vol: f64, p: f64, n: usize) -> Result<f64> {
    let x = check_tail_args(vol, p)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    // t_m = vol^{m-1} p^m / m!
    let mut t = p;
    for m in 2..=n {
        t *= x / m as f64;
    }
    let mut sum = 0.0;
    let mut m = n + 1;
    loop {
        t *= x / m as f64;
        sum += t;
        if t == 0.0 || (m as f64 > x && t <= f64::EPSILON * 1e-2 * sum) {
            break;
        }
        m += 1;
    }
    Ok(sum)
}

/// `(e^{vol·p} - 1)/vol - Σ_{m≤n} vol^{m-1} p^m / m!`: the same tail from the
/// closed form. Loses relative accuracy once the tail is small.
pub fn closed_form_tail(vol: f64, p: f64, n: usize) -> Result<f64> {
    let x = check_tail_args(vol, p)?;
    let mut t = p;
    let mut head = 0.0;
    for m in 1..=n {
        if m > 1 {
            t *= x / m as f64;
        }
        head += t;
    }
    Ok(x.exp_m1() / vol - head)
}

/// Smallest `n ≥ 1` whose tail bound is at most `tol`.
pub fn choose_truncation(vol: f64, p: f64, tol: f64) -> Result<TruncationPlan> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut last = f64::INFINITY;
    for n in 1..=MAX_TERMS {
        last = tail_bound(vol, p, n)?;
        if last <= tol {
            return Ok(TruncationPlan { n_terms: n, tail_bound: last, vol_k: vol, p_h: p, tol });
        }
    }
    Err(Error::NotReachable { n_terms: MAX_TERMS, tail_bound: last, tol })
}

#[derive(Debug, Clone)]
pub struct ExpKernelResult {
    /// `S_ε`, a fixed-ε slice evaluable anywhere.
    pub s_kernel: CompactKernel,
    pub plan: TruncationPlan,
    /// Terms actually summed (at most `plan.n_terms`).
    pub terms_used: usize,
    /// `max |L_n / n!|` at the nodes for each summed term.
    pub per_term_norms: Vec<f64>,
    /// `S` at node pairs.
    pub node_values: DMatrix<f64>,
    pub nystrom: Arc<NystromMatrix>,
}

/// Sums `S = Σ L_n / n!` on `rule` to absolute tolerance `tol`.
///
/// Summation may stop before `plan.n_terms` once the remaining terms are
/// provably below `tol` at the nodes: with `r = ‖MW‖_∞ / (n+1) < 1`,
/// `Σ_{m>n} max|T_m| ≤ max|T_n| · r / (1 - r)`.
pub fn exp_kernel(h: &CompactKernel, eps: f64, rule: &QuadratureRule, tol: f64) -> Result<ExpKernelResult> {
    kernelop::check_square(h, rule)?;
    let nystrom = h.discretize(eps, rule, rule)?;
    let m = &nystrom.values;
    let p_h = m.amax();
    let plan = choose_truncation(rule.cuboid().volume(), p_h, tol)?;
    let mw = nystrom.weighted();
    let row_norm = mw.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);

    let mut term = m.clone();
    let mut s = m.clone();
    let mut per_term_norms = vec![term.amax()];
    let mut terms_used = 1;
    for n in 2..=plan.n_terms {
        let r = row_norm / n as f64;
        if r < 1.0 && per_term_norms[n - 2] * r / (1.0 - r) <= tol {
            break;
        }
        term = &mw * &term / n as f64;
        s += &term;
        per_term_norms.push(term.amax());
        terms_used = n;
    }

    // S = H + ℓ(x)ᵀ C r(y) with C = Σ_{k=0}^{N-2} (MW)^k / (k+2)!
    let core = (terms_used >= 2).then(|| {
        let size = rule.len();
        let mut q = DMatrix::identity(size, size) / 2.0;
        let mut c = q.clone();
        for k in 1..=terms_used - 2 {
            q = &mw * &q / (k + 2) as f64;
            c += &q;
        }
        c
    });
    let s_kernel = kernelop::series_slice(h, eps, rule, core);

    Ok(ExpKernelResult { s_kernel, plan, terms_used, per_term_norms, node_values: s, nystrom })
}

/// `Σ_{n=1}^{n_terms} L_n / n!` at node pairs, with exactly `n_terms` terms.
pub fn node_series(h: &CompactKernel, eps: f64, rule: &QuadratureRule, n_terms: usize) -> Result<DMatrix<f64>> {
    kernelop::check_square(h, rule)?;
    let nystrom = h.discretize(eps, rule, rule)?;
    let mw = nystrom.weighted();
    let mut term = nystrom.values.clone();
    let mut s = term.clone();
    for n in 2..=n_terms {
        term = &mw * &term / n as f64;
        s += &term;
    }
    Ok(s)
}

/// `(e^{tĤ} f)(x) = f(x) + (Ŝ_t f)(x)` as a fixed-ε function.
pub fn exp_apply(
    h: &CompactKernel,
    f: &GeneralizedFunction,
    eps: f64,
    rule: &QuadratureRule,
    tol: f64,
    t: f64,
) -> Result<GeneralizedFunction> {
    let ht = if t == 1.0 { h.clone() } else { h.scaled(t) };
    let res = exp_kernel(&ht, eps, rule, tol)?;
    let image = kernelop::apply(&res.s_kernel, f, eps, rule)?;
    let f = f.clone();
    Ok(GeneralizedFunction::new(h.x_box().clone(), move |e, x| f.eval(e, x) + image.eval(e, x)))
}

fn s_nodes(h: &CompactKernel, t: f64, eps: f64, rule: &QuadratureRule, tol: f64) -> Result<DMatrix<f64>> {
    Ok(exp_kernel(&h.scaled(t), eps, rule, tol)?.node_values)
}

fn weights(rule: &QuadratureRule) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(rule.weights()))
}

/// `max |S_a + S_b + S_a W S_b - S_{a+b}|` at node pairs, i.e. the defect of
/// `e^{aĤ} e^{bĤ} = e^{(a+b)Ĥ}`.
pub fn semigroup_residual(h: &CompactKernel, a: f64, b: f64, eps: f64, rule: &QuadratureRule, tol: f64) -> Result<f64> {
    let sa = s_nodes(h, a, eps, rule, tol)?;
    let sb = s_nodes(h, b, eps, rule, tol)?;
    let sab = s_nodes(h, a + b, eps, rule, tol)?;
    let w = weights(rule);
    Ok((&sa + &sb + &sa * &w * &sb - sab).amax())
}

/// Central-difference defect of `d/dt e^{tĤ} = Ĥ e^{tĤ}` at steps `h` and
/// `h/2`. The target kernel at the nodes is `M + M W S_t`.
pub fn derivative_residual(
    k: &CompactKernel,
    t: f64,
    h: f64,
    eps: f64,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<(f64, f64)> {
    let m = k.discretize(eps, rule, rule)?.values.clone();
    let w = weights(rule);
    let target = &m + &m * &w * s_nodes(k, t, eps, rule, tol)?;
    let defect = |step: f64| -> Result<f64> {
        let plus = s_nodes(k, t + step, eps, rule, tol)?;
        let minus = s_nodes(k, t - step, eps, rule, tol)?;
        Ok(((plus - minus) / (2.0 * step) - &target).amax())
    };
    Ok((defect(h)?, defect(h / 2.0)?))
}

/// `max |M W S_t - S_t W M|` at node pairs.
pub fn commutation_residual(k: &CompactKernel, t: f64, eps: f64, rule: &QuadratureRule, tol: f64) -> Result<f64> {
    let m = k.discretize(eps, rule, rule)?.values.clone();
    let s = s_nodes(k, t, eps, rule, tol)?;
    let w = weights(rule);
    Ok((&m * &w * &s - &s * &w * &m).amax())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeratenessRow {
    pub eps: f64,
    pub p_h: f64,
    pub p_s: f64,
    pub bound: f64,
    pub ok: bool,
    pub n_terms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeratenessReport {
    pub kernel_class: GrowthClass,
    pub bound_ok: bool,
    /// Fitted exponent of `ε ↦ max |S_ε|` at the nodes.
    pub fitted_q: f64,
    pub rows: Vec<ModeratenessRow>,
}

/// For a kernel of logarithmic growth, checks `max |S_ε| ≤ (e^{vol·p} - 1)/vol`
/// at every grid point and fits the growth exponent of `S`.
///
/// Bounded kernels qualify too (they are of logarithmic type), so the
/// kernel's seminorm net may classify as logarithmic, negligible or
/// moderate with exponent within `opts.slope_tol` of zero.
pub fn moderateness_of_exp(
    h: &CompactKernel,
    grid: &EpsilonGrid,
    spec: &SeminormSpec,
    rule: &QuadratureRule,
    tol: f64,
    opts: &ClassifyOptions,
) -> Result<ModeratenessReport> {
    let (kernel_class, _) = genfun::classify_function(&h.as_function(), spec, grid, opts)?;
    let admissible = match kernel_class.verdict {
        Verdict::LogGrowth | Verdict::NegligibleUpTo(_) => true,
        Verdict::Moderate(q) => q <= opts.slope_tol,
        Verdict::Indeterminate => false,
    };
    if !admissible {
        return Err(Error::NotLogGrowth(kernel_class.verdict.label()));
    }

    let vol = rule.cuboid().volume();
    let mut rows = Vec::new();
    for eps in grid.values() {
        let res = exp_kernel(h, eps, rule, tol)?;
        let p_h = res.plan.p_h;
        let p_s = res.node_values.amax();
        let bound = (vol * p_h).exp_m1() / vol;
        rows.push(ModeratenessRow { eps, p_h, p_s, bound, ok: p_s <= bound * (1.0 + 1e-8), n_terms: res.terms_used });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let p_s: Vec<f64> = rows.iter().map(|r| r.p_s).collect();
    let fitted_q = fit_exponent(&eps, &p_s)?.slope;
    Ok(ModeratenessReport { kernel_class, bound_ok: rows.iter().all(|r| r.ok), fitted_q, rows })
}
