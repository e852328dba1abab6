//! One runner per subcommand. Each takes a validated scenario and returns
//! the report; numerical failures surface as [`CliError::Core`].

use colombeau::expm::{self, exp_apply, exp_kernel};
use colombeau::genfun::{self, SeminormSpec};
use colombeau::kerndsl::{self, Env, Expr, VarKind};
use colombeau::kernelop::{self, apply, compose, power, reconstruct_kernel, support_check};
use colombeau::{ClassifyOptions, CompactKernel, Cuboid, GeneralizedFunction, QuadratureRule, Verdict};
use nalgebra::{DMatrix, DVector};

use crate::config::*;
use crate::report::{Cell, Report, Table};
use crate::CliError;

type Outcome = Result<Report, CliError>;

pub fn run(sc: &Scenario, seed: Option<u64>) -> Outcome {
    let mut report = Report::new(sc.command.name(), sc.config_sha256.clone(), seed);
    match &sc.params {
        Params::Classify(p) => classify(sc, p, &mut report)?,
        Params::Compose(p) => compose_cmd(sc, p, &mut report)?,
        Params::Power(p) => power_cmd(sc, p, &mut report)?,
        Params::Expm(p) => expm_cmd(sc, p, &mut report)?,
        Params::Check(p) => check(sc, p, &mut report)?,
        Params::Evolve(p) => evolve(sc, p, &mut report)?,
        Params::Probe(p) => probe(sc, p, &mut report)?,
    }
    report.set("status", "ok");
    Ok(report)
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn point_columns(dim: usize) -> Vec<String> {
    let mut cols = axis_names("x", dim);
    cols.extend(axis_names("y", dim));
    cols
}

fn parse_reference(src: &Option<String>, dim: usize) -> Option<Expr> {
    // validated at load time
    src.as_ref().map(|s| kerndsl::parse(s, dim, &[VarKind::X, VarKind::Y, VarKind::Eps]).expect("reference parses"))
}

/// Tabulates a kernel on an equispaced grid over `region`, optionally
/// against a closed form. Returns the largest deviation from it.
fn sample_table(name: &str, l: &CompactKernel, eps: f64, region: &Cuboid, n: usize, reference: Option<&Expr>) -> (Table, Option<f64>) {
    let d = l.x_dim();
    let mut cols = point_columns(d);
    cols.push("value".into());
    if reference.is_some() {
        cols.extend(["reference".into(), "abs_err".into()]);
    }
    let mut table = Table::new(name, cols);
    let mut worst: Option<f64> = reference.map(|_| 0.0);
    for p in region.sample_grid(n) {
        let (x, y) = p.split_at(d);
        let v = l.eval(eps, x, y);
        let mut row: Vec<Cell> = p.iter().map(|c| Cell::Num(*c)).collect();
        row.push(v.into());
        if let Some(e) = reference {
            let want = e.eval(&Env { x, y, eps: Some(eps), ..Env::default() }).unwrap_or(f64::NAN);
            let err = (v - want).abs();
            worst = worst.map(|w| if err.is_nan() { f64::NAN } else { w.max(err) });
            row.extend([want.into(), err.into()]);
        }
        table.push(row);
    }
    (table, worst)
}

fn rule(sc: &Scenario, default: &Cuboid) -> Result<QuadratureRule, CliError> {
    Ok(sc.quadrature.rule(default)?)
}

fn hull(a: &Cuboid, b: &Cuboid) -> Result<Cuboid, CliError> {
    Ok(a.hull(b)?)
}

fn record_support(report: &mut Report, rep: &kernelop::SupportReport) {
    report.set("support_check", if rep.pass { "pass" } else { "fail" });
    report.set("support_max_violation", rep.max_violation);
    report.set("support_reference", rep.reference);
}

fn classify(sc: &Scenario, p: &ClassifyParams, report: &mut Report) -> Result<(), CliError> {
    let f: GeneralizedFunction = match (&p.kernel, &p.function) {
        (Some(k), _) => sc.kernel(k).as_function(),
        (_, Some(f)) => sc.function(f).clone(),
        _ => unreachable!("checked at load time"),
    };
    let compact = match &p.compact {
        Some(b) => Cuboid::new(b.lo.clone(), b.hi.clone())?,
        None => f.domain().clone(),
    };
    let spec = SeminormSpec { compact, order: p.order, sample_resolution: p.sample_resolution, fd_step: p.fd_step };
    let defaults = ClassifyOptions::default();
    let opts = ClassifyOptions {
        slope_tol: p.slope_tol.unwrap_or(defaults.slope_tol),
        p_max: p.p_max.unwrap_or(defaults.p_max),
        log_ratio_tol: p.log_ratio_tol.unwrap_or(defaults.log_ratio_tol),
    };
    let (class, values) = genfun::classify_function(&f, &spec, &sc.grid, &opts)?;
    let label = class.verdict.label();
    let d = class.diagnostics;

    let mut table = Table::new("seminorm", ["eps", "seminorm", "class", "fitted_q", "residual"]);
    for (eps, v) in sc.grid.values().into_iter().zip(&values) {
        table.push(vec![eps.into(), (*v).into(), label.as_str().into(), d.slope.into(), d.residual.into()]);
    }
    report.set("target", p.kernel.clone().or(p.function.clone()).unwrap_or_default());
    report.set("class", label);
    report.set("fitted_q", d.slope);
    report.set("residual", d.residual);
    report.set("log_ratio_max", d.log_ratio_max);
    if let Verdict::Moderate(q) = class.verdict {
        report.set("moderate_q", q);
    }
    report.tables.push(table);
    Ok(())
}

fn compose_cmd(sc: &Scenario, p: &ComposeParams, report: &mut Report) -> Result<(), CliError> {
    let h = sc.kernel(&p.left);
    let k = sc.kernel(&p.right);
    let (k1, k2h) = h.support_factors();
    let (k2k, _) = k.support_factors();
    let mid = rule(sc, &hull(&k2h, &k2k)?)?;
    let l = compose(h, k, p.eps, &mid)?;

    let reference = parse_reference(&p.reference, sc.dim);
    let (table, worst) = sample_table("kernel", &l, p.eps, l.support(), p.sample, reference.as_ref());
    report.set("left", p.left.as_str());
    report.set("right", p.right.as_str());
    report.set("eps", p.eps);
    report.set("middle_nodes", mid.len());
    if let Some(w) = worst {
        report.set("max_abs_err", w);
    }
    record_support(report, &support_check(&l, p.eps, l.support(), p.support_tol, support_resolution(p.support_resolution, sc.dim)));

    if let Some(fname) = &p.function {
        let f = sc.function(fname);
        let (_, k3) = k.support_factors();
        let rule_y = rule(sc, &k3)?;
        let direct = apply(&l, f, p.eps, &rule_y)?;
        let nested = apply(h, &apply(k, f, p.eps, &rule_y)?, p.eps, &mid)?;
        let rule_x = QuadratureRule::tensor(&k1, sc.quadrature.kind, sc.quadrature.resolution)?;
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for x in rule_x.nodes() {
            let a = direct.eval(p.eps, x);
            diff = diff.max((a - nested.eval(p.eps, x)).abs());
            scale = scale.max(a.abs());
        }
        report.set("consistency_function", fname.as_str());
        report.set("consistency_residual", diff);
        report.set("consistency_scale", scale);
    }
    report.tables.push(table);
    Ok(())
}

fn power_cmd(sc: &Scenario, p: &PowerParams, report: &mut Report) -> Result<(), CliError> {
    let h = sc.kernel(&p.kernel);
    let (k1, k2) = h.support_factors();
    let r = rule(sc, &hull(&k1, &k2)?)?;
    let l = power(h, p.n, p.eps, &r)?;
    let reference = parse_reference(&p.reference, sc.dim);
    let (table, worst) = sample_table("kernel", &l, p.eps, l.support(), p.sample, reference.as_ref());
    report.set("kernel", p.kernel.as_str());
    report.set("n", p.n);
    report.set("eps", p.eps);
    if let Some(w) = worst {
        report.set("max_abs_err", w);
    }
    record_support(report, &support_check(&l, p.eps, l.support(), p.support_tol, support_resolution(p.support_resolution, sc.dim)));
    report.tables.push(table);
    Ok(())
}

fn expm_cmd(sc: &Scenario, p: &ExpmParams, report: &mut Report) -> Result<(), CliError> {
    let h = sc.kernel(&p.kernel);
    let (k1, k2) = h.support_factors();
    let r = rule(sc, &hull(&k1, &k2)?)?;
    let res = exp_kernel(h, p.eps, &r, p.tol)?;
    let reference = parse_reference(&p.reference, sc.dim);
    let s = &res.s_kernel;
    let (table, worst) = sample_table("exp_kernel", s, p.eps, s.support(), p.sample, reference.as_ref());

    let plan = res.plan;
    let mut terms = Table::new("terms", ["n", "norm", "bound"]);
    let mut bound = plan.p_h;
    for (i, norm) in res.per_term_norms.iter().enumerate() {
        if i > 0 {
            bound *= plan.vol_k * plan.p_h / (i + 1) as f64;
        }
        terms.push(vec![(i + 1).into(), (*norm).into(), bound.into()]);
    }

    report.set("kernel", p.kernel.as_str());
    report.set("eps", p.eps);
    report.set("nodes", r.len());
    report.set("plan_n_terms", plan.n_terms);
    report.set("plan_tail_bound", plan.tail_bound);
    report.set("plan_tol", plan.tol);
    report.set("vol_k", plan.vol_k);
    report.set("p_h", plan.p_h);
    report.set("terms_used", res.terms_used);
    report.set("max_abs_s", res.node_values.amax());
    if let Some(w) = worst {
        report.set("max_abs_err", w);
    }
    record_support(report, &support_check(s, p.eps, s.support(), p.support_tol, support_resolution(p.support_resolution, sc.dim)));
    report.tables.push(table);
    report.tables.push(terms);
    Ok(())
}

fn residual_row(table: &mut Table, name: &str, value: f64, lower: Option<f64>, upper: Option<f64>) -> bool {
    let pass = lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
    table.push(vec![name.into(), value.into(), lower.into(), upper.into(), pass.into()]);
    pass
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    m.nrows() == m.ncols() && (m - m.transpose()).amax() <= 1e-12 * scale
}

fn check(sc: &Scenario, p: &CheckParams, report: &mut Report) -> Result<(), CliError> {
    let h = sc.kernel(&p.kernel);
    let (k1, k2) = h.support_factors();
    let r = rule(sc, &hull(&k1, &k2)?)?;
    let mut table = Table::new("residuals", ["check", "value", "lower", "upper", "pass"]);
    let mut all = true;

    let semi = expm::semigroup_residual(h, p.a, p.b, p.eps, &r, p.tol)?;
    all &= residual_row(&mut table, "semigroup", semi, None, Some(p.semigroup_limit));

    let (rh, rh2) = expm::derivative_residual(h, p.t, p.h, p.eps, &r, p.tol)?;
    residual_row(&mut table, "derivative_h", rh, None, None);
    residual_row(&mut table, "derivative_h2", rh2, None, None);
    let [lo, hi] = p.derivative_ratio;
    // both defects at rounding level: nothing left to converge
    let converged = rh <= 1e-13 * (1.0 + h.discretize(p.eps, &r, &r)?.values.amax());
    if converged {
        report.set("derivative_ratio", "skipped: defects at rounding level");
    } else {
        all &= residual_row(&mut table, "derivative_ratio", rh / rh2, Some(lo), Some(hi));
    }

    let m = h.discretize(p.eps, &r, &r)?;
    if is_symmetric(&m.values) {
        let s_max = exp_kernel(&h.scaled(p.t), p.eps, &r, p.tol)?.node_values.amax();
        let c = expm::commutation_residual(h, p.t, p.eps, &r, p.tol)?;
        all &= residual_row(&mut table, "commutation", c, None, Some(p.commutation_limit * s_max.max(1.0)));
    } else {
        report.set("commutation", "skipped: kernel not symmetric");
    }
    report.tables.push(table);

    if p.moderateness {
        let spec = SeminormSpec::new(h.domain(), 0, p.sample_resolution);
        let rep = expm::moderateness_of_exp(h, &sc.grid, &spec, &r, p.tol, &ClassifyOptions::default())?;
        let mut t = Table::new("moderateness", ["eps", "p_h", "p_s", "bound", "ok", "n_terms"]);
        for row in &rep.rows {
            t.push(vec![row.eps.into(), row.p_h.into(), row.p_s.into(), row.bound.into(), row.ok.into(), row.n_terms.into()]);
        }
        report.set("kernel_class", rep.kernel_class.verdict.label());
        report.set("bound_ok", rep.bound_ok);
        report.set("fitted_q", rep.fitted_q);
        all &= rep.bound_ok;
        report.tables.push(t);
    }

    report.set("kernel", p.kernel.as_str());
    report.set("eps", p.eps);
    report.set("a", p.a);
    report.set("b", p.b);
    report.set("t", p.t);
    report.set("h", p.h);
    report.set("all_pass", all);
    Ok(())
}

fn evolve(sc: &Scenario, p: &EvolveParams, report: &mut Report) -> Result<(), CliError> {
    let h = sc.kernel(&p.kernel);
    let f = sc.function(&p.initial);
    let (k1, k2) = h.support_factors();
    let r = rule(sc, &hull(&k1, &k2)?)?;
    let mw = h.discretize(p.eps, &r, &r)?.weighted();
    let u0 = DVector::from_iterator(r.len(), r.nodes().map(|y| f.eval(p.eps, y)));
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(colombeau::Error::NonFinite { context: format!("initial value `{}` at the nodes", p.initial) }.into());
    }

    let mut cols = vec!["t".to_string()];
    cols.extend(axis_names("x", sc.dim));
    cols.extend(["u", "dense", "abs_diff"].map(String::from));
    let mut table = Table::new("evolution", cols);
    let mut worst = 0.0f64;
    for &t in &p.times {
        let u = exp_apply(h, f, p.eps, &r, p.tol, t)?;
        let dense = dense_oracle::expm_dense(&(&mw * t)) * &u0;
        for (i, x) in r.nodes().enumerate() {
            let v = u.eval(p.eps, x);
            let diff = (v - dense[i]).abs();
            worst = if diff.is_nan() { f64::NAN } else { worst.max(diff) };
            let mut row: Vec<Cell> = vec![t.into()];
            row.extend(x.iter().map(|c| Cell::Num(*c)));
            row.extend([v.into(), dense[i].into(), diff.into()]);
            table.push(row);
        }
    }
    report.set("kernel", p.kernel.as_str());
    report.set("initial", p.initial.as_str());
    report.set("eps", p.eps);
    report.set("nodes", r.len());
    report.set("max_abs_diff", worst);
    report.tables.push(table);
    Ok(())
}

fn probe(sc: &Scenario, p: &ProbeParams, report: &mut Report) -> Result<(), CliError> {
    let h = sc.kernel(&p.kernel);
    let (_, k2) = h.support_factors();
    let r = rule(sc, &k2)?;
    let mut cols = point_columns(sc.dim);
    cols.extend(["eta", "reconstructed", "exact", "abs_err", "ratio"].map(String::from));
    let mut table = Table::new("probe", cols);
    let mut worst = 0.0f64;
    for pt in &p.points {
        let exact = h.eval(p.eps, &pt.x, &pt.y);
        let mut previous: Option<f64> = None;
        for &eta in &p.etas {
            let v = reconstruct_kernel(|f| apply(h, f, p.eps, &r), h.y_box(), eta, &pt.x, &pt.y)?;
            let err = (v - exact).abs();
            worst = worst.max(err);
            // ratio of successive errors, meaningful when η halves
            let ratio = previous.filter(|e| *e > 0.0 && err > 0.0).map(|e| e / err);
            previous = Some(err);
            let mut row: Vec<Cell> = pt.x.iter().chain(&pt.y).map(|c| Cell::Num(*c)).collect();
            row.extend([eta.into(), v.into(), exact.into(), err.into(), ratio.into()]);
            table.push(row);
        }
    }
    report.set("kernel", p.kernel.as_str());
    report.set("eps", p.eps);
    report.set("nodes", r.len());
    report.set("max_abs_err", worst);
    report.tables.push(table);
    Ok(())
}
