//! Scenario configuration: JSON schema, validation and loading.
//!
//! Everything is parsed and cross-checked in [`Scenario::load`] before any
//! numerical work starts, so that a bad expression or a dangling name is
//! reported immediately with its location.

use std::collections::BTreeMap;
use std::fmt;

use colombeau::kerndsl::ParseError;
use colombeau::{CompactKernel, Cuboid, EmbedData, EpsilonGrid, GeneralizedFunction, QuadratureRule, RuleKind};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Classify,
    Compose,
    Power,
    Expm,
    Check,
    Evolve,
    Probe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Compose => "compose",
            Command::Power => "power",
            Command::Expm => "expm",
            Command::Check => "check",
            Command::Evolve => "evolve",
            Command::Probe => "probe",
        }
    }

    fn parse(name: &str) -> Option<Command> {
        [
            Command::Classify,
            Command::Compose,
            Command::Power,
            Command::Expm,
            Command::Check,
            Command::Evolve,
            Command::Probe,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: DomainSpec,
    #[serde(default)]
    kernels: BTreeMap<String, KernelSpec>,
    #[serde(default)]
    functions: BTreeMap<String, FunctionSpec>,
    eps_grid: Option<GridSpec>,
    #[serde(default)]
    quadrature: QuadSpec,
    run: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSpec {
    dim: usize,
    x_box: BoxSpec,
    y_box: Option<BoxSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpec {
    expr: String,
    support: BoxSpec,
    x_box: Option<BoxSpec>,
    y_box: Option<BoxSpec>,
    #[serde(default)]
    deriv_exprs: Vec<DerivSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DerivSpec {
    alpha: Vec<usize>,
    expr: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum FunctionSpec {
    Expr {
        expr: String,
        #[serde(rename = "box")]
        on: Option<BoxSpec>,
    },
    Delta {
        delta: Vec<f64>,
        #[serde(rename = "box")]
        on: Option<BoxSpec>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    start: f64,
    ratio: f64,
    count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum QuadKind {
    Gauss,
    Midpoint,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadSpec {
    #[serde(default = "default_kind")]
    kind: QuadKind,
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(rename = "box")]
    on: Option<BoxSpec>,
}

fn default_kind() -> QuadKind {
    QuadKind::Gauss
}

fn default_resolution() -> usize {
    colombeau::quadrature::DEFAULT_RESOLUTION
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { kind: default_kind(), resolution: default_resolution(), on: None }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<String>,
    pub format: Option<Format>,
}

fn one() -> f64 {
    1.0
}
fn eleven() -> usize {
    11
}
fn seventeen() -> usize {
    17
}
fn vanish() -> f64 {
    1e-10
}
fn tol_expm() -> f64 {
    1e-12
}
fn tol_check() -> f64 {
    1e-14
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    pub kernel: Option<String>,
    pub function: Option<String>,
    #[serde(default)]
    pub order: usize,
    #[serde(default = "seventeen")]
    pub sample_resolution: usize,
    pub compact: Option<BoxSpec>,
    pub fd_step: Option<f64>,
    pub p_max: Option<u32>,
    pub slope_tol: Option<f64>,
    pub log_ratio_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeParams {
    pub left: String,
    pub right: String,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "eleven")]
    pub sample: usize,
    /// Closed form of `L` in `x`, `y` to compare against.
    pub reference: Option<String>,
    /// Function for the operator/kernel consistency residual.
    pub function: Option<String>,
    #[serde(default = "vanish")]
    pub support_tol: f64,
    /// Points per axis of the support scan; see [`support_resolution`].
    pub support_resolution: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub kernel: String,
    pub n: usize,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "eleven")]
    pub sample: usize,
    pub reference: Option<String>,
    #[serde(default = "vanish")]
    pub support_tol: f64,
    /// Points per axis of the support scan; see [`support_resolution`].
    pub support_resolution: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpmParams {
    pub kernel: String,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "tol_expm")]
    pub tol: f64,
    #[serde(default = "eleven")]
    pub sample: usize,
    pub reference: Option<String>,
    #[serde(default = "vanish")]
    pub support_tol: f64,
    pub support_resolution: Option<usize>,
}

fn semigroup_limit() -> f64 {
    1e-8
}
fn commutation_limit() -> f64 {
    1e-10
}
fn ratio_range() -> [f64; 2] {
    [3.5, 4.5]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    pub kernel: String,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "tol_check")]
    pub tol: f64,
    #[serde(default = "a_default")]
    pub a: f64,
    #[serde(default = "b_default")]
    pub b: f64,
    #[serde(default = "t_default")]
    pub t: f64,
    #[serde(default = "h_default")]
    pub h: f64,
    #[serde(default = "semigroup_limit")]
    pub semigroup_limit: f64,
    /// Relative to `max(1, max |S|)`.
    #[serde(default = "commutation_limit")]
    pub commutation_limit: f64,
    #[serde(default = "ratio_range")]
    pub derivative_ratio: [f64; 2],
    #[serde(default)]
    pub moderateness: bool,
    #[serde(default = "seventeen")]
    pub sample_resolution: usize,
}

fn a_default() -> f64 {
    0.3
}
fn b_default() -> f64 {
    0.7
}
fn t_default() -> f64 {
    0.5
}
fn h_default() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveParams {
    pub kernel: String,
    pub initial: String,
    pub times: Vec<f64>,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "tol_check")]
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeParams {
    pub kernel: String,
    pub points: Vec<ProbePoint>,
    pub etas: Vec<f64>,
    #[serde(default = "one")]
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub enum Params {
    Classify(ClassifyParams),
    Compose(ComposeParams),
    Power(PowerParams),
    Expm(ExpmParams),
    Check(CheckParams),
    Evolve(EvolveParams),
    Probe(ProbeParams),
}

/// Quadrature settings; the box defaults per command.
#[derive(Debug, Clone)]
pub struct QuadratureSettings {
    pub kind: RuleKind,
    pub resolution: usize,
    pub on: Option<Cuboid>,
}

impl QuadratureSettings {
    /// Rule on the configured box, or on `default` if none was given.
    pub fn rule(&self, default: &Cuboid) -> colombeau::Result<QuadratureRule> {
        QuadratureRule::tensor(self.on.as_ref().unwrap_or(default), self.kind, self.resolution)
    }
}

/// A fully validated scenario.
pub struct Scenario {
    pub command: Command,
    pub params: Params,
    pub dim: usize,
    pub kernels: BTreeMap<String, CompactKernel>,
    pub functions: BTreeMap<String, GeneralizedFunction>,
    pub grid: EpsilonGrid,
    pub quadrature: QuadratureSettings,
    pub output: OutputSpec,
    pub config_sha256: String,
}

fn config_err(context: impl Into<String>, message: impl fmt::Display) -> CliError {
    CliError::Config { context: context.into(), message: message.to_string(), position: None }
}

fn expr_err(context: String, e: &ParseError) -> CliError {
    CliError::Config { context, message: e.to_string(), position: Some(e.position()) }
}

fn core_err(context: String, e: colombeau::Error) -> CliError {
    match e {
        colombeau::Error::Parse(p) => expr_err(context, &p),
        other => config_err(context, other),
    }
}

fn make_box(spec: &BoxSpec, dim: usize, context: &str) -> Result<Cuboid, CliError> {
    if spec.lo.len() != dim || spec.hi.len() != dim {
        return Err(config_err(context, format!("expected {dim} coordinates in lo and hi")));
    }
    Cuboid::new(spec.lo.clone(), spec.hi.clone()).map_err(|e| config_err(context, e))
}

fn check_eps(eps: f64, context: &str) -> Result<(), CliError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(config_err(context, format!("eps must lie in (0, 1], got {eps}")))
    }
}

/// Default scan resolution for kernels on `X × Y` with `dim`-dimensional
/// factors: 32 per axis in the plane, 8 per axis beyond, so that scans stay
/// at a few thousand points.
pub fn support_resolution(requested: Option<usize>, dim: usize) -> usize {
    requested.unwrap_or(if dim == 1 { 32 } else { 8 })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn params<T: DeserializeOwned>(run: serde_json::Map<String, serde_json::Value>) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::Object(run)).map_err(|e| config_err("run", e))
}

impl Scenario {
    /// Parses and validates `bytes` for `command`.
    pub fn load(bytes: &[u8], command: Command) -> Result<Scenario, CliError> {
        let config_sha256 = sha256_hex(bytes);
        let raw: RawConfig = serde_json::from_slice(bytes).map_err(|e| CliError::Config {
            context: format!("config line {} column {}", e.line(), e.column()),
            message: e.to_string(),
            position: None,
        })?;

        let dim = raw.domain.dim;
        if !(1..=colombeau::quadrature::MAX_DIM).contains(&dim) {
            return Err(config_err("domain.dim", format!("must be 1..={}", colombeau::quadrature::MAX_DIM)));
        }
        let x_box = make_box(&raw.domain.x_box, dim, "domain.x_box")?;
        let y_box = match &raw.domain.y_box {
            Some(b) => make_box(b, dim, "domain.y_box")?,
            None => x_box.clone(),
        };

        let mut kernels = BTreeMap::new();
        for (name, k) in &raw.kernels {
            let ctx = format!("kernels.{name}");
            let kx = match &k.x_box {
                Some(b) => make_box(b, dim, &format!("{ctx}.x_box"))?,
                None => x_box.clone(),
            };
            let ky = match &k.y_box {
                Some(b) => make_box(b, dim, &format!("{ctx}.y_box"))?,
                None => y_box.clone(),
            };
            let support = make_box(&k.support, 2 * dim, &format!("{ctx}.support"))?;
            let derivs: Vec<(Vec<usize>, String)> = k.deriv_exprs.iter().map(|d| (d.alpha.clone(), d.expr.clone())).collect();
            for (i, d) in k.deriv_exprs.iter().enumerate() {
                colombeau::kerndsl::parse(&d.expr, dim, &[
                    colombeau::kerndsl::VarKind::X,
                    colombeau::kerndsl::VarKind::Y,
                    colombeau::kerndsl::VarKind::Eps,
                ])
                .map_err(|e| expr_err(format!("{ctx}.deriv_exprs[{i}].expr"), &e))?;
            }
            let kernel = CompactKernel::parse(&k.expr, kx, ky, support, &derivs).map_err(|e| match e {
                colombeau::Error::Parse(p) => expr_err(format!("{ctx}.expr"), &p),
                other => config_err(ctx.clone(), other),
            })?;
            kernels.insert(name.clone(), kernel);
        }

        let mut functions = BTreeMap::new();
        for (name, f) in &raw.functions {
            let ctx = format!("functions.{name}");
            let (data, on) = match f {
                FunctionSpec::Expr { expr, on } => (None, (expr.as_str(), on)),
                FunctionSpec::Delta { delta, on } => (Some(delta.clone()), ("", on)),
            };
            let domain = match on.1 {
                Some(b) => make_box(b, dim, &format!("{ctx}.box"))?,
                None => y_box.clone(),
            };
            let g = match data {
                Some(a) => colombeau::genfun::mollifier_embed(&EmbedData::Delta(a), &domain)
                    .map_err(|e| core_err(format!("{ctx}.delta"), e))?,
                None => GeneralizedFunction::parse(on.0, domain).map_err(|e| core_err(format!("{ctx}.expr"), e))?,
            };
            functions.insert(name.clone(), g);
        }

        let grid = match &raw.eps_grid {
            Some(g) => EpsilonGrid::new(g.start, g.ratio, g.count).map_err(|e| config_err("eps_grid", e))?,
            None => EpsilonGrid::default(),
        };

        if raw.quadrature.resolution == 0 {
            return Err(config_err("quadrature.resolution", "must be positive"));
        }
        let quadrature = QuadratureSettings {
            kind: match raw.quadrature.kind {
                QuadKind::Gauss => RuleKind::GaussLegendre,
                QuadKind::Midpoint => RuleKind::CompositeMidpoint,
            },
            resolution: raw.quadrature.resolution,
            on: raw.quadrature.on.as_ref().map(|b| make_box(b, dim, "quadrature.box")).transpose()?,
        };

        let mut run = raw.run;
        if let Some(c) = run.remove("command") {
            let named = c.as_str().and_then(Command::parse);
            if named != Some(command) {
                return Err(config_err("run.command", format!("config is for {c}, invoked as {command}")));
            }
        }
        let params = match command {
            Command::Classify => Params::Classify(params(run)?),
            Command::Compose => Params::Compose(params(run)?),
            Command::Power => Params::Power(params(run)?),
            Command::Expm => Params::Expm(params(run)?),
            Command::Check => Params::Check(params(run)?),
            Command::Evolve => Params::Evolve(params(run)?),
            Command::Probe => Params::Probe(params(run)?),
        };

        let scenario = Scenario {
            command,
            params,
            dim,
            kernels,
            functions,
            grid,
            quadrature,
            output: raw.output,
            config_sha256,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn kernel(&self, name: &str) -> &CompactKernel {
        &self.kernels[name]
    }

    pub fn function(&self, name: &str) -> &GeneralizedFunction {
        &self.functions[name]
    }

    fn need_kernel(&self, name: &str) -> Result<(), CliError> {
        if self.kernels.contains_key(name) {
            Ok(())
        } else {
            Err(config_err("run", format!("unknown kernel `{name}`")))
        }
    }

    fn need_function(&self, name: &str) -> Result<(), CliError> {
        if self.functions.contains_key(name) {
            Ok(())
        } else {
            Err(config_err("run", format!("unknown function `{name}`")))
        }
    }

    fn need_reference(&self, src: &Option<String>) -> Result<(), CliError> {
        if let Some(src) = src {
            use colombeau::kerndsl::VarKind;
            colombeau::kerndsl::parse(src, self.dim, &[VarKind::X, VarKind::Y, VarKind::Eps])
                .map_err(|e| expr_err("run.reference".into(), &e))?;
        }
        Ok(())
    }

    /// Cross-references and ranges, all before any numerical work.
    fn validate(&self) -> Result<(), CliError> {
        match &self.params {
            Params::Classify(p) => {
                match (&p.kernel, &p.function) {
                    (Some(k), None) => self.need_kernel(k)?,
                    (None, Some(f)) => self.need_function(f)?,
                    _ => return Err(config_err("run", "give exactly one of `kernel` or `function`")),
                }
                if let Some(c) = &p.compact {
                    let d = if p.kernel.is_some() { 2 * self.dim } else { self.dim };
                    make_box(c, d, "run.compact")?;
                }
            }
            Params::Compose(p) => {
                self.need_kernel(&p.left)?;
                self.need_kernel(&p.right)?;
                if let Some(f) = &p.function {
                    self.need_function(f)?;
                }
                self.need_reference(&p.reference)?;
                check_eps(p.eps, "run.eps")?;
            }
            Params::Power(p) => {
                self.need_kernel(&p.kernel)?;
                if p.n == 0 {
                    return Err(config_err("run.n", "must be at least 1"));
                }
                self.need_reference(&p.reference)?;
                check_eps(p.eps, "run.eps")?;
            }
            Params::Expm(p) => {
                self.need_kernel(&p.kernel)?;
                self.need_reference(&p.reference)?;
                check_eps(p.eps, "run.eps")?;
            }
            Params::Check(p) => {
                self.need_kernel(&p.kernel)?;
                check_eps(p.eps, "run.eps")?;
                if p.h.is_nan() || p.h <= 0.0 {
                    return Err(config_err("run.h", "must be positive"));
                }
            }
            Params::Evolve(p) => {
                self.need_kernel(&p.kernel)?;
                self.need_function(&p.initial)?;
                check_eps(p.eps, "run.eps")?;
            }
            Params::Probe(p) => {
                self.need_kernel(&p.kernel)?;
                check_eps(p.eps, "run.eps")?;
                for (i, pt) in p.points.iter().enumerate() {
                    if pt.x.len() != self.dim || pt.y.len() != self.dim {
                        return Err(config_err(format!("run.points[{i}]"), format!("expected {} coordinates", self.dim)));
                    }
                }
                if p.etas.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                    return Err(config_err("run.etas", "probe scales must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }
}
